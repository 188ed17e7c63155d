"""MAP-Elites: niched feature-space archive and illumination loop.

The archive is a dense N-dimensional grid of cells, each holding at most one
elite (genome, value, features). Candidates are generated in batches from
uniformly selected parents, mutated with per-parameter Gaussian noise, and
inserted serially in generation order so runs are deterministic per seed.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InitializationError


@dataclass(frozen=True)
class FeatureSpec:
    """Per-dimension feature bounds and bin counts of the archive grid."""

    names: tuple
    mins: np.ndarray
    maxs: np.ndarray
    bins: tuple

    def __post_init__(self):
        object.__setattr__(self, "mins", np.asarray(self.mins, dtype=float))
        object.__setattr__(self, "maxs", np.asarray(self.maxs, dtype=float))
        if not (len(self.names) == len(self.bins) == self.mins.size == self.maxs.size):
            raise ValueError("feature spec fields must share one dimension")
        if np.any(self.mins >= self.maxs):
            raise ValueError("feature min must be below max in every dimension")
        if any(b < 1 for b in self.bins):
            raise ValueError("bins per dimension must be positive")

    @property
    def dimension(self) -> int:
        return len(self.bins)

    @property
    def total_cells(self) -> int:
        return int(np.prod(self.bins))

    def cell_window(self, index):
        """Feature-space (lower, upper) corners of one cell."""
        idx = np.asarray(index, dtype=float)
        width = (self.maxs - self.mins) / np.asarray(self.bins, dtype=float)
        return self.mins + idx * width, self.mins + (idx + 1.0) * width


def niche(features, spec: FeatureSpec):
    """Cell index of a feature vector; out-of-bounds features clamp to edge bins.

    Raises ValueError on non-finite features (caller discards the candidate).
    """
    f = np.asarray(features, dtype=float)
    if f.shape != (spec.dimension,):
        raise ValueError("feature dimension does not match spec")
    if not np.all(np.isfinite(f)):
        raise ValueError("non-finite feature value")
    bins = np.asarray(spec.bins)
    idx = np.floor((f - spec.mins) / (spec.maxs - spec.mins) * bins).astype(int)
    return tuple(np.clip(idx, 0, bins - 1))


def niche_batch(features, spec: FeatureSpec):
    """Vectorized niche over rows; rows with non-finite features get index -1."""
    F = np.atleast_2d(np.asarray(features, dtype=float))
    bins = np.asarray(spec.bins)
    ok = np.all(np.isfinite(F), axis=1)
    safe = np.where(np.isfinite(F), F, spec.mins)
    idx = np.floor((safe - spec.mins) / (spec.maxs - spec.mins) * bins).astype(int)
    np.clip(idx, 0, bins - 1, out=idx)
    idx[~ok] = -1
    return idx, ok


@dataclass
class Elite:
    genome: np.ndarray
    value: float
    features: np.ndarray


class InsertOutcome(enum.Enum):
    INSERTED_NEW = "inserted-new"
    REPLACED = "replaced"
    REJECTED = "rejected"


class FeatureMap:
    """Grid archive; per-cell values only ever increase (ties keep the incumbent)."""

    def __init__(self, spec: FeatureSpec, genome_dim: int):
        self.spec = spec
        self.genome_dim = genome_dim
        n = spec.total_cells
        self._occupied = np.zeros(n, dtype=bool)
        self._values = np.full(n, np.nan)
        self._genomes = np.zeros((n, genome_dim))
        self._features = np.zeros((n, spec.dimension))
        self._filled_order = []  # flat indices in first-fill order, for parent selection

    def _flat(self, index) -> int:
        return int(np.ravel_multi_index(index, self.spec.bins))

    def try_insert(self, genome, features, value) -> InsertOutcome:
        """Alg-style competition: empty cell or strictly better value wins."""
        if not (isinstance(value, (int, float)) and math.isfinite(value)):
            return InsertOutcome.REJECTED
        flat = self._flat(niche(features, self.spec))
        if not self._occupied[flat]:
            self._occupied[flat] = True
            self._values[flat] = value
            self._genomes[flat] = genome
            self._features[flat] = features
            self._filled_order.append(flat)
            return InsertOutcome.INSERTED_NEW
        if value > self._values[flat]:
            self._values[flat] = value
            self._genomes[flat] = genome
            self._features[flat] = features
            return InsertOutcome.REPLACED
        return InsertOutcome.REJECTED

    def get(self, index):
        flat = self._flat(index)
        if not self._occupied[flat]:
            return None
        return Elite(self._genomes[flat].copy(), float(self._values[flat]), self._features[flat].copy())

    def __len__(self) -> int:
        return len(self._filled_order)

    @property
    def filled_values(self):
        return self._values[self._occupied]

    def filled_indices(self):
        return [tuple(np.unravel_index(f, self.spec.bins)) for f in np.where(self._occupied)[0]]

    def filled_genomes(self):
        return self._genomes[self._occupied].copy()

    def parent_at(self, order_pos: int):
        """Genome of the order_pos-th cell ever filled (uniform-selection support)."""
        return self._genomes[self._filled_order[order_pos]]

    def value_grid(self):
        """Values reshaped to the grid; NaN marks empty cells."""
        return self._values.reshape(self.spec.bins).copy()


@dataclass
class MutationConfig:
    """Isotropic Gaussian step, sigma as a fraction of each parameter's range."""

    sigma: float = 0.1
    probability: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("mutation sigma must be positive")
        if not 0 < self.probability <= 1:
            raise ValueError("mutation probability must be in (0, 1]")


def propose_children(fmap: FeatureMap, n: int, mutation: MutationConfig, bounds, rng):
    """Generate n children from uniformly chosen parents, clipped to bounds."""
    lower, upper = bounds
    span = upper - lower
    parents = rng.integers(0, len(fmap), size=n)
    genomes = np.stack([fmap.parent_at(p) for p in parents])
    step = rng.standard_normal((n, genomes.shape[1])) * (mutation.sigma * span)
    if mutation.probability < 1.0:
        step *= rng.random(step.shape) < mutation.probability
    return np.clip(genomes + step, lower, upper)


def _insert_batch(fmap: FeatureMap, genomes, values, features):
    for g, v, f in zip(genomes, values, features):
        if math.isfinite(v) and np.all(np.isfinite(f)):
            fmap.try_insert(g, f, float(v))


def illuminate(
    objective,
    seeds,
    iterations: int,
    mutation: MutationConfig,
    rng_seed,
    spec: FeatureSpec,
    bounds,
    batch_size: int = 32,
) -> FeatureMap:
    """Run MAP-Elites for exactly ``iterations`` candidate generations.

    ``objective`` maps a (n, d) genome batch to (values, features) arrays;
    non-finite values or features mark a candidate invalid (it still counts
    against the iteration budget). Deterministic for a fixed rng_seed.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    fmap = FeatureMap(spec, seeds.shape[1])
    values, features = objective(seeds)
    _insert_batch(fmap, seeds, values, features)
    if len(fmap) == 0:
        raise InitializationError("no seed produced a finite objective value")
    done = 0
    while done < iterations:
        b = min(batch_size, iterations - done)
        children = propose_children(fmap, b, mutation, bounds, rng)
        values, features = objective(children)
        _insert_batch(fmap, children, values, features)
        done += b
    return fmap


@dataclass
class MapStats:
    coverage: float
    value_sum: float
    value_median: float  # NaN when the map is empty


def map_stats(fmap: FeatureMap) -> MapStats:
    vals = fmap.filled_values
    if vals.size == 0:
        return MapStats(0.0, 0.0, math.nan)
    return MapStats(
        coverage=vals.size / fmap.spec.total_cells,
        value_sum=float(np.sum(vals)),
        value_median=float(np.median(vals)),
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def map_to_csv(fmap: FeatureMap, path, param_names=None) -> None:
    """One row per cell: indices, feature window, occupancy, value, genome."""
    spec = fmap.spec
    if param_names is None:
        param_names = [f"g{i}" for i in range(fmap.genome_dim)]
    header = (
        [f"i{d}" for d in range(spec.dimension)]
        + [f"{n}_{side}" for n in spec.names for side in ("lo", "hi")]
        + ["occupied", "value"]
        + list(param_names)
    )
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for flat in range(spec.total_cells):
            idx = np.unravel_index(flat, spec.bins)
            lo, hi = spec.cell_window(idx)
            row = [str(i) for i in idx]
            for d in range(spec.dimension):
                row += [_fmt(lo[d]), _fmt(hi[d])]
            if fmap._occupied[flat]:
                row += ["1", _fmt(fmap._values[flat])]
                row += [_fmt(v) for v in fmap._genomes[flat]]
            else:
                row += ["0", ""] + [""] * fmap.genome_dim
            w.writerow(row)


def map_from_csv(path) -> FeatureMap:
    """Rebuild a map written by map_to_csv.

    Elite features are restored as cell centers (the file stores windows, not
    exact features), which preserves every cell assignment and value.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    fdim = sum(1 for h in header if h.startswith("i") and h[1:].isdigit())
    names = tuple(h[:-3] for h in header[fdim : fdim + 2 * fdim : 2])
    occ_col = header.index("occupied")
    gdim = len(header) - occ_col - 2
    idx_arr = np.array([[int(r[d]) for d in range(fdim)] for r in body])
    bins = tuple(idx_arr.max(axis=0) + 1)
    mins = np.array([float(body[0][fdim + 2 * d]) for d in range(fdim)])
    last = body[-1]
    maxs = np.array([float(last[fdim + 2 * d + 1]) for d in range(fdim)])
    spec = FeatureSpec(names, mins, maxs, bins)
    fmap = FeatureMap(spec, gdim)
    for r in body:
        if r[occ_col] != "1":
            continue
        idx = tuple(int(r[d]) for d in range(fdim))
        lo, hi = spec.cell_window(idx)
        genome = np.array([float(v) for v in r[occ_col + 2 :]])
        fmap.try_insert(genome, (lo + hi) / 2.0, float(r[occ_col + 1]))
    return fmap
