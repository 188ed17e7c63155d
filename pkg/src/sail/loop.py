"""Surrogate-assisted illumination.

The loop alternates between fitting Gaussian-process surrogates of drag and
lift from the observation set, illuminating an acquisition map on those
surrogates, and spending precise evaluations on elites drawn from the map at
feature-space Sobol coordinates. Map production never touches the evaluator;
the only precise-evaluation channel is the explicit evaluator object, whose
call counter is the budget ledger.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from .airfoil import AirfoilDomain, PARAM_NAMES
from .elites import FeatureMap, MutationConfig, illuminate, map_stats, niche
from .errors import InitializationError
from .evaluators import Evaluator
from .gp import GpModel, HyperSearchConfig, KernelParams, fit_hyperparameters, gp_predict_batch, gp_train
from .rng import substream_seed
from .sobol import SobolSequence

_DUP_TOL = 1e-12
_SIGMA_FLOOR = 1e-12


@dataclass
class AcquisitionConfig:
    """Objective used when illuminating maps on the surrogate."""

    kind: str = "ucb"  # ucb | mean-only | variance-only
    kappa: float = 2.0

    def __post_init__(self):
        if self.kind not in ("ucb", "mean-only", "variance-only"):
            raise ValueError(f"unknown acquisition kind {self.kind!r}")
        if not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError("kappa must be finite and non-negative")


class ObservationSet:
    """Converged precise evaluations: genome, -log(C_D), C_L, area, iteration."""

    def __init__(self, genome_dim: int):
        self.genome_dim = genome_dim
        self._genomes = []
        self._drags = []
        self._lifts = []
        self._areas = []
        self._iterations = []

    @property
    def n(self) -> int:
        return len(self._genomes)

    def __len__(self) -> int:
        return self.n

    @property
    def genomes(self):
        return np.array(self._genomes).reshape(self.n, self.genome_dim)

    @property
    def drags(self):
        return np.array(self._drags)

    @property
    def lifts(self):
        return np.array(self._lifts)

    @property
    def areas(self):
        return np.array(self._areas)

    @property
    def iterations(self):
        return np.array(self._iterations, dtype=int)

    def contains(self, genome) -> bool:
        g = np.asarray(genome, dtype=float)
        return any(np.all(np.abs(g - h) <= _DUP_TOL) for h in self._genomes)

    def append(self, genome, drag: float, lift: float, area: float, iteration: int) -> None:
        values = (drag, lift, area)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("observations must hold finite values only")
        if self.contains(genome):
            raise ValueError("duplicate genome in observation set")
        self._genomes.append(np.asarray(genome, dtype=float).copy())
        self._drags.append(float(drag))
        self._lifts.append(float(lift))
        self._areas.append(float(area))
        self._iterations.append(int(iteration))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", *PARAM_NAMES, "drag", "lift", "area"])
            for i in range(self.n):
                w.writerow(
                    [str(self._iterations[i])]
                    + [repr(v) for v in self._genomes[i]]
                    + [repr(self._drags[i]), repr(self._lifts[i]), repr(self._areas[i])]
                )

    @classmethod
    def from_csv(cls, path) -> "ObservationSet":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        gdim = len(rows[0]) - 4
        obs = cls(gdim)
        for r in rows[1:]:
            obs.append(
                np.array([float(v) for v in r[1 : 1 + gdim]]),
                float(r[-3]),
                float(r[-2]),
                float(r[-1]),
                int(r[0]),
            )
        return obs


@dataclass
class SailConfig:
    """Budgets, archive resolution, surrogate and search settings for one run."""

    pe_budget: int = 1000
    init_count: int = 50
    batch_size: int = 10
    bins: tuple = (25, 25)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    mutation: MutationConfig = field(default_factory=MutationConfig)
    inner_iterations: int = 100_000
    inner_batch: int = 32
    seed: int = 0
    fit_search: HyperSearchConfig = field(default_factory=HyperSearchConfig)
    refit_search: HyperSearchConfig = field(
        default_factory=lambda: HyperSearchConfig(
            n_starts=1, iterations=16, sweep_all=False, initial_step=0.3
        )
    )
    refit_full_every: int = 10  # 0: warm refits only after the first full fit
    track_prediction_stats: bool = True

    def __post_init__(self):
        if isinstance(self.bins, int):
            self.bins = (self.bins, self.bins)
        if self.pe_budget < 1 or self.init_count < 1 or self.batch_size < 1:
            raise ValueError("budgets and batch size must be positive")
        if self.init_count > self.pe_budget:
            raise ValueError("initial sample count cannot exceed the evaluation budget")


@dataclass
class SurrogatePair:
    """Drag and lift models, trained on bound-normalized genomes."""

    drag: GpModel
    lift: GpModel


def _fallback_params(inputs, targets, jitter: float) -> KernelParams:
    """Usable defaults when there are too few points to fit hyperparameters."""
    X = np.atleast_2d(inputs)
    var = float(np.var(targets))
    return KernelParams(
        length_scales=np.full(X.shape[1], 0.5),
        signal_variance=var if var > 0 else 1.0,
        jitter=jitter,
    )


def build_models(
    obs: ObservationSet,
    domain: AirfoilDomain,
    cfg: SailConfig,
    warm: "tuple[KernelParams, KernelParams] | None" = None,
    full: bool = True,
):
    """Fit hyperparameters and train fresh drag/lift models from the observations.

    Returns (models, fitted_params) so the caller can warm-start the next refit.
    """
    if obs.n < 2 or np.ptp(obs.drags) == 0:
        raise InitializationError("need at least two observations with distinct drag values")
    U = domain.normalize(obs.genomes)
    search = cfg.fit_search if full else cfg.refit_search
    fitted = []
    for targets, prev in ((obs.drags, warm[0] if warm else None), (obs.lifts, warm[1] if warm else None)):
        if obs.n >= 5:
            fitted.append(fit_hyperparameters(U, targets, search, warm=prev).params)
        else:
            fitted.append(_fallback_params(U, targets, search.jitter))
    models = SurrogatePair(
        drag=gp_train(U, obs.drags, fitted[0]),
        lift=gp_train(U, obs.lifts, fitted[1]),
    )
    return models, (fitted[0], fitted[1])


def acquisition_values(models: SurrogatePair, genomes, cfg: AcquisitionConfig, domain: AirfoilDomain):
    """Vectorized acquisition objective: (values, features) for a genome batch.

    Geometry-infeasible genomes get NaN, which the archive rejects. The drag
    term is the UCB (or mean, or bare predictive deviation for the exploration
    baseline); the lift penalty is the probability of holding the base lift
    under the predictive distribution; the area penalty is exact geometry.
    """
    if domain.base is None:
        raise ValueError("acquisition needs the base foil reference on the domain")
    G = np.atleast_2d(np.asarray(genomes, dtype=float))
    areas, valid = domain.areas_and_validity(G)
    U = domain.normalize(G)
    mu_d, var_d = gp_predict_batch(models.drag, U)
    sigma_d = np.sqrt(var_d)
    if cfg.kind == "variance-only":
        value = sigma_d.copy()
    else:
        drag_term = mu_d if cfg.kind == "mean-only" else mu_d + cfg.kappa * sigma_d
        mu_l, var_l = gp_predict_batch(models.lift, U)
        sigma_l = np.sqrt(np.maximum(var_l, _SIGMA_FLOOR**2))
        p_lift = ndtr((mu_l - domain.base.lift_base) / sigma_l)
        dev = np.abs(areas - domain.base.area_base) / domain.base.area_base
        p_area = np.maximum(0.0, 1.0 - dev) ** 7
        value = drag_term * p_lift * p_area
    value = np.where(valid, value, np.nan)
    return value, domain.features(G)


def acquisition_value(models: SurrogatePair, x, cfg: AcquisitionConfig, domain: AirfoilDomain) -> float:
    """Single-genome acquisition; NaN marks an infeasible geometry."""
    value, _ = acquisition_values(models, np.asarray(x, dtype=float)[None, :], cfg, domain)
    return float(value[0])


def _illuminate_on_models(obs, domain, cfg, models, acq, seed):
    spec = domain.feature_spec(cfg.bins)

    def objective(genomes):
        return acquisition_values(models, genomes, acq, domain)

    return illuminate(
        objective,
        obs.genomes,
        cfg.inner_iterations,
        cfg.mutation,
        np.random.default_rng(seed),
        spec,
        (domain.lower, domain.upper),
        batch_size=cfg.inner_batch,
    )


def produce_acquisition_map(
    obs: ObservationSet,
    domain: AirfoilDomain,
    cfg: SailConfig,
    models: SurrogatePair | None = None,
    seed: int | None = None,
) -> FeatureMap:
    """Illuminate the acquisition objective, seeded with all observed genomes."""
    if models is None:
        models, _ = build_models(obs, domain, cfg)
    if seed is None:
        seed = substream_seed(cfg.seed, f"acq-map:{obs.n}")
    return _illuminate_on_models(obs, domain, cfg, models, cfg.acquisition, seed)


def produce_prediction_map(
    obs: ObservationSet,
    domain: AirfoilDomain,
    cfg: SailConfig,
    models: SurrogatePair | None = None,
    seed: int | None = None,
) -> FeatureMap:
    """Illuminate on predictive means only (an acquisition map with kappa 0)."""
    if models is None:
        models, _ = build_models(obs, domain, cfg)
    if seed is None:
        seed = substream_seed(cfg.seed, f"pred-map:{obs.n}")
    return _illuminate_on_models(obs, domain, cfg, models, AcquisitionConfig("mean-only", 0.0), seed)


def select_samples(acq_map: FeatureMap, sobol: SobolSequence, n: int, obs: ObservationSet):
    """Elites of the first n distinct occupied cells hit by feature-space Sobol draws.

    Cells whose elites already sit in the observation set are skipped; after
    10*n*total_cells draws without filling the request, the shorter list is
    returned with the starvation flag set.
    """
    spec = acq_map.spec
    picks: list[np.ndarray] = []
    seen_cells = set()
    scan_limit = 10 * n * spec.total_cells
    draws = 0
    while len(picks) < n and draws < scan_limit:
        u = sobol.next_point()
        draws += 1
        features = spec.mins + u * (spec.maxs - spec.mins)
        idx = niche(features, spec)
        if idx in seen_cells:
            continue
        elite = acq_map.get(idx)
        if elite is None:
            continue
        seen_cells.add(idx)
        if obs.contains(elite.genome):
            continue
        if any(np.all(np.abs(elite.genome - p) <= _DUP_TOL) for p in picks):
            continue
        picks.append(elite.genome)
    return picks, len(picks) < n


@dataclass
class IterationStats:
    iteration: int
    pe_used: int
    obs_size: int
    acq_coverage: float
    pred_value_sum: float


@dataclass
class SailResult:
    obs: ObservationSet
    models: SurrogatePair
    prediction_map: FeatureMap
    acquisition_map: FeatureMap | None
    stats: list
    pe_used: int
    starved: bool


def _sobol_init(domain, evaluator, sobol, obs, count, iteration):
    """Spend exactly ``count`` precise evaluations on parameter-space Sobol points.

    Geometry-invalid points are replaced by later sequence points without
    spending budget; non-converged evaluations spend budget without joining
    the observation set.
    """
    target = evaluator.count + count
    attempts = 0
    cap = max(1000, 1000 * count)
    while evaluator.count < target:
        attempts += 1
        if attempts > cap:
            raise InitializationError("could not find enough valid initial geometries")
        genome = domain.denormalize(sobol.next_point())
        areas, valid = domain.areas_and_validity(genome[None, :])
        if not valid[0]:
            continue
        res = evaluator.evaluate(genome)
        if res.converged and not obs.contains(genome):
            obs.append(genome, -math.log(res.c_d), res.c_l, float(areas[0]), iteration)


def run_sail(
    cfg: SailConfig,
    domain: AirfoilDomain,
    evaluator: Evaluator,
    on_iteration=None,
) -> SailResult:
    """Full surrogate-assisted illumination run under an exact PE budget."""
    sobol_param = SobolSequence(domain.dimension)
    sobol_feat = SobolSequence(len(cfg.bins))
    obs = ObservationSet(domain.dimension)
    pe_start = evaluator.count

    _sobol_init(domain, evaluator, sobol_param, obs, cfg.init_count, iteration=0)

    stats: list[IterationStats] = []
    warm = None
    models = None
    acq_map = None
    starved = False
    iteration = 0
    while evaluator.count - pe_start < cfg.pe_budget:
        iteration += 1
        full = iteration == 1 or (
            cfg.refit_full_every > 0 and iteration % cfg.refit_full_every == 0
        )
        models, warm = build_models(obs, domain, cfg, warm=warm, full=full)
        acq_map = produce_acquisition_map(
            obs, domain, cfg, models=models, seed=substream_seed(cfg.seed, f"acq-map:{iteration}")
        )
        pred_sum = math.nan
        if cfg.track_prediction_stats:
            pred_map = produce_prediction_map(
                obs, domain, cfg, models=models, seed=substream_seed(cfg.seed, f"pred-map:{iteration}")
            )
            pred_sum = map_stats(pred_map).value_sum
        want = min(cfg.batch_size, cfg.pe_budget - (evaluator.count - pe_start))
        picks, starved = select_samples(acq_map, sobol_feat, want, obs)
        for genome in picks:
            res = evaluator.evaluate(genome)
            if res.converged:
                areas, _ = domain.areas_and_validity(genome[None, :])
                obs.append(genome, -math.log(res.c_d), res.c_l, float(areas[0]), iteration)
        stats.append(
            IterationStats(
                iteration,
                evaluator.count - pe_start,
                obs.n,
                map_stats(acq_map).coverage,
                pred_sum,
            )
        )
        if on_iteration is not None:
            on_iteration(iteration, evaluator.count - pe_start, obs)
        if starved:
            break

    models, warm = build_models(obs, domain, cfg, warm=warm, full=True)
    prediction_map = produce_prediction_map(
        obs, domain, cfg, models=models, seed=substream_seed(cfg.seed, "pred-map:final")
    )
    return SailResult(
        obs=obs,
        models=models,
        prediction_map=prediction_map,
        acquisition_map=acq_map,
        stats=stats,
        pe_used=evaluator.count - pe_start,
        starved=starved,
    )
