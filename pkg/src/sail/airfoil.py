"""2D airfoil design domain.

A 10-parameter shape encoding (split upper/lower leading-edge radii, crest
position/height/curvature per surface, trailing-edge direction and wedge
angles) drives two half-power polynomial surfaces z(x) = sum a_n x^(n-1/2).
The trailing edge is pinned to the base foil's end point; the two explored
feature dimensions are the upper-crest position and height, which are genome
components read off directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .elites import FeatureSpec
from .errors import InvalidGeometryError

PARAM_NAMES = (
    "r_le_up",
    "r_le_lo",
    "x_up",
    "z_up",
    "z_xx_up",
    "x_lo",
    "z_lo",
    "z_xx_lo",
    "alpha_te",
    "beta_te",
)
IX_XUP = PARAM_NAMES.index("x_up")
IX_ZUP = PARAM_NAMES.index("z_up")

# Bounds centered on a transonic reference foil; trailing-edge angles in degrees.
# The low-x_up/high-z_up corner is mostly infeasible: crest constraints near the
# leading edge make the half-power basis oscillate until the surfaces cross.
DEFAULT_LOWER = np.array([0.0025, 0.0025, 0.15, 0.025, -1.20, 0.20, -0.120, 0.10, -8.0, 4.0])
DEFAULT_UPPER = np.array([0.0300, 0.0300, 0.70, 0.120, -0.10, 0.60, -0.020, 1.20, 0.0, 16.0])

_EXP = np.arange(1, 7) - 0.5  # surface basis exponents 0.5 .. 5.5


@dataclass
class FlowConditions:
    angle_of_attack: float = 2.7
    mach: float = 0.5
    reynolds: float = 1e6


@dataclass
class BaseFoilReference:
    area_base: float
    lift_base: float
    coords: "FoilCoords | None" = None


@dataclass
class FoilCoords:
    """Both surfaces sampled on a shared, ascending x grid (0 to 1 inclusive)."""

    x: np.ndarray
    z_upper: np.ndarray
    z_lower: np.ndarray

    def polyline(self):
        """Closed loop: trailing edge along the upper surface to the leading
        edge, back along the lower surface, ending on the starting point."""
        xs = np.concatenate([self.x[::-1], self.x[1:]])
        zs = np.concatenate([self.z_upper[::-1], self.z_lower[1:]])
        return xs, zs


def _constraint_rows(x_crest):
    """Stacked constraint matrix rows for a batch of crest positions."""
    xc = np.asarray(x_crest, dtype=float)[:, None]
    a = np.empty((xc.shape[0], 6, 6))
    a[:, 0, :] = 0.0
    a[:, 0, 0] = 1.0
    a[:, 1, :] = xc**_EXP
    a[:, 2, :] = _EXP * xc ** (_EXP - 1.0)
    a[:, 3, :] = _EXP * (_EXP - 1.0) * xc ** (_EXP - 2.0)
    a[:, 4, :] = 1.0
    a[:, 5, :] = _EXP
    return a


def _surface_coeffs_batch(sign, r_le, x_crest, z_crest, z_xx, z_te, slope_te):
    """Solve the six-constraint system per genome; NaN rows mark singular systems."""
    A = _constraint_rows(x_crest)
    b = np.stack(
        [
            sign * np.sqrt(2.0 * np.asarray(r_le, dtype=float)),
            np.asarray(z_crest, dtype=float),
            np.zeros_like(np.asarray(z_crest, dtype=float)),
            np.asarray(z_xx, dtype=float),
            np.full(len(A), float(z_te)),
            np.asarray(slope_te, dtype=float),
        ],
        axis=1,
    )
    try:
        return np.linalg.solve(A, b[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        out = np.full((len(A), 6), np.nan)
        for i in range(len(A)):
            try:
                out[i] = np.linalg.solve(A[i], b[i])
            except np.linalg.LinAlgError:
                pass  # stays NaN -> invalid genome
        return out


def cosine_grid(n_points: int):
    t = np.linspace(0.0, 1.0, n_points)
    return 0.5 * (1.0 - np.cos(np.pi * t))


@dataclass
class ValidityResult:
    valid: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.valid


@dataclass
class AirfoilDomain:
    """Parameter bounds, geometry construction, and the fitness penalty algebra."""

    lower: np.ndarray = field(default_factory=lambda: DEFAULT_LOWER.copy())
    upper: np.ndarray = field(default_factory=lambda: DEFAULT_UPPER.copy())
    n_surface_points: int = 201
    max_thickness: float = 0.5
    te_upper_z: float = 0.0
    te_lower_z: float = 0.0
    flow: FlowConditions = field(default_factory=FlowConditions)
    base: BaseFoilReference | None = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (10,) or self.upper.shape != (10,):
            raise ValueError("airfoil bounds must cover the 10 shape parameters")
        if np.any(self.lower >= self.upper):
            raise ValueError("each lower bound must be below its upper bound")
        if self.n_surface_points < 41:
            raise ValueError("surface sampling needs at least 41 points")

    @property
    def dimension(self) -> int:
        return 10

    def base_genome(self):
        return 0.5 * (self.lower + self.upper)

    def normalize(self, genomes):
        return (np.asarray(genomes, dtype=float) - self.lower) / (self.upper - self.lower)

    def denormalize(self, u):
        return self.lower + np.asarray(u, dtype=float) * (self.upper - self.lower)

    def feature_spec(self, bins=25) -> FeatureSpec:
        if isinstance(bins, int):
            bins = (bins, bins)
        return FeatureSpec(
            names=("x_up", "z_up"),
            mins=np.array([self.lower[IX_XUP], self.lower[IX_ZUP]]),
            maxs=np.array([self.upper[IX_XUP], self.upper[IX_ZUP]]),
            bins=tuple(bins),
        )

    def features(self, genomes):
        """Feature descriptor: the upper-crest parameters, read off the genome."""
        G = np.atleast_2d(np.asarray(genomes, dtype=float))
        return G[:, (IX_XUP, IX_ZUP)]

    def surfaces_batch(self, genomes):
        """(z_upper, z_lower) on the shared cosine grid for a genome batch."""
        G = np.atleast_2d(np.asarray(genomes, dtype=float))
        alpha = np.radians(G[:, 8])
        half_wedge = np.radians(G[:, 9]) / 2.0
        cu = _surface_coeffs_batch(
            1.0, G[:, 0], G[:, IX_XUP], G[:, IX_ZUP], G[:, 4], self.te_upper_z, np.tan(alpha - half_wedge)
        )
        cl = _surface_coeffs_batch(
            -1.0, G[:, 1], G[:, 5], G[:, 6], G[:, 7], self.te_lower_z, np.tan(alpha + half_wedge)
        )
        x = cosine_grid(self.n_surface_points)
        basis = x[None, :] ** _EXP[:, None]  # (6, P); 0^0.5 = 0 pins the leading edge
        zu, zl = cu @ basis, cl @ basis
        # the solve enforces the trailing edge analytically; pin away float residue
        zu[np.isfinite(zu[:, -1]), -1] = self.te_upper_z
        zl[np.isfinite(zl[:, -1]), -1] = self.te_lower_z
        return x, zu, zl

    def areas_and_validity(self, genomes):
        """Vectorized polygon area and validity flags for a genome batch."""
        x, zu, zl = self.surfaces_batch(genomes)
        thickness = zu - zl
        finite = np.all(np.isfinite(zu), axis=1) & np.all(np.isfinite(zl), axis=1)
        interior = slice(1, -1)
        no_cross = np.all(thickness[:, interior] >= 0.0, axis=1)
        thin_enough = np.nanmax(np.abs(thickness), axis=1) <= self.max_thickness
        valid = finite & no_cross & thin_enough
        areas = np.trapz(np.where(np.isfinite(thickness), thickness, 0.0), x, axis=1)
        return np.abs(areas), valid

    def coords(self, genome) -> FoilCoords:
        """Geometry of a single genome; raises on a singular constraint system."""
        x, zu, zl = self.surfaces_batch(np.asarray(genome, dtype=float)[None, :])
        if not (np.all(np.isfinite(zu)) and np.all(np.isfinite(zl))):
            raise InvalidGeometryError("singular surface constraint system")
        return FoilCoords(x, zu[0], zl[0])


def parsec_to_coords(genome, n_points: int, domain: AirfoilDomain | None = None) -> FoilCoords:
    """Build surface coordinates with an explicit sampling resolution."""
    base = domain or AirfoilDomain()
    d = AirfoilDomain(
        lower=base.lower,
        upper=base.upper,
        n_surface_points=n_points,
        max_thickness=base.max_thickness,
        te_upper_z=base.te_upper_z,
        te_lower_z=base.te_lower_z,
    )
    return d.coords(genome)


def foil_area(coords: FoilCoords) -> float:
    """Absolute shoelace area of the closed polyline.

    Raises InvalidGeometryError when the surfaces cross (self-intersecting loop).
    """
    if np.any(coords.z_upper[1:-1] < coords.z_lower[1:-1]):
        raise InvalidGeometryError("surfaces cross: self-intersecting polyline")
    xs, zs = coords.polyline()
    return abs(polygon_area(xs, zs))


def polygon_area(xs, zs) -> float:
    """Signed shoelace area of a closed polyline (first point repeated or not)."""
    x2, z2 = np.roll(xs, -1), np.roll(zs, -1)
    return 0.5 * float(np.sum(xs * z2 - x2 * zs))


def geometric_validity(coords: FoilCoords, max_thickness: float = 0.5) -> ValidityResult:
    thickness = coords.z_upper - coords.z_lower
    if not (np.all(np.isfinite(coords.z_upper)) and np.all(np.isfinite(coords.z_lower))):
        return ValidityResult(False, "non-finite")
    if np.any(thickness[1:-1] < 0.0):
        return ValidityResult(False, "surface-crossing")
    if np.max(np.abs(thickness)) > max_thickness:
        return ValidityResult(False, "thickness-bound")
    return ValidityResult(True)


def penalty_lift(c_l: float, lift_base: float) -> float:
    """Quadratic penalty below the base foil's lift, 1 at or above it."""
    if c_l < lift_base:
        return (c_l / lift_base) ** 2
    return 1.0


def penalty_area(area: float, area_base: float) -> float:
    """Seventh-power penalty on relative area deviation, floored at zero."""
    dev = abs(area - area_base) / area_base
    return max(0.0, 1.0 - dev) ** 7


def fitness(drag_term: float, c_l: float, area: float, base: BaseFoilReference) -> float:
    """Drag term scaled by the lift and area penalties."""
    if area <= 0:
        raise ValueError("fitness needs a positive area")
    return drag_term * penalty_lift(c_l, base.lift_base) * penalty_area(area, base.area_base)


def probabilistic_lift_penalty(mu_l: float, sigma_l: float, lift_base: float) -> float:
    """One minus the probability of falling below the base lift.

    With a degenerate sigma the penalty steps: 1 above the base lift, else the
    deterministic quadratic penalty.
    """
    if sigma_l < 0:
        raise ValueError("sigma must be non-negative")
    if sigma_l == 0:
        return 1.0 if mu_l >= lift_base else penalty_lift(mu_l, lift_base)
    return 0.5 * math.erfc((lift_base - mu_l) / (sigma_l * math.sqrt(2.0)))


def write_selig(path, name: str, coords: FoilCoords) -> None:
    """Selig-style coordinate file: name line, then x z pairs around the loop."""
    xs, zs = coords.polyline()
    with open(path, "w") as fh:
        fh.write(name + "\n")
        for x, z in zip(xs, zs):
            fh.write(f"{x:.12f} {z:.12f}\n")


def read_selig(path):
    """Return (name, xs, zs) from a Selig-style coordinate file."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    name = lines[0]
    pts = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
    return name, pts[:, 0], pts[:, 1]
