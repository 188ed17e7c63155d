"""Precise-evaluation backends.

Two evaluators share one contract: every ``evaluate`` call increments the
instance's PE counter exactly once, converged or not. The synthetic evaluator
is a deterministic closed-form stand-in for a flow solver, cheap enough for
desk-scale experiments; the external evaluator shells out to a real tool
through a command template and parses its polar output.
"""

from __future__ import annotations

import json
import math
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .airfoil import AirfoilDomain, FlowConditions, IX_XUP, IX_ZUP, write_selig
from .errors import EvaluatorError

# matches data rows of common polar tables: alpha, CL, CD as leading columns
DEFAULT_POLAR_PATTERN = (
    r"^\s*[-+0-9.][-+0-9.eE]*\s+(?P<cl>[-+0-9.][-+0-9.eE]*)\s+(?P<cd>[-+0-9.][-+0-9.eE]*)"
)


@dataclass
class EvaluationResult:
    c_d: float | None
    c_l: float | None
    converged: bool


@dataclass
class SyntheticCoeffs:
    """Fixed weight/center vectors of the synthetic drag bowl and lift ridge."""

    cd_floor: float
    weights: np.ndarray
    centers: np.ndarray
    cl_intercept: float
    cl_z_coef: float
    cl_x_coef: float
    cl_x_center: float
    corner_u_zup_min: float
    corner_u_xup_max: float

    @classmethod
    def load(cls, path=None) -> "SyntheticCoeffs":
        if path is None:
            raw = json.loads(resources.files("sail.data").joinpath("synthetic_coeffs.json").read_text())
        else:
            raw = json.loads(Path(path).read_text())
        raw.pop("comment", None)
        raw["weights"] = np.asarray(raw["weights"], dtype=float)
        raw["centers"] = np.asarray(raw["centers"], dtype=float)
        return cls(**raw)


class Evaluator:
    """Base: PE accounting around a concrete backend."""

    kind = "abstract"

    def __init__(self):
        self.count = 0

    def evaluate(self, genome) -> EvaluationResult:
        self.count += 1
        return self._evaluate(np.asarray(genome, dtype=float))

    def _evaluate(self, genome) -> EvaluationResult:
        raise NotImplementedError


class SyntheticEvaluator(Evaluator):
    """Closed-form pseudo-aerodynamics on bound-normalized parameters.

    Drag is a weighted quadratic bowl above a positive floor, so -log(C_D)
    stays in a realistic range; lift depends only on the two feature
    parameters. A designated high-z_up / low-x_up corner never converges,
    mimicking a flow solver giving up on extreme designs.
    """

    kind = "synthetic"

    def __init__(self, domain: AirfoilDomain, coeffs: SyntheticCoeffs | None = None):
        super().__init__()
        self.domain = domain
        self.coeffs = coeffs or SyntheticCoeffs.load()

    def cd_cl(self, genomes):
        """Vectorized (C_D, C_L, converged) for a genome batch."""
        c = self.coeffs
        U = np.atleast_2d(self.domain.normalize(genomes))
        cd = c.cd_floor * (1.0 + np.sum(c.weights * (U - c.centers) ** 2, axis=1))
        cl = (
            c.cl_intercept
            + c.cl_z_coef * U[:, IX_ZUP]
            + c.cl_x_coef * (U[:, IX_XUP] - c.cl_x_center) ** 2
        )
        converged = ~((U[:, IX_ZUP] > c.corner_u_zup_min) & (U[:, IX_XUP] < c.corner_u_xup_max))
        return cd, cl, converged

    def _evaluate(self, genome) -> EvaluationResult:
        cd, cl, ok = self.cd_cl(genome[None, :])
        if not ok[0]:
            return EvaluationResult(None, None, False)
        return EvaluationResult(float(cd[0]), float(cl[0]), True)


def true_fitness_batch(domain: AirfoilDomain, genomes, coeffs: SyntheticCoeffs | None = None):
    """Ground-truth fitness of the synthetic domain for a genome batch.

    Returns (fitness, drag, ok): drag is -log(C_D); ok is False where geometry
    is invalid or the synthetic solver does not converge (fitness/drag NaN
    there). Requires domain.base for the penalty references.
    """
    from .airfoil import penalty_area  # local import keeps module load light

    if domain.base is None:
        raise ValueError("true fitness needs the base foil reference on the domain")
    ev = SyntheticEvaluator(domain, coeffs)
    G = np.atleast_2d(np.asarray(genomes, dtype=float))
    cd, cl, converged = ev.cd_cl(G)
    areas, valid = domain.areas_and_validity(G)
    ok = converged & valid
    drag = np.where(ok, -np.log(cd), np.nan)
    lift_pen = np.where(cl < domain.base.lift_base, (cl / domain.base.lift_base) ** 2, 1.0)
    dev = np.abs(areas - domain.base.area_base) / domain.base.area_base
    area_pen = np.maximum(0.0, 1.0 - dev) ** 7
    fit = np.where(ok, drag * lift_pen * area_pen, np.nan)
    return fit, drag, ok


@dataclass
class EvaluatorConfig:
    kind: str = "synthetic"
    flow: FlowConditions = field(default_factory=FlowConditions)
    command: str = ""
    workdir: str = ""
    timeout: float = 30.0
    polar_pattern: str = DEFAULT_POLAR_PATTERN

    def __post_init__(self):
        if self.kind not in ("synthetic", "external"):
            raise ValueError(f"unknown evaluator kind {self.kind!r}")
        if self.kind == "external":
            if "{input}" not in self.command or "{output}" not in self.command:
                raise ValueError("external command template needs {input} and {output}")


class ExternalEvaluator(Evaluator):
    """Runs an external flow tool per genome in an isolated working directory.

    The command template may use {input}, {output}, {aoa}, {mach}, {reynolds}.
    Timeouts and unparseable polars yield converged=False (the PE is spent);
    a command that cannot be spawned at all raises EvaluatorError.
    """

    kind = "external"

    def __init__(self, domain: AirfoilDomain, config: EvaluatorConfig):
        super().__init__()
        if config.kind != "external":
            raise ValueError("ExternalEvaluator needs an external-kind config")
        self.domain = domain
        self.config = config
        self._pattern = re.compile(config.polar_pattern)

    def _evaluate(self, genome) -> EvaluationResult:
        cfg = self.config
        with tempfile.TemporaryDirectory(dir=cfg.workdir or None) as tmp:
            coords_path = Path(tmp) / "foil.dat"
            polar_path = Path(tmp) / "polar.txt"
            write_selig(coords_path, "candidate", self.domain.coords(genome))
            cmd = cfg.command.format(
                input=coords_path,
                output=polar_path,
                aoa=cfg.flow.angle_of_attack,
                mach=cfg.flow.mach,
                reynolds=cfg.flow.reynolds,
            )
            try:
                subprocess.run(
                    shlex.split(cmd),
                    cwd=tmp,
                    timeout=cfg.timeout,
                    capture_output=True,
                    check=False,
                )
            except FileNotFoundError as exc:
                raise EvaluatorError(f"cannot spawn evaluator command: {cmd!r}") from exc
            except subprocess.TimeoutExpired:
                return EvaluationResult(None, None, False)
            if not polar_path.exists():
                return EvaluationResult(None, None, False)
            return self._parse_polar(polar_path.read_text())

    def _parse_polar(self, text: str) -> EvaluationResult:
        for line in text.splitlines():
            m = self._pattern.match(line)
            if m:
                try:
                    cd = float(m.group("cd"))
                    cl = float(m.group("cl"))
                except ValueError:
                    continue
                if math.isfinite(cd) and math.isfinite(cl) and cd > 0:
                    return EvaluationResult(cd, cl, True)
        return EvaluationResult(None, None, False)


def make_evaluator(domain: AirfoilDomain, config: EvaluatorConfig) -> Evaluator:
    if config.kind == "synthetic":
        return SyntheticEvaluator(domain)
    return ExternalEvaluator(domain, config)
