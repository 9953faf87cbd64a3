"""Scenario configuration: TOML parsing, initial data and validation.

A scenario pins everything a run needs so that identical configs produce
byte-identical artifacts: rate model, regime tag, initial data family,
grid, solver options and (optionally) the steady-solver section. There is
no randomness anywhere; particle ensembles are laid out deterministically.
"""
from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .characteristics import ParticleEnsemble, from_initial
from .errors import ConfigError, ValidationError
from .kinetics import SolverOptions
from .rates import (
    ConstantBreakage,
    Fragmentation,
    InverseDecayDepoly,
    LinearDepoly,
    NucleationSpec,
    RateModel,
    Regime,
    SaturatedPowerBreakage,
    validate_assumptions,
)
from .state import SizeGrid, SystemState, polymer_mass, read_snapshot


@dataclass(frozen=True)
class InitialZero:
    """Monomers only."""


@dataclass(frozen=True)
class InitialGaussian:
    center: float
    width: float
    number: float


@dataclass(frozen=True)
class InitialExponential:
    scale: float
    number: float


@dataclass(frozen=True)
class InitialSnapshot:
    path: str


InitialData = Union[InitialZero, InitialGaussian, InitialExponential, InitialSnapshot]


@dataclass(frozen=True)
class SteadyOptions:
    """Parameters of the steady-profile pipeline."""

    R: float
    n_cells: int
    eps_offset: float | None = None
    lambda_tol: float = 1e-10
    bracket_margin: float | None = None
    scan_points: int = 16
    k_max: int = 3
    path: str = "direct"

    def __post_init__(self):
        if self.R <= 0 or self.n_cells < 8:
            raise ConfigError("steady section needs R > 0 and at least 8 cells")
        if self.path not in ("direct", "faithful"):
            raise ConfigError("steady path must be 'direct' or 'faithful'")


@dataclass(frozen=True)
class Scenario:
    name: str
    regime: Regime
    model: RateModel
    initial: InitialData
    grid: SizeGrid
    options: SolverOptions
    total_mass: float
    V0: float
    solver: str = "eulerian"
    steady: SteadyOptions | None = None
    config_hash: str = ""

    @property
    def track_w2(self) -> bool:
        """Whether the run records the transport distance to the critical size."""
        return (
            self.regime is Regime.INCREASING
            and not self.model.fragmentation.active
            and self.model.nucleation.epsilon == 0
            and self.total_mass > self.model.depoly.at_zero
            and not isinstance(self.initial, InitialZero)
        )

    def initial_density(self) -> np.ndarray:
        """Initial per-cell density; number renormalized exactly on the grid."""
        x = self.grid.centers
        dx = self.grid.dx
        if isinstance(self.initial, InitialZero):
            return np.zeros_like(x)
        if isinstance(self.initial, InitialGaussian):
            shape = np.exp(-0.5 * ((x - self.initial.center) / self.initial.width) ** 2)
            total = float(np.sum(shape) * dx)
            if total <= 0:
                raise ValidationError("initial bump carries no mass on this grid")
            return shape * (self.initial.number / total)
        if isinstance(self.initial, InitialExponential):
            shape = np.exp(-x / self.initial.scale)
            total = float(np.sum(shape) * dx)
            return shape * (self.initial.number / total)
        if isinstance(self.initial, InitialSnapshot):
            snap = read_snapshot(self.initial.path)
            if snap.grid != self.grid:
                raise ValidationError(
                    "snapshot grid does not match the scenario grid "
                    f"({snap.grid} vs {self.grid})"
                )
            return np.asarray(snap.u)
        raise ConfigError(f"unknown initial data {self.initial!r}")

    def initial_state(self) -> SystemState:
        u0 = self.initial_density()
        return SystemState(grid=self.grid, t=0.0, V=self.V0, u=u0, M=self.total_mass)

    def initial_ensemble(self, n_particles: int | None = None) -> ParticleEnsemble:
        """Deterministic particle sampling of the initial density.

        Particles sit on a uniform label grid over the support of the
        density with weights proportional to it, rescaled so the total
        number matches the grid density exactly.
        """
        n = n_particles or self.options.n_particles
        if isinstance(self.initial, InitialZero):
            raise ValidationError("particle solver needs a nonzero initial density")
        if isinstance(self.initial, InitialGaussian):
            lo = max(self.initial.center - 6 * self.initial.width, 0.0)
            hi = min(self.initial.center + 6 * self.initial.width, self.grid.x_max)
            density = lambda z: np.exp(-0.5 * ((z - self.initial.center) / self.initial.width) ** 2)
            target = self.initial.number
        elif isinstance(self.initial, InitialExponential):
            lo, hi = 0.0, min(12 * self.initial.scale, self.grid.x_max)
            density = lambda z: np.exp(-z / self.initial.scale)
            target = self.initial.number
        else:
            snap_u = self.initial_density()
            lo, hi = 0.0, self.grid.x_max
            density = lambda z: np.interp(z, self.grid.centers, snap_u)
            target = float(np.sum(snap_u) * self.grid.dx)
        dz = (hi - lo) / n
        z = lo + (np.arange(n) + 0.5) * dz
        shape = density(z)
        scale = target / float(np.sum(shape) * dz)
        u0_samples = shape * scale
        return from_initial(z=z, w=u0_samples * dz, M=self.total_mass, u0=u0_samples)

    def validate(self):
        """Assumption report for the tagged regime (raises on failure)."""
        report = validate_assumptions(self.model, self.regime)
        if not report.ok:
            failed = ", ".join(c.key for c in report.failures())
            raise ValidationError(f"scenario violates regime assumptions: {failed}")
        return report


def _get(table: dict, key: str, kind, default=None, required: bool = False):
    if key not in table:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    value = table[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"key {key!r} must be of type {kind.__name__}")
    return value


def _build_depoly(table: dict):
    kind = _get(table, "kind", str, required=True)
    if kind == "linear":
        return LinearDepoly(d0=_get(table, "d0", float, required=True),
                            slope=_get(table, "slope", float, required=True))
    if kind == "inverse_decay":
        return InverseDecayDepoly(
            floor=_get(table, "floor", float, required=True),
            amplitude=_get(table, "amplitude", float, required=True),
            power=_get(table, "power", int, required=True),
        )
    raise ConfigError(f"unknown depolymerization profile kind {kind!r}")


def _build_fragmentation(table: dict | None) -> Fragmentation:
    if table is None:
        return Fragmentation(breakage=ConstantBreakage(0.0))
    kind = _get(table, "kind", str, default="none")
    kernel = _get(table, "kernel", str, default="uniform")
    if kernel != "uniform":
        raise ConfigError(f"unknown daughter kernel {kernel!r}")
    if kind == "none":
        return Fragmentation(breakage=ConstantBreakage(0.0))
    if kind == "constant":
        return Fragmentation(breakage=ConstantBreakage(_get(table, "rate", float, required=True)))
    if kind == "saturated_power":
        return Fragmentation(
            breakage=SaturatedPowerBreakage(
                coeff=_get(table, "coeff", float, required=True),
                exponent=_get(table, "exponent", float, required=True),
                saturation=_get(table, "saturation", float, required=True),
            )
        )
    raise ConfigError(f"unknown fragmentation kind {kind!r}")


def _build_initial(table: dict | None) -> InitialData:
    if table is None:
        return InitialZero()
    kind = _get(table, "kind", str, default="zero")
    if kind == "zero":
        return InitialZero()
    if kind == "gaussian":
        return InitialGaussian(
            center=_get(table, "center", float, required=True),
            width=_get(table, "width", float, required=True),
            number=_get(table, "number", float, required=True),
        )
    if kind == "exponential":
        return InitialExponential(
            scale=_get(table, "scale", float, required=True),
            number=_get(table, "number", float, required=True),
        )
    if kind == "snapshot":
        return InitialSnapshot(path=_get(table, "path", str, required=True))
    raise ConfigError(f"unknown initial data kind {kind!r}")


def build_scenario(raw: dict, config_hash: str = "", name: str = "scenario") -> Scenario:
    """Assemble and cross-validate a scenario from parsed TOML data."""
    try:
        regime = Regime(_get(raw, "regime", str, default="increasing"))
    except ValueError as exc:
        raise ConfigError(f"unknown regime tag: {exc}") from None
    model_tbl = raw.get("model")
    if not isinstance(model_tbl, dict) or "depoly" not in model_tbl:
        raise ConfigError("config needs a [model.depoly] table")
    nuc_tbl = model_tbl.get("nucleation") or {}
    model = RateModel(
        depoly=_build_depoly(model_tbl["depoly"]),
        fragmentation=_build_fragmentation(model_tbl.get("fragmentation")),
        nucleation=NucleationSpec(
            epsilon=_get(nuc_tbl, "epsilon", int, default=0),
            nucleus_order=_get(nuc_tbl, "nucleus_order", int, default=1),
        ),
    )
    grid_tbl = raw.get("grid")
    if not isinstance(grid_tbl, dict):
        raise ConfigError("config needs a [grid] table")
    grid = SizeGrid(
        x_max=_get(grid_tbl, "x_max", float, required=True),
        n_cells=_get(grid_tbl, "n_cells", int, required=True),
    )
    initial = _build_initial(raw.get("initial"))

    solver_tbl = raw.get("solver") or {}
    options = SolverOptions(
        t_end=_get(solver_tbl, "t_end", float, default=1.0),
        output_stride=_get(solver_tbl, "output_stride", float, default=0.1),
        cfl=_get(solver_tbl, "cfl", float, default=0.9),
        frag_stability=_get(solver_tbl, "frag_stability", float, default=0.5),
        snapshot_stride=_get(solver_tbl, "snapshot_stride", float, default=None),
        leak_tolerance=_get(solver_tbl, "leak_tolerance", float, default=1e-6),
        conservation_tolerance=_get(solver_tbl, "conservation_tolerance", float, default=1e-10),
        lagrangian_dt=_get(solver_tbl, "lagrangian_dt", float, default=1e-3),
        n_particles=_get(solver_tbl, "n_particles", int, default=64),
    )
    solver_kind = _get(solver_tbl, "kind", str, default="eulerian")
    if solver_kind not in ("eulerian", "lagrangian"):
        raise ConfigError(f"unknown solver kind {solver_kind!r}")

    steady_tbl = raw.get("steady")
    steady = None
    if steady_tbl is not None:
        steady = SteadyOptions(
            R=_get(steady_tbl, "R", float, required=True),
            n_cells=_get(steady_tbl, "n_cells", int, required=True),
            eps_offset=_get(steady_tbl, "eps_offset", float, default=None),
            lambda_tol=_get(steady_tbl, "lambda_tol", float, default=1e-10),
            bracket_margin=_get(steady_tbl, "bracket_margin", float, default=None),
            scan_points=_get(steady_tbl, "scan_points", int, default=16),
            k_max=_get(steady_tbl, "k_max", int, default=3),
            path=_get(steady_tbl, "path", str, default="direct"),
        )

    init_tbl = raw.get("initial") or {}
    given_M = _get(init_tbl, "total_mass", float, default=None)
    given_V0 = _get(init_tbl, "V0", float, default=None)
    if (given_M is None) == (given_V0 is None):
        raise ConfigError("give exactly one of initial.total_mass or initial.V0")

    probe = Scenario(
        name=_get(raw, "name", str, default=name),
        regime=regime,
        model=model,
        initial=initial,
        grid=grid,
        options=options,
        total_mass=given_M if given_M is not None else 0.0,
        V0=given_V0 if given_V0 is not None else 0.0,
        solver=solver_kind,
        steady=steady,
        config_hash=config_hash,
    )
    m1 = polymer_mass(SystemState(grid=grid, t=0.0, V=0.0, u=probe.initial_density(), M=1.0))
    if given_M is not None:
        V0 = given_M - m1
        M = given_M
        if V0 < 0:
            raise ConfigError(
                f"initial polymer mass {m1} exceeds the requested total mass {given_M}"
            )
    else:
        V0 = given_V0
        M = given_V0 + m1
    if M <= 0:
        raise ConfigError("derived total mass must be positive")
    from dataclasses import replace

    return replace(probe, total_mass=M, V0=V0)


def load_scenario(path: str | Path) -> Scenario:
    """Parse a TOML scenario file; the config hash pins artifact provenance."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from None
    try:
        raw = tomllib.loads(data.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"malformed scenario file {path}: {exc}") from None
    digest = hashlib.sha256(data).hexdigest()
    return build_scenario(raw, config_hash=digest, name=path.stem)
