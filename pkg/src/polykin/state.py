"""Size grid, Eulerian system state and moment functionals.

A state is a value: solvers never mutate one in place, they return new
instances. The density array is defensively copied and frozen on
construction so sharing across threads is safe.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError

_FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class SizeGrid:
    """Uniform cell-centered discretization of polymer size on [0, x_max]."""

    x_max: float
    n_cells: int

    def __post_init__(self):
        if self.x_max <= 0:
            raise DomainError("x_max must be positive")
        if self.n_cells < 2:
            raise DomainError("need at least two cells")

    @property
    def dx(self) -> float:
        return self.x_max / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        c = (np.arange(self.n_cells) + 0.5) * self.dx
        c.flags.writeable = False
        return c

    @property
    def faces(self) -> np.ndarray:
        f = np.arange(self.n_cells + 1) * self.dx
        f.flags.writeable = False
        return f

    def refined(self, factor: int = 2) -> "SizeGrid":
        return SizeGrid(self.x_max, self.n_cells * factor)


@dataclass(frozen=True)
class SystemState:
    """Monomer level V plus per-cell polymer densities at one instant.

    ``M`` is the conserved scenario mass; ``leaked`` and ``clipped`` are the
    cumulative bookkeeping corrections (mass lost through the right boundary
    and mass added by negative-density clipping), ``absorbed`` counts the
    polymer number that fully depolymerized through size zero.
    """

    grid: SizeGrid
    t: float
    V: float
    u: np.ndarray = field(compare=False)
    M: float
    leaked: float = 0.0
    clipped: float = 0.0
    absorbed: float = 0.0

    def __post_init__(self):
        arr = np.array(self.u, dtype=float, copy=True)
        if arr.shape != (self.grid.n_cells,):
            raise DomainError(
                f"density has shape {arr.shape}, grid expects ({self.grid.n_cells},)"
            )
        if not np.all(np.isfinite(arr)):
            raise DomainError("density must be finite")
        if np.any(arr < 0):
            raise DomainError("density must be nonnegative")
        arr.flags.writeable = False
        object.__setattr__(self, "u", arr)
        for name in ("t", "V", "M", "leaked", "clipped", "absorbed"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.t < 0:
            raise DomainError("time must be nonnegative")
        if not np.isfinite(self.V):
            raise DomainError("monomer level must be finite")


def number(state: SystemState) -> float:
    """Total polymer count: sum of u_i * dx."""
    return float(np.sum(state.u) * state.grid.dx)


def moment(state: SystemState, n: float) -> float:
    """Scaled n-th moment (1/n) * sum of x_i**n * u_i * dx, n > 0."""
    if n <= 0:
        raise DomainError("moment order must be positive")
    x = state.grid.centers
    return float(np.sum(x**n * state.u) * state.grid.dx / n)


def polymer_mass(state: SystemState) -> float:
    """First moment sum of x_i * u_i * dx (mass bound in polymers)."""
    return float(np.sum(state.grid.centers * state.u) * state.grid.dx)


def total_mass(state: SystemState) -> float:
    """Monomer level plus polymerized mass."""
    return state.V + polymer_mass(state)


def mass_audit(state: SystemState) -> float:
    """Absolute defect of the conservation closure including the leak ledger."""
    return abs(total_mass(state) + state.leaked - state.M)


def moment_about(state: SystemState, center: float, p: int) -> float:
    """Raw p-th moment about an arbitrary size (no 1/p scaling)."""
    x = state.grid.centers
    return float(np.sum(np.abs(x - center) ** p * state.u) * state.grid.dx)


def write_snapshot(state: SystemState, path: str | Path, meta: dict | None = None) -> None:
    """Write the state as CSV: metadata comment lines, then `x,u` rows."""
    path = Path(path)
    lines = [f"# t={state.t!r},V={state.V!r},M={state.M!r}"]
    for key, value in (meta or {}).items():
        lines.append(f"# {key}={value}")
    lines.append("x,u")
    x = state.grid.centers
    for xi, ui in zip(x, state.u):
        lines.append(f"{_FLOAT_FMT % xi},{_FLOAT_FMT % ui}")
    path.write_text("\n".join(lines) + "\n")


def read_snapshot(path: str | Path) -> SystemState:
    """Reload a snapshot written by `write_snapshot`; grid inferred from x."""
    path = Path(path)
    t = V = M = None
    xs: list[float] = []
    us: list[float] = []
    header_seen = False
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body and body.split("=")[0].strip() == "t":
                for part in body.split(","):
                    key, _, value = part.partition("=")
                    key = key.strip()
                    if key == "t":
                        t = float(value)
                    elif key == "V":
                        V = float(value)
                    elif key == "M":
                        M = float(value)
            continue
        if not header_seen:
            if line != "x,u":
                raise ConfigError(f"unexpected snapshot header {line!r} in {path}")
            header_seen = True
            continue
        sx, _, su = line.partition(",")
        xs.append(float(sx))
        us.append(float(su))
    if t is None or V is None or M is None:
        raise ConfigError(f"snapshot {path} is missing the t/V/M metadata line")
    if len(xs) < 2:
        raise ConfigError(f"snapshot {path} holds fewer than two cells")
    x = np.asarray(xs)
    dx = x[1] - x[0]
    if not np.allclose(np.diff(x), dx, rtol=1e-9, atol=1e-12):
        raise ConfigError(f"snapshot {path} is not on a uniform grid")
    grid = SizeGrid(x_max=float(x[-1] + dx / 2), n_cells=len(xs))
    return SystemState(grid=grid, t=t, V=V, u=np.asarray(us), M=M)
