"""Reaction-rate profiles and machine-checkable validity reports.

Three rate ingredients drive the kinetics: a depolymerization speed d(x),
a breakage rate B(x) with a binary daughter kernel kappa(y, x), and a
nucleation inflow at size zero. Only validated parametric families are
supported; every profile carries its analytic inverse, primitive and
monotonicity data so the solvers never re-derive them numerically.

All profiles are immutable values and safe to share across threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np

from .errors import DomainError, OutOfRangeError

ArrayLike = Union[float, np.ndarray]


def _shape_like(x: ArrayLike, values: np.ndarray) -> ArrayLike:
    """Return scalars for scalar input, arrays otherwise."""
    if np.ndim(x) == 0:
        return float(values)
    return values


def _check_nonnegative_size(x: ArrayLike) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise DomainError("size argument must be nonnegative")
    return arr


@dataclass(frozen=True)
class LinearDepoly:
    """Affine depolymerization speed d(x) = d0 + slope * x.

    Strictly increasing with derivative pinned between alpha = beta = slope,
    which is the regime where polymers of every size eventually shed their
    mass back to the monomer pool.
    """

    d0: float
    slope: float

    def __post_init__(self):
        if self.d0 < 0:
            raise DomainError("d0 must be nonnegative")
        if self.slope <= 0:
            raise DomainError("slope must be positive")

    increasing = True

    @property
    def at_zero(self) -> float:
        return self.d0

    @property
    def at_infinity(self) -> float:
        return math.inf

    def __call__(self, x: ArrayLike) -> ArrayLike:
        arr = np.asarray(x, dtype=float)
        return _shape_like(x, self.d0 + self.slope * arr)

    def derivative(self, x: ArrayLike) -> ArrayLike:
        arr = np.asarray(x, dtype=float)
        return _shape_like(x, np.full_like(arr, self.slope))

    def derivative_bounds(self) -> tuple[float, float]:
        """(alpha, beta) with alpha <= d' <= beta everywhere."""
        return (self.slope, self.slope)

    def inverse(self, v: float) -> float:
        if v < self.d0:
            raise OutOfRangeError(
                f"value {v} below the minimum d(0)={self.d0} of the profile",
                bound="below",
            )
        return (v - self.d0) / self.slope

    def primitive(self, x: ArrayLike) -> ArrayLike:
        """Antiderivative k(x) = integral of d on [0, x], with k(0) = 0."""
        arr = np.asarray(x, dtype=float)
        return _shape_like(x, self.d0 * arr + 0.5 * self.slope * arr * arr)


@dataclass(frozen=True)
class InverseDecayDepoly:
    """Shifted inverse-power speed d(x) = floor + amplitude * (1+x)**(-power).

    C1, positive and strictly decreasing, with d(0) = floor + amplitude and
    infimum `floor` approached (never attained) at infinity. The (1+x) shift
    keeps the profile smooth at x = 0; for x >= 1 the excess over the floor
    still dominates amplitude * 2**(-power) * x**(-power).
    """

    floor: float
    amplitude: float
    power: int

    def __post_init__(self):
        if self.floor <= 0:
            raise DomainError("floor must be positive")
        if self.amplitude <= 0:
            raise DomainError("amplitude must be positive")
        if self.power < 1 or int(self.power) != self.power:
            raise DomainError("power must be a positive integer")

    increasing = False

    @property
    def at_zero(self) -> float:
        return self.floor + self.amplitude

    @property
    def at_infinity(self) -> float:
        return self.floor

    def __call__(self, x: ArrayLike) -> ArrayLike:
        arr = np.asarray(x, dtype=float)
        return _shape_like(x, self.floor + self.amplitude * (1.0 + arr) ** (-self.power))

    def derivative(self, x: ArrayLike) -> ArrayLike:
        arr = np.asarray(x, dtype=float)
        val = -self.power * self.amplitude * (1.0 + arr) ** (-self.power - 1)
        return _shape_like(x, val)

    def inverse(self, v: float) -> float:
        if v <= self.floor:
            raise OutOfRangeError(
                f"value {v} at or below the infimum {self.floor}, never attained",
                bound="below",
            )
        if v > self.at_zero:
            raise OutOfRangeError(
                f"value {v} above the maximum d(0)={self.at_zero}",
                bound="above",
            )
        return ((v - self.floor) / self.amplitude) ** (-1.0 / self.power) - 1.0

    def primitive(self, x: ArrayLike) -> ArrayLike:
        arr = np.asarray(x, dtype=float)
        if self.power == 1:
            tail = self.amplitude * np.log1p(arr)
        else:
            tail = self.amplitude * ((1.0 + arr) ** (1 - self.power) - 1.0) / (1 - self.power)
        return _shape_like(x, self.floor * arr + tail)

    def decay_bound(self) -> tuple[float, int]:
        """(C, n) with d(x) - floor >= C * x**(-n) for all x >= 1."""
        return (self.amplitude * 2.0 ** (-self.power), self.power)


DepolyProfile = Union[LinearDepoly, InverseDecayDepoly]


@dataclass(frozen=True)
class UniformKernel:
    """Binary daughter kernel: fragments of a size-y parent are uniform on [0, y].

    Normalized to unit probability with mean daughter size y/2, so a split
    conserves mass exactly and doubles the fragment count.
    """

    def density(self, y: float, x: ArrayLike) -> ArrayLike:
        if y <= 0:
            raise DomainError("parent size must be positive")
        arr = _check_nonnegative_size(x)
        if np.any(arr > y * (1 + 1e-12)):
            raise DomainError("daughter size cannot exceed parent size")
        return _shape_like(x, np.full_like(arr, 1.0 / y))

    def partial_moment(self, y: float, x: float, k: int) -> float:
        """Integral of kappa(y, z) * (z/y)**k over z in [0, x], closed form."""
        if y <= 0:
            raise DomainError("parent size must be positive")
        if x < 0 or x > y * (1 + 1e-12):
            raise DomainError("need 0 <= x <= y")
        if k < 0 or int(k) != k:
            raise DomainError("moment order must be a nonnegative integer")
        return (min(x, y) / y) ** (k + 1) / (k + 1)

    # Quantities used by the small-size analysis of the steady profile:
    # |integral of kappa(y, .) over [x, x0]| = |x - x0| / y, i.e. a Hoelder
    # bound with exponent 1 and constant 1.
    holder_exponent = 1.0
    holder_constant = 1.0


@dataclass(frozen=True)
class ConstantBreakage:
    """Size-independent breakage rate B(x) = rate (rate 0 disables breakage)."""

    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise DomainError("breakage rate must be nonnegative")

    def __call__(self, x: ArrayLike) -> ArrayLike:
        arr = np.asarray(x, dtype=float)
        return _shape_like(x, np.full_like(arr, self.rate))

    def sup(self) -> float:
        return self.rate

    def global_floor(self) -> float:
        """inf over x >= 0 of B(x)."""
        return self.rate

    def floor_beyond(self) -> tuple[float, float]:
        """(A, B_m) with B(x) >= B_m for all x >= A."""
        return (0.0, self.rate)

    def power_envelope(self) -> tuple[float, float] | None:
        """(gamma, C) with B(x) <= C * x**gamma, or None if no such envelope."""
        if self.rate == 0.0:
            return (1.0, 0.0)
        return None


@dataclass(frozen=True)
class SaturatedPowerBreakage:
    """Power-law breakage saturating at a plateau: B(x) = coeff * min(x, saturation)**exponent.

    Vanishes at zero size like x**exponent and stays bounded by its plateau
    value, the combination required for a polymerized steady profile.
    """

    coeff: float
    exponent: float
    saturation: float

    def __post_init__(self):
        if self.coeff <= 0:
            raise DomainError("coeff must be positive")
        if self.exponent <= 0:
            raise DomainError("exponent must be positive")
        if self.saturation <= 0:
            raise DomainError("saturation size must be positive")

    def __call__(self, x: ArrayLike) -> ArrayLike:
        arr = np.asarray(x, dtype=float)
        return _shape_like(x, self.coeff * np.minimum(arr, self.saturation) ** self.exponent)

    def sup(self) -> float:
        return self.coeff * self.saturation**self.exponent

    def global_floor(self) -> float:
        return 0.0

    def floor_beyond(self) -> tuple[float, float]:
        return (self.saturation, self.sup())

    def power_envelope(self) -> tuple[float, float] | None:
        # Pair with the kernel bound: the usable exponent is capped by the
        # kernel's Hoelder exponent (1 for the uniform kernel).
        gamma = min(self.exponent, 1.0)
        return (gamma, self.coeff * self.saturation ** (self.exponent - gamma))


BreakageRate = Union[ConstantBreakage, SaturatedPowerBreakage]


@dataclass(frozen=True)
class Fragmentation:
    """Breakage rate plus daughter kernel."""

    breakage: BreakageRate
    kernel: UniformKernel = field(default_factory=UniformKernel)

    @property
    def active(self) -> bool:
        return self.breakage.sup() > 0.0


@dataclass(frozen=True)
class NucleationSpec:
    """Spontaneous creation of size-zero polymers out of monomers.

    ``epsilon`` switches the reaction on (1) or off (0); ``nucleus_order``
    is the number of monomers forming a nucleus, so the inflow scales like
    V**nucleus_order while the monomer level exceeds d(0).
    """

    epsilon: int
    nucleus_order: int = 1

    def __post_init__(self):
        if self.epsilon not in (0, 1):
            raise DomainError("epsilon must be 0 or 1")
        if self.nucleus_order < 1 or int(self.nucleus_order) != self.nucleus_order:
            raise DomainError("nucleus_order must be a positive integer")


@dataclass(frozen=True)
class RateModel:
    """Complete rate specification for one scenario."""

    depoly: DepolyProfile
    fragmentation: Fragmentation
    nucleation: NucleationSpec


class Regime(str, Enum):
    """Which hypothesis set the scenario claims to satisfy."""

    INCREASING = "increasing"
    DECREASING_FRAGMENTATION = "decreasing_fragmentation"


def eval_d(profile: DepolyProfile, x: ArrayLike) -> ArrayLike:
    """Depolymerization speed at size x (negative x rejected)."""
    arr = _check_nonnegative_size(x)
    return profile(_shape_like(x, arr))


def eval_d_inverse(profile: DepolyProfile, v: float) -> float:
    """Unique size x with d(x) = v; monotonicity guarantees uniqueness."""
    return profile.inverse(v)


def kernel_partial_moment(frag: Fragmentation, y: float, x: float, k: int) -> float:
    """Partial k-th daughter moment: integral of kappa(y,z) (z/y)**k over [0, x]."""
    return frag.kernel.partial_moment(y, x, k)


def a_coefficient(frag: Fragmentation, x: float, k: int) -> float:
    """Moment deficit 1 - 2 * partial k-th moment of a full split.

    Measures how the k-th moment responds to one binary breakage event:
    k = 0 gives -1 (one extra fragment), k = 1 gives 0 (mass conserved),
    k >= 2 is positive when the kernel does not pile daughters at the ends.
    """
    if x <= 0:
        raise DomainError("size must be positive")
    return 1.0 - 2.0 * frag.kernel.partial_moment(x, x, k)


@dataclass(frozen=True)
class AssumptionCheck:
    key: str
    description: str
    passed: bool
    witness: dict

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "description": self.description,
            "passed": self.passed,
            "witness": self.witness,
        }


@dataclass(frozen=True)
class AssumptionReport:
    """Pass/fail record for every hypothesis the claimed regime needs."""

    regime: Regime
    checks: tuple[AssumptionCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def constants(self) -> dict:
        merged: dict = {}
        for c in self.checks:
            merged.update(c.witness)
        return merged

    def failures(self) -> list[AssumptionCheck]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "ok": self.ok,
            "checks": [c.to_dict() for c in self.checks],
        }


_KERNEL_SAMPLE_SIZES = (0.5, 1.0, 2.0, 7.5)


def _kernel_checks(frag: Fragmentation) -> list[AssumptionCheck]:
    norm_ok = all(
        abs(kernel_partial_moment(frag, y, y, 0) - 1.0) == 0.0 for y in _KERNEL_SAMPLE_SIZES
    )
    split_ok = all(
        abs(kernel_partial_moment(frag, y, y, 1) - 0.5) == 0.0 for y in _KERNEL_SAMPLE_SIZES
    )
    return [
        AssumptionCheck(
            "kernel_normalization",
            "daughter kernel integrates to one fragment pair per split",
            norm_ok,
            {},
        ),
        AssumptionCheck(
            "kernel_mass_split",
            "mean daughter size is half the parent size (mass conserving)",
            split_ok,
            {},
        ),
    ]


def _nucleation_check(nuc: NucleationSpec) -> AssumptionCheck:
    ok = nuc.epsilon in (0, 1) and nuc.nucleus_order >= 1
    return AssumptionCheck(
        "nucleation_wellformed",
        "nucleation switch is 0/1 and the nucleus order is a positive integer",
        ok,
        {"epsilon": nuc.epsilon, "i0": nuc.nucleus_order},
    )


def validate_assumptions(model: RateModel, regime: Regime) -> AssumptionReport:
    """Check every standing hypothesis of the requested regime.

    Report-only: each entry carries a pass flag plus the witness constants
    (alpha, beta, B_m, B_M, c, gamma, C, A) that downstream estimators use.
    """
    d = model.depoly
    frag = model.fragmentation
    checks: list[AssumptionCheck] = []

    if regime is Regime.INCREASING:
        if d.increasing:
            alpha, beta = d.derivative_bounds()
            checks.append(
                AssumptionCheck(
                    "depoly_increasing_slope",
                    "d is C1 with derivative pinned in [alpha, beta], alpha > 0",
                    alpha > 0,
                    {"alpha": alpha, "beta": beta},
                )
            )
        else:
            checks.append(
                AssumptionCheck(
                    "depoly_increasing_slope",
                    "d is C1 with derivative pinned in [alpha, beta], alpha > 0",
                    False,
                    {"detail": "profile is strictly decreasing"},
                )
            )
        checks.append(_nucleation_check(model.nucleation))
        if frag.active:
            checks.extend(_kernel_checks(frag))
            floor = frag.breakage.global_floor()
            checks.append(
                AssumptionCheck(
                    "breakage_global_floor",
                    "B(x) >= B_m > 0 for every size (shattering regime)",
                    floor > 0,
                    {"B_m": floor},
                )
            )
    elif regime is Regime.DECREASING_FRAGMENTATION:
        checks.append(
            AssumptionCheck(
                "depoly_strictly_decreasing",
                "d is C1, positive and strictly decreasing",
                not d.increasing,
                {} if d.increasing else {"d0": d.at_zero, "d_inf": d.at_infinity},
            )
        )
        if not d.increasing:
            C_d, n = d.decay_bound()
            xs = np.linspace(1.0, 50.0, 200)
            ok = bool(np.all(np.asarray(d(xs)) - d.at_infinity >= C_d * xs ** (-float(n)) * (1 - 1e-12)))
            checks.append(
                AssumptionCheck(
                    "depoly_decay_lower_bound",
                    "excess over the floor decays no faster than C * x**(-n) for x >= 1",
                    ok,
                    {"C_decay": C_d, "n": n},
                )
            )
        checks.extend(_kernel_checks(frag))
        c = a_coefficient(frag, 1.0, 2) if frag.active else 0.0
        checks.append(
            AssumptionCheck(
                "kernel_second_moment_gap",
                "binary splits strictly decrease the second moment (a_2 >= c > 0)",
                frag.active and c > 0,
                {"c": c},
            )
        )
        A, B_m = frag.breakage.floor_beyond()
        checks.append(
            AssumptionCheck(
                "breakage_floor_beyond",
                "B(x) >= B_m > 0 for all x beyond some size A",
                B_m > 0,
                {"A": A, "B_m": B_m},
            )
        )
        B_M = frag.breakage.sup()
        checks.append(
            AssumptionCheck(
                "breakage_bounded",
                "sup B = B_M is finite",
                math.isfinite(B_M) and B_M > 0,
                {"B_M": B_M},
            )
        )
        env = frag.breakage.power_envelope()
        if env is None:
            checks.append(
                AssumptionCheck(
                    "breakage_small_size_envelope",
                    "B(x) <= C_B * x**gamma near zero for some gamma > 0",
                    False,
                    {"detail": "rate does not vanish at zero size"},
                )
            )
        else:
            gamma, C_B = env
            checks.append(
                AssumptionCheck(
                    "breakage_small_size_envelope",
                    "B(x) <= C_B * x**gamma near zero for some gamma > 0",
                    gamma > 0 and C_B >= 0,
                    {"gamma": gamma, "C_B": C_B},
                )
            )
            checks.append(
                AssumptionCheck(
                    "kernel_holder_bound",
                    "kernel tail integrals are Hoelder in the window width at the same gamma",
                    gamma <= frag.kernel.holder_exponent,
                    {"gamma": min(gamma, frag.kernel.holder_exponent), "C": frag.kernel.holder_constant},
                )
            )
        checks.append(_nucleation_check(model.nucleation))
    else:  # pragma: no cover - enum is exhaustive
        raise DomainError(f"unknown regime {regime!r}")

    return AssumptionReport(regime=regime, checks=tuple(checks))
