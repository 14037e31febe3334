"""Linear stability of homogeneous steady states and the Turing (diffusion-driven) analysis."""

from __future__ import annotations

import cmath
import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    CloudParams,
    DiffusionParams,
    Equilibrium,
    Jacobian2,
    NoAdmissibleEquilibrium,
    NotApplicable,
    equilibrium_cubic_B,
    equilibrium_general_case,
    jacobian,
)

BISECTION_TOL = 1e-6
BISECTION_MAXITER = 200


class NoSignChange(RuntimeError):
    """Threshold predicate does not flip on the search interval."""


class B2Definition(str, enum.Enum):
    A22_SIGN = "A22Sign"
    CRITERION_FAIL = "CriterionFail"
    LAST_DISCRETE_MODE = "LastDiscreteMode"


@dataclass(frozen=True)
class DomainSpec:
    length: float = 50.0
    dims: int = 1

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("domain length must be positive")
        if self.dims not in (1, 2):
            raise ValueError("dims must be 1 or 2")

    @property
    def dq2(self) -> float:
        """Squared wavenumber spacing (2 pi / L)^2."""
        return (2.0 * math.pi / self.length) ** 2


@dataclass
class StabilityReport:
    jac: Jacobian2
    trace: float
    det: float
    eigenvalues: tuple[complex, complex]
    ode_stable: bool
    turing_possible: bool | None = None
    qm_squared: float | None = None
    band: tuple[float, float] | None = None
    discrete_modes: list[tuple[int, ...]] = field(default_factory=list)


def eigenvalues(trace: float, det: float) -> tuple[complex, complex]:
    """Roots of ``lam^2 - trace*lam + det``, larger real part first."""
    disc = trace * trace - 4.0 * det
    if disc >= 0:
        s = math.sqrt(disc)
        big = 0.5 * (trace + math.copysign(s, trace)) if trace != 0 else 0.5 * s
        if big == 0.0:
            return complex(0.0), complex(0.0)
        small = det / big
        lo, hi = sorted((big, small))
        return complex(hi), complex(lo)
    s = cmath.sqrt(disc)
    return 0.5 * (trace + s), 0.5 * (trace - s)


def classify(jac: Jacobian2) -> StabilityReport:
    tr, det = jac.trace, jac.det
    return StabilityReport(
        jac=jac,
        trace=tr,
        det=det,
        eigenvalues=eigenvalues(tr, det),
        ode_stable=(tr < 0 and det > 0),
    )


def dispersion_p2(jac: Jacobian2, diff: DiffusionParams, x):
    """Determinant of the mode Jacobian as a function of ``x = q^2``."""
    x = np.asarray(x, dtype=float)
    out = (jac.a11 - diff.d1 * x) * (jac.a22 - diff.d2 * x) - jac.a12 * jac.a21
    return float(out) if out.ndim == 0 else out


def mode_matrix(jac: Jacobian2, diff: DiffusionParams, x: float) -> np.ndarray:
    return np.array([[jac.a11 - diff.d1 * x, jac.a12], [jac.a21, jac.a22 - diff.d2 * x]])


def mode_growth_rate(jac: Jacobian2, diff: DiffusionParams, x) -> np.ndarray | float:
    """Largest real part of the eigenvalues of the mode-``q`` Jacobian, ``x = q^2``."""
    x = np.asarray(x, dtype=float)
    tr = jac.trace - (diff.d1 + diff.d2) * x
    det = dispersion_p2(jac, diff, x)
    disc = tr * tr - 4.0 * det
    re = np.where(disc >= 0, 0.5 * (tr + np.sqrt(np.abs(disc))), 0.5 * tr)
    return float(re) if re.ndim == 0 else re


def most_unstable_mode(jac: Jacobian2, diff: DiffusionParams) -> float:
    return (diff.d1 * jac.a22 + diff.d2 * jac.a11) / (2.0 * diff.d1 * diff.d2)


def turing_margin(jac: Jacobian2, diff: DiffusionParams) -> tuple[float, float]:
    """Both sides of the destabilisation inequality, ``lhs > rhs`` means Turing."""
    lhs = diff.d1 * jac.a22 + diff.d2 * jac.a11
    rhs = 2.0 * math.sqrt(diff.d1 * diff.d2 * jac.det) if jac.det > 0 else math.nan
    return lhs, rhs


def turing_criterion(jac: Jacobian2, diff: DiffusionParams) -> bool:
    lhs, rhs = turing_margin(jac, diff)
    return jac.det > 0 and lhs > rhs


def unstable_band(jac: Jacobian2, diff: DiffusionParams) -> tuple[float, float] | None:
    """Roots ``(x-, x+)`` of the dispersion polynomial when its vertex dips below zero at q^2 > 0."""
    A = diff.d1 * diff.d2
    Bc = diff.d1 * jac.a22 + diff.d2 * jac.a11
    C = jac.det
    disc = Bc * Bc - 4.0 * A * C
    if disc <= 0 or Bc / (2.0 * A) <= 0:
        return None
    s = math.sqrt(disc)
    hi = (Bc + s) / (2.0 * A)
    lo = C / (A * hi)
    return (lo, hi)


def discrete_unstable_modes(band, dom: DomainSpec) -> list[tuple[int, ...]]:
    """Integer lattice modes whose ``q^2`` lies strictly inside ``band``.

    2D modes are folded to ``(n1, n2)`` with ``n1 >= n2 >= 0``.
    """
    if band is None:
        return []
    lo, hi = band
    r2_max = int(math.floor(hi / dom.dq2)) + 1
    modes = []
    if dom.dims == 1:
        for n in range(1, int(math.isqrt(r2_max)) + 2):
            x = dom.dq2 * n * n
            if lo < x < hi:
                modes.append((n,))
        return modes
    nmax = int(math.isqrt(r2_max)) + 1
    for n1 in range(0, nmax + 1):
        for n2 in range(0, n1 + 1):
            if n1 == 0 and n2 == 0:
                continue
            x = dom.dq2 * (n1 * n1 + n2 * n2)
            if lo < x < hi:
                modes.append((n1, n2))
    modes.sort(key=lambda m: (sum(k * k for k in m), m))
    return modes


@dataclass(frozen=True)
class ModeRow:
    index: tuple[int, ...]
    q: float
    q2: float
    p2: float
    sigma: float
    unstable: bool


def mode_table(jac: Jacobian2, diff: DiffusionParams, dom: DomainSpec, n_max: int = 10) -> list[ModeRow]:
    """Evaluate the dispersion polynomial directly at every lattice mode up to ``n_max``.

    This is the brute-force counterpart to ``discrete_unstable_modes``. In 2D
    one row is emitted per radius class ``n1^2 + n2^2``, keyed by its
    lexicographically largest folded pair.
    """
    rows = []
    if dom.dims == 1:
        keys = [((n,), n * n) for n in range(1, n_max + 1)]
    else:
        seen = {}
        for n1, n2 in itertools.product(range(n_max + 1), repeat=2):
            if n2 > n1 or (n1 == 0 and n2 == 0):
                continue
            seen.setdefault(n1 * n1 + n2 * n2, (n1, n2))
        keys = [(seen[r], r) for r in sorted(seen)]
    for idx, r2 in keys:
        x = dom.dq2 * r2
        p2 = dispersion_p2(jac, diff, x)
        rows.append(ModeRow(idx, math.sqrt(x), x, p2, mode_growth_rate(jac, diff, x), p2 < 0))
    return rows


def analyze(jac: Jacobian2, diff: DiffusionParams, dom: DomainSpec | None = None) -> StabilityReport:
    """Full report: ODE classification, Turing criterion, band and lattice modes."""
    rep = classify(jac)
    rep.qm_squared = most_unstable_mode(jac, diff)
    rep.turing_possible = rep.ode_stable and turing_criterion(jac, diff)
    rep.band = unstable_band(jac, diff)
    if dom is not None and rep.turing_possible:
        rep.discrete_modes = discrete_unstable_modes(rep.band, dom)
    return rep


def bifurcation_B1(p: CloudParams) -> float:
    if not (p.gamma == 1 and p.beta_c == 2 and p.beta_r == 2 and p.zeta == 1):
        raise NotApplicable("B1 is defined for the beta = 2 class")
    return (27.0 / 4.0 * p.d**2 * p.c * (p.c - p.a1) / p.a2) ** (1.0 / 3.0)


def cubic_equilibrium_at(p: CloudParams, B: float) -> Equilibrium:
    """Admissible cubic-branch steady state at rain influx ``B``."""
    for e in equilibrium_cubic_B(p.with_B(B)):
        if e.admissible:
            return e
    raise NoAdmissibleEquilibrium(f"no admissible cubic root at B={B}")


def _b2_predicate(p: CloudParams, diff: DiffusionParams, dom: DomainSpec, definition: B2Definition):
    def pred(B: float) -> bool:
        e = cubic_equilibrium_at(p, B)
        jac = jacobian(p.with_B(B), e)
        if definition is B2Definition.A22_SIGN:
            return jac.a22 > 0
        if definition is B2Definition.CRITERION_FAIL:
            return classify(jac).ode_stable and turing_criterion(jac, diff)
        rep = analyze(jac, diff, dom)
        return bool(rep.discrete_modes)

    return pred


def threshold_B2(p: CloudParams, diff: DiffusionParams, dom: DomainSpec,
                 definition: B2Definition | str = B2Definition.LAST_DISCRETE_MODE,
                 tol: float = BISECTION_TOL, b_max: float | None = None) -> float:
    """Rain influx where the selected Turing predicate switches off, by bisection on ``[0, B1]``."""
    definition = B2Definition(definition)
    pred = _b2_predicate(p, diff, dom, definition)
    lo, hi = 0.0, bifurcation_B1(p) if b_max is None else b_max
    if p.c <= p.a1:
        raise NoSignChange("no admissible non-trivial equilibrium at B = 0")
    p_lo, p_hi = pred(lo), pred(hi)
    if p_lo == p_hi:
        raise NoSignChange(f"{definition.value} predicate is {p_lo} at both ends of [0, {hi}]")
    for _ in range(BISECTION_MAXITER):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if pred(mid) == p_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def impossibility_general_case(p: CloudParams, atol: float = 1e-12) -> bool:
    """Certificate that no diffusion pair destabilises the ``gamma = beta_c = 1`` steady state.

    At that state a11 vanishes, a12 <= 0 and a21 > 0, so the criterion would
    need ``D1*a22 > 2*sqrt(-D1*D2*a12*a21) >= 0`` while ODE stability forces
    ``a22 < 0``. The checks below assert each ingredient numerically.
    """
    if p.gamma != 1 or p.beta_c != 1:
        raise NotApplicable("certificate covers gamma = beta_c = 1 only")
    e = equilibrium_general_case(p)
    if not e.admissible:
        raise NoAdmissibleEquilibrium("closed-form steady state is not admissible")
    jac = jacobian(p, e)
    scale = max(p.c, p.a1, 1.0)
    assert abs(jac.a11) <= atol * scale, f"a11 = {jac.a11} should vanish"
    assert jac.a12 <= 0 and jac.a21 > 0
    assert abs(jac.a21 - p.c) <= 1e-12 * scale
    if classify(jac).ode_stable:
        # with a11 = 0, trace < 0 reduces to a22 < 0: the left side is negative
        assert jac.a22 < 0
    return True
