"""Generic warm-cloud bulk model: parameters, reaction terms, Jacobians, equilibria.

The reaction system for cloud water ``qc`` and rain water ``qr`` is

    dqc/dt = c*qc - a1*qc**gamma - a2*qc**beta_c * qr**beta_r
    dqr/dt =        a1*qc**gamma + a2*qc**beta_c * qr**beta_r + B - d*qr**zeta

Everything here is a pure function of immutable inputs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

RESIDUAL_TOL = 1e-10


class DomainError(ValueError):
    """A real power of a negative base (or zero to a negative power) was requested."""


class NotApplicable(ValueError):
    """The requested closed form does not apply to these exponents."""


class DegenerateCubic(ValueError):
    """Leading coefficient of the equilibrium cubic vanishes."""


class NoAdmissibleEquilibrium(RuntimeError):
    """No nonnegative non-trivial steady state exists for the parameters."""


class Branch(str, enum.Enum):
    TRIVIAL = "Trivial"
    GENERAL_CASE_LINEAR = "GeneralCaseLinear"
    BETA_CLASS = "BetaClass"
    CUBIC_B = "CubicB"
    NUMERIC = "Numeric"


class TrivialCase(str, enum.Enum):
    """Four-way split of the trivial-state Jacobian on (gamma, beta_c) vs 1."""

    LINEAR_LINEAR = "gamma=1,beta_c=1"
    LINEAR_SUPER = "gamma=1,beta_c>1"
    SUPER_LINEAR = "gamma>1,beta_c=1"
    UNSTABLE_ALWAYS = "Unstable-Always"


def rpow(x: float, p: float) -> float:
    """Real power ``x**p`` restricted to the nonnegative orthant.

    Negative bases are allowed only for integer exponents; ``0**p`` with
    ``p < 0`` is rejected instead of returning ``inf``.
    """
    if x < 0.0 and not float(p).is_integer():
        raise DomainError(f"negative base {x!r} with non-integer exponent {p!r}")
    if x == 0.0 and p < 0.0:
        raise DomainError(f"zero base with negative exponent {p!r}")
    return float(x) ** float(p)


@dataclass(frozen=True)
class CloudParams:
    c: float = 5.0
    a1: float = 1.0
    a2: float = 1.0
    gamma: float = 1.0
    beta_c: float = 2.0
    beta_r: float = 2.0
    zeta: float = 1.0
    d: float = 0.1
    B: float = 0.0

    def __post_init__(self):
        for name in ("c", "a1", "a2", "d"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if not (math.isfinite(self.B) and self.B >= 0):
            raise ValueError(f"B must be nonnegative, got {self.B!r}")
        # gamma < 1 or beta_c < 1 makes the right-hand side non-Lipschitz at qc = 0
        if not self.gamma >= 1:
            raise ValueError(f"gamma must be >= 1, got {self.gamma!r}")
        if not self.beta_c >= 1:
            raise ValueError(f"beta_c must be >= 1, got {self.beta_c!r}")
        if not (self.beta_r > 0 and self.zeta > 0):
            raise ValueError("beta_r and zeta must be positive")

    def with_B(self, B: float) -> "CloudParams":
        return replace(self, B=float(B))

    @property
    def conserved(self) -> float:
        """(c - a1)/a2, the value of the equilibrium invariant."""
        return (self.c - self.a1) / self.a2


@dataclass(frozen=True)
class DiffusionParams:
    d1: float = 1000.0
    d2: float = 0.1

    def __post_init__(self):
        for name in ("d1", "d2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class State:
    qc: float
    qr: float

    def __post_init__(self):
        if self.qc < 0 or self.qr < 0:
            raise ValueError(f"state must be nonnegative, got ({self.qc}, {self.qr})")


@dataclass(frozen=True)
class Equilibrium:
    """A steady state. ``qc``/``qr`` may be negative when ``admissible`` is False."""

    qc: float
    qr: float
    branch: Branch
    admissible: bool

    @property
    def state(self) -> State:
        return State(self.qc, self.qr)

    def as_tuple(self) -> tuple[float, float]:
        return (self.qc, self.qr)


@dataclass(frozen=True)
class Jacobian2:
    a11: float
    a12: float
    a21: float
    a22: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.a11, self.a12, self.a21, self.a22)):
            raise ValueError("Jacobian entries must be finite")

    @property
    def trace(self) -> float:
        return self.a11 + self.a22

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def as_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])


def _as_pair(s) -> tuple[float, float]:
    if isinstance(s, (State, Equilibrium)):
        return s.qc, s.qr
    qc, qr = s
    return float(qc), float(qr)


def collision_terms(p: CloudParams, qc: float, qr: float) -> float:
    """Autoconversion plus accretion, the mass moved from cloud to rain."""
    return p.a1 * rpow(qc, p.gamma) + p.a2 * rpow(qc, p.beta_c) * rpow(qr, p.beta_r)


def reaction_rhs(p: CloudParams, s) -> tuple[float, float]:
    qc, qr = _as_pair(s)
    coll = collision_terms(p, qc, qr)
    return (p.c * qc - coll, coll + p.B - p.d * rpow(qr, p.zeta))


def residual_norm(p: CloudParams, s) -> float:
    f1, f2 = reaction_rhs(p, s)
    return max(abs(f1), abs(f2))


def jacobian(p: CloudParams, s) -> Jacobian2:
    """Analytic Jacobian of ``reaction_rhs``.

    At ``qc == 0`` the factors ``qc**(gamma-1)`` and ``qc**(beta_c-1)`` are
    1 for unit exponents and 0 above 1, which is what Python's ``0.0**0.0``
    and ``0.0**x`` already produce.
    """
    qc, qr = _as_pair(s)
    dauto = p.a1 * p.gamma * rpow(qc, p.gamma - 1)
    dacc_c = p.a2 * p.beta_c * rpow(qc, p.beta_c - 1) * rpow(qr, p.beta_r)
    if qc == 0.0:
        dacc_r = 0.0  # qc**beta_c vanishes, whatever qr**(beta_r-1) does
    else:
        dacc_r = p.a2 * p.beta_r * rpow(qc, p.beta_c) * rpow(qr, p.beta_r - 1)
    dsed = p.d * p.zeta * rpow(qr, p.zeta - 1)
    return Jacobian2(
        a11=p.c - dauto - dacc_c,
        a12=-dacc_r,
        a21=dauto + dacc_c,
        a22=dacc_r - dsed,
    )


def trivial_equilibrium(p: CloudParams) -> Equilibrium:
    return Equilibrium(0.0, rpow(p.B / p.d, 1.0 / p.zeta), Branch.TRIVIAL, True)


def trivial_stability_case(p: CloudParams) -> tuple[float, float, TrivialCase]:
    """``(a11, a21, case)`` of the Jacobian at the trivial state.

    Exponents are compared against 1 exactly; the cases are discontinuous
    in the exponents by construction.
    """
    acc = p.a2 * rpow(p.B / p.d, p.beta_r / p.zeta)
    if p.gamma == 1 and p.beta_c == 1:
        return p.c - p.a1 - acc, p.a1 + acc, TrivialCase.LINEAR_LINEAR
    if p.gamma == 1:
        return p.c - p.a1, p.a1, TrivialCase.LINEAR_SUPER
    if p.beta_c == 1:
        return p.c - acc, acc, TrivialCase.SUPER_LINEAR
    return p.c, 0.0, TrivialCase.UNSTABLE_ALWAYS


def equilibrium_general_case(p: CloudParams) -> Equilibrium:
    """Non-trivial steady state for linear autoconversion and ``beta_c = 1``."""
    if p.gamma != 1 or p.beta_c != 1:
        raise NotApplicable("closed form needs gamma == 1 and beta_c == 1")
    ratio = p.conserved
    if ratio < 0:
        # qr**beta_r = ratio has no real nonnegative root
        return Equilibrium(math.nan, math.nan, Branch.GENERAL_CASE_LINEAR, False)
    qr = rpow(ratio, 1.0 / p.beta_r)
    qc = (p.d / p.c) * rpow(qr, p.zeta) - p.B / p.c
    admissible = p.c > p.a1 and p.d * rpow(ratio, p.zeta / p.beta_r) > p.B
    return Equilibrium(qc, qr, Branch.GENERAL_CASE_LINEAR, admissible)


def equilibrium_beta_class(p: CloudParams) -> Equilibrium:
    """Steady state of the ``beta_c = beta_r = beta > 1`` class without rain influx."""
    beta = p.beta_c
    if not (p.gamma == 1 and p.beta_r == beta and beta > 1 and p.zeta == 1 and p.B == 0):
        raise NotApplicable("needs gamma=1, beta_c=beta_r>1, zeta=1, B=0")
    ratio = p.conserved
    base = (p.d / p.c) ** beta * ratio
    if base < 0:
        return Equilibrium(math.nan, math.nan, Branch.BETA_CLASS, False)
    qc = base ** (1.0 / (2.0 * beta - 1.0))
    qr = (p.c / p.d) * qc
    return Equilibrium(qc, qr, Branch.BETA_CLASS, p.c > p.a1)


# --- cubic equilibria --------------------------------------------------------


def depressed_cubic(a: float, b: float, c0: float) -> tuple[float, float, float]:
    """Coefficients ``(p, q, delta)`` of the depressed form of x^3+a x^2+b x+c0.

    ``x = y - a/3`` gives ``y^3 + p y + q``; ``delta = (q/2)^2 + (p/3)^3``.
    """
    p = b - a * a / 3.0
    q = 2.0 * a**3 / 27.0 - a * b / 3.0 + c0
    return p, q, (q / 2.0) ** 2 + (p / 3.0) ** 3


def real_cubic_roots(a: float, b: float, c0: float, polish: int = 3, _scaled: bool = False) -> list[float]:
    """Real roots of the monic cubic ``x^3 + a x^2 + b x + c0``, ascending.

    Cardano for one real root, the trigonometric form for three, each root
    finished with a few Newton steps on the undepressed polynomial. The cubic
    is first rescaled to unit-size coefficients so the discriminant neither
    underflows nor overflows.
    """
    s = max(abs(a), math.sqrt(abs(b)), float(np.cbrt(abs(c0))))
    if s == 0.0:
        return [0.0]
    if not _scaled and s != 1.0:
        return sorted(s * z for z in real_cubic_roots(a / s, b / s / s, c0 / s / s / s, polish, _scaled=True))
    p, q, delta = depressed_cubic(a, b, c0)
    shift = -a / 3.0
    scale = max(abs(p), abs(q), 1e-300)
    if delta > 1e-14 * scale * scale:
        sq = math.sqrt(delta)
        # choose the sign that avoids cancellation, then recover the partner
        u = -math.copysign(np.cbrt(abs(q) / 2.0 + sq), q)
        v = -p / (3.0 * u) if u != 0.0 else 0.0
        ys = [u + v]
    elif p == 0.0 and q == 0.0:
        ys = [0.0]
    elif delta < -1e-14 * scale * scale:
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * r) if p != 0 else 0.0
        phi = math.acos(max(-1.0, min(1.0, arg)))
        ys = [r * math.cos((phi - 2.0 * math.pi * k) / 3.0) for k in range(3)]
    else:
        # double root
        y1 = float(np.cbrt(-q / 2.0))
        ys = [2.0 * y1, -y1]

    def f(x):
        return ((x + a) * x + b) * x + c0

    def fp(x):
        return (3.0 * x + 2.0 * a) * x + b

    roots = []
    for y in ys:
        x = y + shift
        for _ in range(polish):
            dfx = fp(x)
            if dfx == 0.0:
                break
            fx = f(x)
            step = fx / dfx
            # keep only steps that improve the residual
            if not math.isfinite(step) or abs(f(x - step)) >= abs(fx):
                break
            x -= step
        roots.append(x)
    roots.sort()
    out: list[float] = []
    for x in roots:
        if not out or abs(x - out[-1]) > 1e-12 * max(1.0, abs(x)):
            out.append(x)
    return out


def _require_cubic_class(p: CloudParams):
    if not (p.gamma == 1 and p.beta_c == 2 and p.beta_r == 2 and p.zeta == 1):
        raise NotApplicable("cubic branch needs gamma=1, beta_c=beta_r=2, zeta=1")


def solve_equilibrium_cubic(d: float, B: float, K: float) -> list[float]:
    """Real roots of ``d q^3 - B q^2 - K = 0``."""
    if d == 0:
        raise DegenerateCubic("sedimentation prefactor d is zero")
    return real_cubic_roots(-B / d, 0.0, -K / d)


def cubic_discriminant(p: CloudParams) -> float:
    """Cardano discriminant of the monic equilibrium cubic (one real root iff > 0)."""
    _require_cubic_class(p)
    K = p.c * p.conserved
    return depressed_cubic(-p.B / p.d, 0.0, -K / p.d)[2]


def equilibrium_cubic_B(p: CloudParams) -> list[Equilibrium]:
    """All real steady states of the ``beta = 2`` class with rain influx ``B``.

    Adding both rate equations gives ``qc = (d qr - B)/c``; substituting into
    the cloud equation leaves ``d qr^3 - B qr^2 - c (c - a1)/a2 = 0``.
    """
    _require_cubic_class(p)
    K = p.c * p.conserved
    out = []
    for qr in solve_equilibrium_cubic(p.d, p.B, K):
        qc = (p.d * qr - p.B) / p.c
        out.append(Equilibrium(qc, qr, Branch.CUBIC_B, qr > 0 and qc >= 0))
    return out


def conserved_quantity(p: CloudParams, e: Equilibrium) -> float:
    """``qc^(beta_c - gamma) * qr^beta_r`` at a non-trivial steady state."""
    if p.gamma != 1:
        raise NotApplicable("identity needs condensation and autoconversion to share the exponent")
    if e.qc == 0:
        raise DomainError("conserved quantity is undefined at qc = 0")
    return rpow(e.qc, p.beta_c - p.gamma) * rpow(e.qr, p.beta_r)


def newton_equilibrium(p: CloudParams, guess: tuple[float, float],
                       tol: float = 1e-13, maxiter: int = 200) -> Equilibrium:
    """Damped Newton on the reaction right-hand side, kept inside qc, qr > 0."""
    x = np.array(guess, dtype=float)
    for _ in range(maxiter):
        f = np.array(reaction_rhs(p, x))
        fn = np.max(np.abs(f))
        if fn < tol * max(1.0, np.max(np.abs(x))):
            break
        J = jacobian(p, x).as_array()
        try:
            dx = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-8:
            trial = x + lam * dx
            if np.all(trial > 0) and np.max(np.abs(reaction_rhs(p, trial))) < fn:
                x = trial
                break
            lam *= 0.5
        else:
            break
    ok = bool(np.all(x > 0)) and residual_norm(p, x) < RESIDUAL_TOL * max(1.0, float(np.max(x)))
    return Equilibrium(float(x[0]), float(x[1]), Branch.NUMERIC, ok)


def candidate_equilibria(p: CloudParams) -> list[Equilibrium]:
    """Every non-trivial steady state reachable through an applicable closed form."""
    found: list[Equilibrium] = []
    if p.gamma == 1 and p.beta_c == 1:
        found.append(equilibrium_general_case(p))
    try:
        found.extend(equilibrium_cubic_B(p))
    except NotApplicable:
        pass
    try:
        found.append(equilibrium_beta_class(p))
    except NotApplicable:
        pass
    return found


def find_equilibrium(p: CloudParams) -> Equilibrium:
    """The admissible non-trivial steady state used to seed simulations.

    Closed forms are preferred; other exponent combinations fall back to
    damped Newton seeded from the beta-class formula with ``beta = beta_c``.
    """
    for e in candidate_equilibria(p):
        if e.admissible and e.qc > 0:
            return e
    if p.c <= p.a1:
        raise NoAdmissibleEquilibrium("no non-trivial equilibrium: requires c > a1")
    if not candidate_equilibria(p):
        beta = p.beta_c
        base = (p.d / p.c) ** beta * p.conserved
        qc0 = base ** (1.0 / (2.0 * beta - 1.0)) if beta > 0.5 else 0.1
        qc0 = max(qc0 - p.B / p.c, 1e-3) if p.B else qc0
        e = newton_equilibrium(p, (qc0, ((p.c * qc0 + p.B) / p.d) ** (1.0 / p.zeta)))
        if e.admissible:
            return e
    raise NoAdmissibleEquilibrium("no admissible non-trivial equilibrium for these parameters")
