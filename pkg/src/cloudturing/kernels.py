"""Pointwise hot loops with a numba path and a pure-numpy fallback.

Set ``CLOUDTURING_NUMBA=0`` to force the numpy path. When numba is not
importable the numpy path is used silently. ``backend()`` reports which one
is live and ``get_backend(name)`` hands out either set for benchmarks.
"""

from __future__ import annotations

import functools
import math
import os
from types import SimpleNamespace

import numpy as np

CLAMP_POLICIES = ("fractional", "all", "none")

try:
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None


def _numba_requested() -> bool:
    return os.environ.get("CLOUDTURING_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


def _is_fractional(x: float) -> bool:
    return float(x) != math.floor(x)


def _clamp_flags(p, policy: str) -> tuple[bool, bool, bool, bool]:
    """Which bases (qc^gamma, qc^beta_c, qr^beta_r, qr^zeta) get clamped at zero."""
    if policy not in CLAMP_POLICIES:
        raise ValueError(f"unknown clamp policy {policy!r}; choose from {CLAMP_POLICIES}")
    exps = (p.gamma, p.beta_c, p.beta_r, p.zeta)
    if policy == "none":
        return (False,) * 4
    if policy == "all":
        return (True,) * 4
    return tuple(_is_fractional(e) for e in exps)


# numpy path


def _pow_np(x: np.ndarray, e: float, clamp: bool) -> tuple[np.ndarray, int]:
    if clamp:
        neg = x < 0
        count = int(np.count_nonzero(neg))
        if count:
            x = np.where(neg, 0.0, x)
    else:
        count = 0
    if e == 1.0:
        return x, count
    if e == 2.0:
        return x * x, count
    return np.power(x, e), count


def remainder_numpy(qc, qr, out_c, out_r, c, a1, a2, gamma, bc, br, d, zeta, B, flags) -> int:
    with np.errstate(invalid="ignore"):
        auto, n1 = _pow_np(qc, gamma, flags[0])
        pc, n2 = _pow_np(qc, bc, flags[1])
        pr, n3 = _pow_np(qr, br, flags[2])
        sed, n4 = _pow_np(qr, zeta, flags[3])
    gain = a1 * auto + a2 * pc * pr
    np.negative(gain, out=out_c)
    np.add(gain, B, out=out_r)
    out_r -= d * sed
    return n1 + n2 + n3 + n4


def etd1_combine_numpy(u, n, expz, w1, out):
    np.multiply(expz, u, out=out)
    out += w1 * n
    return out


def etd2_combine_numpy(u, n, n_prev, expz, wa, wb, out):
    np.multiply(expz, u, out=out)
    out += wa * n
    out -= wb * n_prev
    return out


# numba path


def _power_fn(e: float):
    # exponent is a compile-time constant inside each specialised kernel
    njit = _numba.njit
    if e == 1.0:
        return njit(lambda x: x)
    if e == 2.0:
        return njit(lambda x: x * x)
    if e == 3.0:
        return njit(lambda x: x * x * x)
    if e == 0.5:
        return njit(lambda x: math.sqrt(x))
    if e == 1.5:
        return njit(lambda x: x * math.sqrt(x))
    if e == 2.5:
        return njit(lambda x: x * x * math.sqrt(x))
    return njit(lambda x: x**e)


@functools.lru_cache(maxsize=None)
def _remainder_kernel(gamma: float, bc: float, br: float, zeta: float, f0: bool, f1: bool, f2: bool, f3: bool):
    """Reaction remainder loop specialised to one exponent set and clamp pattern."""
    p_g, p_bc, p_br, p_z = (_power_fn(e) for e in (gamma, bc, br, zeta))

    @_numba.njit
    def kernel(qc, qr, out_c, out_r, a1, a2, d, B):
        count = 0
        for i in range(qc.size):
            x = qc[i]
            y = qr[i]
            xa = x
            xb = x
            ya = y
            yb = y
            if x < 0.0:
                if f0:
                    xa = 0.0
                    count += 1
                if f1:
                    xb = 0.0
                    count += 1
            if y < 0.0:
                if f2:
                    ya = 0.0
                    count += 1
                if f3:
                    yb = 0.0
                    count += 1
            gain = a1 * p_g(xa) + a2 * p_bc(xb) * p_br(ya)
            out_c[i] = -gain
            out_r[i] = gain + B - d * p_z(yb)
        return count

    return kernel


def _build_numba():
    njit = _numba.njit(cache=True)

    @njit
    def etd1(u, n, expz, w1, out):
        for s in range(u.shape[0]):
            for i in range(u.shape[1]):
                out[s, i] = expz[s, i] * u[s, i] + w1[s, i] * n[s, i]

    @njit
    def etd2(u, n, n_prev, expz, wa, wb, out):
        for s in range(u.shape[0]):
            for i in range(u.shape[1]):
                out[s, i] = expz[s, i] * u[s, i] + wa[s, i] * n[s, i] - wb[s, i] * n_prev[s, i]

    return etd1, etd2


_NUMBA_FUNCS = None


def _numba_funcs():
    global _NUMBA_FUNCS
    if _NUMBA_FUNCS is None:
        _NUMBA_FUNCS = _build_numba()
    return _NUMBA_FUNCS


def _flat2(a: np.ndarray) -> np.ndarray:
    return a.reshape(a.shape[0], -1)


def _numba_remainder(fields, out, p, policy):
    flags = _clamp_flags(p, policy)
    kern = _remainder_kernel(float(p.gamma), float(p.beta_c), float(p.beta_r), float(p.zeta), *flags)
    qc = np.ascontiguousarray(fields[0]).reshape(-1)
    qr = np.ascontiguousarray(fields[1]).reshape(-1)
    return kern(qc, qr, out[0].reshape(-1), out[1].reshape(-1), p.a1, p.a2, p.d, p.B)


def _numpy_remainder(fields, out, p, policy):
    flags = _clamp_flags(p, policy)
    return remainder_numpy(fields[0], fields[1], out[0], out[1], p.c, p.a1, p.a2, float(p.gamma),
                           float(p.beta_c), float(p.beta_r), p.d, float(p.zeta), p.B, flags)


def _numba_etd1(u, n, expz, w1, out):
    _numba_funcs()[0](_flat2(u), _flat2(n), _flat2(expz), _flat2(w1), _flat2(out))
    return out


def _numba_etd2(u, n, n_prev, expz, wa, wb, out):
    _numba_funcs()[1](_flat2(u), _flat2(n), _flat2(n_prev), _flat2(expz), _flat2(wa), _flat2(wb), _flat2(out))
    return out


NUMPY = SimpleNamespace(name="numpy", reaction_remainder=_numpy_remainder,
                        etd1_combine=etd1_combine_numpy, etd2_combine=etd2_combine_numpy)
NUMBA = None
if _numba is not None:
    NUMBA = SimpleNamespace(name="numba", reaction_remainder=_numba_remainder,
                            etd1_combine=_numba_etd1, etd2_combine=_numba_etd2)


def get_backend(name: str | None = None) -> SimpleNamespace:
    """Kernel set by name; ``None`` follows the environment flag."""
    if name is None:
        name = "numba" if (_numba_requested() and NUMBA is not None) else "numpy"
    if name == "numpy":
        return NUMPY
    if name == "numba":
        if NUMBA is None:
            raise RuntimeError("numba is not installed")
        return NUMBA
    raise ValueError(f"unknown backend {name!r}")


def backend() -> str:
    return get_backend().name


def reaction_remainder(fields: np.ndarray, out: np.ndarray, p, policy: str = "fractional") -> int:
    """Fill ``out`` (shape ``(2, ...)``) with the non-condensation reaction terms; return the clamp count."""
    return get_backend().reaction_remainder(fields, out, p, policy)
