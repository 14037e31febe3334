"""Exponential time differencing (ETD1 bootstrap, two-step ETD2) for diagonal linear operators.

The ETD2 update is used in the phi-function form

    u+ = e^z u + h [(phi1 + phi2) N_n - phi2 N_{n-1}],
    phi1 = (e^z - 1)/z,  phi2 = (e^z - 1 - z)/z^2,

which is algebraically identical to the Cox-Matthews coefficients
``((1+z)e^z - 1 - 2z)/z^2`` and ``(1 + z - e^z)/z^2`` times ``h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .spectral import SpectrumPair, SymbolTable

SERIES_CUTOFF = 1e-2
SERIES_TERMS = 8
# largest z with exp(z) comfortably below the float64 ceiling
Z_MAX = 700.0

Nonlinear = Callable[[np.ndarray, float], np.ndarray]


class StepTooLarge(OverflowError):
    """exp(h*l) would overflow for some unstable linear mode."""


class MissingHistory(ValueError):
    """ETD2 needs the previous nonlinear spectrum."""


def _series(z: np.ndarray, offset: int) -> np.ndarray:
    # sum_k z^k / (k + offset)!, Horner from the top
    acc = np.full_like(z, 1.0 / math.factorial(SERIES_TERMS - 1 + offset))
    for k in range(SERIES_TERMS - 2, -1, -1):
        acc = acc * z + 1.0 / math.factorial(k + offset)
    return acc


def phi1(z):
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < SERIES_CUTOFF
    safe = np.where(small, 1.0, z)
    out = np.where(small, _series(z, 1), np.expm1(safe) / safe)
    return float(out) if out.ndim == 0 else out


def phi2(z):
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < SERIES_CUTOFF
    safe = np.where(small, 1.0, z)
    out = np.where(small, _series(z, 2), (np.expm1(safe) - safe) / (safe * safe))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EtdTables:
    h: float
    z: np.ndarray
    expz: np.ndarray
    w1: np.ndarray  # h*phi1, ETD1 weight
    wa: np.ndarray  # h*(phi1 + phi2), ETD2 weight on N_n
    wb: np.ndarray  # h*phi2, ETD2 weight on N_{n-1}


def build_tables(symbols: SymbolTable | np.ndarray, h: float) -> EtdTables:
    """Precompute per-mode ETD factors for ``z = h*l``.

    ``symbols`` is either a ``SymbolTable`` (stacked as qc, qr) or any real
    array of linear rates.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    lin = symbols.stack() if isinstance(symbols, SymbolTable) else np.asarray(symbols, dtype=float)
    z = h * lin
    zmax = float(np.max(z))
    if zmax > Z_MAX:
        raise StepTooLarge(f"h*l reaches {zmax:.4g}; exp overflows, reduce h")
    p1, p2 = phi1(z), phi2(z)
    tabs = EtdTables(h=float(h), z=z, expz=np.exp(z), w1=h * p1, wa=h * (p1 + p2), wb=h * p2)
    for name in ("expz", "w1", "wa", "wb"):
        if not np.all(np.isfinite(getattr(tabs, name))):
            raise StepTooLarge(f"non-finite ETD table {name}")
    return tabs


@dataclass
class StepState:
    u: np.ndarray
    n_prev: np.ndarray | None = None
    step: int = 0
    time: float = 0.0

    def __post_init__(self):
        if (self.n_prev is None) != (self.step == 0):
            raise ValueError("previous nonlinear term must be present exactly when step >= 1")

    @property
    def spectrum(self) -> SpectrumPair:
        return SpectrumPair.from_stack(self.u)


def _check_h(tables: EtdTables, h: float | None):
    if h is not None and not math.isclose(h, tables.h, rel_tol=1e-12):
        raise ValueError(f"step {h} does not match tables built for {tables.h}")


def etd1_step(state: StepState, tables: EtdTables, nonlinear: Nonlinear, h: float | None = None,
              backend=None) -> StepState:
    _check_h(tables, h)
    kb = backend or kernels.get_backend()
    n_now = nonlinear(state.u, state.time)
    out = np.empty(np.broadcast_shapes(state.u.shape, tables.expz.shape), dtype=np.result_type(state.u, n_now))
    kb.etd1_combine(state.u, n_now, tables.expz, tables.w1, out)
    return StepState(out, n_now, state.step + 1, state.time + tables.h)


def etd2_step(state: StepState, tables: EtdTables, nonlinear: Nonlinear, h: float | None = None,
              backend=None) -> StepState:
    _check_h(tables, h)
    if state.n_prev is None:
        raise MissingHistory("etd2_step needs a previous nonlinear term; bootstrap with etd1_step")
    kb = backend or kernels.get_backend()
    n_now = nonlinear(state.u, state.time)
    out = np.empty(np.broadcast_shapes(state.u.shape, tables.expz.shape), dtype=np.result_type(state.u, n_now))
    kb.etd2_combine(state.u, n_now, state.n_prev, tables.expz, tables.wa, tables.wb, out)
    return StepState(out, n_now, state.step + 1, state.time + tables.h)


def advance(state: StepState, tables: EtdTables, nonlinear: Nonlinear, backend=None) -> StepState:
    """One step: ETD1 on the first call, ETD2 afterwards."""
    if state.n_prev is None:
        return etd1_step(state, tables, nonlinear, backend=backend)
    return etd2_step(state, tables, nonlinear, backend=backend)


def integrate(u0, tables: EtdTables, nonlinear: Nonlinear, n_steps: int, order: int = 2, backend=None) -> StepState:
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    state = StepState(np.asarray(u0))
    for _ in range(n_steps):
        if order == 1:
            state = etd1_step(state, tables, nonlinear, backend=backend)
        else:
            state = advance(state, tables, nonlinear, backend=backend)
    return state
