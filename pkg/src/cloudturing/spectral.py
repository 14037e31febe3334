"""Periodic grids, real-input FFTs and pointwise nonlinear evaluation.

Normalization is fixed project-wide: the forward transform is unnormalized,
the inverse carries 1/n per dimension (numpy's default ``norm="backward"``).
Species are stacked on a leading axis of length 2 wherever arrays travel
between modules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import CloudParams, DiffusionParams

DEALIAS_RULES = ("none", "two_thirds")


@dataclass(frozen=True)
class GridSpec:
    dims: int = 1
    n: int = 256
    length: float = 50.0

    def __post_init__(self):
        if self.dims not in (1, 2):
            raise ValueError("dims must be 1 or 2")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not self.length > 0:
            raise ValueError("length must be positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dims

    @property
    def spec_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.dims - 1) + (self.n // 2 + 1,)

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dims, 0))

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def size(self) -> int:
        return self.n**self.dims

    def coordinates(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    def mode_indices(self) -> list[np.ndarray]:
        """Signed integer mode numbers per axis, broadcast to ``spec_shape``."""
        full = np.fft.fftfreq(self.n, 1.0 / self.n).round().astype(int)
        half = np.arange(self.n // 2 + 1)
        if self.dims == 1:
            return [half]
        return [full[:, None] * np.ones_like(half)[None, :], np.ones_like(full)[:, None] * half[None, :]]

    def wavenumber_squared(self) -> np.ndarray:
        k0 = 2.0 * math.pi / self.length
        return sum((k0 * m.astype(float)) ** 2 for m in self.mode_indices())


@dataclass
class FieldPair:
    qc: np.ndarray
    qr: np.ndarray

    def stack(self) -> np.ndarray:
        return np.stack([self.qc, self.qr])

    @classmethod
    def from_stack(cls, arr: np.ndarray) -> "FieldPair":
        return cls(arr[0], arr[1])


@dataclass
class SpectrumPair:
    qc_hat: np.ndarray
    qr_hat: np.ndarray

    def stack(self) -> np.ndarray:
        return np.stack([self.qc_hat, self.qr_hat])

    @classmethod
    def from_stack(cls, arr: np.ndarray) -> "SpectrumPair":
        return cls(arr[0], arr[1])


@dataclass(frozen=True)
class SymbolTable:
    lap: np.ndarray
    lin_qc: np.ndarray
    lin_qr: np.ndarray

    def stack(self) -> np.ndarray:
        return np.stack([self.lin_qc, self.lin_qr])


def _check_shape(arr: np.ndarray, shape, what: str):
    if arr.shape != tuple(shape):
        raise ValueError(f"{what} has shape {arr.shape}, grid expects {tuple(shape)}")


def rfft(arr: np.ndarray, g: GridSpec) -> np.ndarray:
    """Forward transform over the trailing grid axes of a (possibly stacked) array."""
    return np.fft.rfftn(arr, axes=g.axes)


def irfft(arr: np.ndarray, g: GridSpec) -> np.ndarray:
    return np.fft.irfftn(arr, s=g.shape, axes=g.axes)


def forward(f: FieldPair, g: GridSpec) -> SpectrumPair:
    _check_shape(f.qc, g.shape, "qc")
    _check_shape(f.qr, g.shape, "qr")
    return SpectrumPair.from_stack(rfft(f.stack(), g))


def inverse(s: SpectrumPair, g: GridSpec) -> FieldPair:
    _check_shape(s.qc_hat, g.spec_shape, "qc_hat")
    _check_shape(s.qr_hat, g.spec_shape, "qr_hat")
    arr = project_hermitian(s.stack().copy(), g)
    return FieldPair.from_stack(irfft(arr, g))


def project_hermitian(uh: np.ndarray, g: GridSpec) -> np.ndarray:
    """Make the self-conjugate planes of a real-input layout exactly Hermitian, in place.

    In the rfft layout the columns at last-axis index 0 and n/2 hold their
    own conjugate partners. Any anti-Hermitian part there is invisible to the
    inverse transform, so it is never damped by the pointwise nonlinearity
    and is amplified by any mode with a positive linear rate.
    """
    n = g.n
    if g.dims == 1:
        uh[..., 0] = uh[..., 0].real
        uh[..., n // 2] = uh[..., n // 2].real
        return uh
    neg = (-np.arange(n)) % n
    for j in (0, n // 2):
        col = uh[..., j]
        uh[..., j] = 0.5 * (col + np.conj(col[..., neg]))
    return uh


def laplacian_symbol(g: GridSpec) -> np.ndarray:
    """Fourier multiplier of the Laplacian, ``-(k1^2 + ... + kd^2)``, in rfft layout."""
    return -g.wavenumber_squared()


def symbol_table(g: GridSpec, p: CloudParams, diff: DiffusionParams) -> SymbolTable:
    lap = laplacian_symbol(g)
    return SymbolTable(lap=lap, lin_qc=p.c + diff.d1 * lap, lin_qr=diff.d2 * lap)


def spectral_laplacian(field: np.ndarray, g: GridSpec) -> np.ndarray:
    return irfft(laplacian_symbol(g) * rfft(field, g), g)


def nonlinear_term(p: CloudParams, f: FieldPair, clamp: str = "fractional") -> FieldPair:
    """Pointwise reaction remainder with the condensation term ``c*qc`` removed.

    The ``c*qc`` part lives in the linear operator; ``B`` stays here.
    """
    arr = f.stack().astype(float)
    out = np.empty_like(arr)
    kernels.reaction_remainder(arr, out, p, clamp)
    return FieldPair.from_stack(out)


def dealias_mask(g: GridSpec, rule: str = "none") -> np.ndarray | None:
    """Boolean keep-mask over the rfft layout; ``None`` means keep everything."""
    if rule == "none":
        return None
    if rule != "two_thirds":
        raise ValueError(f"unknown dealias rule {rule!r}; choose from {DEALIAS_RULES}")
    keep = np.ones(g.spec_shape, dtype=bool)
    for m in g.mode_indices():
        keep &= np.abs(m) <= g.n / 3.0
    return keep


def dealias(s: SpectrumPair, g: GridSpec, rule: str = "none") -> SpectrumPair:
    mask = dealias_mask(g, rule)
    if mask is None:
        return SpectrumPair(s.qc_hat.copy(), s.qr_hat.copy())
    return SpectrumPair(np.where(mask, s.qc_hat, 0), np.where(mask, s.qr_hat, 0))


def rfft_weights(g: GridSpec) -> np.ndarray:
    """Multiplicity of each rfft coefficient in the full spectrum (1 or 2)."""
    w = np.full(g.spec_shape, 2.0)
    w[..., 0] = 1.0
    w[..., g.n // 2] = 1.0
    return w


def field_energy(field: np.ndarray, g: GridSpec) -> float:
    return float(np.sum(field * field))


def spectrum_energy(coef: np.ndarray, g: GridSpec) -> float:
    """Parseval partner of ``field_energy`` under the unnormalized forward transform."""
    return float(np.sum(rfft_weights(g) * np.abs(coef) ** 2) / g.size)
