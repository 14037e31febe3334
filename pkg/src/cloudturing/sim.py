"""Experiment driver: seeded initial conditions, pseudo-spectral integration, diagnostics and B sweeps."""

from __future__ import annotations

import math
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .integrator import StepState, advance, build_tables
from .model import CloudParams, DiffusionParams, Equilibrium, find_equilibrium
from .spectral import (
    FieldPair,
    GridSpec,
    dealias_mask,
    irfft,
    project_hermitian,
    rfft,
    symbol_table,
)

RNG_NAME = f"numpy.random.PCG64 (numpy {np.__version__})"
VAR_FLOOR = 1e-20


class BlowUp(FloatingPointError):
    """Non-finite spectral coefficient during integration."""

    def __init__(self, time: float, species: str, mode: tuple[int, ...], partial: "RunResult | None" = None):
        super().__init__(f"non-finite value at t={time:.6g} in {species} mode {mode}")
        self.time = time
        self.species = species
        self.mode = mode
        self.partial = partial


@dataclass(frozen=True)
class SimConfig:
    params: CloudParams = field(default_factory=CloudParams)
    diff: DiffusionParams = field(default_factory=DiffusionParams)
    grid: GridSpec = field(default_factory=GridSpec)
    h: float = 0.02
    t_end: float = 2000.0
    snapshot_times: tuple[float, ...] = (20.0, 200.0, 2000.0)
    noise_amplitude: float = 0.01
    seed: int = 20240607
    dealias_rule: str = "none"
    clamp_policy: str = "fractional"
    diag_interval: float = 5.0
    pattern_std_factor: float = 10.0
    pattern_peak_factor: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.h > 0:
            raise ValueError("h must be positive")
        ts = self.snapshot_times
        if list(ts) != sorted(ts) or (ts and (ts[0] < 0 or ts[-1] > self.t_end + 1e-9)):
            raise ValueError("snapshot_times must be sorted and lie in [0, t_end]")
        if self.noise_amplitude < 0:
            raise ValueError("noise_amplitude must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not self.diag_interval > 0:
            raise ValueError("diag_interval must be positive")
        kernels._clamp_flags(self.params, self.clamp_policy)
        dealias_mask(self.grid, self.dealias_rule)
        for t in (self.t_end, *ts):
            steps_for(t, self.h)

    @property
    def n_steps(self) -> int:
        return steps_for(self.t_end, self.h)


def steps_for(t: float, h: float) -> int:
    k = round(t / h)
    if abs(k * h - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"time {t} is not a multiple of the step {h}")
    return int(k)


def preset_1d(**overrides) -> SimConfig:
    """Rain-free 1D run on L = 50 that forms a wavy pattern."""
    return replace(SimConfig(), **overrides)


def preset_2d(**overrides) -> SimConfig:
    """2D run on a 50 x 50 periodic square."""
    cfg = SimConfig(
        params=CloudParams(d=0.13),
        diff=DiffusionParams(d1=100.0, d2=0.025),
        grid=GridSpec(dims=2, n=128, length=50.0),
        h=0.004,
        t_end=120.0,
        snapshot_times=(1.0, 10.0, 60.0, 120.0),
        diag_interval=1.0,
    )
    return replace(cfg, **overrides)


@dataclass(frozen=True)
class SpeciesSummary:
    min: float
    max: float
    mean: float
    var: float
    dominant_mode: tuple[int, ...]
    dominant_amplitude: float
    median_amplitude: float


@dataclass(frozen=True)
class Summary:
    qc: SpeciesSummary
    qr: SpeciesSummary


def mode_amplitudes(field_: np.ndarray, g: GridSpec) -> np.ndarray:
    """Cosine amplitude per rfft coefficient; the zero mode carries the mean."""
    coef = np.abs(np.fft.rfftn(field_, axes=g.axes)) / g.size
    amp = 2.0 * coef
    amp[(0,) * g.dims] = coef[(0,) * g.dims]
    nyq = (0,) * (g.dims - 1) + (g.n // 2,)
    amp[nyq] = coef[nyq]
    if g.dims == 2:
        amp[g.n // 2, 0] = coef[g.n // 2, 0]
        amp[g.n // 2, g.n // 2] = coef[g.n // 2, g.n // 2]
    return amp


def summarize_field(field_: np.ndarray, g: GridSpec) -> SpeciesSummary:
    amp = mode_amplitudes(field_, g)
    flat = amp.ravel().copy()
    flat[0] = -1.0
    k = int(np.argmax(flat))
    idx = np.unravel_index(k, amp.shape)
    modes = g.mode_indices()
    dom = tuple(int(m[idx]) for m in modes)
    return SpeciesSummary(
        min=float(field_.min()),
        max=float(field_.max()),
        mean=float(field_.mean()),
        var=float(field_.var()),
        dominant_mode=dom,
        dominant_amplitude=float(amp[idx]),
        median_amplitude=float(np.median(amp.ravel()[1:])),
    )


def summarize(f: FieldPair, g: GridSpec) -> Summary:
    return Summary(summarize_field(f.qc, g), summarize_field(f.qr, g))


def fold_mode(mode: tuple[int, ...]) -> tuple[int, ...]:
    """Map a signed lattice mode to its symmetry representative ``(n1 >= n2 >= 0)``."""
    return tuple(sorted((abs(m) for m in mode), reverse=True))


@dataclass
class Snapshot:
    time: float
    fields: FieldPair
    summary: Summary


@dataclass(frozen=True)
class TracePoint:
    time: float
    summary: Summary


@dataclass
class RunResult:
    config: SimConfig
    equilibrium: Equilibrium
    snapshots: list[Snapshot]
    trace: list[TracePoint]
    metadata: dict

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]


def initial_condition(cfg: SimConfig, eq: Equilibrium | None = None) -> FieldPair:
    """Equilibrium plus i.i.d. Gaussian noise (std ``noise_amplitude``), clamped at zero."""
    eq = eq if eq is not None else find_equilibrium(cfg.params)
    shape = cfg.grid.shape
    qc = np.full(shape, eq.qc)
    qr = np.full(shape, eq.qr)
    if cfg.noise_amplitude > 0:
        rng = np.random.default_rng(cfg.seed)
        noise = rng.normal(0.0, cfg.noise_amplitude, size=(2, *shape))
        qc = np.maximum(qc + noise[0], 0.0)
        qr = np.maximum(qr + noise[1], 0.0)
    return FieldPair(qc, qr)


class PseudoSpectralRHS:
    """Nonlinear spectrum ``N(u)``: inverse transform, pointwise remainder, forward transform."""

    def __init__(self, params: CloudParams, g: GridSpec, dealias_rule: str = "none",
                 clamp_policy: str = "fractional", backend=None):
        self.params = params
        self.grid = g
        self.mask = dealias_mask(g, dealias_rule)
        self.clamp_policy = clamp_policy
        self.backend = backend or kernels.get_backend()
        self.buf = np.empty((2, *g.shape))
        self.clamp_count = 0
        self.evaluations = 0
        # running maxima over every state the remainder is evaluated at
        self.max_qc = -math.inf
        self.max_qr = -math.inf

    def __call__(self, u_hat: np.ndarray, t: float) -> np.ndarray:
        phys = irfft(u_hat, self.grid)
        self.max_qc = max(self.max_qc, float(phys[0].max()))
        self.max_qr = max(self.max_qr, float(phys[1].max()))
        self.clamp_count += self.backend.reaction_remainder(phys, self.buf, self.params, self.clamp_policy)
        self.evaluations += 1
        n_hat = rfft(self.buf, self.grid)
        if self.mask is not None:
            n_hat *= self.mask
        return project_hermitian(n_hat, self.grid)


def _blowup_location(u: np.ndarray, g: GridSpec) -> tuple[str, tuple[int, ...]]:
    bad = np.argwhere(~np.isfinite(u))[0]
    species = ("qc", "qr")[bad[0]]
    modes = g.mode_indices()
    return species, tuple(int(m[tuple(bad[1:])]) for m in modes)


def run(cfg: SimConfig, backend: str | None = None, initial: FieldPair | None = None) -> RunResult:
    """Integrate from the seeded initial condition and collect snapshots and a diagnostics trace.

    ``initial`` replaces the seeded noisy state, e.g. for single-mode experiments.
    Raises ``BlowUp`` with the partial result attached if a coefficient turns non-finite.
    """
    g = cfg.grid
    kb = kernels.get_backend(backend)
    eq = find_equilibrium(cfg.params)
    f0 = initial_condition(cfg, eq) if initial is None else initial
    rhs = PseudoSpectralRHS(cfg.params, g, cfg.dealias_rule, cfg.clamp_policy, kb)
    tables = build_tables(symbol_table(g, cfg.params, cfg.diff), cfg.h)

    snap_steps = {}
    for t in cfg.snapshot_times:
        snap_steps.setdefault(steps_for(t, cfg.h), t)
    diag_every = max(1, round(cfg.diag_interval / cfg.h))

    snapshots: list[Snapshot] = []
    trace: list[TracePoint] = []
    meta = {
        "h": cfg.h,
        "n": g.n,
        "dims": g.dims,
        "length": g.length,
        "t_end": cfg.t_end,
        "steps": cfg.n_steps,
        "seed": cfg.seed,
        "rng": RNG_NAME,
        "noise_amplitude": cfg.noise_amplitude,
        "dealias_rule": cfg.dealias_rule,
        "clamp_policy": cfg.clamp_policy,
        "backend": kb.name,
        "scheme": "ETD2 (ETD1 first step)",
        "equilibrium": [eq.qc, eq.qr],
    }
    result = RunResult(cfg, eq, snapshots, trace, meta)

    def record(step: int, fields: FieldPair):
        t = step * cfg.h
        summ = summarize(fields, g)
        if step % diag_every == 0 or step == cfg.n_steps:
            trace.append(TracePoint(t, summ))
        if step in snap_steps:
            snapshots.append(Snapshot(snap_steps[step], fields, summ))

    def finish():
        meta["clamp_count"] = rhs.clamp_count
        meta["completed_steps"] = state.step
        meta["max_qc"] = max(rhs.max_qc, *(p.summary.qc.max for p in trace))
        meta["max_qr"] = max(rhs.max_qr, *(p.summary.qr.max for p in trace))

    u0 = project_hermitian(rfft(f0.stack(), g), g)
    state = StepState(u0)
    record(0, f0)
    started = _time.perf_counter()
    for step in range(1, cfg.n_steps + 1):
        # overflow is caught by the finiteness check below, not by numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            state = advance(state, tables, rhs, backend=kb)
        if not np.isfinite(state.u).all():
            finish()
            meta["blowup"] = True
            species, mode = _blowup_location(state.u, g)
            raise BlowUp(step * cfg.h, species, mode, result)
        if step % diag_every == 0 or step in snap_steps or step == cfg.n_steps:
            record(step, FieldPair.from_stack(irfft(state.u, g)))
    finish()
    meta["blowup"] = False
    meta["wall_seconds"] = _time.perf_counter() - started
    return result


def pattern_detector(s: Snapshot | TracePoint, noise_amplitude: float = 0.01, std_factor: float = 10.0,
                     peak_factor: float = 100.0, min_std: float = 1e-8) -> bool:
    """Rain-water structure well above the seeded noise and concentrated in one Fourier mode.

    ``min_std`` keeps exactly constant fields (zero noise) from passing on roundoff.
    """
    qr = s.summary.qr
    std = math.sqrt(qr.var)
    if std <= max(std_factor * noise_amplitude, min_std):
        return False
    return qr.dominant_amplitude > peak_factor * qr.median_amplitude


@dataclass
class GrowthReport:
    times: np.ndarray
    var_qc: np.ndarray
    var_qr: np.ndarray
    dominant_qc: list[tuple[int, ...]]
    dominant_qr: list[tuple[int, ...]]
    stationary: bool
    relative_change: float
    onset_time: float | None


def diagnostics_series(points, noise_amplitude: float = 0.01, onset_factor: float = 10.0,
                       window_fraction: float = 0.1, tolerance: float = 0.01) -> GrowthReport:
    """Variance history, dominant modes, stationarity of q_r variance, and pattern onset time.

    Stationary means ``max |var(t) - var(t_end)| / var(t_end) < tolerance`` over the last
    ``window_fraction`` of the run. Onset is the first time the q_r standard deviation
    exceeds ``onset_factor`` times the noise amplitude.
    """
    points = list(points)
    if len(points) < 2:
        raise ValueError("need at least two snapshots")
    times = np.array([p.time for p in points])
    var_qc = np.array([p.summary.qc.var for p in points])
    var_qr = np.array([p.summary.qr.var for p in points])
    t0, t1 = times[0], times[-1]
    window = times >= t1 - window_fraction * (t1 - t0)
    ref = max(var_qr[-1], VAR_FLOOR)
    rel = float(np.max(np.abs(var_qr[window] - var_qr[-1])) / ref)
    threshold = onset_factor * noise_amplitude
    above = np.nonzero(np.sqrt(var_qr) > threshold)[0] if threshold > 0 else np.array([], dtype=int)
    onset = float(times[above[0]]) if above.size else None
    return GrowthReport(
        times=times,
        var_qc=var_qc,
        var_qr=var_qr,
        dominant_qc=[p.summary.qc.dominant_mode for p in points],
        dominant_qr=[p.summary.qr.dominant_mode for p in points],
        stationary=rel < tolerance,
        relative_change=rel,
        onset_time=onset,
    )


def field_correlation(f: FieldPair) -> float:
    a = f.qc - f.qc.mean()
    b = f.qr - f.qr.mean()
    den = math.sqrt(float(np.sum(a * a) * np.sum(b * b)))
    return float(np.sum(a * b) / den) if den > 0 else 0.0


@dataclass
class SweepEntry:
    B: float
    final: Snapshot | None
    patterned: bool | None
    error: str | None = None
    metadata: dict = field(default_factory=dict)


@dataclass
class SweepResult:
    entries: list[SweepEntry]

    @property
    def flags(self) -> list[bool | None]:
        return [e.patterned for e in self.entries]

    @property
    def transitions(self) -> int:
        ok = [e.patterned for e in self.entries if e.patterned is not None]
        return sum(1 for a, b in zip(ok, ok[1:]) if a != b)

    @property
    def b_star(self) -> float | None:
        """Midpoint between the last patterned B and the first unpatterned B after it."""
        ok = [e for e in self.entries if e.patterned is not None]
        for a, b in zip(ok, ok[1:]):
            if a.patterned and not b.patterned:
                return 0.5 * (a.B + b.B)
        return None


def _sweep_entry(base: SimConfig, B: float, backend: str | None) -> SweepEntry:
    cfg = replace(base, params=base.params.with_B(B), snapshot_times=(base.t_end,))
    try:
        res = run(cfg, backend=backend)
    except Exception as exc:  # recorded per entry, the sweep continues
        return SweepEntry(B, None, None, f"{type(exc).__name__}: {exc}")
    snap = res.final
    patterned = pattern_detector(snap, base.noise_amplitude, base.pattern_std_factor, base.pattern_peak_factor)
    return SweepEntry(B, snap, patterned, None, res.metadata)


def sweep_B(base: SimConfig, b_values, workers: int = 1, backend: str | None = None) -> SweepResult:
    """Run ``base`` at each rain influx with the same seed and classify the final state."""
    b_values = [float(b) for b in b_values]
    if b_values != sorted(b_values):
        raise ValueError("b_values must be sorted ascending")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_sweep_entry, [base] * len(b_values), b_values, [backend] * len(b_values)))
    else:
        entries = [_sweep_entry(base, B, backend) for B in b_values]
    return SweepResult(entries)
