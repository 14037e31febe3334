"""Acceptance criteria, one test each.

Every test appends a ``CRITERION n: PASS|FAIL: detail`` line to the session log
(printed in the terminal summary) before asserting, so a failing criterion
still reports what was measured.
"""

import math

import numpy as np
import pytest

from cloudturing import sim
from cloudturing.integrator import build_tables, integrate
from cloudturing.model import (
    CloudParams,
    DiffusionParams,
    DomainError,
    candidate_equilibria,
    collision_terms,
    conserved_quantity,
    equilibrium_beta_class,
    equilibrium_general_case,
    jacobian,
    reaction_rhs,
    residual_norm,
    trivial_equilibrium,
)
from cloudturing.spectral import FieldPair, GridSpec, field_energy, forward, inverse, spectrum_energy
from cloudturing.stability import (
    B2Definition,
    DomainSpec,
    bifurcation_B1,
    classify,
    dispersion_p2,
    mode_table,
    threshold_B2,
    turing_criterion,
    turing_margin,
)

from conftest import SWEEP_B

REF = CloudParams()
DIFF_1D = DiffusionParams(1000.0, 0.1)
P_2D = CloudParams(d=0.13)
DIFF_2D = DiffusionParams(100.0, 0.025)
PUBLISHED_B2 = 0.137
PUBLISHED_MODES = set(range(2, 8))


def log(acceptance_log, n, ok, detail):
    acceptance_log.append(f"CRITERION {n}: {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


def fd_jacobian(p, qc, qr, h=1e-6):
    cols = []
    for dc, dr in ((h, 0.0), (0.0, h)):
        fp = np.array(reaction_rhs(p, (qc + dc, qr + dr)))
        fm = np.array(reaction_rhs(p, (qc - dc, qr - dr)))
        cols.append((fp - fm) / (2 * h))
    return np.array(cols).T


def observed_orders(order, lam=-2.0, u0=1.0, hs=(0.1, 0.05, 0.025)):
    a = 1.0 / (lam * lam + 1.0)
    exact = (u0 + lam * a) * math.exp(lam) + a * (math.sin(1.0) - lam * math.cos(1.0))
    errs = []
    for h in hs:
        st = integrate(np.array([u0]), build_tables(np.array([lam]), h),
                       lambda u, t: np.full_like(u, math.cos(t)), round(1.0 / h), order=order)
        errs.append(abs(st.u[0] - exact))
    return [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]


def test_criterion_1_equilibrium(acceptance_log):
    e = equilibrium_beta_class(REF)
    # independent closed form: (c - a1) = a2 qc qr^2 and qr = (c/d) qc
    qc_ref = ((REF.c - REF.a1) * REF.d**2 / (REF.a2 * REF.c**2)) ** (1 / 3)
    qr_ref = REF.c / REF.d * qc_ref
    res = residual_norm(REF, (e.qc, e.qr))
    ok = (abs(e.qc / qc_ref - 1) < 1e-9 and abs(e.qr / qr_ref - 1) < 1e-9 and res < 1e-12
          and round(e.qc, 6) == 0.116961 and round(e.qr, 6) == 5.848035)
    log(acceptance_log, 1, ok, f"(qc, qr) = ({e.qc:.9g}, {e.qr:.9g}), residual {res:.2e}")
    assert ok


def test_criterion_2_jacobian(acceptance_log):
    e = equilibrium_beta_class(REF)
    jac = jacobian(REF, e)
    want = np.array([[-4.0, -0.16], [9.0, 0.06]])
    closed = np.max(np.abs(jac.as_array() - want))
    fd = np.max(np.abs(jac.as_array() - fd_jacobian(REF, e.qc, e.qr)))
    ok = closed < 1e-9 and fd < 1e-6
    log(acceptance_log, 2, ok, f"entries {jac.as_array().ravel().round(12).tolist()}, "
        f"closed-form diff {closed:.1e}, finite-difference diff {fd:.1e}")
    assert ok


def test_criterion_3_turing_margins(acceptance_log):
    l1, r1 = turing_margin(jacobian(REF, equilibrium_beta_class(REF)), DIFF_1D)
    l2, r2 = turing_margin(jacobian(P_2D, equilibrium_beta_class(P_2D)), DIFF_2D)
    ok = (abs(l1 - 59.6) < 1e-6 and abs(r1 - 2 * math.sqrt(120)) < 1e-6 and abs(r1 - 21.909) < 1e-3
          and abs(l2 - 7.7) < 1e-6 and abs(r2 - 2 * math.sqrt(3.9)) < 1e-6 and abs(r2 - 3.950) < 1e-3
          and l1 > r1 and l2 > r2)
    log(acceptance_log, 3, ok, f"1D {l1:.6f} > {r1:.6f}; 2D {l2:.6f} > {r2:.6f}")
    assert ok


def test_criterion_4_saddle_node(acceptance_log):
    b1 = bifurcation_B1(REF)
    ok = abs(b1 - 1.35 ** (1 / 3)) < 1e-12 and abs(b1 - 1.10521) < 5e-4
    log(acceptance_log, 4, ok, f"B1 = {b1:.8f} (published 1.10521)")
    assert ok


def random_params(rng, linear_collection=False):
    gamma = 1.0 if linear_collection or rng.random() < 0.5 else rng.uniform(1.0, 3.0)
    beta_c = 1.0 if linear_collection or rng.random() < 0.3 else rng.uniform(1.0, 3.0)
    return CloudParams(
        c=rng.uniform(0.1, 10), a1=rng.uniform(0.05, 5), a2=rng.uniform(0.05, 5),
        gamma=gamma, beta_c=beta_c, beta_r=rng.uniform(0.3, 3.0), zeta=rng.uniform(0.3, 3.0),
        d=rng.uniform(0.01, 2.0), B=rng.uniform(0.0, 2.0) if rng.random() < 0.8 else 0.0,
    )


def falsify(jac, rng, pairs=20):
    d = 10 ** rng.uniform(-3, 3, size=(pairs, 2))
    return sum(turing_criterion(jac, DiffusionParams(d1, d2)) for d1, d2 in d)


def test_criterion_5_impossibility(acceptance_log):
    rng = np.random.default_rng(2024)
    empty_cases = empty_hits = 0
    while empty_cases < 500:
        p = random_params(rng)
        try:
            jac = jacobian(p, trivial_equilibrium(p))
        except DomainError:
            continue
        if not classify(jac).ode_stable:
            continue
        empty_cases += 1
        empty_hits += falsify(jac, rng)
    lin_cases = lin_hits = 0
    while lin_cases < 500:
        p = random_params(rng, linear_collection=True)
        e = equilibrium_general_case(p)
        if not e.admissible:
            continue
        jac = jacobian(p, e)
        if not classify(jac).ode_stable:
            continue
        lin_cases += 1
        lin_hits += falsify(jac, rng)
    ok = empty_hits == 0 and lin_hits == 0
    log(acceptance_log, 5, ok, f"(a) empty state: {empty_cases} draws x 20 diffusion pairs, {empty_hits} "
        f"counterexamples; (b) linear collection: {lin_cases} draws x 20, {lin_hits} counterexamples")
    assert ok


def test_criterion_6_mode_set(acceptance_log):
    jac = jacobian(REF, equilibrium_beta_class(REF))
    rows = mode_table(jac, DIFF_1D, DomainSpec(50.0, 1), n_max=10)
    listed = {r.index[0] for r in rows if r.unstable}
    consistent = all((dispersion_p2(jac, DIFF_1D, (2 * math.pi * n / 50) ** 2) < 0) == (n in listed)
                     for n in range(1, 11))
    ok = consistent and listed <= PUBLISHED_MODES and bool(listed)
    log(acceptance_log, 6, ok, f"oracle set {sorted(listed)}; published claim {{2, ..., 7}}; "
        f"n = 7 has p2 = {dispersion_p2(jac, DIFF_1D, (14 * math.pi / 50) ** 2):.4f}")
    assert ok


def test_criterion_7_etd_order(acceptance_log):
    o1, o2 = observed_orders(1), observed_orders(2)
    ok = all(abs(o - 1) <= 0.2 for o in o1) and all(abs(o - 2) <= 0.2 for o in o2)
    log(acceptance_log, 7, ok, f"ETD1 orders {[round(o, 3) for o in o1]}, ETD2 orders {[round(o, 3) for o in o2]}")
    assert ok


def test_criterion_8_pattern_1d(acceptance_log, run_1d):
    jac = jacobian(REF, equilibrium_beta_class(REF))
    oracle = {r.index[0] for r in mode_table(jac, DIFF_1D, DomainSpec(50.0, 1), n_max=20) if r.unstable}
    rep = sim.diagnostics_series(run_1d.trace)
    detected = sim.pattern_detector(run_1d.final)
    (dom,) = sim.fold_mode(run_1d.final.summary.qr.dominant_mode)
    onset = rep.onset_time
    ok = detected and dom in oracle and onset is not None and 100 <= onset <= 400 and rep.stationary
    log(acceptance_log, 8, ok, f"detector {detected}, dominant mode {dom} in {sorted(oracle)}, onset t = {onset}, "
        f"stationary {rep.stationary} (relative change {rep.relative_change:.1e}), "
        f"wall {run_1d.metadata['wall_seconds']:.1f} s")
    assert ok


def test_criterion_9_pattern_2d(acceptance_log, run_2d):
    rep = sim.diagnostics_series(run_2d.trace)
    s = run_2d.final.summary
    ok = rep.stationary and s.qr.var > s.qc.var
    log(acceptance_log, 9, ok, f"stationary {rep.stationary} (relative change of var(qr) over last 10%: "
        f"{rep.relative_change:.3f}), var(qr) = {s.qr.var:.3e} vs var(qc) = {s.qc.var:.3e}, "
        f"wall {run_2d.metadata['wall_seconds']:.1f} s")
    assert ok


def test_criterion_10_sweep(acceptance_log, sweep_1d):
    flags = sweep_1d.flags
    b_star = sweep_1d.b_star
    candidates = {d.value: threshold_B2(REF, DIFF_1D, DomainSpec(50.0, 1), d) for d in B2Definition}
    ok = (None not in flags and sweep_1d.transitions == 1 and flags[0] and not flags[-1]
          and b_star is not None and 0.12 <= b_star <= 0.18)
    pairs = ", ".join(f"{b:g}:{'T' if f else 'F'}" for b, f in zip(SWEEP_B, flags))
    cands = ", ".join(f"{k} {v:.6f}" for k, v in candidates.items())
    log(acceptance_log, 10, ok, f"[{pairs}] B* = {b_star:.6g}; published B2 = {PUBLISHED_B2}; analytic {cands}")
    assert ok


def test_criterion_11_properties(acceptance_log, run_1d, run_1d_half_step):
    rng = np.random.default_rng(11)
    checks = {}

    # mass exchange moves water between species without creating it
    worst = 0.0
    for _ in range(200):
        p = random_params(rng)
        qc, qr = rng.uniform(0.01, 3, 2)
        fc, fr = reaction_rhs(p, (qc, qr))
        coll = collision_terms(p, qc, qr)
        worst = max(worst, abs((fc + fr) - (p.c * qc + p.B - p.d * qr**p.zeta)) / (1 + abs(coll)))
    checks["antisymmetry"] = worst < 1e-12

    # qc^(beta_c-1) qr^beta_r = (c - a1)/a2 at every admissible non-trivial state with gamma = 1
    worst, count = 0.0, 0
    while count < 200:
        p = random_params(rng)
        p = CloudParams(**{**p.__dict__, "gamma": 1.0, "beta_c": float(rng.choice([1.0, 2.0])),
                           "beta_r": 2.0 if rng.random() < 0.5 else p.beta_r})
        for e in candidate_equilibria(p):
            if e.admissible and e.qc > 0:
                worst = max(worst, abs(conserved_quantity(p, e) / ((p.c - p.a1) / p.a2) - 1))
                count += 1
    checks["conserved quantity"] = worst < 1e-9

    worst_rt, worst_pv = 0.0, 0.0
    for g in [GridSpec(1, n, 50.0) for n in (8, 64, 512)] + [GridSpec(2, n, 50.0) for n in (8, 64)]:
        f = FieldPair(rng.standard_normal(g.shape), rng.standard_normal(g.shape))
        s = forward(f, g)
        back = inverse(s, g)
        worst_rt = max(worst_rt, np.max(np.abs(back.qc - f.qc)) / np.max(np.abs(f.qc)))
        worst_pv = max(worst_pv, abs(spectrum_energy(s.qr_hat, g) / field_energy(f.qr, g) - 1))
    checks["fft roundtrip"] = worst_rt < 1e-12
    checks["parseval"] = worst_pv < 1e-10

    cfg = sim.preset_1d(t_end=200.0, snapshot_times=(200.0,), noise_amplitude=0.0, diag_interval=200.0)
    res = sim.run(cfg)
    eq = res.equilibrium
    drift = max(np.max(np.abs(res.final.fields.qc - eq.qc)) / eq.qc, np.max(np.abs(res.final.fields.qr - eq.qr)) / eq.qr)
    checks["equilibrium preservation (1e4 steps)"] = res.metadata["completed_steps"] == 10000 and drift < 1e-10

    short = sim.preset_1d(grid=GridSpec(1, 64, 50.0), t_end=20.0, snapshot_times=(20.0,))
    a, b = sim.run(short), sim.run(short)
    checks["determinism"] = a.final.summary == b.final.summary and np.array_equal(a.final.fields.qr, b.final.fields.qr)

    va, vb = run_1d.final.summary.qr.var, run_1d_half_step.final.summary.qr.var
    halving = abs(va - vb) / vb
    checks["step halving"] = halving < 0.01

    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    log(acceptance_log, 11, ok, f"{len(checks) - len(failed)}/{len(checks)} green"
        + (f", failing: {', '.join(failed)}" if failed else "")
        + f"; equilibrium drift {drift:.1e}, step-halving change {halving:.1e}")
    assert ok


def test_supplementary_2d_pattern_settles_later(acceptance_log, run_2d_long):
    """The 2D pattern does become stationary once given time past t = 120 (coarser 64 x 64 grid)."""
    rep = sim.diagnostics_series(run_2d_long.trace)
    s = run_2d_long.final.summary
    ok = rep.stationary and s.qr.var > s.qc.var and sim.pattern_detector(run_2d_long.final)
    acceptance_log.append(f"SUPPLEMENT 9: {'PASS' if ok else 'FAIL'}: 2D to t = 400 on 64 x 64: stationary "
                          f"{rep.stationary} (relative change {rep.relative_change:.1e}), onset t = {rep.onset_time}")
    assert ok


@pytest.mark.slow
def test_supplementary_sweep_bracket_long_horizon(acceptance_log):
    """With a horizon long enough for the slowest unstable mode, the transition lands in the analytic bracket."""
    base = sim.preset_1d(t_end=16000.0, snapshot_times=(16000.0,), diag_interval=1000.0)
    res = sim.sweep_B(base, [0.15, 0.16])
    last = threshold_B2(REF, DIFF_1D, DomainSpec(50.0, 1), B2Definition.LAST_DISCRETE_MODE)
    a22 = threshold_B2(REF, DIFF_1D, DomainSpec(50.0, 1), B2Definition.A22_SIGN)
    ok = res.flags == [True, False] and last <= res.b_star <= a22
    acceptance_log.append(f"SUPPLEMENT 10: {'PASS' if ok else 'FAIL'}: t_end = 16000, flags {res.flags}, "
                          f"B* = {res.b_star} within [{last:.6f}, {a22:.6f}]")
    assert ok
