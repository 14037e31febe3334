"""Time the numba and numpy kernel paths on 1D and 2D grids.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from cloudturing import kernels
from cloudturing.integrator import build_tables, etd2_step, StepState
from cloudturing.model import CloudParams, DiffusionParams
from cloudturing.sim import PseudoSpectralRHS, initial_condition, preset_1d, preset_2d
from cloudturing.spectral import project_hermitian, rfft, symbol_table


def bench_case(label, cfg, repeat):
    g = cfg.grid
    fields = initial_condition(cfg).stack()
    out = np.empty_like(fields)
    tables = build_tables(symbol_table(g, cfg.params, cfg.diff), cfg.h)
    u = project_hermitian(rfft(fields, g), g)
    rows = []
    for name in ("numpy", "numba"):
        kb = kernels.get_backend(name)
        kb.reaction_remainder(fields, out, cfg.params, "fractional")  # warm up / compile
        rhs = PseudoSpectralRHS(cfg.params, g, backend=kb)
        n_prev = rhs(u, 0.0)
        state = StepState(u, n_prev, 1, 0.0)
        etd2_step(state, tables, rhs, backend=kb)
        res = out_c = np.empty_like(u)
        kb.etd2_combine(u, n_prev, n_prev, tables.expz, tables.wa, tables.wb, out_c)
        t_rem = min(timeit.repeat(lambda: kb.reaction_remainder(fields, out, cfg.params, "fractional"),
                                  number=200, repeat=repeat)) / 200
        t_etd = min(timeit.repeat(lambda: kb.etd2_combine(u, n_prev, n_prev, tables.expz, tables.wa, tables.wb, res),
                                  number=200, repeat=repeat)) / 200
        t_step = min(timeit.repeat(lambda: etd2_step(state, tables, rhs, backend=kb), number=50, repeat=repeat)) / 50
        rows.append((name, t_rem, t_etd, t_step))
    print(f"\n{label}: grid {g.shape}")
    print(f"{'backend':8s} {'remainder':>12s} {'etd2 combine':>14s} {'full step':>12s}")
    for name, a, b, c in rows:
        print(f"{name:8s} {a * 1e6:10.1f}us {b * 1e6:12.1f}us {c * 1e6:10.1f}us")
    base = rows[0]
    print("numba speedup: remainder x{:.2f}, combine x{:.2f}, step x{:.2f}".format(
        base[1] / rows[1][1], base[2] / rows[1][2], base[3] / rows[1][3]))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    bench_case("1D", preset_1d(), args.repeat)
    bench_case("2D", preset_2d(), args.repeat)
    frac = preset_2d(params=CloudParams(d=0.13, beta_r=1.5), diff=DiffusionParams(100.0, 0.025))
    bench_case("2D, fractional beta_r", frac, args.repeat)


if __name__ == "__main__":
    main()
