"""Command-line interface: ``analyze``, ``simulate``, ``sweep`` and ``modes``.

Exit codes: 0 success, 2 configuration or usage error, 3 no admissible
non-trivial equilibrium, 4 numerical blow-up during a simulation.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, io, kernels
from .config import ConfigError, RunSpec, load, to_mapping
from .model import (
    CloudParams,
    NoAdmissibleEquilibrium,
    NotApplicable,
    candidate_equilibria,
    conserved_quantity,
    find_equilibrium,
    jacobian,
    trivial_equilibrium,
    trivial_stability_case,
)
from .sim import RNG_NAME, BlowUp, RunResult, diagnostics_series, field_correlation, pattern_detector, run, sweep_B
from .stability import (
    B2Definition,
    DomainSpec,
    NoSignChange,
    analyze,
    bifurcation_B1,
    impossibility_general_case,
    mode_table,
    threshold_B2,
    turing_margin,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_EQUILIBRIUM = 3
EXIT_BLOWUP = 4

PUBLISHED_B2 = 0.137
PUBLISHED_MODES_1D = "n in {2, ..., 7}"
NO_EQ_HINT = "a non-trivial steady state needs c > a1 (condensation must outpace autoconversion)"


def _g6(x) -> str:
    if x is None:
        return "n/a"
    if isinstance(x, complex):
        return f"{x.real:.6g}{x.imag:+.6g}j"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _finite_or_none(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


# --- analyze ------------------------------------------------------------------


def build_analysis(spec: RunSpec) -> dict:
    """Everything the linear theory says about the configured system, as plain data."""
    s = spec.sim
    p, diff = s.params, s.diff
    dom = DomainSpec(s.grid.length, s.grid.dims)
    if p.c <= p.a1:
        raise NoAdmissibleEquilibrium(f"c = {p.c} <= a1 = {p.a1}: {NO_EQ_HINT}")
    eq = find_equilibrium(p)
    jac = jacobian(p, eq)
    rep = analyze(jac, diff, dom)
    lhs, rhs = turing_margin(jac, diff)
    a11_0, a21_0, case = trivial_stability_case(p)
    doc = {
        "params": asdict(p),
        "diffusion": asdict(diff),
        "domain": {"length": dom.length, "dims": dom.dims},
        "equilibria": [
            {"branch": e.branch.value, "qc": _finite_or_none(e.qc), "qr": _finite_or_none(e.qr), "admissible": e.admissible}
            for e in candidate_equilibria(p)
        ],
        "trivial_equilibrium": {"qc": 0.0, "qr": trivial_equilibrium(p).qr, "a11": a11_0, "a21": a21_0,
                                "case": case.value},
        "equilibrium": {"branch": eq.branch.value, "qc": eq.qc, "qr": eq.qr},
        "jacobian": {"a11": jac.a11, "a12": jac.a12, "a21": jac.a21, "a22": jac.a22},
        "trace": rep.trace,
        "det": rep.det,
        "eigenvalues": [[ev.real, ev.imag] for ev in rep.eigenvalues],
        "ode_stable": rep.ode_stable,
        "turing_lhs": lhs,
        "turing_rhs": _finite_or_none(rhs),
        "turing_possible": bool(rep.turing_possible),
        "qm_squared": rep.qm_squared,
        "band": list(rep.band) if rep.band else None,
        "discrete_modes": [list(m) for m in rep.discrete_modes],
        "conserved_quantity": None,
        "B1": None,
        "B2": {d.value: None for d in B2Definition},
        "B2_published": PUBLISHED_B2,
        "certificates": [],
        "notes": [],
    }
    try:
        doc["conserved_quantity"] = conserved_quantity(p, eq)
    except (NotApplicable, ValueError):
        pass
    if case.value != "Unstable-Always" and a11_0 < 0:
        doc["certificates"].append(
            "trivial steady state: a12 = 0, so the dispersion polynomial factors and no diffusion pair destabilises it"
        )
    if p.gamma == 1 and p.beta_c == 1:
        impossibility_general_case(p)
        doc["certificates"].append(
            "gamma = beta_c = 1: a11 = 0 at the steady state, so ODE stability forces D1*a22 + D2*a11 < 0 "
            "and pattern formation via Turing instabilities is impossible for every (D1, D2)"
        )
    try:
        doc["B1"] = bifurcation_B1(p)
        for d in B2Definition:
            try:
                doc["B2"][d.value] = threshold_B2(p, diff, dom, d)
            except (NoSignChange, NoAdmissibleEquilibrium) as exc:
                doc["notes"].append(f"B2 {d.value}: {exc}")
    except NotApplicable as exc:
        doc["notes"].append(f"B1/B2: {exc}")
    return doc


def format_analysis(doc: dict) -> str:
    lines = ["cloudturing stability report", ""]
    lines.append("parameters: " + ", ".join(f"{k}={_g6(float(v))}" for k, v in doc["params"].items()))
    lines.append(f"diffusion: D1={_g6(doc['diffusion']['d1'])}, D2={_g6(doc['diffusion']['d2'])}")
    lines.append(f"domain: L={_g6(doc['domain']['length'])}, dims={doc['domain']['dims']}")
    lines.append("")
    lines.append("equilibria:")
    for e in doc["equilibria"]:
        lines.append(f"  {e['branch']}: qc={_g6(e['qc'])} qr={_g6(e['qr'])} admissible={e['admissible']}")
    t = doc["trivial_equilibrium"]
    lines.append(f"  trivial: qr={_g6(t['qr'])} case={t['case']} a11={_g6(t['a11'])}")
    e = doc["equilibrium"]
    lines.append(f"selected: {e['branch']} qc={_g6(e['qc'])} qr={_g6(e['qr'])}")
    j = doc["jacobian"]
    lines.append(f"jacobian: a11={_g6(j['a11'])} a12={_g6(j['a12'])} a21={_g6(j['a21'])} a22={_g6(j['a22'])}")
    lines.append(f"trace={_g6(doc['trace'])} det={_g6(doc['det'])}")
    lines.append("eigenvalues: " + ", ".join(_g6(complex(*ev)) for ev in doc["eigenvalues"]))
    lines.append(f"ode_stable = {str(doc['ode_stable']).lower()}")
    lines.append(f"turing margin: D1*a22 + D2*a11 = {_g6(doc['turing_lhs'])} vs 2*sqrt(D1*D2*det) = {_g6(doc['turing_rhs'])}")
    lines.append(f"turing_possible = {str(doc['turing_possible']).lower()}")
    lines.append(f"qm_squared = {_g6(doc['qm_squared'])}")
    band = doc["band"]
    lines.append("band = " + (f"({_g6(band[0])}, {_g6(band[1])})" if band else "none"))
    modes = doc["discrete_modes"]
    lines.append("discrete unstable modes: " + (", ".join(str(tuple(m)) for m in modes) if modes else "none"))
    if doc["conserved_quantity"] is not None:
        lines.append(f"conserved quantity qc^(beta_c-gamma)*qr^beta_r = {_g6(doc['conserved_quantity'])}")
    lines.append("")
    lines.append(f"B1 = {_g6(doc['B1'])}")
    for k, v in doc["B2"].items():
        lines.append(f"B2 [{k}] = {_g6(v)}")
    lines.append(f"B2 published = {_g6(doc['B2_published'])}")
    for c in doc["certificates"]:
        lines.append(f"certificate: {c}")
    for n in doc["notes"]:
        lines.append(f"note: {n}")
    return "\n".join(lines) + "\n"


# --- manifest -----------------------------------------------------------------


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir: Path, command: str, spec: RunSpec, files: list[Path], started: str,
                   extra: dict | None = None) -> Path:
    doc = {
        "tool": "cloudturing",
        "version": __version__,
        "command": command,
        "started": started,
        "finished": _now(),
        "seed": spec.sim.seed,
        "rng": RNG_NAME,
        "kernel_backend": kernels.backend(),
        "config": to_mapping(spec),
        **(extra or {}),
        "files": io.inventory(out_dir, files),
    }
    return io.write_json(out_dir / "manifest.json", doc)


# --- commands -----------------------------------------------------------------


def cmd_analyze(spec: RunSpec, out_dir: Path, args) -> int:
    started = _now()
    doc = build_analysis(spec)
    txt = out_dir / "report.txt"
    txt.write_text(format_analysis(doc))
    js = io.write_json(out_dir / "report.json", doc)
    write_manifest(out_dir, "analyze", spec, [txt, js], started)
    sys.stdout.write(txt.read_text())
    return EXIT_OK


def _tag(t: float) -> str:
    return f"{t:g}".replace(".", "p")


def write_run_outputs(res: RunResult, spec: RunSpec, out_dir: Path, fmt: str) -> tuple[list[Path], dict]:
    g = res.config.grid
    files: list[Path] = []
    images: dict = {}
    for snap in res.snapshots:
        for species, arr in (("qc", snap.fields.qc), ("qr", snap.fields.qr)):
            stem = f"snapshot_t{_tag(snap.time)}_{species}"
            if fmt in ("text", "both"):
                files.append(io.write_field_text(out_dir / f"{stem}.txt", arr, g.length, snap.time, species))
            if fmt in ("binary", "both"):
                files.append(io.write_field_binary(out_dir / f"{stem}.bin", arr))
            if g.dims == 2 and spec.output.images:
                path = out_dir / f"{stem}.pgm"
                images[path.name] = io.write_pgm(path, arr)
                files.append(path)
    diag = out_dir / "diagnostics.tsv"
    rows = ["time\tvar_qc\tvar_qr\tmin_qc\tmax_qc\tmin_qr\tmax_qr\tdominant_qc\tdominant_qr"]
    for p in res.trace:
        c, r = p.summary.qc, p.summary.qr
        rows.append("\t".join([repr(p.time), repr(c.var), repr(r.var), repr(c.min), repr(c.max), repr(r.min),
                               repr(r.max), ",".join(map(str, c.dominant_mode)), ",".join(map(str, r.dominant_mode))]))
    diag.write_text("\n".join(rows) + "\n")
    files.append(diag)
    return files, images


def _run_summary(res: RunResult) -> dict:
    s = res.config
    out = {"run": res.metadata}
    if len(res.trace) >= 2:
        rep = diagnostics_series(res.trace, s.noise_amplitude)
        out["diagnostics"] = {"stationary": rep.stationary, "relative_change": rep.relative_change,
                              "onset_time": rep.onset_time}
    if res.snapshots:
        final = res.snapshots[-1]
        out["final"] = {
            "time": final.time,
            "patterned": pattern_detector(final, s.noise_amplitude, s.pattern_std_factor, s.pattern_peak_factor),
            "qc": asdict(final.summary.qc),
            "qr": asdict(final.summary.qr),
            "correlation_qc_qr": field_correlation(final.fields),
        }
    return out


def cmd_simulate(spec: RunSpec, out_dir: Path, args) -> int:
    started = _now()
    if spec.sim.params.c <= spec.sim.params.a1:
        raise NoAdmissibleEquilibrium(f"c = {spec.sim.params.c} <= a1 = {spec.sim.params.a1}: {NO_EQ_HINT}")
    code = EXIT_OK
    try:
        res = run(spec.sim)
        extra = {"status": "complete", "partial": False}
    except BlowUp as exc:
        res = exc.partial
        extra = {"status": "blowup", "partial": True,
                 "blowup": {"time": exc.time, "species": exc.species, "mode": list(exc.mode)}}
        code = EXIT_BLOWUP
        print(f"error: {exc}; partial outputs kept in {out_dir}", file=sys.stderr)
    files, images = write_run_outputs(res, spec, out_dir, args.format or spec.output.format)
    summary = _run_summary(res)
    extra.update(summary)
    if images:
        extra["image_normalization"] = images
    write_manifest(out_dir, "simulate", spec, files, started, extra)
    fin = summary.get("final")
    if fin:
        print(f"final t={_g6(fin['time'])} patterned={fin['patterned']} var_qc={_g6(fin['qc']['var'])} "
              f"var_qr={_g6(fin['qr']['var'])} dominant_qr={tuple(fin['qr']['dominant_mode'])}")
    return code


def cmd_sweep(spec: RunSpec, out_dir: Path, args) -> int:
    started = _now()
    if not args.b_min < args.b_max:
        raise ConfigError("--b-min must be below --b-max")
    if args.steps < 2:
        raise ConfigError("--steps must be at least 2")
    b_values = np.linspace(args.b_min, args.b_max, args.steps).tolist()
    res = sweep_B(spec.sim, b_values, workers=args.workers)
    table = out_dir / "sweep.tsv"
    rows = ["B\tpatterned\tvar_qc\tvar_qr\tmean_qc\tmean_qr\tmax_qr\tdominant_qr\terror"]
    for e in res.entries:
        if e.final is None:
            rows.append(f"{e.B!r}\tNA\tNA\tNA\tNA\tNA\tNA\tNA\t{e.error}")
            continue
        c, r = e.final.summary.qc, e.final.summary.qr
        rows.append("\t".join([repr(e.B), str(e.patterned).lower(), repr(c.var), repr(r.var), repr(c.mean),
                               repr(r.mean), repr(r.max), ",".join(map(str, r.dominant_mode)), ""]))
    table.write_text("\n".join(rows) + "\n")
    try:
        analysis = build_analysis(spec)
        candidates = analysis["B2"]
    except (NoAdmissibleEquilibrium, NotApplicable):
        candidates = {}
    summary = {"b_star": res.b_star, "transitions": res.transitions, "B2_published": PUBLISHED_B2,
               "B2_candidates": candidates}
    js = io.write_json(out_dir / "sweep.json", summary)
    write_manifest(out_dir, "sweep", spec, [table, js], started, {"sweep": summary})
    sys.stdout.write(table.read_text())
    print(f"B* = {_g6(res.b_star)} (transitions: {res.transitions})")
    print(f"B2 published = {PUBLISHED_B2}; " + ", ".join(f"{k} = {_g6(v)}" for k, v in candidates.items()))
    return EXIT_OK


def format_modes(spec: RunSpec) -> str:
    s = spec.sim
    p = s.params
    if p.c <= p.a1:
        raise NoAdmissibleEquilibrium(f"c = {p.c} <= a1 = {p.a1}: {NO_EQ_HINT}")
    eq = find_equilibrium(p)
    jac = jacobian(p, eq)
    dom = DomainSpec(s.grid.length, s.grid.dims)
    rows = mode_table(jac, s.diff, dom, spec.output.modes_n_max)
    head = "n" if dom.dims == 1 else "(n1,n2)"
    out = [f"{head}\tq\tq2\tp2\tsigma\tstatus"]
    for r in rows:
        idx = str(r.index[0]) if dom.dims == 1 else f"({r.index[0]},{r.index[1]})"
        out.append(f"{idx}\t{r.q:.6g}\t{r.q2:.6g}\t{r.p2:.6g}\t{r.sigma:.6g}\t{'unstable' if r.unstable else 'stable'}")
    unstable = [r.index for r in rows if r.unstable]
    out.append(f"# unstable: {', '.join(str(i[0]) if dom.dims == 1 else str(i) for i in unstable) or 'none'}")
    if dom.dims == 1:
        out.append(f"# published unstable set for the reference 1D case: {PUBLISHED_MODES_1D}; "
                   "rows above evaluate p2 directly")
    return "\n".join(out) + "\n"


def cmd_modes(spec: RunSpec, out_dir: Path, args) -> int:
    started = _now()
    text = format_modes(spec)
    path = out_dir / "modes.tsv"
    path.write_text(text)
    write_manifest(out_dir, "modes", spec, [path], started)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "sweep": cmd_sweep, "modes": cmd_modes}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cloudturing", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"cloudturing {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="INI config, or a manifest.json from an earlier run")
    common.add_argument("--out-dir", default="cloudturing-out", help="output directory (created if missing)")
    common.add_argument("--seed", type=int, help="override the noise seed")
    common.add_argument("--format", choices=("text", "binary", "both"), help="field file format")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="steady states, Turing analysis, B1 and B2")
    sub.add_parser("simulate", parents=[common], help="pseudo-spectral run with snapshots and diagnostics")
    sw = sub.add_parser("sweep", parents=[common], help="run the model over a range of rain influx B")
    sw.add_argument("--b-min", type=float, default=0.0)
    sw.add_argument("--b-max", type=float, default=0.17)
    sw.add_argument("--steps", type=int, default=18)
    sw.add_argument("--workers", type=int, default=1, help="parallel processes")
    sub.add_parser("modes", parents=[common], help="dispersion relation at each lattice mode")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load(args.config)
        if args.seed is not None:
            spec = replace(spec, sim=replace(spec.sim, seed=args.seed))
        if args.format is not None:
            spec = replace(spec, output=replace(spec.output, format=args.format))
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](spec, out_dir, args)
    except ConfigError as exc:
        print(f"config error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoAdmissibleEquilibrium as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_EQUILIBRIUM


if __name__ == "__main__":
    sys.exit(main())
