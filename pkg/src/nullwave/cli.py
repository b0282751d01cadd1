"""Command-line entry points: run, sweep, fit, convergence, check-assumptions.

Exit codes: 0 when every enabled check (and requested fit) passes, 1 when one
fails, 2 for configuration errors, 3 for a numerical abort during evolution.
All emitted files are deterministic (no timestamps, repr-formatted floats)
and written atomically (temp file + rename).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .background import SampleRegion, verify_h0
from .config import ConfigError, RunConfig, parse_config
from .diagnostics import (EnergySeries, energy_boundedness_check,
                          evolve_series, hardy_check_ingoing, hardy_check_outgoing,
                          iled_check, t_boundedness_check)
from .evolve import NumericalBlowupError, convergence_order
from .potential import verify_h1, verify_h3
from .ratefit import compare_to_theorem, fit_exponent

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _write_text(path, text: str) -> None:
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, str(path))


def _write_json(path, obj) -> None:
    _write_text(path, json.dumps(obj, sort_keys=True, indent=1,
                                 allow_nan=True, default=float) + "\n")


def _assumption_region(cfg: RunConfig) -> SampleRegion:
    v_lo = cfg.uF + cfg.R
    v_hi = max(cfg.vmax, v_lo * 1.001)
    return SampleRegion(cfg.u0, cfg.uF, v_lo + cfg.h, v_hi, nu=12, nv=48)


def _report_to_dict(rep) -> dict:
    if hasattr(rep, "as_dict"):
        return rep.as_dict()
    if hasattr(rep, "clauses"):
        return {
            "name": rep.name,
            "passed": rep.passed,
            "ceiling": rep.ceiling,
            "clauses": {
                k: {"kind": c.kind, "sup": c.sup, "sup_inner": c.sup_inner,
                    "sup_outer": c.sup_outer, "passed": c.passed, "note": c.note}
                for k, c in rep.clauses.items()
            },
        }
    return dict(rep.__dict__)


def _series_quantity(series: EnergySeries, name: str):
    u = series.u()
    direct = {"E": "E", "E_T": "E_T", "pointwise_at_R": "pointwise_at_R",
              "radiation_field": "radiation_field",
              "radiation_extrap": "radiation_extrap",
              "phi_at_R": "pointwise_at_R", "psi_vmax": "radiation_field",
              "psi_extrap": "radiation_extrap"}
    if name in direct:
        y = series.column(direct[name])
        if direct[name] in ("pointwise_at_R", "radiation_field", "radiation_extrap"):
            y = np.abs(y)
        return u, y
    for prefix, attr in (("Ep_", "Ep"), ("Etilde_", "Ep_tilde"),
                         ("EpPsi1_", "Ep_Psi1"), ("EpTheta0_", "Ep_Theta0"),
                         ("EpTpsi_", "Ep_Tpsi")):
        if name.startswith(prefix):
            p = float(name[len(prefix):])
            key = min(series.p_list, key=lambda q: abs(q - p))
            if abs(key - p) > 1e-9:
                raise ConfigError(f"series has no weight p = {p:g} for {name!r}")
            return u, series.column(attr, key)
    raise ConfigError(f"unknown fit quantity {name!r}")


def _fit_entry(series_by_mode: dict, quantity: str, claim: str, lo: float,
               hi: float, mode: int, epsilon: float) -> dict:
    series = series_by_mode[mode]
    u, y = _series_quantity(series, quantity)
    entry = {"quantity": quantity, "claim": claim, "mode": mode,
             "window": [lo, hi]}
    try:
        fit = fit_exponent(u, y, (lo, hi))
        fit = compare_to_theorem(fit, claim, epsilon)
        entry.update({
            "exponent": fit.exponent, "stderr": fit.stderr,
            "plateau_quality": fit.plateau_quality, "n_points": fit.n_points,
            "target": fit.target, "tolerance": fit.tolerance,
            "verdict": fit.verdict,
        })
    except ValueError as exc:
        entry.update({"verdict": "inconclusive", "error": str(exc)})
    return entry


def run_config(cfg: RunConfig, echo=print):
    """Execute a validated config; returns (exit_code, report dict)."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    bg = cfg.background()
    ps = cfg.potential()
    grid = cfg.grid()
    data = cfg.data()
    spec = cfg.diagnostics_spec()

    report = {"assumptions": {}, "inequalities": [], "fits": [], "checks": {}}
    ok = True

    region = _assumption_region(cfg)
    if "h0" in cfg.checks:
        rep = verify_h0(bg, region)
        report["assumptions"]["H0"] = _report_to_dict(rep)
        report["checks"]["h0"] = rep.passed
        ok &= rep.passed
        if not rep.passed:
            echo(f"H0 check failed: {rep.failure}; skipping evolution")
            _write_json(os.path.join(cfg.out_dir, "report.json"), report)
            return EXIT_FAIL, report
    if "h1" in cfg.checks:
        rep = verify_h1(ps, region, bg)
        report["assumptions"]["H1"] = _report_to_dict(rep)
        report["checks"]["h1"] = rep.passed
        ok &= rep.passed
    if "h3" in cfg.checks:
        rep = verify_h3(ps, region, bg)
        report["assumptions"]["H3"] = _report_to_dict(rep)
        report["checks"]["h3"] = rep.passed
        ok &= rep.passed

    series_by_mode = {}
    fields = {}
    try:
        for ell in cfg.modes:
            keep = cfg.storage == "full"
            series, fld = evolve_series(bg, ps, grid, data, ell, spec,
                                        keep_full=keep)
            series.meta.update({"ell": ell, "epsilon": cfg.epsilon})
            series_by_mode[ell] = series
            if fld is not None:
                fields[ell] = fld
            series.to_csv(os.path.join(cfg.out_dir, f"series_l{ell}.csv"))
            echo(f"mode l={ell}: {len(series.records)} records")
    except NumericalBlowupError as exc:
        report["numerical_abort"] = {"u": exc.u, "v": exc.v,
                                     "local": exc.local}
        _write_json(os.path.join(cfg.out_dir, "report.json"), report)
        echo(f"numerical abort: {exc}")
        return EXIT_NUMERICAL, report

    for ell, series in series_by_mode.items():
        if "boundedness" in cfg.checks:
            try:
                rep = energy_boundedness_check(series)
                rep_d = rep.as_dict()
                rep_d["mode"] = ell
                report["inequalities"].append(rep_d)
                report["checks"][f"boundedness_l{ell}"] = rep.passed
                ok &= rep.passed
            except ValueError as exc:
                report["checks"][f"boundedness_l{ell}"] = f"skipped: {exc}"
        if "boundedness_T" in cfg.checks and spec.with_T:
            try:
                rep = t_boundedness_check(series)
                rep_d = rep.as_dict()
                rep_d["mode"] = ell
                report["inequalities"].append(rep_d)
                report["checks"][f"boundedness_T_l{ell}"] = rep.passed
                ok &= rep.passed
            except ValueError as exc:
                report["checks"][f"boundedness_T_l{ell}"] = f"skipped: {exc}"

    region_checks = [c for c in cfg.checks if c in ("hardy", "iled")]
    for name in region_checks:
        if cfg.storage != "full":
            report["checks"][name] = "skipped: region checks need storage = 'full'"
            continue
        for ell, fld in fields.items():
            mid = grid.u0 + round(0.3 * grid.nu) * grid.h
            hi = grid.u0 + round(0.8 * grid.nu) * grid.h
            if name == "hardy":
                rep = hardy_check_outgoing(fld, mid, hi, q=1.5)
                rep_in = hardy_check_ingoing(fld, mid, hi, q=1.5)
                for r in (rep, rep_in):
                    d = r.as_dict()
                    d["mode"] = ell
                    report["inequalities"].append(d)
                    report["checks"][f"{r.name}_l{ell}"] = r.passed
                    ok &= r.passed
            else:
                rep = iled_check(fld, sigma=1.5)
                d = rep.as_dict()
                d["mode"] = ell
                report["inequalities"].append(d)
                report["checks"][f"{rep.name}_l{ell}"] = rep.passed
                ok &= rep.passed

    for quantity, claim, lo, hi, mode in cfg.fits:
        if mode not in series_by_mode:
            raise ConfigError(f"fit requests mode {mode} not in modes list")
        entry = _fit_entry(series_by_mode, quantity, claim, lo, hi, mode,
                           cfg.epsilon)
        report["fits"].append(entry)
        verdict = entry.get("verdict")
        echo(f"fit {quantity} (l={mode}, claim={claim}): "
             f"exponent={entry.get('exponent', float('nan')):+.4f} "
             f"target={entry.get('target')} verdict={verdict}")
        ok &= verdict in ("meets-bound", "saturates-sharp")

    if cfg.dump_field and fields:
        for ell, fld in fields.items():
            base = os.path.join(cfg.out_dir, f"field_l{ell}.f64")
            tmp = base + ".tmp"
            fld.psi.astype("<f8").tofile(tmp)
            os.replace(tmp, base)
            hdr = (
                "nullwave-field v1\n"
                f"rows={grid.nu + 1}\ncols={grid.nv + 1}\n"
                f"u0={grid.u0!r}\nuF={grid.uF!r}\nv0={grid.v0!r}\n"
                f"vmax={grid.vmax!r}\nh={grid.h!r}\nR={grid.R!r}\n"
                "layout=row-major in u, float64 little-endian\n"
            )
            _write_text(base + ".hdr", hdr)

    _write_json(os.path.join(cfg.out_dir, "report.json"), report)
    return (EXIT_OK if ok else EXIT_FAIL), report


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _sweep_worker(args):
    path, eps, out_dir = args
    cfg = parse_config(path)
    cfg = replace(cfg, epsilon=eps, out_dir=out_dir).validate()
    try:
        code, report = run_config(cfg, echo=lambda *_: None)
        return eps, code, report.get("fits", []), None
    except Exception as exc:  # propagate per-run failures without aborting
        return eps, EXIT_FAIL, [], f"{type(exc).__name__}: {exc}"


def run_sweep(path, eps_values, out_dir, jobs=None, echo=print) -> int:
    if not eps_values:
        raise ConfigError("sweep needs a non-empty --eps list")
    uniq = sorted(set(eps_values))
    if len(uniq) < len(eps_values):
        warnings.warn("duplicate epsilon values deduplicated", RuntimeWarning)
    if len(uniq) < 2:
        raise ConfigError("sweep needs at least 2 distinct epsilon values")
    parse_config(path)  # validate before spawning workers
    os.makedirs(out_dir, exist_ok=True)
    tasks = [(str(path), eps, os.path.join(out_dir, f"eps_{eps:g}")) for eps in uniq]
    results = []
    workers = jobs or min(len(tasks), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, tasks))
    else:
        results = [_sweep_worker(t) for t in tasks]

    rows = []
    all_ok = True
    for eps, code, fits, err in sorted(results):
        target_pw = -(1.0 + math.sqrt(1.0 + 4.0 * eps))
        row = {"epsilon": eps, "exit_code": code, "error": err,
               "target_pointwise": target_pw,
               "target_radiation": target_pw / 2.0}
        for entry in fits:
            row[f"{entry['quantity']}_exponent"] = entry.get("exponent")
            row[f"{entry['quantity']}_verdict"] = entry.get("verdict")
        rows.append(row)
        all_ok &= (code == EXIT_OK and err is None)
        echo(f"eps={eps:g}: exit={code}" + (f" ({err})" if err else ""))

    _write_json(os.path.join(out_dir, "sweep_report.json"), rows)
    cols = sorted({k for row in rows for k in row})
    buf = ["# nullwave-sweep v1", ",".join(cols)]
    for row in rows:
        buf.append(",".join(repr(row.get(c)) if row.get(c) is not None else ""
                            for c in cols))
    _write_text(os.path.join(out_dir, "sweep_table.csv"), "\n".join(buf) + "\n")
    return EXIT_OK if all_ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    code, _ = run_config(cfg)
    return code


def _cmd_sweep(args) -> int:
    return run_sweep(args.config, args.eps, args.out or "sweep_out",
                     jobs=args.jobs)


def _cmd_convergence(args) -> int:
    cfg = parse_config(args.config)
    grid = cfg.grid()
    ell = cfg.modes[0]
    du, dv = grid.uF - grid.u0, grid.vmax - grid.v0
    probes = [
        (grid.u0 + round(0.5 * du / grid.h) * grid.h,
         grid.v0 + round(0.75 * dv / grid.h) * grid.h),
        (grid.u0 + round(0.75 * du / grid.h) * grid.h,
         grid.v0 + round(0.9 * dv / grid.h) * grid.h),
    ]
    rep = convergence_order(cfg.background(), cfg.potential(), grid,
                            cfg.data(), ell, probes=probes)
    out = {
        "inconclusive": rep.inconclusive,
        "note": rep.note,
        "order_max_norm": rep.order_max_norm,
        "order_l2_norm": rep.order_l2_norm,
        "orders_at_probes": {f"u={k[0]:g},v={k[1]:g}": v
                             for k, v in rep.orders_at_probes.items()},
    }
    os.makedirs(cfg.out_dir, exist_ok=True)
    _write_json(os.path.join(cfg.out_dir, "convergence.json"), out)
    print(json.dumps(out, sort_keys=True, indent=1))
    return EXIT_OK


def _cmd_fit(args) -> int:
    with open(args.csv, "r", encoding="utf-8") as f:
        first = f.readline()
        if not first.startswith("#"):
            f.seek(0)
        reader = csv.DictReader(f)
        rows = list(reader)
    if not rows or args.column not in rows[0]:
        print(f"column {args.column!r} not found in {args.csv}", file=sys.stderr)
        return EXIT_CONFIG
    u = np.array([float(r["u"]) for r in rows])
    y = np.abs(np.array([float(r[args.column]) for r in rows]))
    window = tuple(args.window) if args.window else None
    try:
        fit = fit_exponent(u, y, window)
        fit = compare_to_theorem(fit, args.claim, args.eps)
    except ValueError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(json.dumps({
        "column": args.column, "claim": args.claim, "epsilon": args.eps,
        "exponent": fit.exponent, "stderr": fit.stderr,
        "window": list(fit.window), "plateau_quality": fit.plateau_quality,
        "target": fit.target, "tolerance": fit.tolerance,
        "verdict": fit.verdict,
    }, sort_keys=True, indent=1))
    return EXIT_OK if fit.verdict in ("meets-bound", "saturates-sharp") else EXIT_FAIL


def _cmd_check(args) -> int:
    cfg = parse_config(args.config)
    bg = cfg.background()
    ps = cfg.potential()
    region = _assumption_region(cfg)
    reports = {
        "H0": verify_h0(bg, region),
        "H1": verify_h1(ps, region, bg),
        "H3": verify_h3(ps, region, bg),
    }
    out = {k: _report_to_dict(r) for k, r in reports.items()}
    print(json.dumps(out, sort_keys=True, indent=1, default=float))
    return EXIT_OK if all(r.passed for r in reports.values()) else EXIT_FAIL


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nullwave",
        description="Characteristic evolution and decay diagnostics for "
                    "waves with scale-critical potentials",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="evolve, check, fit per a TOML config")
    p.add_argument("config")
    p.add_argument("--out", help="override the output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run the base config across epsilon values")
    p.add_argument("config")
    p.add_argument("--eps", type=float, nargs="+", required=True)
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fit", help="fit a decay exponent from an emitted CSV")
    p.add_argument("csv")
    p.add_argument("--column", default="phi_at_R")
    p.add_argument("--claim", default="sharp")
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--window", type=float, nargs=2)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("convergence", help="Richardson order study on {h, h/2, h/4}")
    p.add_argument("config")
    p.set_defaults(func=_cmd_convergence)

    p = sub.add_parser("check-assumptions", help="evaluate (H0)/(H1)/(H3) and report")
    p.add_argument("config")
    p.set_defaults(func=_cmd_check)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalBlowupError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
