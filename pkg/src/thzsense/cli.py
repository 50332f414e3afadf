"""Command-line entry point: ``thzsense <command> --config FILE [--out DIR] [--seed N] [--threads N]``.

Exit codes: 0 success, 2 configuration error, 3 estimation failure.
CSV outputs are deterministic; wall-clock timings go to stdout only.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import csvio
from .config import ConfigError, load_config
from .estimate import EstimationError
from .experiments import SWEEPS, Scenario, monte_carlo, run_brute, run_sparse
from .geometry import InfeasibleRangeError, NearFieldWarning, exact_path_lengths, far_field_angles, s1_from_range
from .model import AngleGrid, DiagnosticsError, export_gram, export_sensing_matrix, squint_sweep, write_grid_csv
from .wavefield import write_measurement_csv

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATION = 0, 2, 3

PRESETS = {
    # (elements, bandwidths)
    "fig5": (4, [10e9]),
    "fig6": (256, [10e9]),
    "fig7": (256, [60e9]),
}


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    d = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d, help="scenario JSON file or builtin name (e.g. paper_fig4)")
    p.add_argument("--out", default=d, help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, default=d, help="base seed (overrides noise.seed)")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1, help="worker threads for Monte-Carlo trials")
    return p


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thzsense", description=__doc__.splitlines()[0], parents=[_global_flags(False)])
    sub = ap.add_subparsers(dest="command", required=True)
    common = [_global_flags(True)]
    sub.add_parser("validate", parents=common, help="check a config and print derived geometry")
    sp = sub.add_parser("simulate", parents=common, help="synthesize one measurement")
    sp.add_argument("--snr-db", type=float, default=None, help="override noise.snr_db (inf allowed)")
    sub.add_parser("brute", parents=common, help="exhaustive angle search with known ranges and RCS")
    sub.add_parser("sparse", parents=common, help="per-range sparse reconstruction")
    cp = sub.add_parser("coherence", parents=common, help="sensing matrices and coherence across bandwidths")
    cp.add_argument("--bandwidths", type=_float_list, default=None, help="comma-separated sweep bandwidths in Hz")
    cp.add_argument("--preset", choices=sorted(PRESETS), default=None)
    mp = sub.add_parser("montecarlo", parents=common, help="seeded repeated trials, optionally swept")
    mp.add_argument("--trials", type=int, default=50)
    mp.add_argument("--sweep", choices=sorted(SWEEPS), default=None)
    mp.add_argument("--values", type=_float_list, default=None, help="sweep values (dB for snr, Hz for bandwidth)")
    mp.add_argument("--method", choices=["sparse", "brute"], default="sparse")
    return ap


# ---------------------------------------------------------------- helpers


def _scenario(args) -> Scenario:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    upd = {}
    if args.seed is not None:
        upd["noise"] = cfg.noise.model_copy(update={"seed": args.seed})
    if args.out is not None:
        upd["output_dir"] = args.out
    if upd:
        cfg = cfg.model_copy(update=upd)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sc = Scenario(cfg)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return sc


def _meta(sc: Scenario, command: str, seed: int | None = None, **extra) -> dict:
    meta = {"config_hash": sc.config_hash, "seed": sc.seed if seed is None else seed, "command": command}
    meta.update(extra)
    return meta


def _out(sc: Scenario) -> Path:
    return Path(sc.config.output_dir)


def _deg(x) -> float:
    return float(math.degrees(x))


# ---------------------------------------------------------------- commands


def cmd_validate(sc: Scenario, args) -> int:
    s = sc.scene
    print(f"config_hash   {sc.config_hash}")
    print(f"d             {s.d:.6g} m")
    print(f"t1, t2, t     {s.t1:.6g} m, {s.t2:.6g} m, {s.t:.6g} m")
    print(f"theta_in      {_deg(s.theta_in):.4f} deg")
    k = sc.grid.wavenumbers
    print(f"wavenumbers   {k[0]:.6g} .. {k[-1]:.6g} rad/m ({k.size} samples)")
    print(f"surfaces      {sc.surfaces[0].ula.n_elements} elements, spacing {sc.surfaces[0].ula.spacing * 1e3:.6g} mm")
    print(f"angle grid    {len(sc.angle_grid)} candidates at {sc.config.estimation.angle_step_deg:g} deg")
    bad = 0
    for i, t in enumerate(sc.targets()):
        t1, t2, s1, s2, p = exact_path_lengths(s, t.position)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            far_field_angles(s, t.position)
        try:
            s_back = s1_from_range(s, p, t.theta, branch=sc.config.estimation.branch)
            feasible = abs(s_back - t.s1_ref) <= 1e-6
            note = "feasible" if feasible else f"other root branch (s={s_back:.6g} m)"
        except InfeasibleRangeError as exc:
            feasible, note = False, f"infeasible: {exc}"
        bad += not feasible
        rcs = sc.config.targets[i].rcs
        print(
            f"target {i}      theta={_deg(t.theta):.4f} deg  s={t.s1_ref:.6g} m  p={p:.6g} m  "
            f"s1={s1:.6g} m  s2={s2:.6g} m  rcs={rcs}  {note}"
        )
        for w in caught:
            print(f"  warning: {w.message}")
    if bad:
        print(f"error: {bad} target(s) cannot be recovered on the configured root branch", file=sys.stderr)
        return EXIT_CONFIG
    print("ok")
    return EXIT_OK


def cmd_simulate(sc: Scenario, args) -> int:
    if args.snr_db is not None:
        sc = sc.with_changes(noise__snr_db=float(args.snr_db))
    m = sc.measurement()
    path = write_measurement_csv(_out(sc) / "measurement.csv", m, sc.config_hash)
    print(f"wrote {path} ({len(m.grid)} samples)")
    return EXIT_OK


def cmd_brute(sc: Scenario, args) -> int:
    targets = sc.targets()
    m = sc.measurement()
    t0 = time.perf_counter()
    res = run_brute(sc, m, targets)
    elapsed = time.perf_counter() - t0
    out = _out(sc)
    meta = _meta(sc, "brute")
    rows = []
    for i, (t, a) in enumerate(zip(targets, res.best_angles)):
        rows.append([i, t.p, t.rcs, _deg(t.theta), _deg(a), abs(_deg(a) - _deg(t.theta))])
    csvio.write_csv(
        out / "brute_estimates.csv",
        meta,
        ["target", "p_m", "rcs_prior", "theta_true_deg", "theta_est_deg", "abs_err_deg"],
        rows,
    )
    deg = np.rad2deg(res.angles)
    if res.loss_surface.ndim == 1:
        csvio.write_csv(out / "brute_surface.csv", meta, ["angle_deg", "loss"], zip(deg, res.loss_surface))
    elif res.loss_surface.ndim == 2:
        # rows: first target's angle, columns: second target's angle
        write_grid_csv(out / "brute_surface.csv", meta, "theta1_deg", deg, deg, res.loss_surface)
    else:
        print("loss surface has more than two axes; not exported")
    print(f"best angles   {', '.join(f'{_deg(a):.2f}' for a in res.best_angles)} deg")
    print(f"evaluations   {res.evaluations}   runtime {elapsed:.3f} s")
    return EXIT_OK


def cmd_sparse(sc: Scenario, args) -> int:
    targets = sc.targets()
    m = sc.measurement()
    t0 = time.perf_counter()
    res = run_sparse(sc, m, targets)
    elapsed = time.perf_counter() - t0
    out = _out(sc)
    meta = _meta(sc, "sparse", solver=sc.config.estimation.solver)
    rows, spec, failed = [], [], 0
    for i, (t, e) in enumerate(zip(targets, res.estimates)):
        err = abs(_deg(e.theta) - _deg(t.theta)) if e.ok else float("nan")
        rows.append([i, t.p, _deg(t.theta), _deg(e.theta), err, t.rcs, e.rcs_estimate, e.ok, e.error])
        failed += not e.ok
        if e.spectrum is not None:
            spec.extend([i, float(a), float(v)] for a, v in zip(np.rad2deg(e.angles), e.spectrum))
    csvio.write_csv(
        out / "sparse_estimates.csv",
        meta,
        ["target", "p_m", "theta_true_deg", "theta_est_deg", "abs_err_deg", "rcs_true", "rcs_est", "ok", "error"],
        rows,
    )
    csvio.write_csv(out / "sparse_spectrum.csv", meta, ["target", "angle_deg", "magnitude"], spec)
    trace = []
    for j, r in enumerate(res.solver_results):
        obj = r.objective_trace or [float("nan")] * len(r.residual_trace)
        trace.extend([j, it, o, q] for it, (o, q) in enumerate(zip(obj, r.residual_trace)))
    csvio.write_csv(out / "sparse_trace.csv", meta, ["solve", "iteration", "objective", "residual"], trace)
    for i, e in enumerate(res.estimates):
        status = f"{_deg(e.theta):.2f} deg" if e.ok else f"failed ({e.error})"
        print(f"range {e.p:.4f} m -> {status}")
    print(f"runtime {elapsed:.3f} s")
    return EXIT_ESTIMATION if failed else EXIT_OK


def cmd_coherence(sc: Scenario, args) -> int:
    c = sc.config.coherence
    bandwidths = list(c.bandwidths_hz)
    if args.preset:
        n, bandwidths = PRESETS[args.preset]
        sc = sc.with_changes(surfaces__n_elements=n)
    if args.bandwidths:
        bandwidths = args.bandwidths
    if c.range_m is not None:
        p = c.range_m
    elif sc.n_targets:
        p = sc.targets()[0].p
    else:
        raise ConfigError("coherence needs coherence.range_m or at least one target")
    n_el = sc.surfaces[0].ula.n_elements
    out = _out(sc)
    try:
        sweep = squint_sweep(sc.scene, sc.surfaces, AngleGrid.from_step(c.angle_step_deg), bandwidths, sc.waveform, p, None, sc.config.estimation.branch)
        fine = None
        if c.region_db is not None:
            fine = squint_sweep(
                sc.scene, sc.surfaces, AngleGrid.from_step(c.region_step_deg), bandwidths, sc.waveform, p, c.region_db, sc.config.estimation.branch
            )
    except (ValueError, DiagnosticsError) as exc:
        raise ConfigError(str(exc)) from None
    rows = []
    for j, (bw, entry) in enumerate(zip(bandwidths, sweep)):
        tag = f"{n_el}el_{bw / 1e9:g}GHz"
        meta = _meta(sc, "coherence", bandwidth_hz=float(bw), n_elements=n_el, range_m=float(p))
        export_sensing_matrix(out / f"matrix_{tag}", entry.matrix, meta)
        export_gram(out / f"gram_{tag}.csv", entry.report, meta)
        rep = entry.report
        row = [float(bw), n_el, float(p), entry.matrix.shape[1], rep.mu, _deg(rep.argmax_pair[0]), _deg(rep.argmax_pair[1])]
        rr = fine[j].region_report if fine is not None else None
        if rr is not None:
            row += [rr.angles.size, rr.mu, _deg(rr.argmax_pair[0]), _deg(rr.argmax_pair[1])]
        else:
            row += [0, float("nan"), float("nan"), float("nan")]
        rows.append(row)
        print(f"{bw / 1e9:g} GHz: mu={rep.mu:.6f}  region mu={row[8]:.6f} over {row[7]} columns")
    csvio.write_csv(
        out / "coherence_summary.csv",
        _meta(sc, "coherence", n_elements=n_el, range_m=float(p)),
        [
            "bandwidth_hz",
            "n_elements",
            "range_m",
            "columns",
            "mu",
            "mu_angle_a_deg",
            "mu_angle_b_deg",
            "region_columns",
            "mu_region",
            "region_angle_a_deg",
            "region_angle_b_deg",
        ],
        rows,
    )
    return EXIT_OK


def cmd_montecarlo(sc: Scenario, args) -> int:
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    if args.sweep and not args.values:
        raise ConfigError("--sweep needs --values")
    t0 = time.perf_counter()
    try:
        points = monte_carlo(sc, args.trials, args.method, args.sweep, args.values or (), max(1, args.threads))
    except ValueError as exc:
        # sweep values are config values: bad ones are config errors
        raise ConfigError(str(exc)) from None
    elapsed = time.perf_counter() - t0
    meta = _meta(sc, "montecarlo", method=args.method, trials=args.trials)
    summary, trials = [], []
    for pt in points:
        summary.append([pt.variable, pt.value, len(pt.trials), pt.success_rate, pt.rmse_deg, pt.median_abs_err_deg])
        for i, t in enumerate(pt.trials):
            for j in range(t.true_deg.size):
                trials.append([pt.value, i, t.seed, j, t.rcs[j], t.true_deg[j], t.est_deg[j], t.abs_err_deg[j], t.success])
        label = "" if pt.variable == "none" else f"{pt.variable}={pt.value:g}  "
        print(f"{label}success {pt.success_rate:.3f}  rmse {pt.rmse_deg:.4f} deg")
    out = _out(sc)
    csvio.write_csv(
        out / "montecarlo_summary.csv",
        meta,
        ["sweep", "value", "trials", "success_rate", "rmse_deg", "median_abs_err_deg"],
        summary,
    )
    csvio.write_csv(
        out / "montecarlo_trials.csv",
        meta,
        ["value", "trial", "seed", "target", "rcs", "theta_true_deg", "theta_est_deg", "abs_err_deg", "success"],
        trials,
    )
    print(f"runtime {elapsed:.2f} s")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "brute": cmd_brute,
    "sparse": cmd_sparse,
    "coherence": cmd_coherence,
    "montecarlo": cmd_montecarlo,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = _scenario(args)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NearFieldWarning)
            return COMMANDS[args.command](sc, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
