"""Command-line entry point: ``setnvs {plan,validate,experiment,tsed,encode-rays}``.

Exit codes: 0 success, 2 usage error, 3 unreadable/malformed input,
4 plan validation failure, 5 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import consistency as cons
from .experiment import ConfigError, ExperimentConfig, rows_to_csv, run_experiment
from .geometry import GeometryError, TrajectoryFormatError, build_ray_map, fourier_encode, load_trajectory
from .plan import (
    OBSERVED,
    GENERATED,
    PlanError,
    ViewSpec,
    depth,
    load_plan,
    plan_chain,
    plan_grouped,
    plan_keyframed,
    plan_unordered,
    plan_zigzag,
    save_plan,
    validate,
)

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3, 4, 5
STRATEGIES = ("chain", "keyframed", "grouped", "zigzag", "unordered")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _parse_sweep(text: str) -> list[float]:
    if ":" in text:
        lo, hi, step = (float(x) for x in text.split(":"))
        return [round(float(x), 10) for x in np.arange(lo, hi + step * 1e-6, step)]
    return [float(x) for x in text.split(",") if x.strip()]


def _parse_seeds(text: str) -> list[int]:
    if "-" in text and "," not in text:
        lo, hi = (int(x) for x in text.split("-"))
        return list(range(lo, hi + 1))
    return [int(x) for x in text.split(",") if x.strip()]


def _load_trajectory(path):
    try:
        return load_trajectory(path)
    except FileNotFoundError as exc:
        raise CliError(f"trajectory file not found: {path}", EXIT_PARSE) from exc
    except TrajectoryFormatError as exc:
        where = f" (field '{exc.field}')" if exc.field else ""
        raise CliError(f"malformed trajectory{where}: {exc}", EXIT_PARSE) from exc


def _view_specs(entries) -> list[ViewSpec]:
    specs = []
    for n, e in enumerate(entries):
        role = e.get("role", OBSERVED if n == 0 else GENERATED)
        if role not in (OBSERVED, GENERATED):
            raise CliError(f"malformed trajectory (field 'role'): {role!r}", EXIT_PARSE)
        specs.append(ViewSpec(e["camera"].id, e["camera"], role))
    return specs


def _stereo_structure(entries):
    """Ordered groups and ``(right, left)`` pairs from ``group``/``side`` labels."""
    groups: dict = {}
    sides: dict = {}
    for e in entries:
        if e.get("role", None) == OBSERVED:
            continue
        if "group" not in e:
            continue
        groups.setdefault(e["group"], []).append(e["id"])
        if "side" in e:
            sides.setdefault(e["group"], {})[e["side"]] = e["id"]
    pairs = []
    for g in groups:
        s = sides.get(g, {})
        if "right" in s and "left" in s:
            pairs.append((s["right"], s["left"]))
    return list(groups.values()), pairs


def _print_depth(plan, out):
    rep = depth(plan)
    out.write("view\trole\tdepth\n")
    for vid, v in plan.views.items():
        out.write(f"{vid}\t{v.role}\t{rep.depth[vid]}\n")
    out.write(f"max_depth\t{rep.max_depth}\n")
    return rep


def cmd_plan(args, out) -> int:
    entries = _load_trajectory(args.trajectory)
    specs = _view_specs(entries)
    cams = {s.id: s.camera for s in specs}
    observed = [s.id for s in specs if s.observed]
    try:
        if args.strategy == "chain":
            plan = plan_chain(specs)
        elif args.strategy == "keyframed":
            plan = plan_keyframed(specs, args.spacing, args.chunk, args.cond_count)
        elif args.strategy == "unordered":
            plan = plan_unordered(specs, args.keyframes, args.cond_count, args.rotation_weight, args.stage_size)
        else:
            groups, pairs = _stereo_structure(entries)
            if args.strategy == "grouped":
                if not groups:
                    raise CliError("grouped strategy needs 'group' labels on generated views", EXIT_PARSE)
                plan = plan_grouped(groups, observed, cams)
            else:
                if not pairs:
                    raise CliError("zigzag strategy needs 'group' and 'side' labels", EXIT_PARSE)
                plan = plan_zigzag(pairs, observed, cams)
    except PlanError as exc:
        raise CliError(f"cannot build plan: {exc}", EXIT_INVALID) from exc
    problems = validate(plan)
    if problems:
        raise CliError("constructed plan is invalid: " + "; ".join(map(str, problems)), EXIT_INVALID)
    if args.out:
        save_plan(plan, args.out)
    _print_depth(plan, out)
    return EXIT_OK


def cmd_validate(args, out) -> int:
    try:
        plan = load_plan(args.plan)
    except FileNotFoundError as exc:
        raise CliError(f"plan file not found: {args.plan}", EXIT_PARSE) from exc
    except (PlanError, TrajectoryFormatError, GeometryError) as exc:
        raise CliError(f"malformed plan: {exc}", EXIT_PARSE) from exc
    problems = validate(plan)
    if problems:
        for p in problems:
            out.write(f"violation\t{p}\n")
        return EXIT_INVALID
    out.write("ok\n")
    _print_depth(plan, out)
    return EXIT_OK


def cmd_experiment(args, out) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
    except FileNotFoundError as exc:
        raise CliError(f"config file not found: {args.config}", EXIT_PARSE) from exc
    except ConfigError as exc:
        raise CliError(f"malformed config: {exc}", EXIT_PARSE) from exc
    if args.window is not None:
        cfg.window = None if args.window < 0 else args.window
    if args.seeds:
        cfg.seeds = _parse_seeds(args.seeds)
    try:
        rows = run_experiment(cfg)
    except FileNotFoundError as exc:
        raise CliError(f"plan file not found: {exc.filename}", EXIT_PARSE) from exc
    except PlanError as exc:
        raise CliError(f"plan error: {exc}", EXIT_INVALID) from exc
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise CliError(f"experiment failed: {exc}", EXIT_RUNTIME) from exc
    text = rows_to_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        out.write(text)
    return EXIT_OK


def cmd_tsed(args, out) -> int:
    entries = _load_trajectory(args.trajectory)
    cams = {e["camera"].id: e["camera"] for e in entries}
    try:
        match_sets = cons.load_match_dir(args.match_dir)
    except cons.MatchFormatError as exc:
        raise CliError(str(exc), EXIT_PARSE) from exc
    if args.mode in ("same_sided", "cross_sided"):
        _, pairs_lr = _stereo_structure(entries)
        if not pairs_lr:
            raise CliError(f"mode {args.mode} needs 'group' and 'side' labels", EXIT_PARSE)
        pairs = cons.make_pairs(None, args.mode, pairs_lr)
    else:
        gen = [e["id"] for e in entries if e.get("role") == GENERATED]
        ids = gen or [e["id"] for e in entries]
        pairs = cons.make_pairs(ids, args.mode)
    found, missing = [], []
    for p in pairs:
        ms = cons.lookup_pair(match_sets, p)
        (found if ms is not None else missing).append(ms if ms is not None else p)
    config = cons.TSEDConfig(args.t_matches, min(args.sweep))
    try:
        report = cons.tsed_evaluate(found, cams, config, args.sweep)
    except (KeyError, GeometryError) as exc:
        raise CliError(f"tsed failed: {exc}", EXIT_RUNTIME) from exc
    report.skipped = missing
    for p in missing:
        print(f"warning: no match file for pair {p[0]}-{p[1]}; skipped", file=sys.stderr)
    out.write(report.details_csv())
    if args.out:
        Path(args.out).write_text(report.to_csv())
    else:
        out.write(report.to_csv())
    return EXIT_OK


def cmd_encode_rays(args, out) -> int:
    entries = _load_trajectory(args.trajectory)
    match = [e for e in entries if str(e["id"]) == str(args.view)]
    if not match:
        raise CliError(f"unknown view id {args.view!r}", EXIT_RUNTIME)
    cam = match[0]["camera"]
    enc = fourier_encode(build_ray_map(cam), args.freqs, args.prescale)
    H, W, C = enc.grid.shape
    payload = {
        "view": cam.id,
        "height": H,
        "width": W,
        "channels": C,
        "frequencies": list(enc.frequencies),
        "layout": "row-major (H, W, C); channel = component*2K + 2k + (0 sin | 1 cos); components ox oy oz dx dy dz",
        "values": [float(x) for x in enc.grid.reshape(-1)],
    }
    Path(args.out).write_text(json.dumps(payload) + "\n")
    out.write(f"wrote {H}x{W}x{C} values to {args.out}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="setnvs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", help="build a generation plan from a trajectory")
    sp.add_argument("trajectory")
    sp.add_argument("--strategy", choices=STRATEGIES, default="chain")
    sp.add_argument("--spacing", type=int, default=2)
    sp.add_argument("--chunk", type=int, default=4)
    sp.add_argument("--cond-count", type=int, default=2)
    sp.add_argument("--keyframes", type=int, default=4)
    sp.add_argument("--stage-size", type=int, default=1)
    sp.add_argument("--rotation-weight", type=float, default=0.0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_plan)

    sv = sub.add_parser("validate", help="check a plan file and print its depths")
    sv.add_argument("plan")
    sv.set_defaults(func=cmd_validate)

    se = sub.add_parser("experiment", help="toy Gaussian-scene sampling experiment")
    se.add_argument("config")
    se.add_argument("--window", type=int, help="override conditioning window (negative = unlimited)")
    se.add_argument("--seeds", help="comma list or inclusive range a-b")
    se.add_argument("--out")
    se.set_defaults(func=cmd_experiment)

    st = sub.add_parser("tsed", help="TSED consistency from match files")
    st.add_argument("match_dir")
    st.add_argument("trajectory")
    st.add_argument("--mode", choices=cons.MODES, default="adjacent")
    st.add_argument("--t-matches", type=int, default=10)
    st.add_argument("--sweep", type=_parse_sweep, default=list(cons.DEFAULT_SWEEP))
    st.add_argument("--out")
    st.set_defaults(func=cmd_tsed)

    sr = sub.add_parser("encode-rays", help="dump the Fourier ray encoding of one view")
    sr.add_argument("trajectory")
    sr.add_argument("--view", required=True)
    sr.add_argument("--freqs", type=int, default=8)
    sr.add_argument("--prescale", type=float, default=1.0)
    sr.add_argument("--out", required=True)
    sr.set_defaults(func=cmd_encode_rays)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
