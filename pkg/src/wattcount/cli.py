"""Command line front end for the counting pipeline.

Subcommands cover the whole workflow: synthesize or ingest a scene, profile
counter errors on a training split, dump per-window fronts, compute offline
plans, train the online planner, simulate any planner over held-out
horizons, and aggregate runs into a comparison report.

Exit codes: 0 success, 2 usage or validation problems (including missing
input files), 1 unexpected internal errors. Budgets are taken in Wh per day
and converted at 3600 J/Wh; everything internal is joules. Commands that
draw randomness require an explicit --seed so reruns are reproducible.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ._rng import derive_seed
from .agents import (
    AgentPair,
    TrainConfig,
    a2c_train,
    load_agent_pair,
    prepare_training_data,
    save_agent_pair,
    save_training_log,
)
from .ci import SIGMA_MODES
from .counters import (
    CounterModel,
    apply_counter,
    load_counter_model,
    load_profile,
    profile_errors,
    save_profile,
    window_mean_pairs,
)
from .fronts import save_front
from .oracle import plan_horizon, save_plan
from .simulate import (
    EnergyLedger,
    FixedCounterPlannerSpec,
    OraclePlannerSpec,
    RlPlannerSpec,
    load_results,
    oracle_fronts,
    horizon_seed,
    save_comparison,
    save_manifest,
    save_results,
    score,
    select_uni_counter,
    simulate_scene,
)
from .traces import (
    DetectionLog,
    RoiSpec,
    SynthPattern,
    WindowSpec,
    load_detection_log,
    load_trace,
    save_trace,
    synth_trace,
    trace_from_detections,
)
from .fronts import EnergyModel

J_PER_WH = 3600.0
DEFAULT_BUDGETS_WH = (10.0, 15.0, 20.0, 25.0, 30.0)


class _Usage(ValueError):
    """Validation failure that should exit with code 2."""


def _require_file(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise _Usage(f"missing artifact: {p}")
    return p


def parse_horizons(text: str):
    """Parse '0-2,5' into [0, 1, 2, 5]."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-")
            lo, hi = int(a), int(b)
            if hi < lo:
                raise _Usage(f"bad horizon range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise _Usage("no horizons given")
    return out


def load_counter_set(path):
    """A counter set file is a JSON array of counter model objects."""
    p = _require_file(path)
    entries = json.loads(p.read_text())
    if not isinstance(entries, list) or not entries:
        raise _Usage(f"{p}: expected a nonempty JSON array of counter models")
    counters = []
    for d in entries:
        counters.append(
            CounterModel(
                counter_id=d["counter_id"],
                energy_per_frame_j=float(d["energy_per_frame_j"]),
                ratio_mean=float(d.get("ratio_mean", 1.0)),
                ratio_std=float(d.get("ratio_std", 0.0)),
                offset_std=float(d.get("offset_std", 0.0)),
                miss_floor=float(d.get("miss_floor", 0.0)),
            )
        )
    ids = [c.counter_id for c in counters]
    if len(set(ids)) != len(ids):
        raise _Usage(f"{p}: duplicate counter_id")
    return counters


def _profile_path(profiles_dir, counter_id) -> Path:
    return Path(profiles_dir) / f"profile_{counter_id}.json"


def load_profiles(profiles_dir, counters):
    profiles = {}
    for c in counters:
        p = _require_file(_profile_path(profiles_dir, c.counter_id))
        profiles[c.counter_id] = load_profile(p)
    return profiles


def _energy_model(args) -> EnergyModel:
    return EnergyModel(
        e_capture_per_frame=args.e_capture,
        e_wake_capture=args.e_wake_capture,
        e_wake_process=args.e_wake_process,
    )


def _window_spec(args) -> WindowSpec:
    return WindowSpec(
        tau_seconds=args.tau_seconds,
        horizon_windows=args.horizon_windows,
        alpha=args.alpha,
    )


def _load_scene(args):
    trace, tau = load_trace(_require_file(args.trace))
    if tau != args.tau_seconds:
        raise _Usage(
            f"trace was segmented at tau={tau}s but the run asks for "
            f"{args.tau_seconds}s; re-synthesize or pass --tau-seconds {tau}"
        )
    return trace


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    spec = _window_spec(args)
    pattern = SynthPattern(
        base_rate=args.base_rate,
        diurnal_amplitude=args.amplitude,
        period_windows=args.period_windows,
    )
    trace = synth_trace(
        pattern, args.n_windows, spec, args.seed, scene_id=args.scene_id, fps=args.fps
    )
    save_trace(trace, args.out, spec)
    print(f"wrote {trace.n_frames} frames ({args.n_windows} windows) to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    log = load_detection_log(_require_file(args.log))
    x0, y0, x1, y1 = (float(v) for v in args.roi.split(","))
    roi = RoiSpec(region=(x0, y0, x1, y1), travel_seconds=args.travel_seconds)
    spec = _window_spec(args)
    trace = trace_from_detections(
        log, roi, args.object_class, spec, fps=args.fps, scene_id=args.scene_id
    )
    save_trace(trace, args.out, spec)
    print(f"wrote {trace.n_frames} frames to {args.out}")
    return 0


def cmd_profile(args) -> int:
    spec = _window_spec(args)
    trace = _load_scene(args)
    counters = load_counter_set(args.counters)
    horizons = parse_horizons(args.train_horizons)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, counter in enumerate(counters):
        pairs = []
        for h in horizons:
            truth_h = trace.horizon_slice(h, spec)
            observed_h = apply_counter(truth_h, counter, derive_seed(args.seed, 60, h, i))
            pairs.extend(window_mean_pairs(truth_h, observed_h, spec))
        profile = profile_errors(
            pairs, args.threshold, counter_id=counter.counter_id, min_pairs=args.min_pairs
        )
        for branch, usable in (("ratio", profile.ratio_usable), ("offset", profile.offset_usable)):
            if not usable:
                print(
                    f"warning: counter {counter.counter_id!r} has an empty {branch} "
                    f"branch; intervals in that regime will fail",
                    file=sys.stderr,
                )
        if profile.dropped_pairs:
            print(
                f"warning: counter {counter.counter_id!r} dropped {profile.dropped_pairs} "
                f"zero-observation pairs from the ratio branch",
                file=sys.stderr,
            )
        save_profile(profile, _profile_path(out_dir, counter.counter_id))
    print(f"wrote {len(counters)} profiles to {out_dir}")
    return 0


def cmd_fronts(args) -> int:
    spec = _window_spec(args)
    trace = _load_scene(args)
    counters = load_counter_set(args.counters)
    profiles = load_profiles(args.profiles_dir, counters)
    em = _energy_model(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    horizon = trace.horizon_slice(args.horizon, spec)
    fronts = oracle_fronts(
        horizon, counters, em, profiles, spec,
        horizon_seed(args.seed, args.horizon), args.sigma_mode,
    )
    windows = parse_horizons(args.windows) if args.windows != "all" else range(spec.horizon_windows)
    for w in windows:
        if not 0 <= w < spec.horizon_windows:
            raise _Usage(f"window {w} out of range")
        save_front(fronts[w], out_dir / f"front_h{args.horizon}_w{w}.csv")
    print(f"wrote fronts for horizon {args.horizon} to {out_dir}")
    return 0


def cmd_plan(args) -> int:
    spec = _window_spec(args)
    trace = _load_scene(args)
    counters = load_counter_set(args.counters)
    profiles = load_profiles(args.profiles_dir, counters)
    em = _energy_model(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    horizon = trace.horizon_slice(args.horizon, spec)
    fronts = oracle_fronts(
        horizon, counters, em, profiles, spec,
        horizon_seed(args.seed, args.horizon), args.sigma_mode,
    )
    for wh in args.budget_wh:
        plan = plan_horizon(fronts, wh * J_PER_WH)
        out = out_dir / f"plan_h{args.horizon}_{wh:g}wh.json"
        save_plan(plan, out)
        print(f"budget {wh:g} Wh: spent {plan.spent_j:.1f} J of {plan.budget_j:.1f} J -> {out}")
    return 0


def cmd_train(args) -> int:
    spec = _window_spec(args)
    trace = _load_scene(args)
    counters = load_counter_set(args.counters)
    profiles = load_profiles(args.profiles_dir, counters)
    em = _energy_model(args)
    horizons = parse_horizons(args.train_horizons)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig(episodes=args.episodes)
    wf = spec.window_frames(trace.fps)
    for li, wh in enumerate(args.budget_wh):
        budget_j = wh * J_PER_WH
        data = prepare_training_data(
            trace, horizons, budget_j, counters, em, profiles, spec,
            derive_seed(args.seed, 70, li), args.sigma_mode,
        )
        pair = AgentPair(
            budget_level_j=budget_j,
            counter_ids=[c.counter_id for c in counters],
            window_frames=wf,
            norm_mean_scale=data.mean_scale,
            norm_std_scale=data.std_scale,
            seed=derive_seed(args.seed, 71, li),
            log_std_init=cfg.log_std_init,
        )
        rows = a2c_train(data, pair, cfg, derive_seed(args.seed, 72, li))
        save_agent_pair(pair, out_dir / f"agents_{wh:g}wh.json")
        save_training_log(rows, out_dir / f"training_log_{wh:g}wh.csv")
        print(
            f"budget {wh:g} Wh: trained {cfg.episodes} episodes, "
            f"final rewards reg={rows[-1][1]:.4f} cls={rows[-1][2]:.4f}"
        )
    return 0


def cmd_simulate(args) -> int:
    spec = _window_spec(args)
    trace = _load_scene(args)
    counters = load_counter_set(args.counters)
    profiles = load_profiles(args.profiles_dir, counters)
    em = _energy_model(args)
    horizons = parse_horizons(args.horizons)
    budget_j = args.budget_wh * J_PER_WH

    if args.planner == "oracle":
        planner = OraclePlannerSpec()
    elif args.planner == "rl":
        if not args.agents:
            raise _Usage("--agents is required for --planner rl")
        pair = load_agent_pair(_require_file(args.agents))
        if abs(pair.budget_level_j - budget_j) > 1e-6:
            raise _Usage(
                f"budget {args.budget_wh:g} Wh does not match the agent level "
                f"{pair.budget_level_j / J_PER_WH:g} Wh"
            )
        planner = RlPlannerSpec(pair=pair)
    elif args.planner == "golden":
        if not args.golden_counter:
            raise _Usage("--golden-counter is required for --planner golden")
        planner = FixedCounterPlannerSpec(counter_id=args.golden_counter, name="golden")
    elif args.planner == "uni":
        if args.validation_horizon is None:
            raise _Usage("--validation-horizon is required for --planner uni")
        uni_id = select_uni_counter(
            trace, args.validation_horizon, counters, em, profiles, budget_j, spec,
            args.seed, args.sigma_mode,
        )
        planner = FixedCounterPlannerSpec(counter_id=uni_id, name="uni")
    else:  # pragma: no cover - argparse restricts choices
        raise _Usage(f"unknown planner {args.planner!r}")

    results, ledgers = simulate_scene(
        planner, trace, horizons, counters, em, profiles, budget_j, spec,
        args.seed, args.sigma_mode,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_results(results, horizons, out)
    report = score(results, ledgers)
    manifest = {
        "scene": str(args.trace),
        "scene_id": trace.scene_id,
        "planner": args.planner,
        "counter_ids": [c.counter_id for c in counters],
        "budget_wh": args.budget_wh,
        "budget_j": budget_j,
        "horizons": horizons,
        "alpha": spec.alpha,
        "tau_seconds": spec.tau_seconds,
        "horizon_windows": spec.horizon_windows,
        "sigma_mode": args.sigma_mode,
        "seed": args.seed,
        "e_capture": args.e_capture,
        "e_wake_capture": args.e_wake_capture,
        "e_wake_process": args.e_wake_process,
        "results": out.name,
        "unused_j": [l.remaining_j for l in ledgers],
    }
    save_manifest(manifest, out.with_suffix(".manifest.json"))
    print(
        f"{args.planner}: coverage={report.coverage_probability:.4f} "
        f"width={report.mean_ci_width:.4f} "
        f"error={report.mean_error:.4f} "
        f"utilization={float(np.mean(report.energy_utilization)):.4f}"
    )
    return 0


def cmd_report(args) -> int:
    runs_dir = Path(args.runs_dir)
    if not runs_dir.is_dir():
        raise _Usage(f"missing artifact: {runs_dir}")
    manifests = sorted(runs_dir.glob("*.manifest.json"))
    if not manifests:
        raise _Usage(f"no *.manifest.json files under {runs_dir}")
    rows = []
    for mpath in manifests:
        manifest = json.loads(mpath.read_text())
        results_path = _require_file(runs_dir / manifest["results"])
        results, _ = load_results(results_path, manifest["alpha"])
        ledgers = []
        for block in results:
            ledger = EnergyLedger(budget_j=manifest["budget_j"])
            ledger.spent_j = sum(r.energy_j for r in block)
            ledgers.append(ledger)
        report = score(results, ledgers)
        rows.append(
            {
                "budget_j": manifest["budget_j"],
                "planner": manifest["planner"],
                "coverage": report.coverage_probability,
                "mean_ci_width": report.mean_ci_width,
                "mean_error": report.mean_error,
                "energy_utilization": float(np.mean(report.energy_utilization)),
                "n_windows": report.n_windows,
            }
        )
    rows.sort(key=lambda r: (r["budget_j"], r["planner"]))
    save_comparison(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_window_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-seconds", type=int, default=1800, help="aggregation window length")
    p.add_argument("--horizon-windows", type=int, default=48, help="windows per planning horizon")
    p.add_argument("--alpha", type=float, default=0.95, help="confidence level")


def _add_energy_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--e-capture", type=float, default=0.05, help="capture J per frame")
    p.add_argument("--e-wake-capture", type=float, default=0.0, help="per-window capture wake J")
    p.add_argument("--e-wake-process", type=float, default=0.0, help="per-window process wake J")


def _add_pipeline_args(p: argparse.ArgumentParser, seed_required: bool) -> None:
    p.add_argument("--trace", required=True, help="scene trace CSV (with .meta.json sidecar)")
    p.add_argument("--counters", required=True, help="counter set JSON file")
    p.add_argument("--seed", type=int, required=seed_required, default=None if seed_required else 0)
    p.add_argument("--sigma-mode", choices=SIGMA_MODES, default="textbook")
    _add_window_args(p)
    _add_energy_args(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wattcount",
        description="Energy-budgeted object counting: simulate, plan, train, report.",
    )
    parser.add_argument(
        "--config",
        default=None,
        help="JSON file of flag defaults (dest names as keys); command line wins",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a diurnal Poisson scene")
    p.add_argument("--out", required=True)
    p.add_argument("--scene-id", default="synthetic")
    p.add_argument("--base-rate", type=float, default=2.0)
    p.add_argument("--amplitude", type=float, default=0.0)
    p.add_argument("--period-windows", type=int, default=48)
    p.add_argument("--n-windows", type=int, required=True)
    p.add_argument("--fps", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    _add_window_args(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="build a trace from a detection log via ROI counting")
    p.add_argument("--log", required=True, help="detection JSON-lines file")
    p.add_argument("--out", required=True)
    p.add_argument("--roi", required=True, help="x_min,y_min,x_max,y_max")
    p.add_argument("--travel-seconds", type=float, required=True)
    p.add_argument("--object-class", required=True)
    p.add_argument("--scene-id", default="ingested")
    p.add_argument("--fps", type=int, default=1)
    _add_window_args(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("profile", help="profile counter errors on training horizons")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train-horizons", default="0-2", help="horizon list, e.g. 0-2")
    p.add_argument("--threshold", type=float, default=1.0, help="ratio/offset regime split")
    p.add_argument("--min-pairs", type=int, default=30, help="minimum profiling pairs")
    _add_pipeline_args(p, seed_required=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("fronts", help="dump per-window energy/CI fronts as CSV")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--profiles-dir", required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--windows", default="all", help="window list, e.g. 0-5, or 'all'")
    _add_pipeline_args(p, seed_required=True)
    p.set_defaults(func=cmd_fronts)

    p = sub.add_parser("plan", help="offline allocation for one horizon per budget")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--profiles-dir", required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--budget-wh", type=float, nargs="+", default=list(DEFAULT_BUDGETS_WH))
    _add_pipeline_args(p, seed_required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("train", help="train agent pairs per budget level")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--profiles-dir", required=True)
    p.add_argument("--train-horizons", default="0-2")
    p.add_argument("--budget-wh", type=float, nargs="+", default=list(DEFAULT_BUDGETS_WH))
    p.add_argument("--episodes", type=int, default=2000)
    _add_pipeline_args(p, seed_required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="run one planner over horizons")
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--profiles-dir", required=True)
    p.add_argument("--planner", choices=("oracle", "rl", "golden", "uni"), required=True)
    p.add_argument("--budget-wh", type=float, required=True)
    p.add_argument("--horizons", required=True, help="horizon list, e.g. 3-12")
    p.add_argument("--agents", default=None, help="agent checkpoint (rl planner)")
    p.add_argument("--golden-counter", default=None, help="counter id (golden planner)")
    p.add_argument("--validation-horizon", type=int, default=None, help="uni planner pick")
    _add_pipeline_args(p, seed_required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="aggregate simulate runs into a comparison table")
    p.add_argument("--runs-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # config files only set defaults; explicit flags take precedence
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    if known.config:
        cfg_path = Path(known.config)
        if not cfg_path.exists():
            print(f"missing artifact: {cfg_path}", file=sys.stderr)
            return 2
        try:
            overrides = json.loads(cfg_path.read_text())
        except json.JSONDecodeError as exc:
            print(f"{cfg_path}: invalid JSON ({exc})", file=sys.stderr)
            return 2
        for sub_action in parser._subparsers._group_actions:
            for sp in sub_action.choices.values():
                sp.set_defaults(**overrides)
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _Usage as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
