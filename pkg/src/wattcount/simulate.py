"""Horizon simulator: planners in the loop, energy accounting, and scoring.

Runs any planner window by window over ground-truth horizons. Frames are
sampled uniformly in time with a seeded phase, observed counts come from the
counter error model restricted to exactly the sampled frames, and every
window yields a window-sum interval plus an energy charge against a hard
ledger. Metrics follow the evaluation conventions: coverage probability,
width over estimate, and absolute error over truth, all on window sums.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._rng import derive_seed, keyed_uniforms
from .agents import AgentPair, EnergyLedger, act, bare_minimum, build_observation
from .ci import ConfidenceInterval, approx_ci, mean_to_sum, sample_stats
from .counters import CounterModel, ErrorProfile, observe_counts
from .fronts import (
    GRID_STEP,
    MIN_FRAMES,
    CountAction,
    EnergyModel,
    build_front,
    uniform_sample_indices,
    window_energy,
)
from .oracle import HorizonPlan, plan_horizon
from .traces import CountTrace, WindowSpec, window_stats

# stream tags for the keyed simulation randomness
_STREAM_SIM_PHASE = 42
_TAG_FRONT_OBS = 40
_TAG_EXEC_OBS = 41
_TAG_HORIZON = 50


@dataclass(frozen=True)
class OraclePlannerSpec:
    name: str = "oracle"


@dataclass(frozen=True)
class RlPlannerSpec:
    pair: AgentPair
    name: str = "rl"


@dataclass(frozen=True)
class FixedCounterPlannerSpec:
    """Even budget split on one counter; covers the golden and uni baselines."""

    counter_id: str
    name: str


PlannerSpec = Union[OraclePlannerSpec, RlPlannerSpec, FixedCounterPlannerSpec]


@dataclass(frozen=True)
class WindowResult:
    window_index: int
    action: CountAction
    ci_sum: ConfidenceInterval
    true_sum: int
    energy_j: float


@dataclass(frozen=True)
class MetricsReport:
    coverage_probability: float
    mean_ci_width: float
    mean_error: float  # nan when undefined (zero true total)
    mean_error_defined: bool
    energy_utilization: tuple  # spent/budget per horizon
    n_windows: int
    per_horizon: tuple  # one dict per horizon


def oracle_fronts(
    truth_horizon: CountTrace,
    counters: Sequence[CounterModel],
    em: EnergyModel,
    profiles: Dict[str, ErrorProfile],
    spec: WindowSpec,
    seed: int,
    sigma_mode: str = "textbook",
) -> List:
    """Per-window fronts from full-window observed series, as the oracle sees them."""
    wf = spec.window_frames(truth_horizon.fps)
    fronts = []
    for w in range(spec.horizon_windows):
        truth_window = truth_horizon.window_slice(w, spec)
        frame_idx = np.arange(w * wf, (w + 1) * wf, dtype=np.int64)
        observed = {
            c.counter_id: observe_counts(
                truth_window, frame_idx, c, derive_seed(seed, _TAG_FRONT_OBS, i)
            )
            for i, c in enumerate(counters)
        }
        fronts.append(
            build_front(
                observed, counters, em, profiles, spec.alpha,
                window_index=w, sigma_mode=sigma_mode,
            )
        )
    return fronts


def horizon_seed(seed: int, horizon_index: int) -> int:
    """The per-horizon seed simulate_scene derives from a run seed."""
    return derive_seed(seed, _TAG_HORIZON, horizon_index)


def _fixed_frame_count(
    counter: CounterModel, em: EnergyModel, budget_j: float, spec: WindowSpec, window_frames: int
) -> int:
    """Even per-window frame count for a fixed-counter baseline."""
    per_window = budget_j / spec.horizon_windows
    per_frame = em.e_capture_per_frame + counter.energy_per_frame_j
    n = int(np.floor((per_window - em.per_window_overhead_j) / per_frame + 1e-9))
    if n < MIN_FRAMES:
        raise ValueError(
            f"budget below bare minimum: counter {counter.counter_id!r} cannot "
            f"afford {MIN_FRAMES} frames per window"
        )
    n = MIN_FRAMES + ((n - MIN_FRAMES) // GRID_STEP) * GRID_STEP
    return min(n, window_frames)


def run_horizon(
    planner: PlannerSpec,
    truth_horizon: CountTrace,
    counters: Sequence[CounterModel],
    em: EnergyModel,
    profiles: Dict[str, ErrorProfile],
    budget_j: float,
    spec: WindowSpec,
    seed: int,
    sigma_mode: str = "textbook",
    stream: Optional[List[Tuple[float, float]]] = None,
) -> Tuple[List[WindowResult], EnergyLedger]:
    """Execute one horizon under a planner; returns results and the ledger.

    `stream` is the cross-horizon history of measured (mean, std) pairs that
    feeds the online planner's observations; pass the same list across
    consecutive horizons of one deployment.
    """
    wf = spec.window_frames(truth_horizon.fps)
    n_steps = spec.horizon_windows
    if truth_horizon.n_windows(spec) != n_steps:
        raise ValueError("truth_horizon must be exactly one horizon long")
    if budget_j < bare_minimum(n_steps, counters, em):
        raise ValueError("budget below bare minimum")
    by_id = {c.counter_id: c for c in counters}
    counter_order = {c.counter_id: i for i, c in enumerate(counters)}

    plan: Optional[HorizonPlan] = None
    fixed_action: Optional[CountAction] = None
    if isinstance(planner, OraclePlannerSpec):
        fronts = oracle_fronts(truth_horizon, counters, em, profiles, spec, seed, sigma_mode)
        plan = plan_horizon(fronts, budget_j)
    elif isinstance(planner, FixedCounterPlannerSpec):
        counter = by_id[planner.counter_id]
        fixed_action = CountAction(
            counter.counter_id, _fixed_frame_count(counter, em, budget_j, spec, wf)
        )
    elif isinstance(planner, RlPlannerSpec):
        if set(planner.pair.counter_ids) != set(by_id):
            raise ValueError("agent pair was trained on a different counter set")
    else:
        raise TypeError(f"unknown planner spec {planner!r}")

    ledger = EnergyLedger(budget_j=budget_j)
    results: List[WindowResult] = []
    for t in range(n_steps):
        if isinstance(planner, OraclePlannerSpec):
            action = plan.actions[t]
        elif isinstance(planner, FixedCounterPlannerSpec):
            action = fixed_action
        else:
            position = len(stream) if stream is not None else 0
            obs = build_observation(
                stream if stream is not None else [],
                position,
                spec.horizon_windows,
                planner.pair.norm_mean_scale,
                planner.pair.norm_std_scale,
            )
            action = act(planner.pair, obs, ledger, n_steps - t, counters, em)
        counter = by_id[action.counter_id]
        energy = window_energy(action.n_frames, counter, em)
        ledger.charge(energy)

        phase_u = float(keyed_uniforms(seed, _STREAM_SIM_PHASE, [t])[0])
        step = wf / action.n_frames
        idx = uniform_sample_indices(wf, action.n_frames, phase_u * step * (1 - 1e-12))
        truth_window = truth_horizon.window_slice(t, spec)
        observed = observe_counts(
            truth_window[idx],
            t * wf + idx,
            counter,
            derive_seed(seed, _TAG_EXEC_OBS, counter_order[action.counter_id]),
        )
        stats = sample_stats(observed)
        if stream is not None:
            stream.append((stats.mean, stats.std))
        ci_sum = mean_to_sum(approx_ci(stats, profiles[action.counter_id], spec.alpha, sigma_mode), wf)
        _, _, true_sum = window_stats(truth_horizon, t, spec)
        results.append(
            WindowResult(
                window_index=t, action=action, ci_sum=ci_sum, true_sum=true_sum, energy_j=energy
            )
        )
    return results, ledger


def simulate_scene(
    planner: PlannerSpec,
    trace: CountTrace,
    horizon_indices: Sequence[int],
    counters: Sequence[CounterModel],
    em: EnergyModel,
    profiles: Dict[str, ErrorProfile],
    budget_j: float,
    spec: WindowSpec,
    seed: int,
    sigma_mode: str = "textbook",
) -> Tuple[List[List[WindowResult]], List[EnergyLedger]]:
    """Run consecutive horizons, threading planner history between them."""
    stream: List[Tuple[float, float]] = []
    all_results = []
    ledgers = []
    for h in horizon_indices:
        horizon = trace.horizon_slice(h, spec)
        results, ledger = run_horizon(
            planner,
            horizon,
            counters,
            em,
            profiles,
            budget_j,
            spec,
            horizon_seed(seed, h),
            sigma_mode=sigma_mode,
            stream=stream,
        )
        all_results.append(results)
        ledgers.append(ledger)
    return all_results, ledgers


def score(
    results_by_horizon: Sequence[Sequence[WindowResult]],
    ledgers: Sequence[EnergyLedger],
) -> MetricsReport:
    """Aggregate coverage, relative width, relative error, and utilization."""
    if not results_by_horizon or not any(len(r) for r in results_by_horizon):
        raise ValueError("need at least one window result")

    def _block(results):
        covered = sum(1 for r in results if r.ci_sum.covers(r.true_sum))
        half = sum(r.ci_sum.half_width for r in results)
        est = sum(r.ci_sum.center for r in results)
        err = sum(abs(r.ci_sum.center - r.true_sum) for r in results)
        true = sum(r.true_sum for r in results)
        return covered, half, est, err, true, len(results)

    per_horizon = []
    tot = np.zeros(5)
    n_windows = 0
    for results, ledger in zip(results_by_horizon, ledgers):
        covered, half, est, err, true, n = _block(results)
        tot += (covered, half, est, err, true)
        n_windows += n
        per_horizon.append(
            {
                "n_windows": n,
                "coverage": covered / n if n else float("nan"),
                "mean_ci_width": half / est if est > 0 else float("nan"),
                "mean_error": err / true if true > 0 else float("nan"),
                "spent_j": ledger.spent_j,
                "budget_j": ledger.budget_j,
                "unused_j": ledger.remaining_j,
            }
        )
    covered, half, est, err, true = (float(v) for v in tot)
    defined = true > 0
    return MetricsReport(
        coverage_probability=covered / n_windows,
        mean_ci_width=half / est if est > 0 else float("nan"),
        mean_error=err / true if defined else float("nan"),
        mean_error_defined=bool(defined),
        energy_utilization=tuple(l.spent_j / l.budget_j for l in ledgers),
        n_windows=n_windows,
        per_horizon=tuple(per_horizon),
    )


def select_uni_counter(
    trace: CountTrace,
    validation_horizon: int,
    counters: Sequence[CounterModel],
    em: EnergyModel,
    profiles: Dict[str, ErrorProfile],
    budget_j: float,
    spec: WindowSpec,
    seed: int,
    sigma_mode: str = "textbook",
) -> str:
    """Counter with the best mean width on a held-out validation horizon."""
    best: Optional[Tuple[float, str]] = None
    for c in sorted(counters, key=lambda c: c.counter_id):
        try:
            results, ledgers = simulate_scene(
                FixedCounterPlannerSpec(counter_id=c.counter_id, name="uni"),
                trace,
                [validation_horizon],
                counters,
                em,
                profiles,
                budget_j,
                spec,
                seed,
                sigma_mode,
            )
        except ValueError:
            continue  # cannot afford the minimum action on this counter
        width = score(results, ledgers).mean_ci_width
        if best is None or width < best[0]:
            best = (width, c.counter_id)
    if best is None:
        raise ValueError("no counter is affordable at this budget")
    return best[1]


def compare_baselines(
    trace: CountTrace,
    budgets_j: Sequence[float],
    counters: Sequence[CounterModel],
    em: EnergyModel,
    profiles: Dict[str, ErrorProfile],
    spec: WindowSpec,
    seed: int,
    eval_horizons: Sequence[int],
    validation_horizon: int,
    golden_counter_id: str,
    pairs: Optional[Dict[float, AgentPair]] = None,
    sigma_mode: str = "textbook",
) -> List[dict]:
    """Metrics per (budget, planner); planners without a trained pair are skipped."""
    rows = []
    for budget_j in budgets_j:
        planners: List[PlannerSpec] = [OraclePlannerSpec()]
        if pairs and budget_j in pairs:
            planners.append(RlPlannerSpec(pair=pairs[budget_j]))
        uni_id = select_uni_counter(
            trace, validation_horizon, counters, em, profiles, budget_j, spec, seed, sigma_mode
        )
        planners.append(FixedCounterPlannerSpec(counter_id=uni_id, name="uni"))
        planners.append(FixedCounterPlannerSpec(counter_id=golden_counter_id, name="golden"))
        for planner in planners:
            results, ledgers = simulate_scene(
                planner, trace, eval_horizons, counters, em, profiles, budget_j, spec, seed, sigma_mode
            )
            report = score(results, ledgers)
            rows.append(
                {
                    "budget_j": budget_j,
                    "planner": planner.name,
                    "coverage": report.coverage_probability,
                    "mean_ci_width": report.mean_ci_width,
                    "mean_error": report.mean_error,
                    "energy_utilization": float(np.mean(report.energy_utilization)),
                    "n_windows": report.n_windows,
                }
            )
    return rows


# ---------------------------------------------------------------------------
# file outputs


def save_results(results_by_horizon, horizon_indices, path) -> None:
    """Window results CSV, one row per executed window."""
    lines = ["horizon,window,counter_id,n_frames,energy_j,center,half_width,true_sum"]
    for h, results in zip(horizon_indices, results_by_horizon):
        for r in results:
            lines.append(
                f"{h},{r.window_index},{r.action.counter_id},{r.action.n_frames},"
                f"{r.energy_j!r},{r.ci_sum.center!r},{r.ci_sum.half_width!r},{r.true_sum}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def load_results(path, alpha: float):
    """Read a results CSV back into (results_by_horizon, horizon_indices).

    Interval branches are not stored in the CSV, so loaded intervals carry
    branch "unknown"; that is enough for scoring.
    """
    rows = Path(path).read_text().strip().splitlines()
    header = "horizon,window,counter_id,n_frames,energy_j,center,half_width,true_sum"
    if not rows or rows[0] != header:
        raise ValueError(f"{path}: expected header {header!r}")
    by_horizon: Dict[int, List[WindowResult]] = {}
    order: List[int] = []
    for row in rows[1:]:
        h_s, w_s, cid, n_s, e_s, c_s, hw_s, t_s = row.split(",")
        h = int(h_s)
        if h not in by_horizon:
            by_horizon[h] = []
            order.append(h)
        by_horizon[h].append(
            WindowResult(
                window_index=int(w_s),
                action=CountAction(cid, int(n_s)),
                ci_sum=ConfidenceInterval(
                    center=float(c_s), half_width=float(hw_s), alpha=alpha, branch="unknown"
                ),
                true_sum=int(t_s),
                energy_j=float(e_s),
            )
        )
    return [by_horizon[h] for h in order], order


def save_comparison(rows, path) -> None:
    lines = ["budget_j,planner,coverage,mean_ci_width,mean_error,energy_utilization,n_windows"]
    for r in rows:
        lines.append(
            f"{float(r['budget_j'])!r},{r['planner']},{float(r['coverage'])!r},"
            f"{float(r['mean_ci_width'])!r},{float(r['mean_error'])!r},"
            f"{float(r['energy_utilization'])!r},{int(r['n_windows'])}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def save_manifest(manifest: dict, path) -> None:
    Path(path).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
