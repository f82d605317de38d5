"""Offline steepest-gradient energy allocation across a horizon.

The oracle sees every window's energy/CI front. It starts each window at the
cheapest action on its front, then repeatedly advances the window whose next
front segment buys the most width reduction per joule, as long as that
advance fits in the remaining budget. The budget bound is hard: the plan
never spends more than it was given.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .fronts import CountAction, EnergyCIFront


@dataclass(frozen=True)
class HorizonPlan:
    """One count action per window plus the energy ledger that proves fit."""

    budget_j: float
    actions: tuple
    per_window_energy: tuple
    spent_j: float

    def __post_init__(self):
        if len(self.actions) != len(self.per_window_energy):
            raise ValueError("actions and per_window_energy must align")
        total = sum(self.per_window_energy)
        if abs(total - self.spent_j) > 1e-6:
            raise ValueError("spent_j must equal the sum of per-window energies")
        if self.spent_j > self.budget_j:
            raise ValueError("plan exceeds budget")


def plan_horizon(fronts: Sequence[EnergyCIFront], budget_j: float, slice_j: float = 50.0) -> HorizonPlan:
    """Allocate a horizon budget across window fronts by steepest gradient.

    Advances are atomic front steps; ranking is width gain per joule, ties
    broken toward the lowest window index so replays are deterministic.
    slice_j only caps ranking granularity and never splits a step.
    """
    if slice_j <= 0:
        raise ValueError("slice_j must be positive")
    if not fronts:
        raise ValueError("need at least one front")
    minimum = sum(f.points[0].energy_j for f in fronts)
    if budget_j < minimum:
        raise ValueError(
            f"budget below bare minimum: {budget_j:.3f} J < {minimum:.3f} J "
            f"(short {minimum - budget_j:.3f} J)"
        )

    level = [0] * len(fronts)  # operating point index per window
    remaining = budget_j - minimum

    def push(heap, w):
        f = fronts[w]
        i = level[w]
        if i + 1 < len(f.points):
            inc = f.points[i + 1].energy_j - f.points[i].energy_j
            gain = f.points[i].ci_width - f.points[i + 1].ci_width
            heapq.heappush(heap, (-(gain / inc), w, i, inc))

    heap: list = []
    for w in range(len(fronts)):
        push(heap, w)
    while heap:
        neg_grad, w, i, inc = heapq.heappop(heap)
        if level[w] != i:
            continue  # stale entry from an earlier advance
        if inc > remaining + 1e-12:
            # remaining only shrinks and steps cannot be skipped, so this
            # window can never advance again; drop it for good
            continue
        remaining -= inc
        level[w] = i + 1
        push(heap, w)

    actions = tuple(fronts[w].points[level[w]].action for w in range(len(fronts)))
    energies = tuple(fronts[w].points[level[w]].energy_j for w in range(len(fronts)))
    return HorizonPlan(
        budget_j=budget_j,
        actions=actions,
        per_window_energy=energies,
        spent_j=sum(energies),
    )


def plan_quality(plan: HorizonPlan, fronts: Sequence[EnergyCIFront]) -> float:
    """Mean front width at the plan's operating points (lower is better)."""
    if len(plan.actions) != len(fronts):
        raise ValueError("plan and fronts must align")
    widths = []
    for action, front in zip(plan.actions, fronts):
        for p in front.points:
            if p.action == action:
                widths.append(p.ci_width)
                break
        else:
            raise ValueError(
                f"action ({action.counter_id}, {action.n_frames}) not on front "
                f"{front.window_index}"
            )
    return sum(widths) / len(widths)


def save_plan(plan: HorizonPlan, path) -> None:
    payload = {
        "budget_j": plan.budget_j,
        "windows": [
            {
                "index": i,
                "counter_id": a.counter_id,
                "n_frames": a.n_frames,
                "energy_j": e,
            }
            for i, (a, e) in enumerate(zip(plan.actions, plan.per_window_energy))
        ],
        "spent_j": plan.spent_j,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_plan(path) -> HorizonPlan:
    d = json.loads(Path(path).read_text())
    windows = sorted(d["windows"], key=lambda w: w["index"])
    return HorizonPlan(
        budget_j=float(d["budget_j"]),
        actions=tuple(CountAction(w["counter_id"], int(w["n_frames"])) for w in windows),
        per_window_energy=tuple(float(w["energy_j"]) for w in windows),
        spent_j=float(d["spent_j"]),
    )
