"""Per-window energy versus CI-width characterization.

A count action picks one counter and a number of frames to sample in a
window. Each action costs energy and yields an interval width; sweeping
actions over a frame-count grid for every counter and keeping only the
undominated outcomes gives the window's energy/CI front, the menu the
planners allocate from. Counters are never mixed within one window.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np

from .ci import SampleStats, approx_ci, mean_to_sum, sample_stats
from .counters import CounterModel, ErrorProfile

MIN_FRAMES = 30  # smallest statistically useful sample; planner floor
GRID_STEP = 10


@dataclass(frozen=True)
class CountAction:
    counter_id: str
    n_frames: int

    def __post_init__(self):
        if self.n_frames < MIN_FRAMES:
            raise ValueError(f"n_frames must be >= {MIN_FRAMES}")


@dataclass(frozen=True)
class EnergyModel:
    """Scalar per-frame and per-window energy costs.

    Capture cost is paid per sampled frame on top of the counter's processing
    cost; the wake constants are paid once per window regardless of how many
    frames are processed.
    """

    e_capture_per_frame: float
    e_wake_capture: float = 0.0
    e_wake_process: float = 0.0

    def __post_init__(self):
        if min(self.e_capture_per_frame, self.e_wake_capture, self.e_wake_process) < 0:
            raise ValueError("energy parameters must be non-negative")

    @property
    def per_window_overhead_j(self) -> float:
        return self.e_wake_capture + self.e_wake_process


def window_energy(n_frames: int, counter: CounterModel, em: EnergyModel) -> float:
    """Energy of one count action: per-frame costs plus the window overhead."""
    return n_frames * (em.e_capture_per_frame + counter.energy_per_frame_j) + em.per_window_overhead_j


def cheapest_counter(counters: Sequence[CounterModel]) -> CounterModel:
    if not counters:
        raise ValueError("need at least one counter")
    return min(counters, key=lambda c: (c.energy_per_frame_j, c.counter_id))


def default_grid(window_frames: int) -> np.ndarray:
    if window_frames < MIN_FRAMES:
        raise ValueError(f"window has {window_frames} frames, need >= {MIN_FRAMES}")
    return np.arange(MIN_FRAMES, window_frames + 1, GRID_STEP, dtype=np.int64)


def snap_to_grid(n: float, window_frames: int) -> int:
    """Nearest feasible grid frame count for a requested real value."""
    snapped = MIN_FRAMES + GRID_STEP * round((n - MIN_FRAMES) / GRID_STEP)
    grid_max = int(default_grid(window_frames)[-1])
    return int(min(max(snapped, MIN_FRAMES), grid_max))


def uniform_sample_indices(window_frames: int, n: int, phase: float = 0.0) -> np.ndarray:
    """Evenly spaced frame indices covering the window, optionally phased.

    The gap between consecutive picks never exceeds twice the ideal spacing,
    which is the uniform-in-time contract the simulator checks.
    """
    if not 1 <= n <= window_frames:
        raise ValueError("n must be in [1, window_frames]")
    step = window_frames / n
    if not 0.0 <= phase < step:
        raise ValueError("phase must lie in [0, step)")
    idx = np.floor(phase + step * np.arange(n)).astype(np.int64)
    return np.minimum(idx, window_frames - 1)


@dataclass(frozen=True)
class FrontPoint:
    action: CountAction
    energy_j: float
    ci_width: float  # window-sum half width over max(estimated sum, 1)

    def __post_init__(self):
        if self.energy_j <= 0:
            raise ValueError("energy_j must be positive")
        if self.ci_width < 0:
            raise ValueError("ci_width must be non-negative")


@dataclass(frozen=True)
class EnergyCIFront:
    """Lower envelope of (energy, width) outcomes for one window."""

    window_index: int
    points: tuple

    def __post_init__(self):
        pts = tuple(self.points)
        if not pts:
            raise ValueError("front must have at least one point")
        for a, b in zip(pts, pts[1:]):
            if not (a.energy_j < b.energy_j and a.ci_width > b.ci_width):
                raise ValueError("front points must strictly improve width as energy grows")
        object.__setattr__(self, "points", pts)

    @property
    def energies(self) -> np.ndarray:
        return np.asarray([p.energy_j for p in self.points])

    @property
    def widths(self) -> np.ndarray:
        return np.asarray([p.ci_width for p in self.points])


def action_outcome(
    observed_window: np.ndarray,
    action: CountAction,
    counter: CounterModel,
    em: EnergyModel,
    profile: ErrorProfile,
    alpha: float,
    sigma_mode: str = "textbook",
) -> FrontPoint:
    """Evaluate one count action against a window's observed count series.

    The width is the predicted interval for a uniform-in-time sample of
    n_frames: the window's full observed stats evaluated at sample size n,
    so widths are smooth and strictly shrinking in n. Recomputing stats from
    each n-frame subsample instead would let small-sample jitter fabricate
    gradients the planner then chases. The window-sum half width is
    normalized by the estimated sum (floored at 1), so outcomes compare
    across windows of very different traffic levels.
    """
    wf = int(len(observed_window))
    if action.n_frames > wf:
        raise ValueError(f"action wants {action.n_frames} frames, window has {wf}")
    full = sample_stats(np.asarray(observed_window))
    stats = SampleStats(mean=full.mean, std=full.std, n=action.n_frames)
    ci = mean_to_sum(approx_ci(stats, profile, alpha, sigma_mode), wf)
    width = ci.half_width / max(ci.center, 1.0)
    energy = window_energy(action.n_frames, counter, em)
    return FrontPoint(action=action, energy_j=energy, ci_width=width)


def build_front(
    observed_by_counter: Dict[str, np.ndarray],
    counters: Sequence[CounterModel],
    em: EnergyModel,
    profiles: Dict[str, ErrorProfile],
    alpha: float,
    grid: Optional[np.ndarray] = None,
    window_index: int = 0,
    sigma_mode: str = "textbook",
) -> EnergyCIFront:
    """Sweep counters x frame grid and keep the undominated outcomes."""
    if not counters:
        raise ValueError("need at least one counter")
    lengths = {len(observed_by_counter[c.counter_id]) for c in counters}
    if len(lengths) != 1:
        raise ValueError("all counters must cover the same window")
    wf = lengths.pop()
    if grid is None:
        grid = default_grid(wf)
    grid = np.asarray(grid, dtype=np.int64)
    if grid.size == 0:
        raise ValueError("empty grid")
    if grid.min() < MIN_FRAMES or grid.max() > wf:
        raise ValueError(f"grid must lie within [{MIN_FRAMES}, {wf}]")

    candidates = []
    for ci_order, counter in enumerate(counters):
        series = np.asarray(observed_by_counter[counter.counter_id])
        profile = profiles[counter.counter_id]
        for n in grid.tolist():
            point = action_outcome(
                series, CountAction(counter.counter_id, n), counter, em, profile, alpha, sigma_mode
            )
            candidates.append((point.energy_j, point.ci_width, ci_order, n, point))

    candidates.sort(key=lambda t: (t[0], t[1], t[2], t[3]))
    kept = []
    best_width = np.inf
    last_energy = -np.inf
    for energy, width, _, _, point in candidates:
        if width < best_width and energy > last_energy:
            kept.append(point)
            best_width = width
            last_energy = energy
    return EnergyCIFront(window_index=window_index, points=tuple(kept))


def front_gradient(front: EnergyCIFront, current_energy: float) -> float:
    """Width improvement per joule of the segment just right of an energy."""
    energies = front.energies
    widths = front.widths
    if current_energy < energies[0] - 1e-9:
        raise ValueError("current_energy below the minimum action")
    if current_energy >= energies[-1]:
        return 0.0
    j = int(np.searchsorted(energies, current_energy, side="right"))
    i = j - 1
    return float((widths[i] - widths[j]) / (energies[j] - current_energy))


def save_front(front: EnergyCIFront, path) -> None:
    """Dump one window's front as `energy_j,ci_width,counter_id,n_frames` CSV."""
    lines = ["energy_j,ci_width,counter_id,n_frames"]
    for p in front.points:
        lines.append(f"{p.energy_j!r},{p.ci_width!r},{p.action.counter_id},{p.action.n_frames}")
    Path(path).write_text("\n".join(lines) + "\n")
