"""Simulated object counters and their error profiles.

A counter is a parametric stand-in for a detector network: it maps true
per-frame counts to observed counts through a multiplicative ratio, an
additive offset, and per-object misses. Profiling compares window means of
truth and observation and stores the deviations in two regimes split by a
threshold on the true mean: a ratio regime for busy windows and an offset
regime for near-empty ones, where ratios would blow up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import binom

from ._rng import keyed_normals, keyed_uniforms
from .traces import CountTrace, WindowSpec

# stream tags for the keyed per-frame randomness
_STREAM_RATIO = 1
_STREAM_OFFSET = 2
_STREAM_MISS = 3


class UnprofiledRegimeError(ValueError):
    """Raised when a CI is requested for a regime with no profiled samples."""


@dataclass(frozen=True)
class CounterModel:
    """Parametric error model of one counter plus its per-frame energy cost."""

    counter_id: str
    energy_per_frame_j: float
    ratio_mean: float = 1.0
    ratio_std: float = 0.0
    offset_std: float = 0.0
    miss_floor: float = 0.0

    def __post_init__(self):
        if self.energy_per_frame_j <= 0:
            raise ValueError("energy_per_frame_j must be positive")
        if self.ratio_mean <= 0:
            raise ValueError("ratio_mean must be positive")
        if not (np.isfinite(self.ratio_std) and np.isfinite(self.offset_std)):
            raise ValueError("ratio_std and offset_std must be finite")
        if self.ratio_std < 0 or self.offset_std < 0:
            raise ValueError("ratio_std and offset_std must be non-negative")
        if not 0.0 <= self.miss_floor <= 1.0:
            raise ValueError("miss_floor must be a probability")


def observe_counts(truth_counts, frame_indices, model: CounterModel, seed: int) -> np.ndarray:
    """Observed counts for the given frames, keyed by (seed, frame index).

    The draw for a frame depends only on the seed and that frame's index, so
    observing any subset of frames gives the same values those frames would
    get in a full pass. Per-object misses collapse to one binomial draw per
    frame.
    """
    g = np.asarray(truth_counts, dtype=np.int64)
    idx = np.asarray(frame_indices, dtype=np.int64)
    if g.shape != idx.shape:
        raise ValueError("truth_counts and frame_indices must align")
    if model.miss_floor > 0.0:
        u = keyed_uniforms(seed, _STREAM_MISS, idx)
        kept = binom.ppf(u, g, 1.0 - model.miss_floor).astype(np.int64)
    else:
        kept = g
    r = keyed_normals(seed, _STREAM_RATIO, idx, model.ratio_mean, model.ratio_std)
    a = keyed_normals(seed, _STREAM_OFFSET, idx, 0.0, model.offset_std)
    observed = np.rint(np.maximum(0.0, kept * r + a)).astype(np.int64)
    return observed


def apply_counter(truth: CountTrace, model: CounterModel, seed: int) -> CountTrace:
    """Run the forward error model over a whole trace."""
    idx = np.arange(truth.n_frames, dtype=np.int64)
    observed = observe_counts(truth.counts, idx, model, seed)
    return CountTrace(
        scene_id=truth.scene_id,
        counts=observed,
        fps=truth.fps,
        start_epoch=truth.start_epoch,
    )


@dataclass(frozen=True)
class ErrorProfile:
    """Empirical window-mean deviations of a counter, split at `threshold`.

    ratio_samples holds true/observed mean ratios for windows whose true mean
    exceeds the threshold; offset_samples holds true-minus-observed
    differences for the rest. Moments are cached at construction and always
    recomputable from the raw samples.
    """

    counter_id: str
    threshold: float
    ratio_samples: np.ndarray
    offset_samples: np.ndarray
    dropped_pairs: int = 0

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")
        ratio = np.asarray(self.ratio_samples, dtype=np.float64)
        offset = np.asarray(self.offset_samples, dtype=np.float64)
        if ratio.size and ratio.min() <= 0:
            raise ValueError("ratio samples must be positive")
        ratio.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "ratio_samples", ratio)
        object.__setattr__(self, "offset_samples", offset)
        # population moments; Monte Carlo resampling sees exactly these
        object.__setattr__(self, "ratio_mean", float(ratio.mean()) if ratio.size else float("nan"))
        object.__setattr__(self, "ratio_stdev", float(ratio.std()) if ratio.size else float("nan"))
        object.__setattr__(self, "offset_mean", float(offset.mean()) if offset.size else float("nan"))
        object.__setattr__(self, "offset_stdev", float(offset.std()) if offset.size else float("nan"))

    @property
    def ratio_usable(self) -> bool:
        return self.ratio_samples.size > 0

    @property
    def offset_usable(self) -> bool:
        return self.offset_samples.size > 0

    def require_branch(self, branch: str) -> None:
        if branch == "ratio" and not self.ratio_usable:
            raise UnprofiledRegimeError(
                f"unprofiled regime: counter {self.counter_id!r} has no ratio samples"
            )
        if branch == "offset" and not self.offset_usable:
            raise UnprofiledRegimeError(
                f"unprofiled regime: counter {self.counter_id!r} has no offset samples"
            )


def profile_errors(pairs, threshold: float, counter_id: str = "", min_pairs: int = 30) -> ErrorProfile:
    """Build an ErrorProfile from (true mean, observed mean) window pairs.

    Pairs with observed mean 0 in the ratio regime cannot form a finite ratio
    and are dropped; the count of drops is kept on the profile.

    Parameters
    ----------
    pairs : sequence of (true_mean, observed_mean)
    threshold : float
        Regime split on the true mean.
    min_pairs : int
        Minimum pairs required; 30 matches the smallest sample size the
        planners will ever request.
    """
    pairs = [(float(m), float(mx)) for m, mx in pairs]
    if len(pairs) < min_pairs:
        raise ValueError(f"insufficient pairs: got {len(pairs)}, need >= {min_pairs}")
    ratio = []
    offset = []
    dropped = 0
    for true_mean, obs_mean in pairs:
        if true_mean > threshold:
            if obs_mean == 0.0:
                dropped += 1
                continue
            ratio.append(true_mean / obs_mean)
        else:
            offset.append(true_mean - obs_mean)
    return ErrorProfile(
        counter_id=counter_id,
        threshold=threshold,
        ratio_samples=np.asarray(ratio),
        offset_samples=np.asarray(offset),
        dropped_pairs=dropped,
    )


def window_mean_pairs(truth: CountTrace, observed: CountTrace, spec: WindowSpec):
    """Per-window (true mean, observed mean) pairs for profiling."""
    if truth.n_frames != observed.n_frames or truth.fps != observed.fps:
        raise ValueError("truth and observed traces must align")
    wf = spec.window_frames(truth.fps)
    n = truth.n_windows(spec)
    t = truth.counts[: n * wf].reshape(n, wf).mean(axis=1)
    o = observed.counts[: n * wf].reshape(n, wf).mean(axis=1)
    return list(zip(t.tolist(), o.tolist()))


def bhattacharyya(p, q) -> float:
    """Overlap coefficient of two discrete distributions on shared bins."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("mismatched bins")
    if abs(p.sum() - 1.0) > 1e-9 or abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("distributions must each sum to 1")
    if p.size and (p.min() < 0 or q.min() < 0):
        raise ValueError("distributions must be non-negative")
    return float(np.sqrt(p * q).sum())


def paired_histograms(a, b, n_bins: int = 32):
    """Probability-mass histograms of two sample sets over shared bins.

    Bins are equal width and span the pooled sample range, so the two
    outputs are directly comparable with :func:`bhattacharyya`.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both sample sets must be nonempty")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        hi = lo + 1.0  # all samples identical; a single occupied bin
    edges = np.linspace(lo, hi, n_bins + 1)
    pa, _ = np.histogram(a, bins=edges)
    pb, _ = np.histogram(b, bins=edges)
    return pa / pa.sum(), pb / pb.sum()


def chi_square_independence(table) -> tuple:
    """Pearson independence statistic and degrees of freedom for a table."""
    obs = np.asarray(table, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[0] < 2 or obs.shape[1] < 2:
        raise ValueError("table must be at least 2x2")
    row = obs.sum(axis=1)
    col = obs.sum(axis=0)
    if row.min() <= 0 or col.min() <= 0:
        raise ValueError("zero marginal")
    expected = np.outer(row, col) / obs.sum()
    stat = float(((obs - expected) ** 2 / expected).sum())
    dof = (obs.shape[0] - 1) * (obs.shape[1] - 1)
    return stat, dof


# ---------------------------------------------------------------------------
# file formats


def save_counter_model(model: CounterModel, path) -> None:
    payload = {
        "counter_id": model.counter_id,
        "energy_per_frame_j": model.energy_per_frame_j,
        "ratio_mean": model.ratio_mean,
        "ratio_std": model.ratio_std,
        "offset_std": model.offset_std,
        "miss_floor": model.miss_floor,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_counter_model(path) -> CounterModel:
    d = json.loads(Path(path).read_text())
    return CounterModel(
        counter_id=d["counter_id"],
        energy_per_frame_j=float(d["energy_per_frame_j"]),
        ratio_mean=float(d["ratio_mean"]),
        ratio_std=float(d["ratio_std"]),
        offset_std=float(d["offset_std"]),
        miss_floor=float(d["miss_floor"]),
    )


def save_profile(profile: ErrorProfile, path) -> None:
    payload = {
        "counter_id": profile.counter_id,
        "threshold": profile.threshold,
        "ratio_samples": profile.ratio_samples.tolist(),
        "offset_samples": profile.offset_samples.tolist(),
        "dropped_pairs": profile.dropped_pairs,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_profile(path) -> ErrorProfile:
    d = json.loads(Path(path).read_text())
    # moments recomputed by the constructor, not trusted from disk
    return ErrorProfile(
        counter_id=d["counter_id"],
        threshold=float(d["threshold"]),
        ratio_samples=np.asarray(d["ratio_samples"], dtype=np.float64),
        offset_samples=np.asarray(d["offset_samples"], dtype=np.float64),
        dropped_pairs=int(d.get("dropped_pairs", 0)),
    )
