"""Confidence intervals that fuse sampling error with counter error.

The estimate of a window's mean count starts from sample statistics of the
observed counts on sampled frames. Sampling uncertainty follows a Student-t
pivot; counter uncertainty comes from an empirical error profile, applied as
a ratio above the profile threshold and as an offset below it. Two interval
constructions are provided: a Monte Carlo reference that resamples both error
sources, and a fast normal approximation used everywhere else. A converter
turns mean-scale intervals into window-sum intervals and a combiner pools
intervals across adjacent windows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import ndtri

from ._rng import spawn_rng
from .counters import ErrorProfile

SIGMA_MODES = ("textbook", "legacy")


def z_score(alpha: float) -> float:
    """Two-sided standard-normal quantile for confidence level alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    return float(ndtri(0.5 + alpha / 2.0))


@dataclass(frozen=True)
class SampleStats:
    """Mean, sample std (n-1 convention), and size of observed frame counts."""

    mean: float
    std: float
    n: int

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("need n >= 4 samples")
        if self.std < 0:
            raise ValueError("std must be non-negative")


@dataclass(frozen=True)
class ConfidenceInterval:
    center: float
    half_width: float
    alpha: float
    branch: str  # "ratio" or "offset"; "mixed" after combining
    stats: Optional[SampleStats] = None

    def __post_init__(self):
        if self.half_width < 0:
            raise ValueError("half_width must be non-negative")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")

    def covers(self, value: float) -> bool:
        return abs(value - self.center) <= self.half_width


def sample_stats(observed) -> SampleStats:
    x = np.asarray(observed, dtype=np.float64)
    if x.size < 4:
        raise ValueError(f"insufficient samples: got {x.size}, need >= 4")
    return SampleStats(mean=float(x.mean()), std=float(x.std(ddof=1)), n=int(x.size))


def sigma_mu_x(s: float, n: int, mode: str = "textbook") -> float:
    """Standard deviation of the sampled mean under the chosen closed form.

    textbook is the exact standard deviation of (s/sqrt(n)) times a Student-t
    variable with n-1 degrees of freedom. legacy keeps an alternative closed
    form, s*(n-1)/((n-3)*sqrt(n)), that some earlier tooling used; it exceeds
    textbook by exactly sqrt((n-1)/(n-3)).
    """
    if n < 4:
        raise ValueError("need n >= 4")
    if s < 0:
        raise ValueError("s must be non-negative")
    if mode == "textbook":
        return math.sqrt((s * s / n) * (n - 1) / (n - 3))
    if mode == "legacy":
        return math.sqrt(s * s * (n - 1) ** 2 / (n * (n - 3) ** 2))
    raise ValueError(f"unknown sigma mode {mode!r}; expected one of {SIGMA_MODES}")


def select_branch(mean: float, threshold: float) -> str:
    # the observable sample mean stands in for the unknown true mean
    return "ratio" if mean > threshold else "offset"


def _center(stats: SampleStats, profile: ErrorProfile, branch: str) -> float:
    if branch == "ratio":
        return stats.mean * profile.ratio_mean
    return stats.mean + profile.offset_mean


def monte_carlo_ci(
    stats: SampleStats,
    profile: ErrorProfile,
    alpha: float,
    n_sims: int,
    seed: int,
) -> ConfidenceInterval:
    """Reference interval from joint resampling of both error sources.

    Each draw pairs a Student-t sampling deviate with one error sample pulled
    uniformly from the profile's active branch, composes them into a candidate
    true mean, and the half width is the smallest w such that at least
    ceil(alpha * n_sims) draws fall within w of the center.
    """
    if n_sims < 10_000:
        raise ValueError("n_sims must be at least 10000")
    branch = select_branch(stats.mean, profile.threshold)
    profile.require_branch(branch)
    rng = spawn_rng(seed, 2)
    t = rng.standard_t(stats.n - 1, size=n_sims)
    base = stats.mean + (stats.std / math.sqrt(stats.n)) * t
    if branch == "ratio":
        e = profile.ratio_samples[rng.integers(0, profile.ratio_samples.size, size=n_sims)]
        y = base * e
    else:
        e = profile.offset_samples[rng.integers(0, profile.offset_samples.size, size=n_sims)]
        y = base + e
    center = _center(stats, profile, branch)
    dev = np.abs(y - center)
    k = math.ceil(alpha * n_sims)
    half = float(np.partition(dev, k - 1)[k - 1])
    return ConfidenceInterval(center=center, half_width=half, alpha=alpha, branch=branch, stats=stats)


def approx_ci(
    stats: SampleStats,
    profile: ErrorProfile,
    alpha: float,
    mode: str = "textbook",
) -> ConfidenceInterval:
    """Normal-approximation interval; the planners' fast path.

    The variance of the estimated true mean composes the sampled-mean
    variance with the profiled error moments: for the ratio branch
    (var_mean + xbar^2) * (m_r^2 + s_r^2) - xbar^2 * m_r^2, for the offset
    branch var_mean + s_o^2. Width is the z quantile times that sigma.
    """
    branch = select_branch(stats.mean, profile.threshold)
    profile.require_branch(branch)
    var_mean = sigma_mu_x(stats.std, stats.n, mode) ** 2
    if branch == "ratio":
        m_r = profile.ratio_mean
        s_r = profile.ratio_stdev
        var = (var_mean + stats.mean**2) * (m_r**2 + s_r**2) - stats.mean**2 * m_r**2
    else:
        var = var_mean + profile.offset_stdev**2
    var = max(var, 0.0)  # guard tiny negative from float cancellation
    half = z_score(alpha) * math.sqrt(var)
    center = _center(stats, profile, branch)
    return ConfidenceInterval(center=center, half_width=half, alpha=alpha, branch=branch, stats=stats)


def mean_to_sum(ci: ConfidenceInterval, frames_in_window: int) -> ConfidenceInterval:
    """Rescale a per-frame-mean interval to the window-sum scale."""
    if frames_in_window < 1:
        raise ValueError("frames_in_window must be >= 1")
    return replace(
        ci,
        center=ci.center * frames_in_window,
        half_width=ci.half_width * frames_in_window,
    )


def combine_windows(cis, alpha: float) -> ConfidenceInterval:
    """Pool intervals of k equal-length windows into one mean interval.

    Window estimates are treated as independent, so the pooled sigma is the
    root of the mean of squared sigmas divided by k.
    """
    cis = list(cis)
    if not cis:
        raise ValueError("need at least one interval")
    if any(ci.alpha != alpha for ci in cis):
        raise ValueError("mixed alphas")
    k = len(cis)
    center = sum(ci.center for ci in cis) / k
    z = z_score(alpha)
    sigma_sq = sum((ci.half_width / z) ** 2 for ci in cis)
    half = z * math.sqrt(sigma_sq) / k
    branches = {ci.branch for ci in cis}
    branch = branches.pop() if len(branches) == 1 else "mixed"
    return ConfidenceInterval(center=center, half_width=half, alpha=alpha, branch=branch, stats=None)


def ci_to_json(ci: ConfidenceInterval) -> str:
    payload = {
        "center": ci.center,
        "half_width": ci.half_width,
        "alpha": ci.alpha,
        "branch": ci.branch,
        "n": ci.stats.n if ci.stats else None,
        "xbar": ci.stats.mean if ci.stats else None,
        "s": ci.stats.std if ci.stats else None,
    }
    return json.dumps(payload, sort_keys=True)


def ci_from_json(text: str) -> ConfidenceInterval:
    d = json.loads(text)
    stats = None
    if d.get("n") is not None:
        stats = SampleStats(mean=d["xbar"], std=d["s"], n=d["n"])
    return ConfidenceInterval(
        center=d["center"],
        half_width=d["half_width"],
        alpha=d["alpha"],
        branch=d["branch"],
        stats=stats,
    )
