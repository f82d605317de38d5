"""Ground-truth count traces.

A trace holds one non-negative object count per frame for a single camera
scene. Traces come either from synthesis (Poisson arrivals with a diurnal
rate) or from ingesting a detection log through region-of-interest counting.
Windowing operations slice a trace into fixed-length aggregation windows and
fixed-size planning horizons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import spawn_rng


@dataclass(frozen=True)
class WindowSpec:
    """Aggregation window and horizon geometry plus the confidence level."""

    tau_seconds: int = 1800
    horizon_windows: int = 48
    alpha: float = 0.95

    def __post_init__(self):
        if self.tau_seconds <= 0:
            raise ValueError("tau_seconds must be positive")
        if self.horizon_windows < 1:
            raise ValueError("horizon_windows must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")

    def window_frames(self, fps: int) -> int:
        return self.tau_seconds * fps


@dataclass(frozen=True)
class CountTrace:
    """Per-frame ground-truth counts for one scene at a fixed frame rate."""

    scene_id: str
    counts: np.ndarray
    fps: int = 1
    start_epoch: float = 0.0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1:
            raise ValueError("counts must be one-dimensional")
        if counts.size and counts.min() < 0:
            raise ValueError("counts must be non-negative")
        if self.fps < 1:
            raise ValueError("fps must be a positive integer")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def n_frames(self) -> int:
        return int(self.counts.size)

    def n_windows(self, spec: WindowSpec) -> int:
        wf = spec.window_frames(self.fps)
        if self.n_frames % wf != 0:
            raise ValueError(
                f"trace length {self.n_frames} is not a whole number of "
                f"{wf}-frame windows"
            )
        return self.n_frames // wf

    def window_slice(self, window_index: int, spec: WindowSpec) -> np.ndarray:
        wf = spec.window_frames(self.fps)
        n = self.n_windows(spec)
        if not 0 <= window_index < n:
            raise IndexError(f"window {window_index} out of range [0, {n})")
        return self.counts[window_index * wf : (window_index + 1) * wf]

    def horizon_slice(self, horizon_index: int, spec: WindowSpec) -> "CountTrace":
        wf = spec.window_frames(self.fps) * spec.horizon_windows
        n_h = self.n_frames // wf
        if not 0 <= horizon_index < n_h:
            raise IndexError(f"horizon {horizon_index} out of range [0, {n_h})")
        sub = self.counts[horizon_index * wf : (horizon_index + 1) * wf]
        return CountTrace(
            scene_id=self.scene_id,
            counts=sub,
            fps=self.fps,
            start_epoch=self.start_epoch + horizon_index * wf / self.fps,
        )


@dataclass(frozen=True)
class RoiSpec:
    """Axis-aligned region of interest plus the object travel time through it."""

    region: tuple  # (x_min, y_min, x_max, y_max) in pixels
    travel_seconds: float

    def __post_init__(self):
        x_min, y_min, x_max, y_max = self.region
        if not (x_min < x_max and y_min < y_max):
            raise ValueError("region must have positive width and height")
        if self.travel_seconds <= 0:
            raise ValueError("travel_seconds must be positive")


@dataclass(frozen=True)
class DetectionLog:
    """Timestamped per-frame detection boxes, the input to ROI counting.

    boxes[i] is a tuple of (x0, y0, x1, y1, class_label) tuples for the frame
    at timestamps[i].
    """

    timestamps: tuple = ()
    boxes: tuple = ()

    def __post_init__(self):
        ts = tuple(float(t) for t in self.timestamps)
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("timestamps must be strictly increasing")
        frames = []
        for frame in self.boxes:
            checked = []
            for x0, y0, x1, y1, label in frame:
                if not (x0 < x1 and y0 < y1):
                    raise ValueError("boxes must have positive area")
                checked.append((float(x0), float(y0), float(x1), float(y1), str(label)))
            frames.append(tuple(checked))
        if len(ts) != len(frames):
            raise ValueError("timestamps and boxes must have equal length")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "boxes", tuple(frames))


def _intersects(box, region) -> bool:
    # closed rectangles: sharing only an edge or corner still counts
    x0, y0, x1, y1 = box
    rx0, ry0, rx1, ry1 = region
    return x0 <= rx1 and x1 >= rx0 and y0 <= ry1 and y1 >= ry0


def roi_count(log: DetectionLog, roi: RoiSpec, class_label: str, time_range: tuple) -> int:
    """Count objects of one class crossing the ROI over a time range.

    Frames are sampled every ``roi.travel_seconds`` starting at the range
    start; each sample time maps to the nearest logged frame at or after it.
    A box contributes when its rectangle intersects the ROI (closed
    rectangles, so edge contact counts).

    Parameters
    ----------
    log : DetectionLog
    roi : RoiSpec
    class_label : str
        Only boxes with this label are counted.
    time_range : (start, end)
        Half-open interval in the log's time units.

    Returns
    -------
    int
        Sum of intersecting boxes over the sampled frames.
    """
    if not log.timestamps:
        raise ValueError("no frames")
    start, end = float(time_range[0]), float(time_range[1])
    if end <= start:
        raise ValueError("range out of bounds")
    ts = np.asarray(log.timestamps)
    t = roi.travel_seconds
    n_samples = int(np.ceil((end - start) / t - 1e-12))
    targets = start + t * np.arange(n_samples)
    if start < ts[0] - 1e-9 or (n_samples and targets[-1] > ts[-1] + 1e-9):
        raise ValueError("range out of bounds")
    frame_idx = np.searchsorted(ts, targets - 1e-9, side="left")
    total = 0
    for fi in frame_idx:
        for x0, y0, x1, y1, label in log.boxes[fi]:
            if label == class_label and _intersects((x0, y0, x1, y1), roi.region):
                total += 1
    return total


def trace_from_detections(
    log: DetectionLog,
    roi: RoiSpec,
    class_label: str,
    spec: WindowSpec,
    fps: int = 1,
    scene_id: str = "ingested",
) -> CountTrace:
    """Convert a detection log into a count trace via ROI sampling.

    Sample instants run from the log start at travel-time intervals; each
    instant books the intersecting-box count of the nearest logged frame at
    or after it into the trace frame containing the instant. Window sums of
    the result match per-window roi_count whenever the window length is a
    multiple of the travel time. The output is truncated to whole windows.
    """
    if not log.timestamps:
        raise ValueError("no frames")
    ts = np.asarray(log.timestamps)
    start = float(ts[0])
    wf = spec.window_frames(fps)
    total_frames = int(np.floor((float(ts[-1]) - start) * fps)) + 1
    n_windows = total_frames // wf
    if n_windows == 0:
        raise ValueError(
            f"log spans {total_frames} frames, shorter than one {wf}-frame window"
        )
    n_frames = n_windows * wf
    counts = np.zeros(n_frames, dtype=np.int64)
    t = roi.travel_seconds
    n_samples = int(np.ceil(n_frames / fps / t - 1e-12))
    for j in range(n_samples):
        instant = start + j * t
        slot = int(np.floor((instant - start) * fps))
        if slot >= n_frames:
            break
        fi = int(np.searchsorted(ts, instant - 1e-9, side="left"))
        if fi >= len(ts):
            continue  # no logged frame at or after this instant
        hits = 0
        for x0, y0, x1, y1, label in log.boxes[fi]:
            if label == class_label and _intersects((x0, y0, x1, y1), roi.region):
                hits += 1
        counts[slot] += hits
    return CountTrace(scene_id=scene_id, counts=counts, fps=fps, start_epoch=start)


@dataclass(frozen=True)
class SynthPattern:
    """Diurnal Poisson arrival pattern for synthetic scenes."""

    base_rate: float = 2.0
    diurnal_amplitude: float = 0.0
    period_windows: int = 48
    noise: str = "poisson"

    def __post_init__(self):
        if self.base_rate < 0 or self.diurnal_amplitude < 0:
            raise ValueError("rates must be non-negative")
        if self.period_windows < 1:
            raise ValueError("period_windows must be >= 1")
        if self.noise != "poisson":
            raise ValueError(f"unsupported noise model {self.noise!r}")


def synth_trace(
    pattern: SynthPattern,
    n_windows: int,
    spec: WindowSpec,
    seed: int,
    scene_id: str = "synthetic",
    fps: int = 1,
) -> CountTrace:
    """Draw a synthetic trace with a sinusoidal diurnal rate.

    Per-frame counts are independent Poisson draws at rate
    ``max(0, base + amplitude * sin(2*pi*w / period))`` where w is the frame's
    position measured in windows. Deterministic for a given seed.
    """
    if n_windows <= 0:
        raise ValueError("n_windows must be positive")
    wf = spec.window_frames(fps)
    n_frames = n_windows * wf
    frame_pos_windows = np.arange(n_frames, dtype=np.float64) / wf
    lam = pattern.base_rate + pattern.diurnal_amplitude * np.sin(
        2.0 * np.pi * frame_pos_windows / pattern.period_windows
    )
    np.maximum(lam, 0.0, out=lam)
    rng = spawn_rng(seed, 1)
    counts = rng.poisson(lam)
    return CountTrace(scene_id=scene_id, counts=counts, fps=fps)


def window_stats(trace: CountTrace, window_index: int, spec: WindowSpec) -> tuple:
    """Exact (mean, population std, sum) of ground truth over one window."""
    window = trace.window_slice(window_index, spec)
    mean = float(window.mean())
    std = float(window.std())  # population convention for ground truth
    return mean, std, int(window.sum())


# ---------------------------------------------------------------------------
# file formats


def _sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".meta.json")


def save_trace(trace: CountTrace, csv_path, spec: WindowSpec) -> None:
    """Write `frame_index,count` rows plus a metadata sidecar JSON."""
    csv_path = Path(csv_path)
    lines = ["frame_index,count"]
    lines.extend(f"{i},{c}" for i, c in enumerate(trace.counts))
    csv_path.write_text("\n".join(lines) + "\n")
    meta = {
        "scene_id": trace.scene_id,
        "fps": trace.fps,
        "start_epoch": trace.start_epoch,
        "tau_seconds": spec.tau_seconds,
    }
    _sidecar_path(csv_path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def load_trace(csv_path) -> tuple:
    """Read a trace CSV plus sidecar; returns (CountTrace, tau_seconds)."""
    csv_path = Path(csv_path)
    rows = csv_path.read_text().strip().splitlines()
    if not rows or rows[0] != "frame_index,count":
        raise ValueError(f"{csv_path}: expected header 'frame_index,count'")
    counts = np.empty(len(rows) - 1, dtype=np.int64)
    for k, row in enumerate(rows[1:]):
        idx_s, count_s = row.split(",")
        if int(idx_s) != k:
            raise ValueError(f"{csv_path}: frame_index out of order at row {k + 1}")
        counts[k] = int(count_s)
    meta = json.loads(_sidecar_path(csv_path).read_text())
    trace = CountTrace(
        scene_id=meta["scene_id"],
        counts=counts,
        fps=int(meta["fps"]),
        start_epoch=float(meta["start_epoch"]),
    )
    return trace, int(meta["tau_seconds"])


def save_detection_log(log: DetectionLog, path) -> None:
    lines = []
    for ts, frame in zip(log.timestamps, log.boxes):
        boxes = [
            {"x0": x0, "y0": y0, "x1": x1, "y1": y1, "class": label}
            for x0, y0, x1, y1, label in frame
        ]
        lines.append(json.dumps({"ts": ts, "boxes": boxes}, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n")


def load_detection_log(path) -> DetectionLog:
    """Read JSON-lines of `{ts, boxes:[{x0,y0,x1,y1,class}]}` records."""
    timestamps = []
    frames = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        timestamps.append(float(rec["ts"]))
        frames.append(
            tuple(
                (b["x0"], b["y0"], b["x1"], b["y1"], b["class"])
                for b in rec["boxes"]
            )
        )
    return DetectionLog(timestamps=tuple(timestamps), boxes=tuple(frames))
