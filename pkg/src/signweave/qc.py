"""Rule-based quality-control filters and the dominant/non-dominant split."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .motion import GlossClip, MotionSequence, PartLayout, yaw_angle


@dataclass(frozen=True)
class QcConfig:
    max_duration_seconds: float = 10.0
    yaw_threshold: float = 0.7
    identity_threshold: float = 0.5
    # external per-frame score providers (identity re-id, scene change); None passes
    identity_hook: Callable[[GlossClip], np.ndarray] | None = None


@dataclass
class QcResult:
    keep: bool
    reasons: list[str] = field(default_factory=list)
    kept_frames: np.ndarray | None = None
    clip: GlossClip | None = None


def yaw_violations(frames: np.ndarray, layout: PartLayout, threshold: float) -> np.ndarray:
    """Frames where both the root body yaw and the neck yaw exceed the threshold."""
    if layout.global_orient is None or layout.neck is None:
        return np.zeros(frames.shape[0], dtype=bool)
    body_idx = layout.indices("global_orient")
    neck_idx = layout.indices("neck")
    body_yaw = np.array([abs(yaw_angle(f[body_idx])) for f in frames])
    neck_yaw = np.array([abs(yaw_angle(f[neck_idx])) for f in frames])
    return (body_yaw > threshold) & (neck_yaw > threshold)


def qc_filters(clip: GlossClip, cfg: QcConfig = QcConfig(), layout: PartLayout | None = None) -> QcResult:
    """Apply the duration rule, the frontal-view yaw rule, and external hooks.

    The duration rule discards whole clips; side-view and low-identity frames
    are dropped individually (the clip is discarded if nothing survives).
    """
    motion = clip.motion
    t = motion.num_frames
    if motion.duration_seconds > cfg.max_duration_seconds:
        return QcResult(False, ["duration"])
    layout = layout if layout is not None else (
        PartLayout.augmented() if motion.dim == 212 else PartLayout.base()
    )
    drop = yaw_violations(motion.frames, layout, cfg.yaw_threshold)
    reasons = []
    if cfg.identity_hook is not None:
        scores = np.asarray(cfg.identity_hook(clip), dtype=np.float64)
        if scores.shape[0] != t:
            raise ValueError("identity hook must return one score per frame")
        low = scores < cfg.identity_threshold
        if low.any():
            reasons.append("identity")
        drop = drop | low
    if drop.all():
        return QcResult(False, reasons + ["no-frames-left"])
    if drop.any() and "identity" not in reasons and yaw_violations(motion.frames, layout, cfg.yaw_threshold).any():
        reasons.append("yaw")
    kept = np.nonzero(~drop)[0]
    if drop.any():
        filtered = MotionSequence(motion.frames[kept].copy(), motion.fps)
        # remap the core span onto the surviving frames
        span_lo = int(np.searchsorted(kept, clip.core_span[0], side="left"))
        span_hi = int(np.searchsorted(kept, clip.core_span[1], side="right")) - 1
        span_lo = min(max(span_lo, 0), len(kept) - 1)
        span_hi = min(max(span_hi, span_lo), len(kept) - 1)
        new_clip = GlossClip(clip.gloss, filtered, (span_lo, span_hi), clip.source)
    else:
        new_clip = clip
    return QcResult(True, reasons, kept, new_clip)


# ---------------------------------------------------------------------------
# dominant / non-dominant split


def subsequence_dtw_distance(query: np.ndarray, reference: np.ndarray) -> float:
    """Path-normalized DTW cost of the query against its best subsegment of
    the reference (free start and end on the reference axis)."""
    query = np.asarray(query, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    t_q, t_r = query.shape[0], reference.shape[0]
    d = query.shape[1]
    cost = np.linalg.norm(query[:, None, :] - reference[None, :, :], axis=-1) / np.sqrt(d)
    acc = np.full((t_q, t_r), np.inf)
    steps = np.zeros((t_q, t_r), dtype=np.int32)
    acc[0, :] = cost[0, :]
    steps[0, :] = 1
    for i in range(1, t_q):
        for j in range(t_r):
            options = [(acc[i - 1, j], steps[i - 1, j])]
            if j > 0:
                options.append((acc[i - 1, j - 1], steps[i - 1, j - 1]))
                options.append((acc[i, j - 1], steps[i, j - 1]))
            best_cost, best_steps = min(options, key=lambda o: o[0])
            acc[i, j] = best_cost + cost[i, j]
            steps[i, j] = best_steps + 1
    end = int(np.argmin(acc[-1]))
    return float(acc[-1, end] / steps[-1, end])


def pairwise_similarity(clips: list[np.ndarray]) -> np.ndarray:
    """Symmetric similarity: negative mean of the two directed subsequence costs."""
    n = len(clips)
    sim = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = 0.5 * (subsequence_dtw_distance(clips[i], clips[j])
                       + subsequence_dtw_distance(clips[j], clips[i]))
            sim[i, j] = sim[j, i] = -d
    return sim


def dominant_split(clips: list[np.ndarray], k: int = 3, z_threshold: float = -1.5) -> list[bool]:
    """Label each clip of one gloss as dominant (True) or non-dominant.

    Per-clip KNN mean similarity under subsequence DTW; clips whose z-scored
    similarity falls below the threshold are non-dominant.
    """
    n = len(clips)
    if n == 0:
        return []
    if n == 1:
        return [True]
    sim = pairwise_similarity(clips)
    knn_means = []
    for i in range(n):
        others = np.delete(sim[i], i)
        top = np.sort(others)[::-1][: min(k, n - 1)]
        knn_means.append(top.mean())
    knn_means = np.asarray(knn_means)
    std = knn_means.std()
    if std < 1e-12:
        return [True] * n
    z = (knn_means - knn_means.mean()) / std
    return [bool(v >= z_threshold) for v in z]
