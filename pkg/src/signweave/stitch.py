"""Assemble refined gloss-pair outputs into sentence-level motion.

Pairs are split at their predicted boundary, shared glosses are cosine-fused on
a common grid, and each gloss is rescaled to the sentence duration plan.
"""
from __future__ import annotations

import numpy as np

from .duration import GlossPlan
from .motion import DEFAULT_FPS, MotionSequence, resample_frames


def split_at_boundary(frames: np.ndarray, boundary_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Left = frames [0, boundary), right = frames [boundary, T)."""
    frames = np.asarray(frames)
    t = frames.shape[0]
    if not 0 < boundary_index < t:
        raise ValueError(f"boundary {boundary_index} out of range for T={t}")
    return frames[:boundary_index].copy(), frames[boundary_index:].copy()


def fusion_weights(length: int) -> np.ndarray:
    """Raised-cosine ramp from 0 to 1; a single frame gets weight 0.5."""
    if length < 1:
        raise ValueError("length must be >= 1")
    if length == 1:
        return np.array([0.5])
    i = np.arange(length)
    return 0.5 * (1.0 - np.cos(np.pi * i / (length - 1)))


def cosine_fuse(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Blend two renditions of the same gloss on a common grid.

    Both segments are resampled to the rounded mean of their lengths, then
    mixed with raised-cosine weights so the result starts at a and ends at b.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[0] < 1 or b.shape[0] < 1:
        raise ValueError("segments must be non-empty")
    if a.shape[1] != b.shape[1]:
        raise ValueError("segment dims differ")
    length = (a.shape[0] + b.shape[0] + 1) // 2  # round half up
    a = resample_frames(a, length)
    b = resample_frames(b, length)
    w = fusion_weights(length)[:, None]
    return (1.0 - w) * a + w * b


def assemble_sentence(
    pairs: list[tuple[np.ndarray, int]],
    plan: GlossPlan,
    fps: int = DEFAULT_FPS,
) -> MotionSequence:
    """Stitch refined pairs (frames, boundary_index) covering glosses 1..K.

    Pair k covers glosses (k, k+1); the first/last gloss come from the outer
    pair halves, intermediate glosses fuse the two overlapping renditions.
    A single-gloss plan bypasses pairing and rescales the lone segment.
    """
    k = len(plan.lengths)
    if k == 1:
        if len(pairs) != 1:
            raise ValueError("single-gloss plan expects one segment")
        frames, _ = pairs[0]
        return MotionSequence(resample_frames(np.asarray(frames, dtype=np.float64), plan.lengths[0]), fps)
    if len(pairs) != k - 1:
        raise ValueError(f"plan with {k} glosses needs {k - 1} pairs, got {len(pairs)}")

    lefts = []
    rights = []
    for frames, boundary in pairs:
        left, right = split_at_boundary(np.asarray(frames, dtype=np.float64), boundary)
        lefts.append(left)
        rights.append(right)

    glosses = []
    for gi in range(k):
        if gi == 0:
            segment = lefts[0]
        elif gi == k - 1:
            segment = rights[-1]
        else:
            segment = cosine_fuse(rights[gi - 1], lefts[gi])
        glosses.append(resample_frames(segment, plan.lengths[gi]))
    return MotionSequence(np.concatenate(glosses, axis=0), fps)
