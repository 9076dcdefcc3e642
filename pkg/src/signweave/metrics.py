"""Alignment and quality metrics: DTW errors, Procrustes variants, length
ratio, Frechet gesture distance, translation metrics, and ranking metrics."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .motion import PartLayout


# ---------------------------------------------------------------------------
# DTW alignment


def frame_cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """cost[i, j] = mean Euclidean distance over points between frames i and j.

    a, b have shape (T, J, 3).
    """
    diff = a[:, None, :, :] - b[None, :, :, :]
    return np.linalg.norm(diff, axis=-1).mean(axis=-1)


def dtw_align(a: np.ndarray, b: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    """Optimal monotone alignment path under steps (1,0), (0,1), (1,1).

    Ties prefer the diagonal step. Returns the path from (0,0) to the final
    frame pair and the accumulated cost along it.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 3 or b.ndim != 3 or a.shape[1:] != b.shape[1:]:
        raise ValueError("inputs must be (T, J, 3) with matching point counts")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("empty sequences")
    cost = frame_cost_matrix(a, b)
    t_a, t_b = cost.shape
    acc = np.full((t_a + 1, t_b + 1), np.inf)
    acc[0, 0] = 0.0
    move = np.zeros((t_a, t_b), dtype=np.int8)  # 0 diag, 1 up (i-1), 2 left (j-1)
    for i in range(t_a):
        for j in range(t_b):
            options = (acc[i, j], acc[i, j + 1], acc[i + 1, j])
            best = int(np.argmin(options))  # argmin returns the first minimum: diagonal wins ties
            acc[i + 1, j + 1] = options[best] + cost[i, j]
            move[i, j] = best
    path = []
    i, j = t_a - 1, t_b - 1
    while True:
        path.append((i, j))
        if i == 0 and j == 0:
            break
        m = move[i, j]
        if m == 0:
            i, j = i - 1, j - 1
        elif m == 1:
            i -= 1
        else:
            j -= 1
        if i < 0 or j < 0:
            raise RuntimeError("traceback left the grid")
    path.reverse()
    return path, float(acc[t_a, t_b])


def dtw_error(a: np.ndarray, b: np.ndarray, subset: np.ndarray | None = None,
              procrustes_align: bool = False) -> float:
    """Mean per-point position error along the DTW path.

    With procrustes_align, each aligned frame pair is registered with a
    similarity transform first. The alignment itself uses the same subset of
    points as the reported error.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if subset is not None:
        subset = np.asarray(subset, dtype=int)
        if subset.size == 0:
            raise ValueError("empty point subset")
        a = a[:, subset, :]
        b = b[:, subset, :]
    path, total = dtw_align(a, b)
    if not procrustes_align:
        return total / len(path)
    errs = []
    for i, j in path:
        rot, scale, trans, _ = procrustes(a[i], b[j])
        aligned = scale * (a[i] @ rot.T) + trans
        errs.append(float(np.linalg.norm(aligned - b[j], axis=-1).mean()))
    return float(np.mean(errs))


def dtw_mpjpe(a: np.ndarray, b: np.ndarray, subset: np.ndarray | None = None) -> float:
    return dtw_error(a, b, subset, procrustes_align=False)


def dtw_pa_mpjpe(a: np.ndarray, b: np.ndarray, subset: np.ndarray | None = None) -> float:
    return dtw_error(a, b, subset, procrustes_align=True)


# ---------------------------------------------------------------------------
# Procrustes similarity registration


def procrustes(p: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, float, np.ndarray, bool]:
    """Similarity transform (R, s, t) minimizing sum ||s R p_j + t - q_j||^2.

    Returns (rotation, scale, translation, fallback). Rank-deficient point
    configurations fall back to translation only.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 2:
        raise ValueError("point sets must share shape (J, d)")
    n = p.shape[0]
    mu_p = p.mean(axis=0)
    mu_q = q.mean(axis=0)
    pc = p - mu_p
    qc = q - mu_q
    var_p = (pc**2).sum() / n
    cov = qc.T @ pc / n
    if var_p < 1e-18 or np.linalg.matrix_rank(cov) < p.shape[1] - 1:
        return np.eye(p.shape[1]), 1.0, mu_q - mu_p, True
    u, d, vt = np.linalg.svd(cov)
    sign = np.ones(p.shape[1])
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[-1] = -1.0
    rot = u @ np.diag(sign) @ vt
    scale = float((d * sign).sum() / var_p)
    trans = mu_q - scale * rot @ mu_p
    return rot, scale, trans, False


# ---------------------------------------------------------------------------
# aggregate motion metrics


def length_ratio(pred_lengths: Sequence[float], gt_lengths: Sequence[float]) -> float:
    """Mean of per-sample pred/gt length ratios."""
    pred = np.asarray(pred_lengths, dtype=np.float64)
    gt = np.asarray(gt_lengths, dtype=np.float64)
    if pred.shape != gt.shape or pred.size == 0:
        raise ValueError("length lists must be paired and non-empty")
    if np.any(gt <= 0):
        raise ValueError("ground-truth lengths must be positive")
    return float((pred / gt).mean())


def _sym_matrix_sqrt(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(m)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fgd(feats_a: np.ndarray, feats_b: np.ndarray, eps: float = 1e-6) -> float:
    """Frechet distance between Gaussian fits of two feature sets (N x F)."""
    feats_a = np.asarray(feats_a, dtype=np.float64)
    feats_b = np.asarray(feats_b, dtype=np.float64)
    if feats_a.ndim != 2 or feats_b.ndim != 2 or feats_a.shape[1] != feats_b.shape[1]:
        raise ValueError("feature sets must be N x F with matching F")
    f = feats_a.shape[1]
    mu_a, mu_b = feats_a.mean(axis=0), feats_b.mean(axis=0)
    cov_a = np.cov(feats_a, rowvar=False).reshape(f, f) + eps * np.eye(f)
    cov_b = np.cov(feats_b, rowvar=False).reshape(f, f) + eps * np.eye(f)
    # tr((A B)^{1/2}) computed symmetrically as tr((A^{1/2} B A^{1/2})^{1/2})
    root_a = _sym_matrix_sqrt(cov_a)
    cross = _sym_matrix_sqrt(root_a @ cov_b @ root_a)
    dist = float(((mu_a - mu_b) ** 2).sum() + np.trace(cov_a + cov_b - 2.0 * cross))
    return max(dist, 0.0)


# ---------------------------------------------------------------------------
# text metrics


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(hyp: Sequence[str], ref: Sequence[str]) -> float:
    """BLEU-4 with brevity penalty and add-one smoothing on orders 2..4."""
    if not ref:
        raise ValueError("reference must be non-empty")
    if not hyp:
        return 0.0
    log_precisions = []
    for n in range(1, 5):
        hyp_counts = _ngram_counts(hyp, n)
        ref_counts = _ngram_counts(ref, n)
        matches = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
        total = max(len(hyp) - n + 1, 0)
        if n == 1:
            if matches == 0:
                return 0.0
            p = matches / total
        else:
            p = (matches + 1.0) / (total + 1.0)
        log_precisions.append(math.log(p))
    bp = 1.0 if len(hyp) >= len(ref) else math.exp(1.0 - len(ref) / len(hyp))
    return bp * math.exp(sum(log_precisions) / 4.0)


def chrf(hyp: Sequence[str], ref: Sequence[str], max_n: int = 6, beta: float = 2.0) -> float:
    """Character n-gram F-score; whitespace is ignored."""
    if not ref:
        raise ValueError("reference must be non-empty")
    hyp_text = "".join(" ".join(hyp).split())
    ref_text = "".join(" ".join(ref).split())
    if not hyp_text:
        return 0.0
    precisions, recalls = [], []
    for n in range(1, max_n + 1):
        hyp_counts = _ngram_counts(hyp_text, n)
        ref_counts = _ngram_counts(ref_text, n)
        overlap = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
        hyp_total = sum(hyp_counts.values())
        ref_total = sum(ref_counts.values())
        if hyp_total > 0:
            precisions.append(overlap / hyp_total)
        if ref_total > 0:
            recalls.append(overlap / ref_total)
    if not precisions or not recalls:
        return 0.0
    p = float(np.mean(precisions))
    r = float(np.mean(recalls))
    if p == 0.0 and r == 0.0:
        return 0.0
    return (1.0 + beta**2) * p * r / (beta**2 * p + r)


def token_f1(hyp: Sequence[str], ref: Sequence[str]) -> float:
    """Bag-of-tokens F1 overlap."""
    if not hyp or not ref:
        return 0.0
    hyp_counts = Counter(hyp)
    ref_counts = Counter(ref)
    overlap = sum(min(c, ref_counts[t]) for t, c in hyp_counts.items())
    if overlap == 0:
        return 0.0
    precision = overlap / len(hyp)
    recall = overlap / len(ref)
    return 2.0 * precision * recall / (precision + recall)


def text_metrics(hyp: Sequence[str], ref: Sequence[str]) -> dict[str, float]:
    return {"bleu4": bleu4(hyp, ref), "chrf": chrf(hyp, ref), "f1": token_f1(hyp, ref)}


# ---------------------------------------------------------------------------
# ranking metrics


def reciprocal_rank(ranked_ids: Sequence[str], reference_id: str | None) -> float:
    if reference_id is None:
        return 0.0
    for rank, rid in enumerate(ranked_ids, start=1):
        if rid == reference_id:
            return 1.0 / rank
    return 0.0


def ranking_metrics(
    rank_lists: Sequence[Sequence[str]],
    references: Sequence[str | None],
    ks: Sequence[int] = (1, 5, 10),
) -> dict[str, float]:
    """MRR and Recall@k aggregated over queries; absent references score 0."""
    if len(rank_lists) != len(references):
        raise ValueError("one reference per ranked list required")
    n = len(rank_lists)
    if n == 0:
        raise ValueError("no queries")
    rrs = [reciprocal_rank(ranked, ref) for ranked, ref in zip(rank_lists, references)]
    out = {"mrr": float(np.mean(rrs))}
    for k in ks:
        hits = [1.0 if ref is not None and ref in list(ranked)[:k] else 0.0
                for ranked, ref in zip(rank_lists, references)]
        out[f"r@{k}"] = float(np.mean(hits))
    return out


# ---------------------------------------------------------------------------
# feature-to-points adapter


class SyntheticSkeletonAdapter:
    """Deterministic stand-in for forward kinematics in end-to-end tests.

    Body and hand parameter triples are read directly as pseudo-joint
    positions; expression coefficients map to face vertices through a fixed
    random linear basis (a stand-in for blendshapes).
    """

    def __init__(self, layout: PartLayout | None = None, face_vertices: int = 16, seed: int = 1234):
        self.layout = layout if layout is not None else PartLayout.base()
        rng = np.random.default_rng(seed)
        expr_dim = 50
        self._basis = rng.normal(0.0, 1.0 / np.sqrt(expr_dim), size=(face_vertices, 3, expr_dim))
        body_idx = self.layout.indices("body")
        hand_idx = np.concatenate([self.layout.indices("rhand"), self.layout.indices("lhand")])
        self._body_idx = body_idx
        self._hand_idx = hand_idx
        self._expr_idx = self.layout.indices("expression")
        self._jaw_idx = self.layout.indices("jaw")
        n_body = len(body_idx) // 3
        n_hand = len(hand_idx) // 3
        self.body_joints = np.arange(n_body)
        self.hand_joints = np.arange(n_body, n_body + n_hand)
        jaw_start = n_body + n_hand
        self.face_vertices = np.arange(jaw_start, jaw_start + 1 + face_vertices)
        self.num_points = jaw_start + 1 + face_vertices

    def to_points(self, frames: np.ndarray) -> np.ndarray:
        """(T, D) features -> (T, J, 3) pseudo-points."""
        frames = np.asarray(frames, dtype=np.float64)
        t = frames.shape[0]
        body = frames[:, self._body_idx].reshape(t, -1, 3)
        hands = frames[:, self._hand_idx].reshape(t, -1, 3)
        jaw = frames[:, self._jaw_idx].reshape(t, 1, 3)
        expr = frames[:, self._expr_idx]
        face = np.einsum("vce,te->tvc", self._basis, expr)
        return np.concatenate([body, hands, jaw, face], axis=1)


@dataclass
class MotionMetricsReport:
    """One row of the evaluation table."""

    dtw_mpjpe_body: float
    dtw_mpjpe_hands: float
    dtw_mpjpe_overall: float
    dtw_mpvpe_face: float
    dtw_pa_mpjpe: float
    length_ratio: float
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        row = {
            "dtw_mpjpe_body": self.dtw_mpjpe_body,
            "dtw_mpjpe_hands": self.dtw_mpjpe_hands,
            "dtw_mpjpe_overall": self.dtw_mpjpe_overall,
            "dtw_mpvpe_face": self.dtw_mpvpe_face,
            "dtw_pa_mpjpe": self.dtw_pa_mpjpe,
            "length_ratio": self.length_ratio,
        }
        row.update(self.extras)
        return row
