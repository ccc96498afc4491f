"""Keyshot evaluation protocol: frame-to-shot conversion, budgeted knapsack
selection, precision/recall/F-measure, annotator aggregation and split
management."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GT_BUDGET_FRACTION = 0.15  # benchmark ground-truth summary length


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True)
class ShotSegmentation:
    """Ordered, disjoint, covering list of half-open frame intervals."""
    intervals: tuple

    def __post_init__(self):
        iv = tuple((int(a), int(b)) for a, b in self.intervals)
        object.__setattr__(self, "intervals", iv)
        if not iv:
            raise SegmentationError("segmentation must contain at least one shot")
        if iv[0][0] != 0:
            raise SegmentationError(f"first shot must start at 0, got {iv[0][0]}")
        for i, (a, b) in enumerate(iv):
            if b - a < 1:
                raise SegmentationError(f"shot {i} has non-positive length: [{a},{b})")
            if i and a != iv[i - 1][1]:
                raise SegmentationError(
                    f"shots {i-1} and {i} are not contiguous: [{iv[i-1][0]},{iv[i-1][1]}) then [{a},{b})")

    @property
    def n_frames(self) -> int:
        return self.intervals[-1][1]

    @property
    def n_shots(self) -> int:
        return len(self.intervals)

    def lengths(self) -> np.ndarray:
        return np.array([b - a for a, b in self.intervals], dtype=int)

    @classmethod
    def uniform(cls, n_frames: int, shot_len: int | None = None) -> "ShotSegmentation":
        """Uniform shots of length ceil(k/20) by default; last absorbs the remainder."""
        if n_frames < 1:
            raise SegmentationError("n_frames must be >= 1")
        L = shot_len or max(1, math.ceil(n_frames / 20))
        starts = list(range(0, n_frames, L))
        iv = [(s, min(s + L, n_frames)) for s in starts]
        # merge a short tail into the previous shot so lengths stay >= L where possible
        if len(iv) > 1 and iv[-1][1] - iv[-1][0] < L:
            iv[-2] = (iv[-2][0], iv[-1][1])
            iv.pop()
        return cls(tuple(iv))


def frame_to_shot_scores(x, seg: ShotSegmentation) -> np.ndarray:
    """Per-shot score: mean of frame scores over each shot."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != seg.n_frames:
        raise SegmentationError(
            f"scores cover {x.shape[0] if x.ndim == 1 else x.shape} frames, "
            f"segmentation covers {seg.n_frames}")
    return np.array([x[a:b].mean() for a, b in seg.intervals])


def _candidate_better(cand, best):
    # maximize value, then fewer frames, then lexicographically smallest set
    if cand[0] != best[0]:
        return cand[0] > best[0]
    if cand[1] != best[1]:
        return cand[1] < best[1]
    return cand[2] < best[2]


def knapsack_select(scores, lengths, capacity: int) -> list[int]:
    """Exact 0/1 knapsack over shots: maximize total score within a frame
    budget. Ties: fewer total frames, then lexicographically smallest index
    set. Shots with score <= 0 are never chosen."""
    scores = [float(s) for s in scores]
    lengths = [int(l) for l in lengths]
    if len(scores) != len(lengths):
        raise ValueError(f"{len(scores)} scores vs {len(lengths)} lengths")
    if any(l < 1 for l in lengths):
        raise ValueError("shot lengths must be >= 1")
    capacity = int(capacity)
    if capacity < 0:
        raise ValueError(f"capacity must be >= 0, got {capacity}")

    items = [(i, s, l) for i, (s, l) in enumerate(zip(scores, lengths))
             if s > 0.0 and l <= capacity]
    best = [(0.0, 0, ())] * (capacity + 1)
    for i, s, l in items:
        for w in range(capacity, l - 1, -1):
            base = best[w - l]
            cand = (base[0] + s, base[1] + l, base[2] + (i,))
            if _candidate_better(cand, best[w]):
                best[w] = cand
    return list(best[capacity][2])


def knapsack_brute_force(scores, lengths, capacity: int) -> list[int]:
    """Exhaustive reference solver with the same tie-break rule (small n only)."""
    n = len(scores)
    if n > 20:
        raise ValueError("brute force limited to 20 items")
    best = (0.0, 0, ())
    for mask in range(1 << n):
        total = 0.0
        frames = 0
        chosen = []
        ok = True
        for i in range(n):
            if mask >> i & 1:
                if scores[i] <= 0.0:
                    ok = False
                    break
                total += float(scores[i])
                frames += int(lengths[i])
                chosen.append(i)
        if not ok or frames > capacity:
            continue
        cand = (total, frames, tuple(chosen))
        if _candidate_better(cand, best):
            best = cand
    return list(best[2])


@dataclass
class EvalResult:
    precision: float
    recall: float
    f_score: float
    selected: int
    budget: int | None = None


def f_measure(pred_frames, gt_frames, budget: int | None = None) -> EvalResult:
    """Frame-overlap precision/recall and their harmonic mean."""
    pred = np.asarray(pred_frames).astype(bool)
    gt = np.asarray(gt_frames).astype(bool)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction/ground-truth lengths differ: {pred.shape} vs {gt.shape}")
    overlap = int(np.sum(pred & gt))
    n_pred = int(pred.sum())
    n_gt = int(gt.sum())
    precision = overlap / n_pred if n_pred else 0.0
    recall = overlap / n_gt if n_gt else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return EvalResult(precision, recall, f, n_pred, budget)


def aggregate_annotators(per_user_f, mode: str = "mean") -> float:
    vals = [float(v) for v in per_user_f]
    if not vals:
        raise ValueError("no annotator scores to aggregate")
    if mode == "mean":
        return sum(vals) / len(vals)
    if mode == "max":
        return max(vals)
    raise ValueError(f"aggregation mode must be 'mean' or 'max', got {mode!r}")


def make_splits(ids, n_splits: int = 5, train_fraction: float = 0.8,
                seed: int = 0) -> list[dict]:
    """Seeded random train/test partitions (deterministic per master seed)."""
    ids = list(ids)
    if len(ids) < n_splits:
        raise ValueError(f"need at least {n_splits} videos, got {len(ids)}")
    n_train = int(round(train_fraction * len(ids)))
    n_train = min(max(n_train, 1), len(ids) - 1)
    splits = []
    for i in range(n_splits):
        rng = np.random.default_rng([int(seed), i])
        perm = rng.permutation(len(ids))
        train = sorted(ids[j] for j in perm[:n_train])
        test = sorted(ids[j] for j in perm[n_train:])
        splits.append({"train": train, "test": test})
    return splits


def run_splits(records, splits, train_fn, eval_fn):
    """Train/evaluate across persisted partitions.

    train_fn(train_records, split_index) -> model;
    eval_fn(model, test_records) -> F score.
    Returns (per-split F list, mean F).
    """
    by_id = {r.id: r for r in records}
    per_split = []
    for i, sp in enumerate(splits):
        missing = [v for v in sp["train"] + sp["test"] if v not in by_id]
        if missing:
            raise ValueError(f"split {i} references unknown video ids: {missing}")
        train_recs = [by_id[v] for v in sp["train"]]
        test_recs = [by_id[v] for v in sp["test"]]
        model = train_fn(train_recs, i)
        per_split.append(float(eval_fn(model, test_recs)))
    return per_split, sum(per_split) / len(per_split)
