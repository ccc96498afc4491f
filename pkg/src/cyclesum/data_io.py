"""Dataset ingestion, synthetic benchmark generation with planted ground
truth, and split persistence.

On-disk layout: a dataset directory holds `dataset.json` (the manifest) and
one raw feature file per video (little-endian float32, row-major k x d, no
header). Ground truth is either one flat score array per video or one per
annotator. Split files are JSON arrays of {"train": [...], "test": [...]}.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from .eval_metrics import (GT_BUDGET_FRACTION, SegmentationError,
                           ShotSegmentation)

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


@dataclass
class VideoRecord:
    id: str
    features: np.ndarray                 # (k, d)
    gt_frame_scores: object | None = None  # (k,) array or list of such arrays
    segments: ShotSegmentation | None = None
    fps: float | None = None

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def gt_annotators(self) -> list[np.ndarray]:
        if self.gt_frame_scores is None:
            return []
        if isinstance(self.gt_frame_scores, np.ndarray) and self.gt_frame_scores.ndim == 1:
            return [self.gt_frame_scores]
        return [np.asarray(a, dtype=float) for a in self.gt_frame_scores]

    def validate(self) -> "VideoRecord":
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DatasetError(f"video {self.id}: features must be (k,d), got {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise DatasetError(f"video {self.id}: non-finite feature values")
        k = self.n_frames
        for a in self.gt_annotators():
            if a.shape != (k,):
                raise DatasetError(
                    f"video {self.id}: ground-truth length {a.shape} does not match k={k}")
            if not np.all(np.isfinite(a)) or a.min() < 0 or a.max() > 1:
                raise DatasetError(f"video {self.id}: ground-truth scores must be finite in [0,1]")
        if self.segments is not None and self.segments.n_frames != k:
            raise DatasetError(
                f"video {self.id}: segments cover {self.segments.n_frames} frames, expected {k}")
        return self

    def segmentation(self) -> ShotSegmentation:
        """Stored shot boundaries, or the default uniform segmentation."""
        return self.segments or ShotSegmentation.uniform(self.n_frames)


# ---------------------------------------------------------------------------
# synthetic benchmark
# ---------------------------------------------------------------------------

@dataclass
class SynthSpec:
    """Planted-event synthetic dataset description.

    Each video is a sequence of contiguous events. Non-salient events share
    a per-video background direction (with jitter), so their content is
    mutually redundant; salient events carry isolated directions that only
    they contain, which makes the planted summary both learnable by an
    information-preserving objective and recoverable by clustering.
    """
    n_videos: int = 20
    n_frames: int = 96
    feature_dim: int = 32
    n_events: int = 6
    salience: float = 0.3
    noise_scale: float = 0.05
    seed: int = 7

    def __post_init__(self):
        if self.n_videos < 1 or self.n_frames < 8 or self.feature_dim < 2:
            raise DatasetError("synthetic spec too small to be meaningful")
        if self.n_events < 2:
            raise DatasetError("need at least 2 events per video")
        if not 0 < self.salience < 1:
            raise DatasetError(f"salience fraction must be in (0,1), got {self.salience}")
        if self.noise_scale < 0:
            raise DatasetError("noise scale must be >= 0")


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _salient_center(rng, background, existing, dim, tries: int = 50) -> np.ndarray:
    best, best_sep = None, np.inf
    for _ in range(tries):
        c = _unit(rng.standard_normal(dim))
        sep = max([abs(float(c @ background))] + [abs(float(c @ e)) for e in existing])
        if sep < best_sep:
            best, best_sep = c, sep
        if sep < 0.5:
            break
    return best


def _event_lengths(rng, spec: SynthSpec) -> tuple[list[int], list[int]]:
    """Salient slot indices and per-event lengths.

    Salient events are sized to fit inside the benchmark selection budget
    (15% of frames) so the planted summary is actually selectable; the last
    event absorbs any rounding remainder.
    """
    k, n = spec.n_frames, spec.n_events
    n_sal = max(1, int(math.floor(spec.salience * n)))
    n_sal = min(n_sal, n - 1)
    budget = int(math.floor(GT_BUDGET_FRACTION * k))
    min_len = 3
    hi = max(min_len + 1, budget - 1)
    lo = max(min_len, (2 * hi) // 3)
    sal_lens = [int(rng.integers(lo, hi + 1)) for _ in range(n_sal)]
    # keep room for the non-salient events
    while sum(sal_lens) > k - min_len * (n - n_sal):
        sal_lens[sal_lens.index(max(sal_lens))] -= 1
    m = n - n_sal
    remaining = k - sum(sal_lens)
    w = rng.uniform(1.0, 2.0, size=m)
    other = np.maximum(np.floor(remaining * w / w.sum()).astype(int), min_len)
    other[-1] += remaining - int(other.sum())  # remainder-absorbing last event
    if other[-1] < min_len:  # pathological rounding; fall back to equal split
        other = np.full(m, remaining // m, dtype=int)
        other[-1] += remaining - int(other.sum())
    sal_slots = sorted(int(i) for i in rng.choice(n, size=n_sal, replace=False))
    lengths, si, oi = [], 0, 0
    for e in range(n):
        if e in sal_slots:
            lengths.append(sal_lens[si]); si += 1
        else:
            lengths.append(int(other[oi])); oi += 1
    return sal_slots, lengths


def generate_synthetic(spec: SynthSpec) -> list[VideoRecord]:
    """Build the planted-event dataset: background events cluster around a
    shared per-video direction, salient events carry isolated unit-norm
    directions, frames are event centers plus Gaussian noise. Ground truth
    marks the salient events' frames. Deterministic per seed."""
    records = []
    for v in range(spec.n_videos):
        rng = np.random.default_rng([int(spec.seed), v])
        sal_slots, lengths = _event_lengths(rng, spec)
        d = spec.feature_dim
        background = _unit(rng.standard_normal(d))
        centers = []
        sal_centers: list[np.ndarray] = []
        for e in range(spec.n_events):
            if e in sal_slots:
                c = _salient_center(rng, background, sal_centers, d)
                sal_centers.append(c)
            else:
                c = _unit(background + 0.15 * rng.standard_normal(d))
            centers.append(c)
        k = spec.n_frames
        feats = np.empty((k, d))
        gt = np.zeros(k)
        intervals = []
        pos = 0
        for e, L in enumerate(lengths):
            feats[pos:pos + L] = centers[e] + spec.noise_scale * rng.standard_normal((L, d))
            if e in sal_slots:
                gt[pos:pos + L] = 1.0
            intervals.append((pos, pos + L))
            pos += L
        records.append(VideoRecord(
            id=f"synth{v:03d}",
            features=feats,
            gt_frame_scores=gt,
            segments=ShotSegmentation(tuple(intervals)),
        ).validate())
    return records


# ---------------------------------------------------------------------------
# on-disk dataset
# ---------------------------------------------------------------------------

def save_dataset(records, directory: str):
    os.makedirs(os.path.join(directory, "features"), exist_ok=True)
    manifest = []
    for r in records:
        r.validate()
        rel = os.path.join("features", f"{r.id}.bin")
        r.features.astype("<f4").tofile(os.path.join(directory, rel))
        entry = {"id": r.id, "k": r.n_frames, "d": r.feature_dim, "features_file": rel}
        gts = r.gt_annotators()
        if len(gts) == 1:
            entry["gt"] = gts[0].tolist()
        elif len(gts) > 1:
            entry["gt"] = [a.tolist() for a in gts]
        if r.segments is not None:
            entry["segments"] = [list(iv) for iv in r.segments.intervals]
        if r.fps is not None:
            entry["fps"] = r.fps
        manifest.append(entry)
    with open(os.path.join(directory, "dataset.json"), "w") as fh:
        json.dump(manifest, fh)


def load_dataset(directory: str) -> list[VideoRecord]:
    """Load and validate a dataset directory; any invariant violation is
    rejected loudly with the offending video id."""
    path = os.path.join(directory, "dataset.json")
    with open(path) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as e:
            raise DatasetError(f"malformed dataset manifest {path}: {e}") from e
    if not manifest:
        log.warning("dataset manifest %s lists no videos", path)
        return []
    records = []
    for entry in manifest:
        vid = entry.get("id", "<missing id>")
        try:
            k, d = int(entry["k"]), int(entry["d"])
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"video {vid}: malformed k/d in manifest") from e
        fpath = os.path.join(directory, entry["features_file"])
        raw = np.fromfile(fpath, dtype="<f4")
        if raw.size != k * d:
            raise DatasetError(
                f"video {vid}: feature file holds {raw.size} values, expected {k}x{d}")
        feats = raw.astype(np.float64).reshape(k, d)
        gt = entry.get("gt")
        if gt is not None:
            try:
                gt_arr = np.asarray(gt, dtype=float)
            except (TypeError, ValueError) as e:
                raise DatasetError(f"video {vid}: malformed ground-truth numerics") from e
            if gt_arr.ndim == 1:
                gt_val = gt_arr
            elif gt_arr.ndim == 2:
                gt_val = [gt_arr[i] for i in range(gt_arr.shape[0])]
            else:
                raise DatasetError(f"video {vid}: ground truth must be 1-D or a list of 1-D arrays")
        else:
            gt_val = None
        seg = None
        if "segments" in entry:
            try:
                seg = ShotSegmentation(tuple((a, b) for a, b in entry["segments"]))
            except (SegmentationError, TypeError, ValueError) as e:
                raise DatasetError(f"video {vid}: bad segmentation: {e}") from e
        rec = VideoRecord(id=str(vid), features=feats, gt_frame_scores=gt_val,
                          segments=seg, fps=entry.get("fps"))
        records.append(rec.validate())
    return records


def save_splits(splits, path: str):
    for i, sp in enumerate(splits):
        overlap = set(sp["train"]) & set(sp["test"])
        if overlap:
            raise DatasetError(f"split {i}: train/test overlap: {sorted(overlap)}")
    with open(path, "w") as fh:
        json.dump([{"train": list(sp["train"]), "test": list(sp["test"])} for sp in splits], fh)


def load_splits(path: str, known_ids=None) -> list[dict]:
    with open(path) as fh:
        data = json.load(fh)
    splits = []
    for i, sp in enumerate(data):
        train, test = list(sp["train"]), list(sp["test"])
        overlap = set(train) & set(test)
        if overlap:
            raise DatasetError(f"split {i}: train/test overlap: {sorted(overlap)}")
        if known_ids is not None:
            unknown = [v for v in train + test if v not in set(known_ids)]
            if unknown:
                raise DatasetError(f"split {i}: unknown video ids: {unknown}")
        splits.append({"train": train, "test": test})
    return splits
