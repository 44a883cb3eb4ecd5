"""Panoptic quality (PQ, SQ, RQ), PQ-dagger and mIoU over one or more scans.

Conventions:

* Points whose ground-truth class is an ignore class are dropped before any
  counting, in both prediction and ground truth.
* A thing segment is a (class, instance) pair with instance != 0; thing points
  with instance 0 belong to no segment. Each stuff class is a single segment.
* Segments match when they share a class and their IoU exceeds 0.5.
* A class with no ground-truth and no predicted segments is left out of the
  averages; mIoU likewise skips classes with an empty union.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .model import ClassConfig, EvaluationError, SemanticMap

MATCH_IOU = 0.5
_SHIFT = 1 << 16


@dataclass(frozen=True)
class ClassScore:
    class_id: int
    name: str
    thing: bool
    pq: float
    sq: float
    rq: float
    iou: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class PanopticScores:
    per_class: dict[int, ClassScore]
    pq: float
    sq: float
    rq: float
    pq_th: float
    sq_th: float
    rq_th: float
    pq_st: float
    sq_st: float
    rq_st: float
    pq_dagger: float
    miou: float

    def aggregates(self) -> dict[str, float]:
        keys = ("pq", "sq", "rq", "pq_th", "sq_th", "rq_th", "pq_st", "sq_st", "rq_st", "pq_dagger", "miou")
        return {k: getattr(self, k) for k in keys}

    def to_dict(self) -> dict:
        return {
            "aggregates": self.aggregates(),
            "classes": [vars(s) for s in self.per_class.values()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        """Text table with scores in percent."""
        lines = [f"{'class':<16}{'PQ':>7}{'SQ':>7}{'RQ':>7}{'IoU':>7}{'TP':>6}{'FP':>6}{'FN':>6}"]
        for s in self.per_class.values():
            lines.append(
                f"{s.name:<16}{100 * s.pq:7.1f}{100 * s.sq:7.1f}{100 * s.rq:7.1f}{100 * s.iou:7.1f}"
                f"{s.tp:6d}{s.fp:6d}{s.fn:6d}"
            )
        lines.append("")
        for k, v in self.aggregates().items():
            lines.append(f"{k:<16}{100 * v:7.1f}")
        return "\n".join(lines)


def _segment_keys(semantic, instance, thing_table):
    # class * 2^16 + instance for thing points, class * 2^16 for stuff, -1 for none.
    key = semantic * _SHIFT
    thing = thing_table[semantic]
    key = np.where(thing, key + instance, key)
    return np.where(thing & (instance == 0), -1, key)


@dataclass
class PanopticEvaluator:
    """Accumulates matching counts and IoU sums over scans; ``scores()`` finalizes."""

    cfg: ClassConfig
    tp: np.ndarray = field(init=False)
    fp: np.ndarray = field(init=False)
    fn: np.ndarray = field(init=False)
    iou_sum: np.ndarray = field(init=False)
    inter: np.ndarray = field(init=False)
    union: np.ndarray = field(init=False)

    def __post_init__(self):
        n = _SHIFT
        self.tp = np.zeros(n, dtype=np.int64)
        self.fp = np.zeros(n, dtype=np.int64)
        self.fn = np.zeros(n, dtype=np.int64)
        self.iou_sum = np.zeros(n)
        self.inter = np.zeros(n, dtype=np.int64)
        self.union = np.zeros(n, dtype=np.int64)
        self._thing = np.zeros(n, dtype=bool)
        self._thing[self.cfg.thing_ids] = True
        self._known = np.zeros(n, dtype=bool)
        self._known[list(self.cfg.classes)] = True
        self._known[list(self.cfg.ignore)] = True
        self._ignore = np.zeros(n, dtype=bool)
        self._ignore[list(self.cfg.ignore)] = True

    def _check_classes(self, semantic: np.ndarray, what: str):
        present = np.unique(semantic)
        unknown = present[~self._known[present]]
        if unknown.size:
            raise EvaluationError(f"{what} contains class {int(unknown[0])} which is not in the class config")

    def add(self, pred: SemanticMap, gt: SemanticMap) -> None:
        """Accumulate one scan."""
        if len(pred) != len(gt):
            raise EvaluationError(f"prediction has {len(pred)} points, ground truth has {len(gt)}")
        gsem = gt.semantic.astype(np.int64)
        psem = pred.semantic.astype(np.int64)
        self._check_classes(gsem, "ground truth")
        self._check_classes(psem, "prediction")
        valid = ~self._ignore[gsem]
        gsem, psem = gsem[valid], psem[valid]
        ginst = gt.instance[valid].astype(np.int64)
        pinst = pred.instance[valid].astype(np.int64)
        # ignore-class predictions still count against the ground-truth class
        pvalid = ~self._ignore[psem]

        # Semantic IoU per class.
        same = gsem == psem
        self.inter += np.bincount(gsem[same], minlength=_SHIFT)
        self.union += (
            np.bincount(gsem, minlength=_SHIFT)
            + np.bincount(psem[pvalid], minlength=_SHIFT)
            - np.bincount(gsem[same], minlength=_SHIFT)
        )

        gkey = _segment_keys(gsem, ginst, self._thing)
        pkey = _segment_keys(psem, pinst, self._thing)
        pkey[~pvalid] = -1
        g_ids, g_area = np.unique(gkey[gkey >= 0], return_counts=True)
        p_ids, p_area = np.unique(pkey[pkey >= 0], return_counts=True)
        both = (gkey >= 0) & (pkey >= 0) & same
        n_p = max(len(p_ids), 1)
        pair = np.searchsorted(g_ids, gkey[both]) * n_p + np.searchsorted(p_ids, pkey[both])
        pair, inter = np.unique(pair, return_counts=True)
        gr, pr = pair // n_p, pair % n_p
        gk = g_ids[gr]
        union = g_area[gr] + p_area[pr] - inter
        iou = inter / union
        match = iou > MATCH_IOU
        # pairs are sorted by ground-truth key, which fixes the summation order
        m_cls = gk[match] // _SHIFT
        tp = np.bincount(m_cls, minlength=_SHIFT)
        self.tp += tp
        self.iou_sum += np.bincount(m_cls, weights=iou[match], minlength=_SHIFT)
        self.fn += np.bincount(g_ids // _SHIFT, minlength=_SHIFT) - tp
        self.fp += np.bincount(p_ids // _SHIFT, minlength=_SHIFT) - tp

    def merge(self, other: "PanopticEvaluator") -> "PanopticEvaluator":
        """Sum of two accumulators (neither input is modified)."""
        out = PanopticEvaluator(self.cfg)
        for name in ("tp", "fp", "fn", "iou_sum", "inter", "union"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        return out

    def scores(self) -> PanopticScores:
        return finalize(self.cfg, self.tp, self.fp, self.fn, self.iou_sum, self.inter, self.union)


def finalize(cfg, tp, fp, fn, iou_sum, inter, union) -> PanopticScores:
    per_class = {}
    things, stuffs, ious, dagger = [], [], [], []
    for c in sorted(cfg.classes):
        info = cfg.classes[c]
        t, f_p, f_n = int(tp[c]), int(fp[c]), int(fn[c])
        iou = float(inter[c] / union[c]) if union[c] else 0.0
        if union[c]:
            ious.append(iou)
        if t + f_p + f_n == 0:
            continue
        sq = float(iou_sum[c] / t) if t else 0.0
        rq = t / (t + 0.5 * f_p + 0.5 * f_n)
        score = ClassScore(c, info.name, info.thing, sq * rq, sq, rq, iou, t, f_p, f_n)
        per_class[c] = score
        (things if info.thing else stuffs).append(score)
        dagger.append(score.pq if info.thing else iou)

    def mean(values):
        return float(sum(values) / len(values)) if values else 0.0

    everything = things + stuffs
    return PanopticScores(
        per_class=per_class,
        pq=mean([s.pq for s in everything]),
        sq=mean([s.sq for s in everything]),
        rq=mean([s.rq for s in everything]),
        pq_th=mean([s.pq for s in things]),
        sq_th=mean([s.sq for s in things]),
        rq_th=mean([s.rq for s in things]),
        pq_st=mean([s.pq for s in stuffs]),
        sq_st=mean([s.sq for s in stuffs]),
        rq_st=mean([s.rq for s in stuffs]),
        pq_dagger=mean(dagger),
        miou=mean(ious),
    )


def evaluate(pred: SemanticMap, gt: SemanticMap, cfg: ClassConfig) -> PanopticScores:
    """Scores for a single scan."""
    ev = PanopticEvaluator(cfg)
    ev.add(pred, gt)
    return ev.scores()
