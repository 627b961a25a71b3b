"""Structural and functional metrics for generated pockets"""

import logging
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np

from ..errors import DegenerateGeometryError, LengthError, ShapeError
from .models import ECMetrics, MetricDirection, TopKSummary

logger = logging.getLogger(__name__)

EC_CLASSES = tuple(range(1, 8))
TM_MIN_LENGTH = 16


def _points(x: Union[np.ndarray, Sequence[Sequence[float]]]) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).reshape(-1, 3)


def kabsch_align(p: np.ndarray, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Least-squares superposition of P onto Q

    Args:
        p: Mobile points [N, 3]
        q: Target points [N, 3]

    Returns:
        (R, t, rmsd) with R @ p_i + t the superposed points
    """
    p, q = _points(p), _points(q)
    if p.shape != q.shape:
        raise ShapeError(f"point sets differ in shape: {p.shape} vs {q.shape}")
    if p.shape[0] < 3:
        raise DegenerateGeometryError(f"superposition needs at least 3 points, got {p.shape[0]}")
    p_mean, q_mean = p.mean(axis=0), q.mean(axis=0)
    pc, qc = p - p_mean, q - q_mean
    u, s, vt = np.linalg.svd(pc.T @ qc)
    if s[0] <= 0 or s[1] < 1e-9 * s[0]:
        raise DegenerateGeometryError("rank-deficient covariance (coincident or collinear points)")
    d = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    trans = q_mean - rot @ p_mean
    residual = p @ rot.T + trans - q
    rmsd = float(np.sqrt((residual * residual).sum(-1).mean()))
    return rot, trans, rmsd


def crmsd(p: np.ndarray, q: np.ndarray) -> float:
    """CA RMSD after optimal superposition"""
    return kabsch_align(p, q)[2]


def tm_d0(n: int) -> float:
    if n < TM_MIN_LENGTH:
        raise LengthError(f"TM-score needs at least {TM_MIN_LENGTH} residues, got {n}")
    return 1.24 * (n - 15) ** (1.0 / 3.0) - 1.8


def tm_score(p: np.ndarray, q: np.ndarray) -> float:
    """TM-score of P against Q under the Kabsch superposition, positional correspondence"""
    p, q = _points(p), _points(q)
    d0 = tm_d0(len(q))
    rot, trans, _ = kabsch_align(p, q)
    d = np.linalg.norm(p @ rot.T + trans - q, axis=-1)
    return float(np.mean(1.0 / (1.0 + (d / d0) ** 2)))


def aar(pred: Sequence, true: Sequence) -> float:
    """Fraction of positions with the same amino acid"""
    if len(pred) != len(true):
        raise ShapeError(f"sequences differ in length: {len(pred)} vs {len(true)}")
    if len(true) == 0:
        raise ShapeError("amino-acid recovery of an empty sequence")
    return sum(a == b for a, b in zip(pred, true)) / len(true)


def ec_metrics(pred: Sequence[int], true: Sequence[int]) -> ECMetrics:
    """Accuracy plus precision, recall and F1 macro-averaged over the classes
    seen in either labels or predictions; an undefined ratio counts as 0."""
    if len(pred) != len(true):
        raise ShapeError(f"{len(pred)} predictions for {len(true)} labels")
    if not true:
        return ECMetrics(accuracy=0.0, precision=0.0, recall=0.0, f1=0.0)
    pred_a, true_a = np.asarray(pred), np.asarray(true)
    per_class = {}
    for c in sorted(set(pred_a.tolist()) | set(true_a.tolist())):
        tp = int(((pred_a == c) & (true_a == c)).sum())
        fp = int(((pred_a == c) & (true_a != c)).sum())
        fn = int(((pred_a != c) & (true_a == c)).sum())
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[int(c)] = {"precision": precision, "recall": recall, "f1": f1}
    return ECMetrics(
        accuracy=float((pred_a == true_a).mean()),
        precision=float(np.mean([m["precision"] for m in per_class.values()])),
        recall=float(np.mean([m["recall"] for m in per_class.values()])),
        f1=float(np.mean([m["f1"] for m in per_class.values()])),
        per_class=per_class,
        count=len(true),
    )


def aggregate_topk(
    groups: Mapping[str, Sequence[float]],
    k: int,
    direction: MetricDirection,
    metric: str = "metric",
) -> TopKSummary:
    """
    Aggregate per-sample values grouped by reaction

    Within a reaction: the best value, the mean of the best ``k`` and the
    median; each is then averaged over reactions.  A group smaller than
    ``k`` contributes all of its values.
    """
    if not groups:
        raise ShapeError("aggregation needs at least one group")
    top1: List[float] = []
    topk: List[float] = []
    median: List[float] = []
    for name, values in groups.items():
        if len(values) == 0:
            raise ShapeError(f"group {name!r} has no samples")
        ordered = sorted(values, reverse=direction is MetricDirection.MAXIMIZE)
        if k > len(ordered):
            logger.info("%s: %s has %d samples, top-%d uses all of them", metric, name, len(ordered), k)
        top1.append(ordered[0])
        topk.append(float(np.mean(ordered[:k])))
        median.append(float(np.median(ordered)))
    return TopKSummary(
        metric=metric,
        direction=direction,
        k=k,
        top1=float(np.mean(top1)),
        topk=float(np.mean(topk)),
        median=float(np.mean(median)),
        groups=len(groups),
    )


def group_by(keys: Sequence[str], values: Sequence[float]) -> Dict[str, List[float]]:
    grouped: Dict[str, List[float]] = {}
    for key, value in zip(keys, values):
        grouped.setdefault(key, []).append(value)
    return grouped
