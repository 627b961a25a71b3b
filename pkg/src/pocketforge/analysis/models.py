"""Data models for evaluation results"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional


class MetricDirection(Enum):
    """Which end of a metric is better"""

    MINIMIZE = "min"
    MAXIMIZE = "max"


@dataclass
class SampleMetrics:
    """Metrics of one generated pocket against its reference"""

    sample: str
    record_id: str
    reaction_id: str
    crmsd: Optional[float]
    tm_score: Optional[float]
    aar: float
    ec_pred: Optional[int] = None  # 1..7
    ec_true: Optional[int] = None

    def as_row(self) -> Dict[str, object]:
        return {
            "sample": self.sample,
            "record_id": self.record_id,
            "reaction_id": self.reaction_id,
            "crmsd": self.crmsd,
            "tm_score": self.tm_score,
            "aar": self.aar,
            "ec_pred": self.ec_pred,
            "ec_true": self.ec_true,
        }


@dataclass
class TopKSummary:
    """Per-reaction best, mean of the best k, and median, averaged over reactions"""

    metric: str
    direction: MetricDirection
    k: int
    top1: float
    topk: float
    median: float
    groups: int

    def as_row(self) -> Dict[str, object]:
        return {
            "metric": self.metric,
            "top1": self.top1,
            "topk": self.topk,
            "median": self.median,
            "k": self.k,
            "reactions": self.groups,
        }


@dataclass
class ECMetrics:
    """Exact-match accuracy and macro one-vs-rest precision, recall and F1"""

    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: Dict[int, Dict[str, float]] = field(default_factory=dict)
    count: int = 0


@dataclass
class EvalReport:
    samples: List[SampleMetrics]
    summaries: List[TopKSummary]
    ec: Optional[ECMetrics] = None
    skipped: List[str] = field(default_factory=list)

    def summary(self, metric: str) -> Optional[TopKSummary]:
        return next((s for s in self.summaries if s.metric == metric), None)
