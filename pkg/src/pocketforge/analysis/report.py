"""Evaluate sample files against reference records and write reports"""

import csv
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

from ..data.export import write_tsv
from ..data.loader import SampleFile
from ..data.models import EnzymeReactionRecord
from ..errors import DegenerateGeometryError, LengthError
from .metrics import aar, aggregate_topk, crmsd, ec_metrics, group_by, tm_score
from .models import EvalReport, MetricDirection, SampleMetrics

logger = logging.getLogger(__name__)

METRICS = (
    ("crmsd", MetricDirection.MINIMIZE),
    ("tm_score", MetricDirection.MAXIMIZE),
    ("aar", MetricDirection.MAXIMIZE),
)


def evaluate_sample(name: str, sample: SampleFile, reference: EnzymeReactionRecord) -> SampleMetrics:
    """Metrics of one sample; structural metrics are None when undefined"""
    true_ca = reference.pocket.ca_angstrom(reference.origin)
    pred_ca = sample.ca
    if len(pred_ca) != len(true_ca):
        raise LengthError(f"{name}: {len(pred_ca)} residues, reference {reference.record_id} has {len(true_ca)}")
    try:
        rmsd = crmsd(pred_ca, true_ca)
    except DegenerateGeometryError:
        rmsd = None
    try:
        tm = tm_score(pred_ca, true_ca)
    except (LengthError, DegenerateGeometryError):
        tm = None
    return SampleMetrics(
        sample=name,
        record_id=reference.record_id,
        reaction_id=reference.reaction_id,
        crmsd=rmsd,
        tm_score=tm,
        aar=aar(sample.sequence, reference.pocket.sequence),
        ec_pred=sample.ec,
        ec_true=reference.ec_label,
    )


def evaluate_samples(
    samples: Sequence[Tuple[str, SampleFile]],
    references: Mapping[str, EnzymeReactionRecord],
    k: int = 10,
) -> EvalReport:
    """
    Pair samples with references by record id and aggregate per reaction

    Samples without a matching reference, or of a different length, are
    skipped with a warning.
    """
    rows: List[SampleMetrics] = []
    skipped: List[str] = []
    for name, sample in samples:
        reference = references.get(sample.record_id or "")
        if reference is None:
            logger.warning("%s: no reference record %r, skipped", name, sample.record_id)
            skipped.append(name)
            continue
        try:
            rows.append(evaluate_sample(name, sample, reference))
        except LengthError as e:
            logger.warning("%s, skipped", e)
            skipped.append(name)

    summaries = []
    for metric, direction in METRICS:
        present = [r for r in rows if getattr(r, metric) is not None]
        if present:
            grouped = group_by([r.reaction_id for r in present], [getattr(r, metric) for r in present])
            summaries.append(aggregate_topk(grouped, k, direction, metric=metric))

    labelled = [r for r in rows if r.ec_pred is not None and r.ec_true is not None]
    ec = ec_metrics([r.ec_pred for r in labelled], [r.ec_true for r in labelled]) if labelled else None
    return EvalReport(samples=rows, summaries=summaries, ec=ec, skipped=skipped)


def report_rows(report: EvalReport) -> List[Dict[str, object]]:
    """Summary rows: one per aggregated metric plus the EC metrics"""
    rows = [s.as_row() for s in report.summaries]
    if report.ec is not None:
        for name in ("accuracy", "precision", "recall", "f1"):
            value = getattr(report.ec, name)
            rows.append({"metric": f"ec_{name}", "top1": value, "topk": None, "median": None,
                         "k": None, "reactions": report.ec.count})
    return rows


def plot_rows(report: EvalReport) -> List[Tuple[str, str, float]]:
    """(metric, class, value) triples; class is the reference EC class or 'all'"""
    rows: List[Tuple[str, str, float]] = []
    for metric, _ in METRICS:
        values = [(r.ec_true, getattr(r, metric)) for r in report.samples if getattr(r, metric) is not None]
        if not values:
            continue
        rows.append((metric, "all", sum(v for _, v in values) / len(values)))
        for ec in sorted({c for c, _ in values if c is not None}):
            subset = [v for c, v in values if c == ec]
            rows.append((metric, f"EC{ec}", sum(subset) / len(subset)))
    if report.ec is not None:
        for name in ("accuracy", "precision", "recall", "f1"):
            rows.append((f"ec_{name}", "all", getattr(report.ec, name)))
        for ec, values in sorted(report.ec.per_class.items()):
            for name, value in values.items():
                rows.append((f"ec_{name}", f"EC{ec}", value))
    return rows


def write_report(report: EvalReport, directory: Union[str, Path]) -> Dict[str, Path]:
    """Write report.tsv, samples.tsv and plot.csv into ``directory``"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": write_tsv(directory / "report.tsv", report_rows(report),
                            ["metric", "top1", "topk", "median", "k", "reactions"]),
        "samples": write_tsv(directory / "samples.tsv", [r.as_row() for r in report.samples],
                             ["sample", "record_id", "reaction_id", "crmsd", "tm_score", "aar", "ec_pred", "ec_true"]),
    }
    plot = directory / "plot.csv"
    with open(plot, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["metric", "class", "value"])
        for metric, cls, value in plot_rows(report):
            writer.writerow([metric, cls, f"{value:.6g}"])
    paths["plot"] = plot
    logger.info("Wrote evaluation report to %s", directory)
    return paths
