"""ROC/AUC evaluation and experiment report emission.

Score orientation is fixed at this API boundary: higher score means
"predicted out-of-distribution". Baselines that rank the other way (plain
likelihood is low for anomalies) must be negated by the caller, or
compared via both orientations; reports emit both to avoid silent AUC
inversion.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class RocCurve:
    """Threshold-sweep ROC: points (fpr, tpr) sorted by fpr, plus trapezoidal AUC."""

    points: np.ndarray  # (k, 2) columns fpr, tpr
    auc: float


def roc_auc(in_scores: Sequence[float], out_scores: Sequence[float]) -> RocCurve:
    """ROC curve and AUC for separating out_scores (positives) from in_scores.

    Sweeps thresholds over the union of observed scores; a sample counts as
    predicted-positive when its score >= threshold. Ties between the two
    sets contribute half credit, so the trapezoidal area equals the rank
    statistic P(out > in) + 0.5 P(out = in).
    """
    ins = np.asarray(in_scores, dtype=np.float64)
    outs = np.asarray(out_scores, dtype=np.float64)
    if ins.size == 0 or outs.size == 0:
        raise ValueError("both score lists must be nonempty")
    thresholds = np.unique(np.concatenate([ins, outs]))[::-1]
    fpr = [0.0]
    tpr = [0.0]
    for t in thresholds:
        fpr.append(float(np.mean(ins >= t)))
        tpr.append(float(np.mean(outs >= t)))
    points = np.column_stack([fpr, tpr])
    auc = float(np.trapz(points[:, 1], points[:, 0]))
    return RocCurve(points, auc)


def histogram(scores: Sequence[float], bins: int) -> list[tuple[float, float, int]]:
    """Equal-width bins over [min, max]; returns (low_edge, high_edge, count) rows."""
    values = np.asarray(scores, dtype=np.float64)
    if values.size == 0:
        raise ValueError("scores must be nonempty")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(values, bins=bins)
    return [
        (float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(len(counts))
    ]


# -- Experiment report ---------------------------------------------------------


@dataclass
class ScoreSet:
    """One labeled bag of per-sample scores, ready for the score-dump CSV."""

    name: str
    rows: list[tuple]  # (sample_id, LRScore, label)


@dataclass
class AucCell:
    kind: str
    severity: str
    method: str
    auc: float


@dataclass
class ExperimentReport:
    """Everything the report writer needs to emit a reproducible bundle."""

    config: dict
    auc_cells: list[AucCell] = field(default_factory=list)
    score_sets: list[ScoreSet] = field(default_factory=list)
    roc_curves: dict[str, RocCurve] = field(default_factory=dict)
    summary_extra: dict = field(default_factory=dict)


def write_report(report: ExperimentReport, outdir) -> None:
    """Emit the report bundle; identical inputs produce byte-identical files.

    Files: auc_table.csv (kind x severity rows, one column per method),
    scores_<name>.csv per score set, roc_<key>.csv per curve, and
    summary.json with the configuration fingerprint and extras in stable
    key order.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    methods = sorted({c.method for c in report.auc_cells})
    groups: dict[tuple[str, str], dict[str, float]] = {}
    for cell in report.auc_cells:
        groups.setdefault((cell.kind, cell.severity), {})[cell.method] = cell.auc
    with open(outdir / "auc_table.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["kind", "severity", *methods])
        for (kind, severity) in sorted(groups):
            row = groups[(kind, severity)]
            writer.writerow(
                [kind, severity, *(repr(row[m]) if m in row else "" for m in methods)]
            )

    from .regret import write_scores_csv  # local import: avoids a module cycle

    for score_set in report.score_sets:
        write_scores_csv(score_set.rows, outdir / f"scores_{score_set.name}.csv")

    for key in sorted(report.roc_curves):
        curve = report.roc_curves[key]
        with open(outdir / f"roc_{key}.csv", "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["fpr", "tpr"])
            for fpr, tpr in curve.points:
                writer.writerow([repr(float(fpr)), repr(float(tpr))])

    summary = {
        "config": report.config,
        "auc": {
            f"{kind}:{severity}": dict(sorted(groups[(kind, severity)].items()))
            for (kind, severity) in sorted(groups)
        },
        **report.summary_extra,
    }
    with open(outdir / "summary.json", "w") as handle:
        json.dump(summary, handle, sort_keys=True, indent=2)
        handle.write("\n")


def read_auc_table(path) -> dict[tuple[str, str], dict[str, float]]:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        methods = header[2:]
        table: dict[tuple[str, str], dict[str, float]] = {}
        for row in reader:
            table[(row[0], row[1])] = {
                m: float(v) for m, v in zip(methods, row[2:]) if v != ""
            }
    return table
