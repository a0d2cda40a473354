"""Ranking metrics on two views: the retrieval-hit subset and all users.

Every test user has exactly one relevant item, so the metrics reduce to
closed forms of the ground truth's 1-based rank: recall@k is a hit
indicator, MRR@k is the reciprocal rank, NDCG@k is 1/log2(rank+1) (the
ideal DCG is 1). The Rank view averages over users whose ground truth was
retrieved at all; the Overall view averages over everyone, so
overall = rank_view * hit_rate holds exactly for each metric.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import DataError

DEFAULT_KS = (5, 10)
METRIC_FAMILIES = ("MRR", "NDCG", "Recall")


def metric_names(ks=DEFAULT_KS) -> list[str]:
    return [f"{fam}@{k}" for k in ks for fam in METRIC_FAMILIES]


def user_metric(gt_rank: int | None, k: int) -> tuple[float, float, float]:
    """(mrr, ndcg, recall) at cutoff k for a single user."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if gt_rank is None:
        return 0.0, 0.0, 0.0
    if gt_rank < 1:
        raise ValueError(f"ranks are 1-based, got {gt_rank}")
    if gt_rank > k:
        return 0.0, 0.0, 0.0
    return 1.0 / gt_rank, 1.0 / math.log2(gt_rank + 1), 1.0


@dataclass
class MetricsReport:
    n_users_total: int
    n_users_hit: int
    rank: dict[str, float] = field(default_factory=dict)
    overall: dict[str, float] = field(default_factory=dict)
    no_hits: bool = False

    @property
    def hit_rate(self) -> float:
        return self.n_users_hit / self.n_users_total if self.n_users_total else 0.0


def aggregate(results, ks=DEFAULT_KS) -> MetricsReport:
    """Mean user metrics on the hit subset and over all users.

    With zero hits the rank view is reported as 0 and flagged.
    """
    results = list(results)
    if not results:
        raise DataError("no ranking results to aggregate")
    seen = set()
    for r in results:
        if r.user_id in seen:
            raise DataError(f"duplicate ranking result for user {r.user_id!r}")
        seen.add(r.user_id)
    n_total = len(results)
    n_hit = sum(1 for r in results if r.gt_in_candidates)
    sums = {name: 0.0 for name in metric_names(ks)}
    for r in results:
        for k in ks:
            mrr, ndcg, recall = user_metric(r.gt_rank, k)
            sums[f"MRR@{k}"] += mrr
            sums[f"NDCG@{k}"] += ndcg
            sums[f"Recall@{k}"] += recall
    report = MetricsReport(n_total, n_hit, no_hits=n_hit == 0)
    for name, s in sums.items():
        report.rank[name] = s / n_hit if n_hit else 0.0
        report.overall[name] = s / n_total
    return report


def oracle_check(results, ks=DEFAULT_KS, tol: float = 1e-12) -> list[str]:
    """Recompute every aggregate with independent naive loops.

    Returns human-readable discrepancy descriptions; empty means agreement
    within tol. Shares no arithmetic with aggregate/user_metric on purpose.
    """
    report = aggregate(results, ks)
    results = list(results)
    discrepancies = []

    hit_users = 0
    for r in results:
        if r.gt_in_candidates:
            hit_users = hit_users + 1
    if hit_users != report.n_users_hit:
        discrepancies.append(
            f"n_users_hit: report {report.n_users_hit}, oracle {hit_users}")
    if len(results) != report.n_users_total:
        discrepancies.append(
            f"n_users_total: report {report.n_users_total}, oracle {len(results)}")

    for k in ks:
        for family in METRIC_FAMILIES:
            total = 0.0
            for r in results:
                value = 0.0
                if r.gt_rank is not None and r.gt_rank <= k:
                    if family == "MRR":
                        value = 1.0 / r.gt_rank
                    elif family == "NDCG":
                        value = 1.0 / (math.log(r.gt_rank + 1) / math.log(2.0))
                    else:
                        value = 1.0
                total = total + value
            name = f"{family}@{k}"
            expected_rank = total / hit_users if hit_users > 0 else 0.0
            expected_overall = total / len(results)
            if abs(expected_rank - report.rank[name]) > tol:
                discrepancies.append(
                    f"rank {name}: report {report.rank[name]!r}, oracle {expected_rank!r}")
            if abs(expected_overall - report.overall[name]) > tol:
                discrepancies.append(
                    f"overall {name}: report {report.overall[name]!r}, oracle {expected_overall!r}")
    return discrepancies


def format_report(report: MetricsReport, ks=DEFAULT_KS) -> str:
    """Aligned two-block grid: Rank view, then Overall view."""
    names = metric_names(ks)
    width = max(len(n) for n in names) + 2
    lines = [
        f"users: {report.n_users_total}   "
        f"hits (GT retrieved): {report.n_users_hit}   "
        f"hit rate: {report.hit_rate:.4f}"
    ]
    if report.no_hits:
        lines.append("warning: no retrieval hits; rank view is degenerate")
    for view, values in (("Rank", report.rank), ("Overall", report.overall)):
        lines.append(view)
        lines.append("  " + "".join(n.rjust(width) for n in names))
        lines.append("  " + "".join(f"{values[n]:.4f}".rjust(width) for n in names))
    return "\n".join(lines)


def write_report(path, report: MetricsReport, ks=DEFAULT_KS) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({
            "n_users_total": report.n_users_total,
            "n_users_hit": report.n_users_hit,
            "no_hits": report.no_hits,
        }) + "\n")
        for name in metric_names(ks):
            fh.write(json.dumps({
                "metric": name,
                "rank": report.rank[name],
                "overall": report.overall[name],
            }) + "\n")


def read_report(path) -> MetricsReport:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [json.loads(l) for l in fh if l.strip()]
    if not lines or "n_users_total" not in lines[0]:
        raise DataError(f"{path}: missing report header record")
    head = lines[0]
    report = MetricsReport(head["n_users_total"], head["n_users_hit"],
                           no_hits=head["no_hits"])
    for rec in lines[1:]:
        report.rank[rec["metric"]] = rec["rank"]
        report.overall[rec["metric"]] = rec["overall"]
    return report
