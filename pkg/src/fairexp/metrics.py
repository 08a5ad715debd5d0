"""Group exposure, the expected-exposure (EE) metric and run summaries."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .core import (
    EvalConfig,
    EvaluationError,
    ExposureVector,
    GroupAssignment,
    GroupExposure,
    RankingSequence,
    Request,
    validate_request_run,
)
from .exposure import sequence_exposure, target_exposure

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QueryMetrics:
    qid: str
    ee: float
    disparity: float
    relevance: float
    system_group_exposure: GroupExposure
    target_group_exposure: GroupExposure
    unassigned_author_exposure: float
    target_unassigned_exposure: float = 0.0
    num_rankings: int = 1

    @property
    def normalized_ee(self) -> float:
        """EE divided by the number of impressions."""
        return self.ee / self.num_rankings


@dataclass
class RunMetrics:
    run_id: str
    per_query: List[QueryMetrics] = field(default_factory=list)
    mean_ee: float = math.nan
    mean_disparity: float = math.nan
    mean_relevance: float = math.nan

    @classmethod
    def from_queries(cls, run_id: str, per_query: Iterable[QueryMetrics]) -> "RunMetrics":
        rows = sorted(per_query, key=lambda m: m.qid)
        if not rows:
            return cls(run_id, [])
        n = len(rows)
        return cls(
            run_id,
            rows,
            mean_ee=math.fsum(m.ee for m in rows) / n,
            mean_disparity=math.fsum(m.disparity for m in rows) / n,
            mean_relevance=math.fsum(m.relevance for m in rows) / n,
        )


def group_exposure(exposure: Mapping[str, float], groups: GroupAssignment) -> Tuple[GroupExposure, float]:
    """Sum author exposure by group; unassigned authors go to the second return value."""
    out: GroupExposure = {}
    unassigned = 0.0
    for author, value in exposure.items():
        gid = groups.get(author)
        if gid is None:
            unassigned += value
        else:
            out[gid] = out.get(gid, 0.0) + value
    return out, unassigned


def ee_metric(system: Mapping[str, float], target: Mapping[str, float]) -> float:
    """Euclidean distance between system and target group exposure.

    Groups missing from one side count as zero there.
    """
    keys = set(system) | set(target)
    return math.sqrt(math.fsum((system.get(g, 0.0) - target.get(g, 0.0)) ** 2 for g in keys))


def decompose(system: Mapping[str, float], target: Mapping[str, float]) -> Tuple[float, float]:
    """Return ``(disparity, relevance)``.

    ``ee**2 == disparity - 2 * relevance + sum(target**2)``, so at a fixed
    target, lower disparity and higher relevance both lower EE.
    """
    disparity = math.fsum(v * v for v in system.values())
    relevance = math.fsum(v * target.get(g, 0.0) for g, v in system.items())
    return disparity, relevance


def evaluate_query(
    request: Request,
    seq: RankingSequence,
    groups: GroupAssignment,
    config: EvalConfig,
) -> QueryMetrics:
    report = validate_request_run(request, seq, config)
    if not seq.rankings or seq.qid != request.qid:
        raise EvaluationError("; ".join(v.message for v in report.violations))
    if not report.ok and config.strict_candidates:
        raise EvaluationError("; ".join(v.message for v in report.violations))
    # Lenient mode scores the rankings as given.
    for w in report.violations + report.warnings:
        log.warning(w.message)

    k = len(seq.rankings)
    system, unassigned = group_exposure(sequence_exposure(seq, request, config), groups)
    target, target_unassigned = group_exposure(target_exposure(request, k, config), groups)
    disparity, relevance = decompose(system, target)
    return QueryMetrics(
        qid=request.qid,
        ee=ee_metric(system, target),
        disparity=disparity,
        relevance=relevance,
        system_group_exposure=system,
        target_group_exposure=target,
        unassigned_author_exposure=unassigned,
        target_unassigned_exposure=target_unassigned,
        num_rankings=k,
    )


def _evaluate_job(args):
    return evaluate_query(*args)


def evaluate_run(
    requests: Sequence[Request],
    runs: Mapping[str, RankingSequence],
    groups: GroupAssignment,
    config: EvalConfig,
    run_id: str = "run",
    jobs: int = 1,
) -> RunMetrics:
    """Evaluate every query of a run and average the per-query metrics.

    In strict mode (``config.strict_candidates``) a request without rankings
    or rankings for an unknown query abort the evaluation; otherwise such
    queries are skipped with a warning and the means cover the rest.
    """
    by_qid: Dict[str, Request] = {r.qid: r for r in requests}
    problems = []
    for qid in sorted(set(by_qid) - set(runs)):
        problems.append(f"run {run_id!r} has no rankings for query {qid!r}")
    for qid in sorted(set(runs) - set(by_qid)):
        problems.append(f"run {run_id!r} ranks unknown query {qid!r}")
    if problems:
        if config.strict_candidates:
            raise EvaluationError("; ".join(problems))
        for p in problems:
            log.warning(p)

    work = [(by_qid[q], runs[q], groups, config) for q in sorted(set(by_qid) & set(runs))]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_query = list(pool.map(_evaluate_job, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        per_query = [evaluate_query(*w) for w in work]
    return RunMetrics.from_queries(run_id, per_query)


def leaderboard(runs: Iterable[RunMetrics]) -> List[RunMetrics]:
    """Runs in increasing mean EE (smaller is better), ties broken by run id."""
    return sorted(runs, key=lambda r: (r.mean_ee, r.run_id))
