"""Author exposure under the ERR browsing model.

A user scans a ranking top-down. After examining the document at position
``i`` they stop with probability ``p_stop(doc)`` (a function of its binary
relevance) and otherwise continue with probability ``gamma``. The weight of
position ``i`` is the probability that it gets examined::

    w_i = gamma**(i-1) * prod_{j<i} (1 - p_stop(pi_j))

An author's exposure in a ranking is the sum of ``w_i`` over the positions
holding one of their documents; expected exposure sums this over every
ranking emitted for the query.
"""
from __future__ import annotations

import itertools
import math
from typing import Dict, Iterable, List

from .core import (
    EvalConfig,
    EvaluationError,
    ExposureVector,
    Ranking,
    RankingSequence,
    Request,
)

BRUTEFORCE_MAX_CANDIDATES = 8


def _relevance_of(doc_id: str, request: Request, config: EvalConfig) -> int:
    doc = request.get(doc_id)
    if doc is None:
        if config.strict_candidates:
            raise EvaluationError(
                f"document {doc_id!r} is not a candidate of query {request.qid!r}"
            )
        # Unknown documents count as non-relevant and authorless.
        return 0
    return doc.relevance


def position_weights(ranking: Ranking, request: Request, config: EvalConfig) -> List[float]:
    weights = []
    w = 1.0
    for doc_id in ranking:
        weights.append(w)
        w *= config.gamma * (1.0 - config.stop_prob(_relevance_of(doc_id, request, config)))
    return weights


def _accumulate(out: Dict[str, float], ranking: Ranking, request: Request, config: EvalConfig) -> None:
    w = 1.0
    for doc_id in ranking:
        doc = request.get(doc_id)
        if doc is None:
            rel = _relevance_of(doc_id, request, config)
        else:
            rel = doc.relevance
            for author in doc.authors:
                out[author] = out.get(author, 0.0) + w
        w *= config.gamma * (1.0 - config.stop_prob(rel))


def ranking_exposure(ranking: Ranking, request: Request, config: EvalConfig) -> ExposureVector:
    out: ExposureVector = {}
    _accumulate(out, ranking, request, config)
    return out


def sequence_exposure(seq: RankingSequence, request: Request, config: EvalConfig) -> ExposureVector:
    """Sum (not mean) of per-ranking author exposure over the sequence."""
    if not seq.rankings:
        raise EvaluationError(f"query {seq.qid!r}: cannot compute exposure of an empty sequence")
    return rankings_exposure(seq.rankings, request, config)


def rankings_exposure(rankings: Iterable[Ranking], request: Request, config: EvalConfig) -> ExposureVector:
    out: ExposureVector = {}
    for ranking in rankings:
        _accumulate(out, ranking, request, config)
    return out


def target_document_exposure(request: Request, config: EvalConfig) -> Dict[str, float]:
    """Per-impression exposure of each candidate under the ideal policy.

    The ideal policy draws uniformly from permutations whose relevance never
    increases with rank, so every relevant document is equally likely to sit
    at each of the first ``R`` positions and every non-relevant one at each
    of the remaining ``N - R``. With binary grades the examination
    probability of a position depends only on how many relevant documents
    precede it, which is fixed within each block.
    """
    n = len(request.candidates)
    r = request.num_relevant
    g = config.gamma
    keep_rel = 1.0 - config.stop_prob_relevant
    keep_non = 1.0 - config.stop_prob_nonrelevant

    rel_value = 0.0
    if r:
        rel_value = math.fsum((g * keep_rel) ** (i - 1) for i in range(1, r + 1)) / r
    non_value = 0.0
    if n > r:
        head = keep_rel ** r
        non_value = math.fsum(
            g ** (i - 1) * head * keep_non ** (i - 1 - r) for i in range(r + 1, n + 1)
        ) / (n - r)
    return {d.doc_id: (rel_value if d.relevance else non_value) for d in request.candidates}


def _authors_from_documents(request: Request, per_doc: Dict[str, float]) -> ExposureVector:
    out: ExposureVector = {}
    for doc in request.candidates:
        for author in doc.authors:
            out[author] = out.get(author, 0.0) + per_doc[doc.doc_id]
    return out


def target_exposure(request: Request, num_rankings: int, config: EvalConfig) -> ExposureVector:
    """Target expected exposure of each author over ``num_rankings`` impressions."""
    if not request.candidates:
        raise EvaluationError(f"query {request.qid!r} has no candidates")
    if num_rankings < 1:
        raise ValueError(f"num_rankings must be positive, got {num_rankings}")
    per_author = _authors_from_documents(request, target_document_exposure(request, config))
    return {a: v * num_rankings for a, v in per_author.items()}


def is_monotone(ranking: Ranking, request: Request) -> bool:
    """True when relevance never increases going down the ranking."""
    grades = [request.get(d).relevance for d in ranking]
    return all(a >= b for a, b in zip(grades, grades[1:]))


def target_exposure_bruteforce(request: Request, num_rankings: int, config: EvalConfig) -> ExposureVector:
    """Enumerate every monotone permutation and average its exposure.

    Test oracle for :func:`target_exposure`; refuses more than
    ``BRUTEFORCE_MAX_CANDIDATES`` candidates.
    """
    n = len(request.candidates)
    if n == 0:
        raise EvaluationError(f"query {request.qid!r} has no candidates")
    if n > BRUTEFORCE_MAX_CANDIDATES:
        raise ValueError(
            f"brute-force target limited to {BRUTEFORCE_MAX_CANDIDATES} candidates, got {n}"
        )
    relevant = [d for d in request.candidates if d.relevance]
    nonrelevant = [d for d in request.candidates if not d.relevance]
    total: ExposureVector = {}
    count = 0
    # Monotone permutations are exactly (ordering of relevant docs) + (ordering of the rest).
    for head, tail in itertools.product(
        itertools.permutations(relevant), itertools.permutations(nonrelevant)
    ):
        perm = head + tail
        count += 1
        examined = 1.0
        for i, doc in enumerate(perm):
            weight = config.gamma ** i * examined
            for author in doc.authors:
                total[author] = total.get(author, 0.0) + weight
            examined *= 1.0 - config.stop_prob(doc.relevance)
    return {a: v / count * num_rankings for a, v in total.items()}
