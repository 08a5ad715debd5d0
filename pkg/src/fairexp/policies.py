"""Baseline ranking policies and the repeated-impression protocol loop.

Randomness: each query sequence owns a numpy ``PCG64`` generator seeded with
``SeedSequence(seed, spawn_key=(crc32(qid),))`` and consumed impression by
impression. A sequence therefore depends only on the policy seed and the
query id, not on which other queries were simulated or in what order.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .core import EvalConfig, Ranking, RankingSequence, Request
from .exposure import ranking_exposure, target_exposure

DETERMINISTIC = "deterministic-relevance"
UNIFORM = "uniform-random"
IDEAL = "ideal-sampler"
GREEDY = "greedy-balancer"
POLICY_KINDS = (DETERMINISTIC, UNIFORM, IDEAL, GREEDY)

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    seed: int = 0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(
                f"unknown policy {self.kind!r}; expected one of {', '.join(POLICY_KINDS)}"
            )


def sequence_rng(seed: int, qid: str) -> np.random.Generator:
    ss = np.random.SeedSequence(seed & _SEED_MASK, spawn_key=(zlib.crc32(qid.encode("utf-8")),))
    return np.random.Generator(np.random.PCG64(ss))


def _shuffled(ids: List[str], rng: np.random.Generator) -> List[str]:
    return [ids[i] for i in rng.permutation(len(ids))]


class SequencePolicy:
    """Policy state for one query sequence.

    Call :meth:`next_ranking` to get the ranking for the upcoming
    impression and :meth:`observe` to record what was shown.
    """

    def __init__(self, spec: PolicySpec, request: Request, config: EvalConfig):
        self.spec = spec
        self.request = request
        self.config = config
        self.impressions = 0
        self._by_relevance = sorted(request.candidates, key=lambda d: (-d.relevance, d.doc_id))
        self._rng = sequence_rng(spec.seed, request.qid)
        self._pending = None
        if spec.kind == GREEDY:
            self._target = target_exposure(request, 1, config) if request.candidates else {}
            self._delivered: Dict[str, float] = {}

    def next_ranking(self) -> Ranking:
        # Repeated calls without observe() return the same ranking.
        if self._pending is None:
            self._pending = self._draw()
        return self._pending

    def _draw(self) -> Ranking:
        kind = self.spec.kind
        if kind == DETERMINISTIC:
            return tuple(d.doc_id for d in self._by_relevance)
        if kind == GREEDY:
            return self._greedy()
        rng = self._rng
        if kind == UNIFORM:
            return tuple(_shuffled([d.doc_id for d in self.request.candidates], rng))
        rel = [d.doc_id for d in self.request.candidates if d.relevance]
        non = [d.doc_id for d in self.request.candidates if not d.relevance]
        return tuple(_shuffled(rel, rng) + _shuffled(non, rng))

    def _greedy(self) -> Ranking:
        # Deficit of an author = target exposure through this impression minus what
        # they have received so far; a document's priority sums its authors' deficits.
        due = self.impressions + 1
        deficit = {
            a: due * t - self._delivered.get(a, 0.0) for a, t in self._target.items()
        }

        def key(doc):
            return (-doc.relevance, -sum(deficit[a] for a in doc.authors), doc.doc_id)

        return tuple(d.doc_id for d in sorted(self.request.candidates, key=key))

    def observe(self, ranking: Ranking) -> None:
        """Record the ranking shown at the current impression.

        Random policies advance their generator by one draw even when the
        shown ranking came from elsewhere, so replaying a history always
        leaves the generator where the original run left it.
        """
        if self._pending is None and self.spec.kind in (UNIFORM, IDEAL):
            self._draw()
        self._pending = None
        if self.spec.kind == GREEDY:
            for a, v in ranking_exposure(ranking, self.request, self.config).items():
                self._delivered[a] = self._delivered.get(a, 0.0) + v
        self.impressions += 1


def policy_rank(
    policy: PolicySpec,
    request: Request,
    history: Sequence[Ranking],
    config: EvalConfig,
) -> Ranking:
    """Ranking for the next impression given the rankings already shown."""
    state = SequencePolicy(policy, request, config)
    for ranking in history:
        state.observe(tuple(ranking))
    return state.next_ranking()


def run_protocol(
    requests: Sequence[Request],
    impressions_per_query: int,
    policy: PolicySpec,
    config: EvalConfig,
) -> Dict[str, RankingSequence]:
    """Ask the policy for ``impressions_per_query`` rankings of every request.

    Sequence ids are the 1-based position of the request in ``requests``;
    impression indices start at 0.
    """
    if impressions_per_query < 1:
        raise ValueError(f"impressions_per_query must be positive, got {impressions_per_query}")
    out: Dict[str, RankingSequence] = {}
    for seq_no, request in enumerate(requests, start=1):
        state = SequencePolicy(policy, request, config)
        rankings = []
        for _ in range(impressions_per_query):
            ranking = state.next_ranking()
            state.observe(ranking)
            rankings.append(ranking)
        out[request.qid] = RankingSequence(request.qid, tuple(rankings), sequence_id=str(seq_no))
    return out


def is_permutation_of_candidates(ranking: Ranking, request: Request) -> bool:
    return len(ranking) == len(request.candidates) and set(ranking) == {
        d.doc_id for d in request.candidates
    }

