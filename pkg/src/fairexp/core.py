"""Domain types shared across the toolkit and run/request consistency checks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

# A ranking is an ordered tuple of document ids.
Ranking = Tuple[str, ...]
# author_id -> group_id; authors absent from the map are unassigned.
GroupAssignment = Mapping[str, str]
# author_id -> accumulated exposure; an absent key means 0.
ExposureVector = Dict[str, float]
# group_id -> summed exposure.
GroupExposure = Dict[str, float]

DEFAULT_GAMMA = 0.5
# Artifact defaults for the relevance -> stop probability transform. These are
# configuration, not published values.
DEFAULT_STOP_PROB_RELEVANT = 0.7
DEFAULT_STOP_PROB_NONRELEVANT = 0.0


class ConfigError(ValueError):
    pass


class EvaluationError(ValueError):
    pass


def _check_probability(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class EvalConfig:
    """Browsing-model parameters.

    ``gamma`` is the continuation probability. Binary relevance grades map
    onto stop probabilities through ``stop_prob_relevant`` and
    ``stop_prob_nonrelevant``; the transform must be monotone, so the
    relevant probability may not be smaller than the non-relevant one.
    """

    gamma: float = DEFAULT_GAMMA
    stop_prob_relevant: float = DEFAULT_STOP_PROB_RELEVANT
    stop_prob_nonrelevant: float = DEFAULT_STOP_PROB_NONRELEVANT
    strict_candidates: bool = False

    def __post_init__(self):
        _check_probability("gamma", self.gamma)
        _check_probability("stop_prob_relevant", self.stop_prob_relevant)
        _check_probability("stop_prob_nonrelevant", self.stop_prob_nonrelevant)
        if self.stop_prob_nonrelevant > self.stop_prob_relevant:
            raise ConfigError(
                "stop_prob_nonrelevant must not exceed stop_prob_relevant "
                f"({self.stop_prob_nonrelevant} > {self.stop_prob_relevant})"
            )

    def stop_prob(self, relevance: int) -> float:
        return self.stop_prob_relevant if relevance else self.stop_prob_nonrelevant


@dataclass(frozen=True)
class DocumentRecord:
    doc_id: str
    authors: Tuple[str, ...] = ()
    relevance: int = 0

    def __post_init__(self):
        if self.relevance not in (0, 1):
            raise ValueError(
                f"document {self.doc_id!r}: relevance must be 0 or 1, got {self.relevance!r}"
            )
        # Repeated author ids collapse to one; exposure credits an author once per document.
        object.__setattr__(self, "authors", tuple(dict.fromkeys(self.authors)))


@dataclass(frozen=True)
class Request:
    """A query together with its candidate documents."""

    qid: str
    query_text: str
    candidates: Tuple[DocumentRecord, ...]
    _by_id: Dict[str, DocumentRecord] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.candidates, tuple):
            object.__setattr__(self, "candidates", tuple(self.candidates))
        by_id: Dict[str, DocumentRecord] = {}
        for doc in self.candidates:
            if doc.doc_id in by_id:
                raise ValueError(f"request {self.qid!r}: duplicate candidate {doc.doc_id!r}")
            by_id[doc.doc_id] = doc
        object.__setattr__(self, "_by_id", by_id)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def get(self, doc_id: str) -> Optional[DocumentRecord]:
        return self._by_id.get(doc_id)

    @property
    def num_relevant(self) -> int:
        return sum(d.relevance for d in self.candidates)


@dataclass(frozen=True)
class RankingSequence:
    """All rankings a system emitted for one query, in impression order.

    ``sequence_id`` and ``first_index`` only matter for run-file
    serialization (``q_num`` is ``"<sequence_id>.<index>"``).
    """

    qid: str
    rankings: Tuple[Ranking, ...]
    sequence_id: Optional[str] = None
    first_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rankings", tuple(tuple(r) for r in self.rankings))

    def __len__(self) -> int:
        return len(self.rankings)


@dataclass(frozen=True)
class Violation:
    kind: str  # "duplicate" | "unknown-document" | "empty-sequence" | "qid-mismatch"
    ranking_index: int
    position: int  # 1-based; 0 when not tied to a position
    doc_id: Optional[str]
    message: str


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)
    warnings: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_request_run(
    request: Request, seq: RankingSequence, config: EvalConfig
) -> ValidationReport:
    """Check every ranking of ``seq`` against the candidates of ``request``.

    Never raises. Documents outside the candidate set are violations when
    ``config.strict_candidates`` is set and warnings otherwise.
    """
    report = ValidationReport()
    if seq.qid != request.qid:
        report.violations.append(
            Violation("qid-mismatch", 0, 0, None,
                      f"sequence qid {seq.qid!r} does not match request qid {request.qid!r}")
        )
    if not seq.rankings:
        report.violations.append(
            Violation("empty-sequence", 0, 0, None, f"query {request.qid!r}: no rankings")
        )
    for r_idx, ranking in enumerate(seq.rankings):
        seen: Set[str] = set()
        for pos, doc_id in enumerate(ranking, start=1):
            if doc_id in seen:
                report.violations.append(
                    Violation("duplicate", r_idx, pos, doc_id,
                              f"ranking {r_idx}: duplicate document {doc_id!r} at position {pos}")
                )
            seen.add(doc_id)
            if doc_id not in request:
                v = Violation("unknown-document", r_idx, pos, doc_id,
                              f"ranking {r_idx}: document {doc_id!r} at position {pos} "
                              f"is not a candidate of query {request.qid!r}")
                (report.violations if config.strict_candidates else report.warnings).append(v)
    return report


def author_documents(request: Request) -> Dict[str, Set[str]]:
    """Invert the document -> authors relation of a request."""
    out: Dict[str, Set[str]] = {}
    for doc in request.candidates:
        for author in doc.authors:
            out.setdefault(author, set()).add(doc.doc_id)
    return out


def make_request(
    qid: str,
    docs: Sequence[Tuple[str, int, Sequence[str]]],
    query_text: str = "",
) -> Request:
    """Build a request from ``(doc_id, relevance, authors)`` triples."""
    return Request(
        qid,
        query_text,
        tuple(DocumentRecord(d, tuple(a), int(r)) for d, r, a in docs),
    )
