"""Readers and writers for the toolkit's file formats.

Run files and queries files are JSON lines; group, metadata and click files
are UTF-8 CSV with a header row. Recoverable oddities are reported through
:class:`IngestWarning`; unrecoverable ones raise :class:`ParseError` with the
1-based line number of the offending record.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .core import DocumentRecord, RankingSequence, Request
from .metrics import RunMetrics, leaderboard


class IngestWarning(UserWarning):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None, source: str = ""):
        self.line = line
        self.field = field
        self.source = source
        where = []
        if source:
            where.append(source)
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def _warn(msg: str) -> None:
    warnings.warn(msg, IngestWarning, stacklevel=3)


def _lines(stream: Union[IO[str], Iterable[str], str]) -> Iterable[str]:
    if isinstance(stream, str):
        return io.StringIO(stream)
    return stream


# --------------------------------------------------------------------- run files


@dataclass(frozen=True)
class RunLine:
    sequence_id: str
    impression_index: int
    qid: str
    ranking: Tuple[str, ...]


@dataclass
class ParsedRun:
    run_id: str
    sequences: Dict[str, RankingSequence] = field(default_factory=dict)


def split_q_num(q_num: str) -> Tuple[str, int]:
    seq_id, sep, idx = q_num.rpartition(".")
    if not sep or not seq_id:
        raise ValueError(f"q_num {q_num!r} is not of the form '<sequence>.<index>'")
    if not idx.isdigit():
        raise ValueError(f"q_num {q_num!r} has a non-integer impression index")
    return seq_id, int(idx)


def read_run_lines(stream, source: str = "") -> List[Tuple[int, RunLine]]:
    """Parse each non-blank line; returns ``(line_number, RunLine)`` pairs."""
    out = []
    for lineno, raw in enumerate(_lines(stream), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON ({e.msg})", lineno, source=source) from None
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", lineno, source=source)
        for key in ("q_num", "qid", "ranking"):
            if key not in obj:
                raise ParseError(f"missing key {key!r}", lineno, key, source)
        try:
            seq_id, idx = split_q_num(str(obj["q_num"]))
        except ValueError as e:
            raise ParseError(str(e), lineno, "q_num", source) from None
        ranking = obj["ranking"]
        if not isinstance(ranking, list):
            raise ParseError("'ranking' must be an array of document ids", lineno, "ranking", source)
        out.append((lineno, RunLine(seq_id, idx, str(obj["qid"]), tuple(str(d) for d in ranking))))
    return out


def parse_run_file(stream, run_id: str = "run", source: str = "") -> ParsedRun:
    """Parse a JSON-lines run into one :class:`RankingSequence` per qid.

    ``q_num`` is split on its final ``.`` into sequence id and impression
    index. Indices may start at 0 or 1 and are sorted per sequence; gaps
    produce a warning, a repeated ``q_num`` an error.
    """
    label = source or run_id
    seqs: Dict[str, List[Tuple[int, int, RunLine]]] = {}
    seen: Dict[Tuple[str, int], int] = {}
    for lineno, line in read_run_lines(stream, source):
        key = (line.sequence_id, line.impression_index)
        if key in seen:
            raise ParseError(
                f"duplicate q_num '{line.sequence_id}.{line.impression_index}' "
                f"(first seen on line {seen[key]})",
                lineno, "q_num", source,
            )
        seen[key] = lineno
        seqs.setdefault(line.sequence_id, []).append((line.impression_index, lineno, line))

    by_qid: Dict[str, List[Tuple[str, List[RunLine]]]] = {}
    for seq_id, entries in seqs.items():
        entries.sort(key=lambda e: e[0])
        indices = [e[0] for e in entries]
        base = indices[0]
        if base not in (0, 1):
            _warn(f"{label}: sequence {seq_id!r} starts at index {base}")
        if indices != list(range(base, base + len(indices))):
            _warn(f"{label}: sequence {seq_id!r} has non-contiguous impression indices")
        qids = {e[2].qid for e in entries}
        if len(qids) > 1:
            raise ParseError(
                f"sequence {seq_id!r} mixes query ids {sorted(qids)}", entries[0][1], "qid", source
            )
        by_qid.setdefault(entries[0][2].qid, []).append((seq_id, [e[2] for e in entries]))

    sequences: Dict[str, RankingSequence] = {}
    for qid, groups in by_qid.items():
        if len(groups) == 1:
            seq_id, rows = groups[0]
            sequences[qid] = RankingSequence(
                qid, tuple(r.ranking for r in rows), sequence_id=seq_id,
                first_index=rows[0].impression_index,
            )
        else:
            _warn(f"{label}: query {qid!r} appears in {len(groups)} sequences; merging them")
            rankings = tuple(r.ranking for _, rows in groups for r in rows)
            sequences[qid] = RankingSequence(qid, rankings)
    return ParsedRun(run_id, sequences)


def load_run_file(path: Union[str, Path], run_id: Optional[str] = None) -> ParsedRun:
    """Parse a run file from disk; the run id defaults to the file name stem."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return parse_run_file(fh, run_id or path.stem, str(path))


def run_lines(sequences: Iterable[RankingSequence]) -> List[RunLine]:
    out = []
    for n, seq in enumerate(sequences, start=1):
        seq_id = seq.sequence_id if seq.sequence_id is not None else str(n)
        for i, ranking in enumerate(seq.rankings):
            out.append(RunLine(seq_id, seq.first_index + i, seq.qid, tuple(ranking)))
    return out


def format_run_line(line: RunLine) -> str:
    return json.dumps(
        {"q_num": f"{line.sequence_id}.{line.impression_index}", "qid": line.qid, "ranking": list(line.ranking)},
        ensure_ascii=False,
    )


def write_run_file(sequences: Union[Mapping[str, RankingSequence], Iterable[RankingSequence]], out: IO[str]) -> None:
    """Write sequences in the given order, one JSON object per impression."""
    if isinstance(sequences, Mapping):
        sequences = sequences.values()
    for line in run_lines(sequences):
        out.write(format_run_line(line) + "\n")


def dumps_run(sequences) -> str:
    buf = io.StringIO()
    write_run_file(sequences, buf)
    return buf.getvalue()


# --------------------------------------------------------------------- CSV inputs


def _csv_rows(stream, columns: Sequence[Sequence[str]], source: str, required: int = -1):
    """Yield ``(lineno, row)`` with each column renamed to its first alias.

    ``columns`` lists alias tuples; the first ``required`` of them (all by
    default) must be present, the rest come out as ``""`` when absent.
    """
    reader = csv.DictReader(_lines(stream))
    header = reader.fieldnames or []
    if required < 0:
        required = len(columns)
    rename = {}
    for n, aliases in enumerate(columns):
        hit = next((a for a in aliases if a in header), None)
        if hit is None and n < required:
            raise ParseError(f"missing column {aliases[0]!r}", 1, aliases[0], source)
        rename[aliases[0]] = hit
    for row in reader:
        yield reader.line_num, {
            canon: (row.get(col) or "").strip() if col else "" for canon, col in rename.items()
        }


def parse_group_file(stream, source: str = "") -> Dict[str, str]:
    """Read an ``author,gid`` CSV into an author -> group mapping.

    A repeated author with the same group is accepted; a conflicting one is
    an error because each author belongs to exactly one group.
    """
    groups: Dict[str, str] = {}
    for lineno, row in _csv_rows(stream, [("author",), ("gid",)], source):
        author, gid = row["author"], row["gid"]
        if not author:
            raise ParseError("empty author id", lineno, "author", source)
        prev = groups.get(author)
        if prev is not None and prev != gid:
            raise ParseError(
                f"author {author!r} assigned to both {prev!r} and {gid!r}", lineno, "gid", source
            )
        groups[author] = gid
    return groups


def write_group_file(groups: Mapping[str, str], out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["author", "gid"])
    for author, gid in groups.items():
        w.writerow([author, gid])


@dataclass(frozen=True)
class AuthorInfo:
    author_id: str
    name: str = ""
    citation_count: Optional[int] = None
    paper_count: Optional[int] = None
    h_index: Optional[int] = None


@dataclass
class Catalog:
    doc_authors: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    papers: Dict[str, Dict[str, str]] = field(default_factory=dict)
    authors: Dict[str, AuthorInfo] = field(default_factory=dict)

    def authors_of(self, doc_id: str) -> Optional[Tuple[str, ...]]:
        return self.doc_authors.get(doc_id)


PAPER_ID = ("paper_id", "paper_sha", "id")
AUTHOR_ID = ("author_id", "corpus_author_id", "id")
PAPER_COLUMNS = [PAPER_ID, ("title",), ("year",), ("venue",), ("n_citations", "citation_count", "num_citations")]
AUTHOR_COLUMNS = [
    AUTHOR_ID,
    ("name",),
    ("citation_count", "num_citations", "n_citations"),
    ("paper_count", "num_papers"),
    ("h_index", "hindex"),
]


def _opt_int(value: str, lineno: int, name: str, source: str) -> Optional[int]:
    if value == "":
        return None
    try:
        return int(float(value))
    except ValueError:
        raise ParseError(f"expected a number, got {value!r}", lineno, name, source) from None


def parse_metadata(paper_stream, author_stream, authors_for_papers_stream) -> Catalog:
    """Join the three metadata CSVs into a document/author catalog.

    Author lists are ordered by the ``position`` column. Column names follow
    the canonical spelling with a few accepted aliases (e.g. ``paper_sha``
    for ``paper_id``).
    """
    cat = Catalog()
    if paper_stream is not None:
        for _, row in _csv_rows(paper_stream, PAPER_COLUMNS, "paper_metadata.csv", required=1):
            cat.papers[row["paper_id"]] = row
    if author_stream is not None:
        src = "author_metadata.csv"
        for lineno, row in _csv_rows(author_stream, AUTHOR_COLUMNS, src, required=1):
            cat.authors[row["author_id"]] = AuthorInfo(
                row["author_id"],
                row["name"],
                *(_opt_int(row[c], lineno, c, src) for c in ("citation_count", "paper_count", "h_index")),
            )

    src = "authors_for_papers.csv"
    positions: Dict[str, List[Tuple[int, str]]] = defaultdict(list)
    for lineno, row in _csv_rows(authors_for_papers_stream, [PAPER_ID, AUTHOR_ID, ("position",)], src):
        pos = _opt_int(row["position"], lineno, "position", src)
        if pos is None:
            raise ParseError("empty position", lineno, "position", src)
        pid, aid = row["paper_id"], row["author_id"]
        if cat.papers and pid not in cat.papers:
            _warn(f"{src} line {lineno}: unknown paper {pid!r}; kept")
        if cat.authors and aid not in cat.authors:
            _warn(f"{src} line {lineno}: paper {pid!r} references unknown author {aid!r}")
        positions[pid].append((pos, aid))

    for pid, rows in positions.items():
        rows.sort()
        pos = [p for p, _ in rows]
        if pos != list(range(pos[0], pos[0] + len(pos))):
            _warn(f"{src}: paper {pid!r} has gaps in author positions {pos}")
        cat.doc_authors[pid] = tuple(a for _, a in rows)
    return cat


# --------------------------------------------------------------------- queries


def parse_queries_file(stream, catalog: Optional[Catalog] = None, source: str = "") -> List[Request]:
    """Read requests from JSON lines.

    Each line: ``{"qid": ..., "query": ..., "documents": [{"doc_id": ...,
    "relevance": 0|1, "authors": [...]?}, ...]}``. Inline ``authors`` win;
    otherwise authors come from ``catalog``. Documents found in neither get
    an empty author list and a warning.
    """
    requests: List[Request] = []
    seen = set()
    for lineno, raw in enumerate(_lines(stream), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON ({e.msg})", lineno, source=source) from None
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", lineno, source=source)
        for key in ("qid", "documents"):
            if key not in obj:
                raise ParseError(f"missing key {key!r}", lineno, key, source)
        qid = str(obj["qid"])
        if qid in seen:
            raise ParseError(f"duplicate qid {qid!r}", lineno, "qid", source)
        seen.add(qid)
        docs = []
        doc_ids = set()
        for entry in obj["documents"]:
            if not isinstance(entry, dict) or "doc_id" not in entry:
                raise ParseError("document entries need a 'doc_id'", lineno, "documents", source)
            doc_id = str(entry["doc_id"])
            if doc_id in doc_ids:
                raise ParseError(f"duplicate document {doc_id!r}", lineno, "documents", source)
            doc_ids.add(doc_id)
            rel = entry.get("relevance", 0)
            if rel not in (0, 1) or isinstance(rel, bool):
                raise ParseError(
                    f"document {doc_id!r}: relevance must be 0 or 1, got {rel!r}", lineno, "relevance", source
                )
            if "authors" in entry:
                authors = tuple(str(a) for a in entry["authors"])
            else:
                authors = catalog.authors_of(doc_id) if catalog is not None else None
                if authors is None:
                    _warn(f"{source or 'queries'} line {lineno}: document {doc_id!r} has no author data")
                    authors = ()
            docs.append(DocumentRecord(doc_id, authors, int(rel)))
        requests.append(Request(qid, str(obj.get("query", "")), tuple(docs)))
    return requests


def write_queries_file(requests: Iterable[Request], out: IO[str], inline_authors: bool = True) -> None:
    for req in requests:
        docs = []
        for d in req.candidates:
            entry = {"doc_id": d.doc_id, "relevance": d.relevance}
            if inline_authors:
                entry["authors"] = list(d.authors)
            docs.append(entry)
        out.write(json.dumps({"qid": req.qid, "query": req.query_text, "documents": docs}, ensure_ascii=False) + "\n")


# --------------------------------------------------------------------- clicks


@dataclass(frozen=True)
class ClickRecord:
    qid: str
    doc_id: str
    position: int
    clicked: bool
    propensity: float

    def __post_init__(self):
        if not (0.0 < self.propensity <= 1.0):
            raise ValueError(f"propensity must be in (0, 1], got {self.propensity!r}")


def parse_click_file(stream, source: str = "") -> List[ClickRecord]:
    """CSV with columns ``qid,doc_id,position,clicked,propensity``."""
    out = []
    cols = [("qid",), ("doc_id",), ("position",), ("clicked",), ("propensity",)]
    for lineno, row in _csv_rows(stream, cols, source):
        clicked = row["clicked"].lower()
        if clicked not in ("0", "1", "true", "false"):
            raise ParseError(f"clicked must be 0/1, got {row['clicked']!r}", lineno, "clicked", source)
        try:
            position = int(row["position"])
            prop = float(row["propensity"])
            out.append(ClickRecord(row["qid"], row["doc_id"], position, clicked in ("1", "true"), prop))
        except ValueError as e:
            raise ParseError(str(e), lineno, source=source) from None
    return out


def click_scores(clicks: Iterable[ClickRecord]) -> Dict[Tuple[str, str], float]:
    """Inverse-propensity-weighted click rate per (qid, doc_id).

    ``sum(clicked / propensity) / sum(1 / propensity)`` over the
    impressions of each pair.
    """
    num: Dict[Tuple[str, str], List[float]] = defaultdict(list)
    den: Dict[Tuple[str, str], List[float]] = defaultdict(list)
    for c in clicks:
        key = (c.qid, c.doc_id)
        w = 1.0 / c.propensity
        den[key].append(w)
        if c.clicked:
            num[key].append(w)
    # fsum is exactly rounded, so the result does not depend on record order.
    return {key: math.fsum(num.get(key, ())) / math.fsum(ws) for key, ws in den.items()}


def estimate_relevance(clicks: Iterable[ClickRecord], threshold: float) -> Dict[Tuple[str, str], int]:
    if threshold < 0:
        raise ValueError(f"threshold must be non-negative, got {threshold}")
    return {key: int(score >= threshold) for key, score in click_scores(clicks).items()}


def apply_relevance(requests: Iterable[Request], labels: Mapping[Tuple[str, str], int]) -> List[Request]:
    """Replace candidate relevance with click-derived labels; unlabeled docs become 0."""
    out = []
    for req in requests:
        docs = tuple(
            DocumentRecord(d.doc_id, d.authors, labels.get((req.qid, d.doc_id), 0)) for d in req.candidates
        )
        out.append(Request(req.qid, req.query_text, docs))
    return out


def filter_queries(requests: Iterable[Request]) -> List[Request]:
    """Keep queries with at least two relevant candidates and at most four words.

    Only the mechanical filters are applied; removing known-item queries,
    personal names or sensitive terms needs a human.
    """
    return [r for r in requests if r.num_relevant >= 2 and len(r.query_text.split()) <= 4]


# --------------------------------------------------------------------- reports

TABLE = "table"
MACHINE = "machine-readable"
PLOT = "plot-data"
REPORT_FORMATS = (TABLE, MACHINE, PLOT)


def _r3(x: float) -> str:
    return f"{x:.3f}"


def _metrics_record(rm: RunMetrics) -> dict:
    return {
        "run_id": rm.run_id,
        "mean_ee": rm.mean_ee,
        "mean_disparity": rm.mean_disparity,
        "mean_relevance": rm.mean_relevance,
        "num_queries": len(rm.per_query),
        "per_query": [
            {
                "qid": q.qid,
                "ee": q.ee,
                "disparity": q.disparity,
                "relevance": q.relevance,
                "num_rankings": q.num_rankings,
                "system_group_exposure": dict(sorted(q.system_group_exposure.items())),
                "target_group_exposure": dict(sorted(q.target_group_exposure.items())),
                "unassigned_author_exposure": q.unassigned_author_exposure,
                "target_unassigned_exposure": q.target_unassigned_exposure,
            }
            for q in rm.per_query
        ],
    }


def write_report(runs: Union[RunMetrics, Iterable[RunMetrics]], fmt: str = TABLE) -> str:
    """Render run metrics, always in leaderboard order.

    ``table`` is a TSV of run and EE at three decimals, ``machine-readable``
    one JSON record per run at full precision, ``plot-data`` a TSV of run,
    disparity and relevance.
    """
    if isinstance(runs, RunMetrics):
        runs = [runs]
    rows = leaderboard(runs)
    buf = io.StringIO()
    if fmt == TABLE:
        buf.write("run\tEE\n")
        for r in rows:
            buf.write(f"{r.run_id}\t{_r3(r.mean_ee)}\n")
    elif fmt == MACHINE:
        for r in rows:
            buf.write(json.dumps(_metrics_record(r), sort_keys=False) + "\n")
    elif fmt == PLOT:
        buf.write("run_id\tdisparity\trelevance\n")
        for r in rows:
            buf.write(f"{r.run_id}\t{_r3(r.mean_disparity)}\t{_r3(r.mean_relevance)}\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}; expected one of {', '.join(REPORT_FORMATS)}")
    return buf.getvalue()


def write_query_details(runs: Iterable[RunMetrics]) -> str:
    buf = io.StringIO()
    buf.write("run_id\tqid\tee\tdisparity\trelevance\tunassigned\tnum_rankings\n")
    for r in sorted(runs, key=lambda r: r.run_id):
        for q in r.per_query:
            buf.write(
                f"{r.run_id}\t{q.qid}\t{q.ee:.6f}\t{q.disparity:.6f}\t{q.relevance:.6f}"
                f"\t{q.unassigned_author_exposure:.6f}\t{q.num_rankings}\n"
            )
    return buf.getvalue()


def read_machine_report(stream, source: str = "") -> List[RunMetrics]:
    """Inverse of the ``machine-readable`` report format."""
    from .metrics import QueryMetrics

    out = []
    for lineno, raw in enumerate(_lines(stream), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
            per_query = [
                QueryMetrics(
                    qid=q["qid"], ee=q["ee"], disparity=q["disparity"], relevance=q["relevance"],
                    system_group_exposure=q["system_group_exposure"],
                    target_group_exposure=q["target_group_exposure"],
                    unassigned_author_exposure=q["unassigned_author_exposure"],
                    target_unassigned_exposure=q.get("target_unassigned_exposure", 0.0),
                    num_rankings=q["num_rankings"],
                )
                for q in obj["per_query"]
            ]
            out.append(RunMetrics(obj["run_id"], per_query, obj["mean_ee"], obj["mean_disparity"], obj["mean_relevance"]))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ParseError(f"malformed metrics record ({e})", lineno, source=source) from None
    return out
