"""Command-line interface.

Exit status: 0 on success, 1 on usage errors, 2 on data or validation errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path
from typing import List, Optional

from .core import (
    DEFAULT_GAMMA,
    DEFAULT_STOP_PROB_NONRELEVANT,
    DEFAULT_STOP_PROB_RELEVANT,
    ConfigError,
    EvalConfig,
    EvaluationError,
)
from .exposure import target_exposure
from .ingest import (
    MACHINE,
    PLOT,
    REPORT_FORMATS,
    TABLE,
    IngestWarning,
    ParseError,
    apply_relevance,
    click_scores,
    filter_queries,
    load_run_file,
    parse_click_file,
    parse_group_file,
    parse_metadata,
    parse_queries_file,
    read_machine_report,
    write_queries_file,
    write_query_details,
    write_report,
    write_run_file,
)
from .metrics import evaluate_run
from .policies import POLICY_KINDS, PolicySpec, run_protocol

log = logging.getLogger("fairexp")

EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("browsing model")
    g.add_argument("--gamma", type=float, default=DEFAULT_GAMMA,
                   help="continuation probability (default %(default)s, the track setting)")
    g.add_argument("--stop-rel", type=float, default=DEFAULT_STOP_PROB_RELEVANT,
                   help="stop probability after a relevant document (default %(default)s; "
                        "toolkit default, not a published value)")
    g.add_argument("--stop-nonrel", type=float, default=DEFAULT_STOP_PROB_NONRELEVANT,
                   help="stop probability after a non-relevant document (default %(default)s; "
                        "toolkit default, not a published value)")
    g.add_argument("--strict", action="store_true",
                   help="reject rankings with documents outside the candidate set and runs "
                        "that miss or add queries")
    return p


def _queries_flags(required: bool = True) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--queries", type=Path, required=required,
                   help="queries file (JSON lines: qid, query, documents)")
    p.add_argument("--metadata", type=Path,
                   help="directory holding paper_metadata.csv, author_metadata.csv and "
                        "authors_for_papers.csv; supplies authors for documents without inline authors")
    return p


def _config(args) -> EvalConfig:
    return EvalConfig(
        gamma=args.gamma,
        stop_prob_relevant=args.stop_rel,
        stop_prob_nonrelevant=args.stop_nonrel,
        strict_candidates=args.strict,
    )


def _load_queries(args):
    catalog = None
    if args.metadata is not None:
        d = args.metadata
        afp = d / "authors_for_papers.csv"
        opened = {}
        try:
            for name in ("paper_metadata.csv", "author_metadata.csv"):
                path = d / name
                opened[name] = path.open(encoding="utf-8", newline="") if path.exists() else None
            with afp.open(encoding="utf-8", newline="") as fh:
                catalog = parse_metadata(opened["paper_metadata.csv"], opened["author_metadata.csv"], fh)
        finally:
            for fh in opened.values():
                if fh is not None:
                    fh.close()
    with args.queries.open(encoding="utf-8") as fh:
        return parse_queries_file(fh, catalog, str(args.queries))


def _load_groups(path: Path):
    with path.open(encoding="utf-8", newline="") as fh:
        return parse_group_file(fh, str(path))


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")


def _evaluate_runs(args):
    config = _config(args)
    requests = _load_queries(args)
    groups = _load_groups(args.groups)
    results = []
    for path in args.runs:
        parsed = load_run_file(path)
        try:
            results.append(evaluate_run(requests, parsed.sequences, groups, config, parsed.run_id, args.jobs))
        except EvaluationError as e:
            raise EvaluationError(f"run {parsed.run_id!r} ({path}): {e}") from None
    run_ids = [r.run_id for r in results]
    if len(set(run_ids)) != len(run_ids):
        raise EvaluationError(f"run ids must be unique, got {run_ids}")
    return results


def cmd_evaluate(args) -> int:
    results = _evaluate_runs(args)
    table = write_report(results, TABLE)
    sys.stdout.write(table)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "leaderboard.tsv").write_text(table, encoding="utf-8")
        (args.out / "per_query.tsv").write_text(write_query_details(results), encoding="utf-8")
        (args.out / "metrics.jsonl").write_text(write_report(results, MACHINE), encoding="utf-8")
        (args.out / "plot_data.tsv").write_text(write_report(results, PLOT), encoding="utf-8")
    return 0


def cmd_decompose(args) -> int:
    _emit(write_report(_evaluate_runs(args), PLOT), args.out)
    return 0


def cmd_leaderboard(args) -> int:
    runs = []
    for path in args.metrics:
        with path.open(encoding="utf-8") as fh:
            runs.extend(read_machine_report(fh, str(path)))
    _emit(write_report(runs, args.format), args.out)
    return 0


def cmd_target(args) -> int:
    if args.impressions < 1:
        raise ConfigError("--impressions must be at least 1")
    config = _config(args)
    lines = ["qid\tauthor_id\ttarget\n"]
    for req in sorted(_load_queries(args), key=lambda r: r.qid):
        if not req.candidates:
            log.warning("query %s has no candidates; skipped", req.qid)
            continue
        for author, value in sorted(target_exposure(req, args.impressions, config).items()):
            lines.append(f"{req.qid}\t{author}\t{value:.12g}\n")
    _emit("".join(lines), args.out)
    return 0


def cmd_simulate(args) -> int:
    if args.impressions < 1:
        raise ConfigError("--impressions must be at least 1")
    config = _config(args)
    requests = _load_queries(args)
    runs = run_protocol(requests, args.impressions, PolicySpec(args.policy, args.seed), config)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", encoding="utf-8", newline="\n") as fh:
        write_run_file(runs, fh)
    return 0


def cmd_estimate_relevance(args) -> int:
    if args.threshold < 0:
        raise ConfigError("--threshold must be non-negative")
    with args.clicks.open(encoding="utf-8", newline="") as fh:
        scores = click_scores(parse_click_file(fh, str(args.clicks)))
    labels = {k: int(v >= args.threshold) for k, v in scores.items()}
    if args.queries is None:
        rows = ["qid\tdoc_id\tscore\trelevance\n"]
        rows += [f"{q}\t{d}\t{scores[(q, d)]:.12g}\t{labels[(q, d)]}\n" for q, d in sorted(scores)]
        _emit("".join(rows), args.out)
        return 0
    requests = apply_relevance(_load_queries(args), labels)
    if args.filter:
        requests = filter_queries(requests)
    if args.out is None:
        write_queries_file(requests, sys.stdout)
    else:
        with args.out.open("w", encoding="utf-8", newline="\n") as fh:
            write_queries_file(requests, fh)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairexp", description="Expected-exposure fairness evaluation of ranking runs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    cfg = _config_flags()

    def run_inputs(p):
        p.add_argument("--runs", type=Path, nargs="+", required=True, help="run files (JSON lines)")
        p.add_argument("--groups", type=Path, required=True, help="author,gid CSV")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (default %(default)s)")

    p = sub.add_parser("evaluate", parents=[cfg, _queries_flags()],
                       help="score runs and print a leaderboard")
    run_inputs(p)
    p.add_argument("--out", type=Path, help="directory for leaderboard.tsv, per_query.tsv, "
                                            "metrics.jsonl and plot_data.tsv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("decompose", parents=[cfg, _queries_flags()],
                       help="disparity and relevance per run (plot data)")
    run_inputs(p)
    p.add_argument("--out", type=Path, help="output TSV (default stdout)")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("leaderboard", help="merge machine-readable metrics into one ranking")
    p.add_argument("--metrics", type=Path, nargs="+", required=True, help="metrics.jsonl files")
    p.add_argument("--format", choices=REPORT_FORMATS, default=TABLE)
    p.add_argument("--out", type=Path, help="output file (default stdout)")
    p.set_defaults(func=cmd_leaderboard)

    p = sub.add_parser("target", parents=[cfg, _queries_flags()],
                       help="per-author target exposure under the ideal policy")
    p.add_argument("--impressions", type=int, default=1, help="impressions per query (default %(default)s)")
    p.add_argument("--out", type=Path, help="output TSV (default stdout)")
    p.set_defaults(func=cmd_target)

    p = sub.add_parser("simulate", parents=[cfg, _queries_flags()],
                       help="generate a run file with a baseline policy")
    p.add_argument("--policy", choices=POLICY_KINDS, required=True)
    p.add_argument("--impressions", type=int, default=100, help="impressions per query (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default %(default)s)")
    p.add_argument("--out", type=Path, required=True, help="run file to write")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate-relevance", parents=[_queries_flags(required=False)],
                       help="binary relevance from propensity-weighted clicks")
    p.add_argument("--clicks", type=Path, required=True,
                   help="CSV with qid,doc_id,position,clicked,propensity")
    p.add_argument("--threshold", type=float, required=True,
                   help="minimum weighted click rate for a relevant label (no default)")
    p.add_argument("--filter", action="store_true",
                   help="with --queries: drop queries with fewer than 2 relevant documents or more than 4 words")
    p.add_argument("--out", type=Path, help="output file (default stdout)")
    p.set_defaults(func=cmd_estimate_relevance)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", IngestWarning)
            logging.captureWarnings(True)
            return args.func(args)
    except (ParseError, EvaluationError, ConfigError, ValueError, OSError) as e:
        print(f"fairexp {args.command}: error: {e}", file=sys.stderr)
        return EXIT_DATA
    finally:
        logging.captureWarnings(False)


if __name__ == "__main__":
    sys.exit(main())
