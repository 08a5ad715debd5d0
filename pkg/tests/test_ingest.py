import io
import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairexp import RankingSequence, RunMetrics, make_request
from fairexp.ingest import (
    ClickRecord,
    IngestWarning,
    ParseError,
    dumps_run,
    estimate_relevance,
    filter_queries,
    parse_group_file,
    parse_metadata,
    parse_queries_file,
    parse_run_file,
    read_machine_report,
    write_group_file,
    write_queries_file,
    write_report,
)
from fairexp.metrics import QueryMetrics


def run_line(q_num, qid, ranking):
    return json.dumps({"q_num": q_num, "qid": qid, "ranking": ranking}) + "\n"


class TestRunFile:
    def test_groups_by_qid(self):
        text = run_line("7.0", "q", ["a", "b"]) + run_line("7.1", "q", ["b", "a"])
        parsed = parse_run_file(text, "myrun")
        assert parsed.run_id == "myrun"
        seq = parsed.sequences["q"]
        assert seq.rankings == (("a", "b"), ("b", "a"))
        assert (seq.sequence_id, seq.first_index) == ("7", 0)

    def test_missing_key_names_line(self):
        with pytest.raises(ParseError, match="line 1") as info:
            parse_run_file(json.dumps({"q_num": "1.0", "qid": "q"}) + "\n")
        assert info.value.line == 1 and info.value.field == "ranking"

    def test_empty(self):
        assert parse_run_file("").sequences == {}

    def test_bad_json_reports_line(self):
        with pytest.raises(ParseError) as info:
            parse_run_file(run_line("1.0", "q", ["a"]) + "{nope\n")
        assert info.value.line == 2

    def test_duplicate_q_num(self):
        with pytest.raises(ParseError, match="duplicate"):
            parse_run_file(run_line("1.0", "q", ["a"]) + run_line("1.0", "q", ["a"]))

    def test_gap_warns(self):
        with pytest.warns(IngestWarning, match="non-contiguous"):
            parse_run_file(run_line("1.0", "q", ["a"]) + run_line("1.2", "q", ["a"]))

    def test_one_based_and_out_of_order(self):
        text = run_line("s.2", "q", ["b"]) + run_line("s.1", "q", ["a"])
        seq = parse_run_file(text).sequences["q"]
        assert seq.rankings == (("a",), ("b",)) and seq.first_index == 1

    @pytest.mark.filterwarnings("ignore::fairexp.ingest.IngestWarning")
    def test_dotted_sequence_id(self):
        seq = parse_run_file(run_line("2020.a.3", "q", ["x"])).sequences["q"]
        assert seq.sequence_id == "2020.a" and seq.first_index == 3

    def test_bad_q_num(self):
        with pytest.raises(ParseError, match="q_num"):
            parse_run_file(run_line("17", "q", ["x"]))

    def test_mixed_qids_in_sequence(self):
        with pytest.raises(ParseError, match="mixes"):
            parse_run_file(run_line("1.0", "q", ["x"]) + run_line("1.1", "r", ["x"]))

    @given(
        st.lists(
            st.tuples(st.integers(1, 30), st.sampled_from([0, 1]), st.lists(st.lists(st.text("abcé", min_size=1, max_size=4), max_size=5), min_size=1, max_size=4)),
            max_size=5, unique_by=lambda t: t[0],
        )
    )
    def test_round_trip(self, spec):
        seqs = [RankingSequence(f"q{n}", rankings, sequence_id=str(n), first_index=base) for n, base, rankings in spec]
        text = dumps_run(seqs)
        parsed = parse_run_file(text)
        assert dumps_run(parsed.sequences) == text
        assert list(parsed.sequences.values()) == seqs


class TestGroupFile:
    def test_basic(self):
        assert parse_group_file("author,gid\nA1,g1\nA2,g2\n") == {"A1": "g1", "A2": "g2"}

    def test_consistent_duplicate(self):
        assert parse_group_file("author,gid\nA1,g1\nA1,g1\n") == {"A1": "g1"}

    def test_conflict(self):
        with pytest.raises(ParseError, match="A1") as info:
            parse_group_file("author,gid\nA1,g1\nA1,g2\n")
        assert info.value.line == 3

    def test_missing_column(self):
        with pytest.raises(ParseError, match="gid"):
            parse_group_file("author,group\nA1,g1\n")

    def test_quoted_fields(self):
        assert parse_group_file('author,gid\n"A,1",g1\n') == {"A,1": "g1"}

    @given(st.dictionaries(st.text(st.characters(blacklist_categories=("Cc", "Cs")), min_size=1).filter(lambda s: s.strip() == s),
                           st.text("xyz0123", min_size=1)))
    def test_round_trip(self, groups):
        buf = io.StringIO()
        write_group_file(groups, buf)
        text = buf.getvalue()
        assert parse_group_file(text) == groups
        again = io.StringIO()
        write_group_file(parse_group_file(text), again)
        assert again.getvalue() == text


PAPERS = "paper_id,title,year,venue,n_citations\nP1,Fair things,2019,SIGIR,10\nP2,Other,2020,KDD,3\n"
AUTHORS = "author_id,name,citation_count,paper_count,h_index\nA1,Ann,100,5,3\nA2,Bo,20,2,1\n"


class TestMetadata:
    def test_ordered_by_position(self):
        afp = "paper_id,author_id,position\nP1,A2,2\nP1,A1,1\n"
        cat = parse_metadata(PAPERS, AUTHORS, afp)
        assert cat.doc_authors["P1"] == ("A1", "A2")
        assert cat.authors["A1"].h_index == 3 and cat.authors["A2"].citation_count == 20
        assert cat.papers["P2"]["venue"] == "KDD"

    def test_two_positions(self):
        cat = parse_metadata(PAPERS, AUTHORS, "paper_id,author_id,position\nP1,A1,1\nP1,A2,2\n")
        assert len(cat.doc_authors["P1"]) == 2

    def test_unknown_paper_kept_with_warning(self):
        with pytest.warns(IngestWarning, match="P9"):
            cat = parse_metadata(PAPERS, AUTHORS, "paper_id,author_id,position\nP9,A1,1\n")
        assert cat.doc_authors["P9"] == ("A1",)

    def test_unknown_author_warns(self):
        with pytest.warns(IngestWarning, match="A7"):
            parse_metadata(PAPERS, AUTHORS, "paper_id,author_id,position\nP1,A7,1\n")

    def test_position_gap_warns(self):
        with pytest.warns(IngestWarning, match="gaps"):
            parse_metadata(None, None, "paper_id,author_id,position\nP1,A1,1\nP1,A2,3\n")

    def test_s2_column_aliases(self):
        cat = parse_metadata(None, None, "paper_sha,corpus_author_id,position\nP1,A1,1\n")
        assert cat.doc_authors == {"P1": ("A1",)}


class TestQueries:
    def line(self, qid="q1", query="fair search", docs=None):
        docs = docs if docs is not None else [{"doc_id": "P1", "relevance": 1}, {"doc_id": "P2", "relevance": 0}, {"doc_id": "P3", "relevance": 1, "authors": ["Z"]}]
        return json.dumps({"qid": qid, "query": query, "documents": docs}) + "\n"

    def test_basic_with_catalog(self):
        cat = parse_metadata(PAPERS, AUTHORS, "paper_id,author_id,position\nP1,A1,1\nP2,A2,1\n")
        [req] = parse_queries_file(self.line(), cat)
        assert req.qid == "q1" and len(req.candidates) == 3
        assert req.get("P1").authors == ("A1",) and req.get("P3").authors == ("Z",)

    def test_non_binary_relevance(self):
        with pytest.raises(ParseError, match="relevance"):
            parse_queries_file(self.line(docs=[{"doc_id": "P1", "relevance": 2}]))

    def test_missing_from_catalog_warns(self):
        with pytest.warns(IngestWarning, match="P2"):
            [req] = parse_queries_file(self.line(docs=[{"doc_id": "P2", "relevance": 1}]), None)
        assert req.get("P2").authors == ()

    @pytest.mark.filterwarnings("ignore::fairexp.ingest.IngestWarning")
    def test_duplicate_qid(self):
        with pytest.raises(ParseError, match="duplicate qid"):
            parse_queries_file(self.line() + self.line(), None)

    def test_round_trip(self):
        reqs = [make_request("q1", [("a", 1, ["x", "y"]), ("b", 0, [])], "one two")]
        buf = io.StringIO()
        write_queries_file(reqs, buf)
        assert parse_queries_file(buf.getvalue()) == reqs


class TestRelevance:
    def test_all_clicked(self):
        clicks = [ClickRecord("q", "d", 1, True, 0.3), ClickRecord("q", "d", 3, True, 0.9)]
        assert estimate_relevance(clicks, 1.0) == {("q", "d"): 1}

    def test_no_clicks(self):
        clicks = [ClickRecord("q", "d", 1, False, 0.5)]
        assert estimate_relevance(clicks, 0.01) == {("q", "d"): 0}

    def test_ips_weighting(self):
        from fairexp.ingest import click_scores

        clicks = [ClickRecord("q", "d", 2, True, 0.5), ClickRecord("q", "d", 1, False, 1.0)]
        assert click_scores(clicks)[("q", "d")] == pytest.approx(2 / 3)
        assert estimate_relevance(clicks, 0.667) == {("q", "d"): 0}
        assert estimate_relevance(clicks, 0.666) == {("q", "d"): 1}

    def test_bad_propensity(self):
        with pytest.raises(ValueError):
            ClickRecord("q", "d", 1, True, 0.0)

    @given(st.lists(st.tuples(st.sampled_from("ab"), st.booleans(), st.floats(0.01, 1.0)), min_size=1), st.randoms(use_true_random=False))
    def test_order_invariant(self, raw, rnd):
        clicks = [ClickRecord("q", d, 1, c, p) for d, c, p in raw]
        from fairexp.ingest import click_scores

        shuffled = list(clicks)
        rnd.shuffle(shuffled)
        assert click_scores(shuffled) == click_scores(clicks)


class TestFilter:
    def req(self, n_rel, text):
        return make_request("q", [(f"d{i}", int(i < n_rel), []) for i in range(4)], text)

    def test_one_relevant_dropped(self):
        assert filter_queries([self.req(1, "fair ranking")]) == []

    def test_long_query_dropped(self):
        assert filter_queries([self.req(3, "one two three four five")]) == []

    def test_boundary_kept(self):
        r = self.req(2, "one two three four")
        assert filter_queries([r]) == [r]


def _run(run_id, ee, disparity=0.0, relevance=0.0):
    q = QueryMetrics("q", ee, disparity, relevance, {"g1": 1.0}, {"g1": 0.5}, 0.0)
    return RunMetrics(run_id, [q], ee, disparity, relevance)


class TestReport:
    def test_table_rounding(self):
        assert write_report(_run("r", 0.4281)) == "run\tEE\nr\t0.428\n"

    def test_table_order(self):
        text = write_report([_run("slow", 0.9), _run("fast", 0.2)])
        assert [l.split("\t")[0] for l in text.splitlines()[1:]] == ["fast", "slow"]

    def test_plot_data(self):
        text = write_report(_run("w", 0.601041, 1.02975625, 0.67806875), "plot-data")
        assert text == "run_id\tdisparity\trelevance\nw\t1.030\t0.678\n"

    def test_machine_round_trip(self):
        runs = [_run("a", 0.123456789), _run("b", 0.5)]
        assert read_machine_report(write_report(runs, "machine-readable")) == runs

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            write_report(_run("a", 0.1), "xml")
