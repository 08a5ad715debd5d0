import pytest
from hypothesis import strategies as st

from fairexp import EvalConfig, make_request

# Worked scenario: d1 (relevant, a1 in g1), d2 (relevant, a2 in g2), d3 (non-relevant, a2).
WORKED_DOCS = [("d1", 1, ["a1"]), ("d2", 1, ["a2"]), ("d3", 0, ["a2"])]
WORKED_GROUPS = {"a1": "g1", "a2": "g2"}


@pytest.fixture
def cfg():
    return EvalConfig(gamma=0.5, stop_prob_relevant=0.7, stop_prob_nonrelevant=0.0)


@pytest.fixture
def strict_cfg():
    return EvalConfig(gamma=0.5, stop_prob_relevant=0.7, stop_prob_nonrelevant=0.0, strict_candidates=True)


@pytest.fixture
def worked():
    return make_request("q1", WORKED_DOCS, "fair ranking")


@pytest.fixture
def worked_groups():
    return dict(WORKED_GROUPS)


@st.composite
def configs(draw):
    gamma = draw(st.floats(0.0, 1.0))
    p_non = draw(st.floats(0.0, 1.0))
    p_rel = draw(st.floats(p_non, 1.0))
    return EvalConfig(gamma=gamma, stop_prob_relevant=p_rel, stop_prob_nonrelevant=p_non)


@st.composite
def requests(draw, min_docs=1, max_docs=6, n_authors=5):
    n = draw(st.integers(min_docs, max_docs))
    docs = []
    for i in range(n):
        rel = draw(st.integers(0, 1))
        authors = draw(st.lists(st.integers(0, n_authors - 1), max_size=3, unique=True))
        docs.append((f"d{i}", rel, [f"a{a}" for a in authors]))
    return make_request("q", docs)
