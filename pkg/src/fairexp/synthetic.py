"""Random request collections for self-tests and benchmarks."""
from __future__ import annotations

from typing import Dict, List, Tuple

import numpy as np

from .core import DocumentRecord, Request


def synthetic_collection(
    n_queries: int,
    seed: int = 0,
    min_docs: int = 6,
    max_docs: int = 12,
    n_authors: int = 80,
    n_groups: int = 2,
    max_authors_per_doc: int = 3,
    relevant_rate: float = 0.35,
) -> Tuple[List[Request], Dict[str, str]]:
    """Build ``n_queries`` requests and an author -> group assignment.

    Every query gets at least two relevant documents whose first authors sit
    in different groups, so group fairness is never trivially satisfied.
    """
    if n_groups < 2:
        raise ValueError("need at least two groups")
    rng = np.random.default_rng(seed)
    authors = [f"A{i:04d}" for i in range(n_authors)]
    group_of = {a: f"g{i % n_groups}" for i, a in enumerate(authors)}
    by_group = {g: [a for a in authors if group_of[a] == g] for g in sorted(set(group_of.values()))}
    group_ids = list(by_group)

    requests = []
    for q in range(n_queries):
        n = int(rng.integers(min_docs, max_docs + 1))
        docs = []
        for i in range(n):
            k = int(rng.integers(1, max_authors_per_doc + 1))
            doc_authors = [authors[j] for j in rng.choice(n_authors, size=k, replace=False)]
            rel = int(rng.random() < relevant_rate)
            if i < 2:
                # Two relevant anchors led by authors from different groups.
                rel = 1
                pool = by_group[group_ids[i % len(group_ids)]]
                doc_authors[0] = pool[int(rng.integers(len(pool)))]
            docs.append(DocumentRecord(f"q{q:03d}-d{i:02d}", tuple(doc_authors), rel))
        order = rng.permutation(n)
        requests.append(Request(f"q{q:03d}", f"synthetic query {q}", tuple(docs[i] for i in order)))
    return requests, group_of
