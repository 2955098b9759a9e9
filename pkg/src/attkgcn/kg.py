"""Knowledge-graph triple store: loading, symmetric adjacency, and fixed-size
neighbor sampling.

Triples are (head, relation, tail) over dense non-negative integer ids. The
adjacency index is undirected: a triple (a, r, b) makes b reachable from a and
a reachable from b under relation r. One extra relation id (``self_relation``,
appended after the largest loaded id) is reserved as a fallback edge type for
entities with no neighbors; its embedding is trained like any other relation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Triple:
    head: int
    relation: int
    tail: int


class KnowledgeGraph:
    """Immutable triple store with a per-entity sorted edge index.

    Safe for concurrent reads; sampling takes a caller-owned rng and the
    graph itself holds no mutable state.
    """

    def __init__(self, triples: list[Triple]):
        self.triples = list(triples)
        if self.triples:
            self.entity_count = 1 + max(max(t.head, t.tail) for t in self.triples)
            max_rel = max(t.relation for t in self.triples)
        else:
            self.entity_count = 0
            max_rel = -1
        # reserved self-relation sits after the largest loaded relation id
        self.self_relation = max_rel + 1
        self.relation_count = self.self_relation + 1

        edge_sets: list[set[tuple[int, int]]] = [set() for _ in range(self.entity_count)]
        for t in self.triples:
            edge_sets[t.head].add((t.relation, t.tail))
            edge_sets[t.tail].add((t.relation, t.head))
        self._adj_rel: list[np.ndarray] = []
        self._adj_ent: list[np.ndarray] = []
        for edges in edge_sets:
            ordered = sorted(edges)
            rels = np.array([r for r, _ in ordered], dtype=np.int64)
            ents = np.array([e for _, e in ordered], dtype=np.int64)
            rels.flags.writeable = False
            ents.flags.writeable = False
            self._adj_rel.append(rels)
            self._adj_ent.append(ents)

    def _check_entity(self, e: int) -> None:
        if not 0 <= e < self.entity_count:
            raise ValueError(f"entity id {e} out of range [0, {self.entity_count})")

    def degree(self, e: int) -> int:
        self._check_entity(e)
        return int(self._adj_rel[e].shape[0])

    def neighbors(self, e: int) -> list[tuple[int, int]]:
        """All (relation, entity) edges of ``e``, sorted, duplicates removed."""
        self._check_entity(e)
        return list(zip(self._adj_rel[e].tolist(), self._adj_ent[e].tolist()))

    def sample_neighbor_arrays(
        self, e: int, k: int, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        """Sample k edges of ``e`` as (relations, entities) arrays.

        Without replacement when degree >= k, with replacement when
        0 < degree < k, and k copies of (self_relation, e) for an isolated
        entity. Deterministic given the rng state.
        """
        if k < 1:
            raise ValueError("neighbor sample size must be >= 1")
        self._check_entity(e)
        rels = self._adj_rel[e]
        ents = self._adj_ent[e]
        deg = rels.shape[0]
        if deg == 0:
            return (
                np.full(k, self.self_relation, dtype=np.int64),
                np.full(k, e, dtype=np.int64),
            )
        if deg >= k:
            # k smallest of deg iid uniform keys is an exact uniform k-subset
            idx = np.argpartition(rng.random(deg), k - 1)[:k]
        else:
            idx = rng.integers(0, deg, size=k)
        return rels[idx], ents[idx]

    def sample_neighbors(
        self, e: int, k: int, rng: np.random.Generator
    ) -> list[tuple[int, int]]:
        """Like :meth:`sample_neighbor_arrays`, returned as (rel, ent) pairs."""
        rels, ents = self.sample_neighbor_arrays(e, k, rng)
        return list(zip(rels.tolist(), ents.tolist()))


def load_triples(path) -> KnowledgeGraph:
    """Parse a tab-separated triple file into a :class:`KnowledgeGraph`.

    Each non-empty line must be "head<TAB>relation<TAB>tail" with
    non-negative integers. Duplicate lines are dropped. Raises
    :class:`DataError` naming the offending line on malformed input.
    """
    triples: list[Triple] = []
    seen: set[tuple[int, int, int]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, rawline in enumerate(fh, start=1):
            line = rawline.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                )
            try:
                h, r, t = (int(p) for p in parts)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-integer field in {line!r}") from exc
            if h < 0 or r < 0 or t < 0:
                raise DataError(f"{path}:{lineno}: negative id in {line!r}")
            key = (h, r, t)
            if key in seen:
                continue
            seen.add(key)
            triples.append(Triple(h, r, t))
    return KnowledgeGraph(triples)
