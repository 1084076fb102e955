"""Category hierarchy: a rooted tree of labelled nodes with uniform leaf depth."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping


class TaxonomyError(ValueError):
    def __init__(self, message: str, node=None):
        super().__init__(message if node is None else f"{message}: {node!r}")
        self.node = node


@dataclass(frozen=True)
class Taxonomy:
    """Immutable category tree.

    ``level_of`` maps every node to its depth (root is level 0); the
    classification levels are ``1..level_count``.
    """

    root: str
    labels: Mapping[str, str]
    parent: Mapping[str, str]
    level_of: Mapping[str, int]
    level_count: int
    _by_level: tuple = field(repr=False, compare=False)
    _children: Mapping[str, tuple] = field(repr=False, compare=False)

    @property
    def nodes(self) -> frozenset:
        return frozenset(self.labels)

    @property
    def edges(self) -> list[tuple[str, str]]:
        return sorted((p, c) for c, p in self.parent.items())

    def label(self, node: str) -> str:
        return self.labels[node]

    def children(self, node: str) -> tuple:
        return self._children.get(node, ())

    def categories_at(self, level: int) -> list[str]:
        """Node ids at ``level`` in lexicographic order; the order is the class index."""
        if not 1 <= level <= self.level_count:
            raise TaxonomyError(f"level must be in 1..{self.level_count}", level)
        return list(self._by_level[level])

    def num_classes(self, level: int) -> int:
        return len(self.categories_at(level))

    def class_index(self, level: int) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.categories_at(level))}

    def path_to(self, node: str) -> list[str]:
        """Label path (levels 1..L) ending at ``node``."""
        path = []
        while node != self.root:
            path.append(node)
            node = self.parent[node]
        return path[::-1]

    def validate_path(self, path) -> bool:
        """True iff consecutive elements are parent/child edges.

        Raises on a malformed path (wrong length, or a node at the wrong level).
        """
        path = list(path)
        if len(path) != self.level_count:
            raise TaxonomyError(f"path must have length {self.level_count}", path)
        for k, node in enumerate(path, start=1):
            if self.level_of.get(node) != k:
                raise TaxonomyError(f"node is not at level {k}", node)
        return all(self.parent[c] == p for p, c in zip(path, path[1:]))

    def records(self) -> list[dict]:
        out = [{"id": self.root, "label": self.labels[self.root], "parent": None}]
        for level in range(1, self.level_count + 1):
            for c in self._by_level[level]:
                out.append({"id": c, "label": self.labels[c], "parent": self.parent[c]})
        return out

    def save(self, path):
        write_taxonomy(self, path)


def build_taxonomy(edges: Iterable[tuple[str, str]], labels: Mapping[str, str], root: str) -> Taxonomy:
    edges = list(edges)
    if not edges:
        raise TaxonomyError("edge list is empty")
    parent: dict[str, str] = {}
    children: dict[str, list[str]] = {}
    ids = {root}
    for p, c in edges:
        ids.update((p, c))
        if c == root:
            raise TaxonomyError("cycle detected (edge into root)", c)
        if c in parent and parent[c] != p:
            raise TaxonomyError("node has two parents", c)
        if c in parent:
            continue
        parent[c] = p
        children.setdefault(p, []).append(c)
    for node in sorted(ids):
        if node not in labels:
            raise TaxonomyError("missing label", node)
        if not str(labels[node]).split():
            raise TaxonomyError("empty label", node)

    level_of = {root: 0}
    queue = deque([root])
    while queue:
        node = queue.popleft()
        for c in children.get(node, ()):
            if c in level_of:
                raise TaxonomyError("cycle detected", c)
            level_of[c] = level_of[node] + 1
            queue.append(c)
    for node in sorted(ids):
        if node not in level_of:
            # a node not reachable from root either sits on a cycle or hangs
            # off a parent that is itself unreachable
            seen, cur = set(), node
            while cur in parent and cur not in seen:
                seen.add(cur)
                cur = parent[cur]
            if cur in seen:
                raise TaxonomyError("cycle detected", node)
            raise TaxonomyError("unreachable node", node)

    leaves = [n for n in ids if n != root and n not in children]
    depth = max(level_of.values())
    for leaf in sorted(leaves):
        if level_of[leaf] != depth:
            raise TaxonomyError("non-uniform leaf depth", leaf)

    by_level = [[] for _ in range(depth + 1)]
    for node, lvl in level_of.items():
        by_level[lvl].append(node)
    return Taxonomy(
        root=root,
        labels={n: str(labels[n]) for n in sorted(ids)},
        parent=dict(sorted(parent.items())),
        level_of=dict(sorted(level_of.items())),
        level_count=depth,
        _by_level=tuple(tuple(sorted(ns)) for ns in by_level),
        _children={p: tuple(sorted(cs)) for p, cs in sorted(children.items())},
    )


def taxonomy_from_records(records: Iterable[Mapping]) -> Taxonomy:
    edges, labels, roots = [], {}, []
    for rec in records:
        node = rec["id"]
        if node in labels:
            raise TaxonomyError("duplicate node id", node)
        labels[node] = rec["label"]
        if rec.get("parent") is None:
            roots.append(node)
        else:
            edges.append((rec["parent"], node))
    if len(roots) != 1:
        raise TaxonomyError(f"expected exactly one root record, found {len(roots)}")
    return build_taxonomy(edges, labels, roots[0])


def read_taxonomy(path) -> Taxonomy:
    with open(path, encoding="utf-8") as fh:
        return taxonomy_from_records(json.loads(line) for line in fh if line.strip())


def write_taxonomy(tax: Taxonomy, path):
    Path(path).write_text(
        "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in tax.records()),
        encoding="utf-8",
    )
