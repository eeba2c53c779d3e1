"""Ontology axioms: parsing, DAG validation and constraint compilation.

Subsumption edges are read as ``child<TAB>parent`` and disjointness axioms as
``classA<TAB>classB``.  Reachability is computed with Python integers used as
bitsets, which keeps closure cheap for a few tens of thousands of classes.
"""

from __future__ import annotations

import graphlib
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class OntologyError(ValueError):
    """Base class for malformed or contradictory ontology input."""


class ParseError(OntologyError):
    def __init__(self, path, lineno: int, message: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class CycleError(OntologyError):
    """The subsumption relation contains a cycle; ``path`` is one witness."""

    def __init__(self, path: Sequence[str]):
        self.path = list(path)
        super().__init__("subsumption cycle: " + " -> ".join(self.path))


class InconsistentAxioms(OntologyError):
    """Some class pair is both subsumed and disjoint (or a class is disjoint from itself)."""

    def __init__(self, pairs: Sequence[tuple[str, str]]):
        self.pairs = list(pairs)
        shown = ", ".join(f"{a}/{b}" for a, b in self.pairs[:10])
        more = f" (+{len(self.pairs) - 10} more)" if len(self.pairs) > 10 else ""
        super().__init__(f"{len(self.pairs)} inconsistent pair(s): {shown}{more}")


def _pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass
class OntologyGraph:
    """Classes with direct subsumption and disjointness axioms.

    ``subsumptions`` holds ``(child, parent)`` id pairs and ``disjointness``
    holds unordered pairs stored as ``(min_id, max_id)``.
    """

    names: list[str] = field(default_factory=list)
    subsumptions: set[tuple[int, int]] = field(default_factory=set)
    disjointness: set[tuple[int, int]] = field(default_factory=set)
    annotated: set[int] = field(default_factory=set)

    def __post_init__(self):
        self.index = {name: i for i, name in enumerate(self.names)}
        if len(self.index) != len(self.names):
            raise OntologyError("duplicate class names")

    def __len__(self) -> int:
        return len(self.names)

    def intern(self, name: str) -> int:
        idx = self.index.get(name)
        if idx is None:
            idx = len(self.names)
            self.names.append(name)
            self.index[name] = idx
        return idx

    def add_subsumption(self, child: str, parent: str) -> None:
        if child == parent:
            raise OntologyError(f"self-loop subsumption {child!r}")
        self.subsumptions.add((self.intern(child), self.intern(parent)))

    def add_disjointness(self, a: str, b: str) -> None:
        if a == b:
            raise OntologyError(f"class {a!r} declared disjoint from itself")
        self.disjointness.add(_pair(self.intern(a), self.intern(b)))

    def parents(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.names]
        for child, parent in sorted(self.subsumptions):
            out[child].append(parent)
        return out

    def children(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.names]
        for child, parent in sorted(self.subsumptions):
            out[parent].append(child)
        return out

    @classmethod
    def from_pairs(
        cls,
        names: Sequence[str],
        subsumptions: Iterable[tuple[int, int]] = (),
        disjointness: Iterable[tuple[int, int]] = (),
        annotated: Optional[Iterable[int]] = None,
    ) -> "OntologyGraph":
        graph = cls(names=list(names))
        for child, parent in subsumptions:
            graph.add_subsumption(graph.names[child], graph.names[parent])
        for a, b in disjointness:
            graph.add_disjointness(graph.names[a], graph.names[b])
        graph.annotated = set(range(len(graph))) if annotated is None else set(annotated)
        return graph


def _read_pairs(path) -> Iterator[tuple[int, str, str]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                raise ParseError(path, lineno, f"expected two tab-separated fields, got {line!r}")
            yield lineno, parts[0].strip(), parts[1].strip()


def parse_ontology(edges_file, disjoint_file=None, annotated_file=None) -> OntologyGraph:
    """Read TSV axiom files into an :class:`OntologyGraph`.

    ``annotated_file`` lists one class name per line.  Without it every class
    counts as annotated, so label selection degenerates to descendant counting.
    """
    graph = OntologyGraph()
    for lineno, child, parent in _read_pairs(edges_file):
        if child == parent:
            raise ParseError(edges_file, lineno, f"self-loop subsumption {child!r}")
        graph.add_subsumption(child, parent)
    if disjoint_file is not None:
        for lineno, a, b in _read_pairs(disjoint_file):
            if a == b:
                raise ParseError(disjoint_file, lineno, f"class {a!r} disjoint from itself")
            graph.add_disjointness(a, b)
    if annotated_file is None:
        graph.annotated = set(range(len(graph)))
    else:
        with open(annotated_file, encoding="utf-8") as fh:
            for raw in fh:
                name = raw.strip()
                if name and not name.startswith("#"):
                    graph.annotated.add(graph.intern(name))
    return graph


def check_acyclic(graph: OntologyGraph) -> list[int]:
    """Topological order of the subsumption DAG, subclasses before superclasses."""
    sorter = graphlib.TopologicalSorter()
    for node in range(len(graph)):
        sorter.add(node)
    for child, parent in sorted(graph.subsumptions):
        sorter.add(parent, child)
    try:
        return list(sorter.static_order())
    except graphlib.CycleError as exc:
        # graphlib reports the cycle along child -> parent edges, first node repeated
        cycle = list(exc.args[1])[:-1]
        start = cycle.index(min(cycle))
        cycle = cycle[start:] + cycle[:start]
        raise CycleError([graph.names[i] for i in cycle + cycle[:1]]) from None


def ancestor_masks(graph: OntologyGraph, order: Optional[list[int]] = None) -> list[int]:
    """Strict ancestors of every class as an integer bitset."""
    order = check_acyclic(graph) if order is None else order
    parents = graph.parents()
    masks = [0] * len(graph)
    for node in reversed(order):
        m = 0
        for p in parents[node]:
            m |= masks[p] | (1 << p)
        masks[node] = m
    return masks


def descendant_masks(graph: OntologyGraph, order: Optional[list[int]] = None) -> list[int]:
    """Strict descendants of every class as an integer bitset."""
    order = check_acyclic(graph) if order is None else order
    children = graph.children()
    masks = [0] * len(graph)
    for node in order:
        m = 0
        for c in children[node]:
            m |= masks[c] | (1 << c)
        masks[node] = m
    return masks


def select_labels(graph: OntologyGraph, min_annotated_subclasses: int, count_self: bool = True) -> set[int]:
    """Classes with at least ``min_annotated_subclasses`` annotated descendants."""
    desc = descendant_masks(graph)
    annotated = 0
    for i in graph.annotated:
        annotated |= 1 << i
    selected = set()
    for node, mask in enumerate(desc):
        if count_self:
            mask |= 1 << node
        if (mask & annotated).bit_count() >= min_annotated_subclasses:
            selected.add(node)
    return selected


@dataclass(frozen=True)
class ConstraintSet:
    """Closed implication and disjointness pairs over a dense label universe.

    ``implications`` are ordered ``(sub, super)`` pairs; ``disjointness`` pairs
    are stored once as ``(min, max)``.  Both are kept sorted.
    """

    names: tuple[str, ...]
    implications: tuple[tuple[int, int], ...] = ()
    disjointness: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        n = len(self.names)
        impl = tuple(sorted(set(map(tuple, self.implications))))
        disj = tuple(sorted({_pair(a, b) for a, b in self.disjointness}))
        for a, b in impl + disj:
            if not (0 <= a < n and 0 <= b < n):
                raise OntologyError(f"pair ({a}, {b}) outside universe of size {n}")
            if a == b:
                raise OntologyError(f"reflexive pair ({a}, {a})")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "implications", impl)
        object.__setattr__(self, "disjointness", disj)

    @property
    def universe_size(self) -> int:
        return len(self.names)

    @cached_property
    def impl_index(self) -> tuple[np.ndarray, np.ndarray]:
        arr = np.asarray(self.implications, dtype=np.intp).reshape(-1, 2)
        return arr[:, 0], arr[:, 1]

    @cached_property
    def disj_index(self) -> tuple[np.ndarray, np.ndarray]:
        arr = np.asarray(self.disjointness, dtype=np.intp).reshape(-1, 2)
        return arr[:, 0], arr[:, 1]

    @cached_property
    def impl_incidence(self) -> tuple[np.ndarray, np.ndarray]:
        """One-hot ``(n_pairs, n_classes)`` matrices selecting sub- and superclass."""
        return self._incidence(*self.impl_index)

    @cached_property
    def disj_incidence(self) -> tuple[np.ndarray, np.ndarray]:
        return self._incidence(*self.disj_index)

    def _incidence(self, left: np.ndarray, right: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rows = np.arange(len(left))
        a = np.zeros((len(left), self.universe_size))
        b = np.zeros((len(left), self.universe_size))
        a[rows, left] = 1.0
        b[rows, right] = 1.0
        return a, b

    @classmethod
    def empty(cls, n: int) -> "ConstraintSet":
        return cls(names=tuple(f"C{i}" for i in range(n)))

    def summary(self) -> str:
        return (
            f"{self.universe_size} labels, {len(self.implications)} implications, "
            f"{len(self.disjointness)} disjointness"
        )


def validate(graph: OntologyGraph) -> None:
    """Reject direct disjointness axioms between classes related by subsumption."""
    order = check_acyclic(graph)
    anc = ancestor_masks(graph, order)
    desc = descendant_masks(graph, order)
    bad = []
    for c, d in sorted(graph.disjointness):
        if anc[c] >> d & 1 or anc[d] >> c & 1 or desc[c] & desc[d]:
            bad.append((graph.names[c], graph.names[d]))
    if bad:
        raise InconsistentAxioms(bad)


def compile_constraints(graph: OntologyGraph, labels: Optional[Iterable[int]] = None) -> ConstraintSet:
    """Close the axioms over ``labels`` and re-index them densely.

    Closure paths may pass through classes outside ``labels``.  Dense ids follow
    the lexicographic order of class names.
    """
    order = check_acyclic(graph)
    labels = set(range(len(graph))) if labels is None else set(labels)
    unknown = [i for i in labels if not 0 <= i < len(graph)]
    if unknown:
        raise OntologyError(f"label ids not in graph: {sorted(unknown)[:5]}")
    anc = ancestor_masks(graph, order)
    desc = descendant_masks(graph, order)

    ordered = sorted(labels, key=lambda i: graph.names[i])
    dense = {old: new for new, old in enumerate(ordered)}
    label_mask = 0
    for i in labels:
        label_mask |= 1 << i

    implications = set()
    for old in ordered:
        for sup in _bits(anc[old] & label_mask):
            implications.add((dense[old], dense[sup]))

    disjointness = set()
    conflicts = set()
    for c, d in sorted(graph.disjointness):
        left = (desc[c] | 1 << c) & label_mask
        right = (desc[d] | 1 << d) & label_mask
        for a in _bits(left & right):
            conflicts.add((graph.names[a], graph.names[a]))
        for a in _bits(left):
            for b in _bits(right):
                if a != b:
                    disjointness.add(_pair(dense[a], dense[b]))

    for a, b in disjointness:
        if (a, b) in implications or (b, a) in implications:
            conflicts.add((graph.names[ordered[a]], graph.names[ordered[b]]))
    if conflicts:
        raise InconsistentAxioms(sorted(conflicts))

    return ConstraintSet(
        names=tuple(graph.names[i] for i in ordered),
        implications=tuple(implications),
        disjointness=tuple(disjointness),
    )


def write_constraints(cs: ConstraintSet, path) -> None:
    lines = ["[classes]"]
    lines += [f"{i}\t{name}" for i, name in enumerate(cs.names)]
    lines.append("[implications]")
    lines += [f"{a}\t{b}" for a, b in cs.implications]
    lines.append("[disjointness]")
    lines += [f"{a}\t{b}" for a, b in cs.disjointness]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_constraints(path) -> ConstraintSet:
    sections: dict[str, list[tuple[int, str, str]]] = {"classes": [], "implications": [], "disjointness": []}
    current = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                if current not in sections:
                    raise ParseError(path, lineno, f"unknown section {line!r}")
                continue
            if current is None:
                raise ParseError(path, lineno, "row before any section header")
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(path, lineno, f"expected two tab-separated fields, got {line!r}")
            sections[current].append((lineno, parts[0], parts[1]))

    names: list[str] = []
    for expected, (lineno, idx, name) in enumerate(sections["classes"]):
        if idx != str(expected):
            raise ParseError(path, lineno, f"class ids must be dense and ordered, got {idx!r}")
        names.append(name)

    def ids(rows):
        out = []
        for lineno, a, b in rows:
            try:
                out.append((int(a), int(b)))
            except ValueError:
                raise ParseError(path, lineno, f"non-integer id in {a!r}/{b!r}") from None
        return out

    return ConstraintSet(
        names=tuple(names),
        implications=tuple(ids(sections["implications"])),
        disjointness=tuple(ids(sections["disjointness"])),
    )
