"""Attributed abnormality graph construction and serialization.

The structure is two-level: an abnormality graph whose nodes are clinical
findings kept above a case-frequency threshold, plus one attribute graph per
abnormality holding the descriptors co-mentioned with it. Every graph gets a
global node at index 0 connected to all of its nodes. Edges join nodes whose
case-level co-occurrence count reaches the edge threshold.
"""

from __future__ import annotations

import hashlib
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .corpus import ReportCase
from .errors import GraphConstructionError, GraphFormatError, ValidationError
from .lexicon import (
    LexiconEntry,
    POSITIVE,
    extract_annotations,
    extract_case,
)

FORMAT_TAG = "atag-graph v1"
PLACEHOLDER_ATTRIBUTE = "unspecified"
DEFAULT_EDGE_THRESHOLD = 2


@dataclass(frozen=True)
class GraphNode:
    canonical: str
    index: int  # 1-based; 0 is the global node
    frequency: int


@dataclass
class AttributeGraph:
    """Attribute nodes of one abnormality plus adjacency incl. global node 0."""

    nodes: list[GraphNode]
    adjacency: np.ndarray
    co_occurrence: dict[tuple[int, int], int] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.nodes)


@dataclass
class AtagStructure:
    abnormalities: list[GraphNode]
    abnormality_adjacency: np.ndarray
    attribute_graphs: dict[int, AttributeGraph]
    freq_threshold_abn: int
    freq_threshold_attr: int
    edge_threshold: int
    co_occurrence: dict[tuple[int, int], int] = field(default_factory=dict)

    @property
    def n_abnormalities(self) -> int:
        return len(self.abnormalities)

    def abnormality_canonicals(self) -> list[str]:
        return [n.canonical for n in self.abnormalities]

    def frequency_table(self) -> dict[str, int]:
        return {n.canonical: n.frequency for n in self.abnormalities}

    def attribute_canonicals(self, index: int) -> list[str]:
        return [n.canonical for n in self.attribute_graphs[index].nodes]

    def distinct_attributes(self) -> set[str]:
        out: set[str] = set()
        for g in self.attribute_graphs.values():
            out.update(n.canonical for n in g.nodes)
        return out

    def validate(self) -> None:
        _check_adjacency(self.abnormality_adjacency, self.n_abnormalities, "abnormality")
        for idx, g in self.attribute_graphs.items():
            if idx < 1 or idx > self.n_abnormalities:
                raise GraphFormatError(f"attribute graph index {idx} out of range")
            if g.size < 1:
                raise GraphFormatError(f"attribute graph {idx} is empty")
            _check_adjacency(g.adjacency, g.size, f"attribute graph {idx}")
        if set(self.attribute_graphs) != set(range(1, self.n_abnormalities + 1)):
            raise GraphFormatError("every abnormality needs exactly one attribute graph")

    def stats(self) -> dict:
        """Summary counts: sizes and per-abnormality attribute statistics."""
        per_abn = [self.attribute_graphs[i].size for i in range(1, self.n_abnormalities + 1)]
        return {
            "abnormalities": self.n_abnormalities,
            "attributes": len(self.distinct_attributes()),
            "max_attributes": int(max(per_abn)) if per_abn else 0,
            "min_attributes": int(min(per_abn)) if per_abn else 0,
            "avg_attributes": float(np.mean(per_abn)) if per_abn else 0.0,
            "std_attributes": float(np.std(per_abn)) if per_abn else 0.0,
            "abnormality_edges": int(self.abnormality_adjacency.sum() // 2),
        }


def _check_adjacency(adj: np.ndarray, n_nodes: int, label: str) -> None:
    expected = n_nodes + 1
    if adj.shape != (expected, expected):
        raise GraphFormatError(f"{label} adjacency must be ({expected},{expected})")
    if not np.array_equal(adj, adj.T):
        raise GraphFormatError(f"{label} adjacency is not symmetric")
    if np.any(np.diag(adj)):
        raise GraphFormatError(f"{label} adjacency has self-loops")
    if n_nodes and not np.all(adj[0, 1:]):
        raise GraphFormatError(f"{label} global node must connect to every node")


def _order_nodes(frequencies: dict[str, int]) -> list[GraphNode]:
    ordered = sorted(frequencies.items(), key=lambda kv: (-kv[1], kv[0]))
    return [GraphNode(canonical=c, index=i + 1, frequency=f) for i, (c, f) in enumerate(ordered)]


def _adjacency_from_pairs(
    nodes: list[GraphNode], pair_counts: dict[tuple[str, str], int], edge_threshold: int
) -> tuple[np.ndarray, dict[tuple[int, int], int]]:
    n = len(nodes)
    index = {node.canonical: node.index for node in nodes}
    adj = np.zeros((n + 1, n + 1), dtype=bool)
    adj[0, 1:] = True
    adj[1:, 0] = True
    kept: dict[tuple[int, int], int] = {}
    for (a, b), count in pair_counts.items():
        if a in index and b in index and a != b:
            i, j = sorted((index[a], index[b]))
            kept[(i, j)] = count
            if count >= edge_threshold:
                adj[i, j] = adj[j, i] = True
    return adj, kept


def _build_from_case_tuples(
    case_tuples: list[list],
    freq_threshold_abn: int,
    freq_threshold_attr: int,
    edge_threshold: int,
) -> AtagStructure:
    if freq_threshold_abn < 1 or freq_threshold_attr < 1:
        raise ValidationError("frequency thresholds must be >= 1")
    abn_cases: dict[str, set[int]] = defaultdict(set)
    pair_cases: dict[tuple[str, str], set[int]] = defaultdict(set)
    attr_cases: dict[str, dict[str, set[int]]] = defaultdict(lambda: defaultdict(set))
    attr_pair_cases: dict[str, dict[tuple[str, str], set[int]]] = defaultdict(
        lambda: defaultdict(set)
    )
    for case_idx, tuples in enumerate(case_tuples):
        per_case: dict[str, set[str]] = defaultdict(set)
        for tup in tuples:
            if tup.negation != POSITIVE:
                continue
            per_case[tup.abnormality].update(tup.attributes)
            abn_cases[tup.abnormality].add(case_idx)
        abns = sorted(per_case)
        for i, a in enumerate(abns):
            for b in abns[i + 1 :]:
                pair_cases[(a, b)].add(case_idx)
            attrs = sorted(per_case[a])
            for ai, x in enumerate(attrs):
                attr_cases[a][x].add(case_idx)
                for y in attrs[ai + 1 :]:
                    attr_pair_cases[a][(x, y)].add(case_idx)

    abn_freq = {a: len(c) for a, c in abn_cases.items() if len(c) >= freq_threshold_abn}
    if not abn_freq:
        raise GraphConstructionError(
            "no abnormality reached the frequency threshold; lower --abn-freq or check the corpus"
        )
    abn_nodes = _order_nodes(abn_freq)
    abn_adj, abn_cooc = _adjacency_from_pairs(
        abn_nodes, {k: len(v) for k, v in pair_cases.items()}, edge_threshold
    )

    attribute_graphs: dict[int, AttributeGraph] = {}
    for node in abn_nodes:
        attr_freq = {
            b: len(c)
            for b, c in attr_cases.get(node.canonical, {}).items()
            if len(c) >= freq_threshold_attr
        }
        if not attr_freq:
            attr_freq = {PLACEHOLDER_ATTRIBUTE: 0}
        attr_nodes = _order_nodes(attr_freq)
        pair_counts = {
            k: len(v) for k, v in attr_pair_cases.get(node.canonical, {}).items()
        }
        adj, cooc = _adjacency_from_pairs(attr_nodes, pair_counts, edge_threshold)
        attribute_graphs[node.index] = AttributeGraph(
            nodes=attr_nodes, adjacency=adj, co_occurrence=cooc
        )

    structure = AtagStructure(
        abnormalities=abn_nodes,
        abnormality_adjacency=abn_adj,
        attribute_graphs=attribute_graphs,
        freq_threshold_abn=freq_threshold_abn,
        freq_threshold_attr=freq_threshold_attr,
        edge_threshold=edge_threshold,
        co_occurrence=abn_cooc,
    )
    structure.validate()
    return structure


def build_from_annotations(
    cases: list[ReportCase],
    lexicon: list[LexiconEntry],
    freq_threshold_abn: int,
    freq_threshold_attr: int,
    edge_threshold: int = DEFAULT_EDGE_THRESHOLD,
) -> AtagStructure:
    """Build the graph from annotation strings ("Finding / attr / attr")."""
    case_tuples = [extract_annotations(case, lexicon) for case in cases]
    if not any(case_tuples):
        raise GraphConstructionError("no annotation produced a clinical finding")
    return _build_from_case_tuples(
        case_tuples, freq_threshold_abn, freq_threshold_attr, edge_threshold
    )


def build_from_reports(
    cases: list[ReportCase],
    lexicon: list[LexiconEntry],
    freq_threshold_abn: int,
    freq_threshold_attr: int,
    edge_threshold: int = DEFAULT_EDGE_THRESHOLD,
) -> AtagStructure:
    """Build the graph from positive tuples extracted from findings text."""
    case_tuples = [extract_case(case, lexicon) for case in cases]
    return _build_from_case_tuples(
        case_tuples, freq_threshold_abn, freq_threshold_attr, edge_threshold
    )


def intersect(a: AtagStructure, b: AtagStructure) -> AtagStructure:
    """Restrict graph `a` to abnormalities and attributes shared with `b`.

    Frequencies and edges come from `a`; a generic cross-corpus graph is the
    intersection applied to either side.
    """
    b_abn = set(b.abnormality_canonicals())
    b_attrs_for = {
        node.canonical: set(b.attribute_canonicals(node.index)) for node in b.abnormalities
    }
    keep = [n for n in a.abnormalities if n.canonical in b_abn]
    if not keep:
        raise GraphConstructionError("graphs share no abnormality")
    abn_freq = {n.canonical: n.frequency for n in keep}
    abn_nodes = _order_nodes(abn_freq)
    old_by_canonical = {n.canonical: n.index for n in a.abnormalities}

    pair_counts: dict[tuple[str, str], int] = {}
    for (i, j), count in a.co_occurrence.items():
        ci = a.abnormalities[i - 1].canonical
        cj = a.abnormalities[j - 1].canonical
        if ci in abn_freq and cj in abn_freq and a.abnormality_adjacency[i, j]:
            pair_counts[(ci, cj)] = count
    adj, cooc = _adjacency_from_pairs(abn_nodes, pair_counts, 1)

    attribute_graphs: dict[int, AttributeGraph] = {}
    for node in abn_nodes:
        old_graph = a.attribute_graphs[old_by_canonical[node.canonical]]
        shared = b_attrs_for.get(node.canonical, set())
        kept_attrs = {
            n.canonical: n.frequency for n in old_graph.nodes if n.canonical in shared
        }
        if not kept_attrs:
            kept_attrs = {PLACEHOLDER_ATTRIBUTE: 0}
        attr_nodes = _order_nodes(kept_attrs)
        old_attr_idx = {n.canonical: n.index for n in old_graph.nodes}
        attr_pairs: dict[tuple[str, str], int] = {}
        for (i, j), count in old_graph.co_occurrence.items():
            ci = old_graph.nodes[i - 1].canonical
            cj = old_graph.nodes[j - 1].canonical
            if (
                ci in kept_attrs
                and cj in kept_attrs
                and old_graph.adjacency[old_attr_idx[ci], old_attr_idx[cj]]
            ):
                attr_pairs[(ci, cj)] = count
        g_adj, g_cooc = _adjacency_from_pairs(attr_nodes, attr_pairs, 1)
        attribute_graphs[node.index] = AttributeGraph(
            nodes=attr_nodes, adjacency=g_adj, co_occurrence=g_cooc
        )

    out = AtagStructure(
        abnormalities=abn_nodes,
        abnormality_adjacency=adj,
        attribute_graphs=attribute_graphs,
        freq_threshold_abn=a.freq_threshold_abn,
        freq_threshold_attr=a.freq_threshold_attr,
        edge_threshold=a.edge_threshold,
        co_occurrence=cooc,
    )
    out.validate()
    return out


# ---------------------------------------------------------------------------
# Serialization


def serialize(structure: AtagStructure) -> str:
    structure.validate()
    lines = [FORMAT_TAG]
    lines.append(
        f"thresholds {structure.freq_threshold_abn} {structure.freq_threshold_attr} "
        f"{structure.edge_threshold}"
    )
    for node in structure.abnormalities:
        lines.append(f"abnormality {node.index} {node.frequency} {node.canonical}")
    adj = structure.abnormality_adjacency
    for i in range(adj.shape[0]):
        for j in range(adj.shape[1]):
            if adj[i, j]:
                lines.append(f"abn-edge {i} {j}")
    for (i, j), count in sorted(structure.co_occurrence.items()):
        lines.append(f"abn-cooc {i} {j} {count}")
    for abn_index in range(1, structure.n_abnormalities + 1):
        graph = structure.attribute_graphs[abn_index]
        lines.append(f"attr-graph {abn_index}")
        for node in graph.nodes:
            lines.append(f"attr {node.index} {node.frequency} {node.canonical}")
        for i in range(graph.adjacency.shape[0]):
            for j in range(graph.adjacency.shape[1]):
                if graph.adjacency[i, j]:
                    lines.append(f"attr-edge {i} {j}")
        for (i, j), count in sorted(graph.co_occurrence.items()):
            lines.append(f"attr-cooc {i} {j} {count}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def deserialize(text: str) -> AtagStructure:
    lines = [ln.rstrip("\n") for ln in text.splitlines()]
    if not lines or lines[0] != FORMAT_TAG:
        raise GraphFormatError(f"expected header {FORMAT_TAG!r}")
    thresholds = None
    abn_nodes: list[GraphNode] = []
    abn_edges: list[tuple[int, int]] = []
    abn_cooc: dict[tuple[int, int], int] = {}
    attr_sections: list[tuple[int, list[GraphNode], list[tuple[int, int]], dict]] = []
    current = None  # mutable view of the section being parsed
    saw_end = False

    def parse_node(parts: list[str], lineno: int) -> GraphNode:
        if len(parts) < 3:
            raise GraphFormatError(f"line {lineno}: malformed node record")
        return GraphNode(
            canonical=" ".join(parts[2:]), index=int(parts[0]), frequency=int(parts[1])
        )

    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "thresholds":
                thresholds = (int(parts[1]), int(parts[2]), int(parts[3]))
            elif kind == "abnormality":
                abn_nodes.append(parse_node(parts[1:], lineno))
            elif kind == "abn-edge":
                abn_edges.append((int(parts[1]), int(parts[2])))
            elif kind == "abn-cooc":
                abn_cooc[(int(parts[1]), int(parts[2]))] = int(parts[3])
            elif kind == "attr-graph":
                current = (int(parts[1]), [], [], {})
                attr_sections.append(current)
            elif kind == "attr":
                if current is None:
                    raise GraphFormatError(f"line {lineno}: attr outside attr-graph")
                current[1].append(parse_node(parts[1:], lineno))
            elif kind == "attr-edge":
                if current is None:
                    raise GraphFormatError(f"line {lineno}: attr-edge outside attr-graph")
                current[2].append((int(parts[1]), int(parts[2])))
            elif kind == "attr-cooc":
                if current is None:
                    raise GraphFormatError(f"line {lineno}: attr-cooc outside attr-graph")
                current[3][(int(parts[1]), int(parts[2]))] = int(parts[3])
            elif kind == "end":
                saw_end = True
            else:
                raise GraphFormatError(f"line {lineno}: unknown record {kind!r}")
        except (ValueError, IndexError) as exc:
            raise GraphFormatError(f"line {lineno}: {exc}") from exc

    if thresholds is None or not saw_end:
        raise GraphFormatError("missing thresholds or end record")

    def edges_to_adjacency(n_nodes: int, edges: list[tuple[int, int]], label: str) -> np.ndarray:
        adj = np.zeros((n_nodes + 1, n_nodes + 1), dtype=bool)
        for i, j in edges:
            if not (0 <= i <= n_nodes and 0 <= j <= n_nodes):
                raise GraphFormatError(f"{label}: edge ({i},{j}) endpoint out of range")
            adj[i, j] = True
        return adj

    abn_nodes.sort(key=lambda n: n.index)
    if [n.index for n in abn_nodes] != list(range(1, len(abn_nodes) + 1)):
        raise GraphFormatError("abnormality indices must be 1..N")
    adjacency = edges_to_adjacency(len(abn_nodes), abn_edges, "abnormality")
    attribute_graphs: dict[int, AttributeGraph] = {}
    for idx, nodes, edges, cooc in attr_sections:
        nodes.sort(key=lambda n: n.index)
        if [n.index for n in nodes] != list(range(1, len(nodes) + 1)):
            raise GraphFormatError(f"attribute graph {idx}: indices must be 1..N")
        attribute_graphs[idx] = AttributeGraph(
            nodes=nodes,
            adjacency=edges_to_adjacency(len(nodes), edges, f"attribute graph {idx}"),
            co_occurrence=cooc,
        )
    structure = AtagStructure(
        abnormalities=abn_nodes,
        abnormality_adjacency=adjacency,
        attribute_graphs=attribute_graphs,
        freq_threshold_abn=thresholds[0],
        freq_threshold_attr=thresholds[1],
        edge_threshold=thresholds[2],
        co_occurrence=abn_cooc,
    )
    structure.validate()
    return structure


def save(structure: AtagStructure, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(structure))


def load(path: str) -> AtagStructure:
    with open(path, "r", encoding="utf-8") as fh:
        return deserialize(fh.read())


def graph_hash(structure: AtagStructure) -> str:
    """Stable content hash binding checkpoints to the graph they trained on."""
    return hashlib.sha256(serialize(structure).encode("utf-8")).hexdigest()
