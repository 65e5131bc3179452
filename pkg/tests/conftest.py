import sys
from pathlib import Path

import numpy as np
import torch

sys.path.insert(0, str(Path(__file__).parent))

from atagkit.features import VisualFeatureMap
from atagkit.graph import AtagStructure, AttributeGraph, GraphNode

FIXTURES = Path(__file__).parent / "fixtures"


def adjacency_with_global(n: int, edges: list[tuple[int, int]]) -> np.ndarray:
    adj = np.zeros((n + 1, n + 1), dtype=bool)
    adj[0, 1:] = adj[1:, 0] = True
    for i, j in edges:
        adj[i, j] = adj[j, i] = True
    return adj


def make_structure(
    abnormalities: list[tuple[str, int]],
    abn_edges: list[tuple[int, int]],
    attributes: dict[int, list[tuple[str, int]]],
    attr_edges: dict[int, list[tuple[int, int]]] | None = None,
) -> AtagStructure:
    """Hand-build a structure; indices in edges are 1-based node indices."""
    attr_edges = attr_edges or {}
    nodes = [GraphNode(c, i + 1, f) for i, (c, f) in enumerate(abnormalities)]
    graphs = {}
    for idx in range(1, len(nodes) + 1):
        attr_nodes = [GraphNode(c, i + 1, f) for i, (c, f) in enumerate(attributes[idx])]
        graphs[idx] = AttributeGraph(
            nodes=attr_nodes,
            adjacency=adjacency_with_global(len(attr_nodes), attr_edges.get(idx, [])),
        )
    structure = AtagStructure(
        abnormalities=nodes,
        abnormality_adjacency=adjacency_with_global(len(nodes), abn_edges),
        attribute_graphs=graphs,
        freq_threshold_abn=1,
        freq_threshold_attr=1,
        edge_threshold=1,
    )
    structure.validate()
    return structure


def tiny_structure() -> AtagStructure:
    """3 abnormalities (chain 1-2-3 plus edge 1-3), 2 attributes each."""
    return make_structure(
        abnormalities=[("edema", 6), ("effusion", 4), ("mass", 2)],
        abn_edges=[(1, 2), (2, 3), (1, 3)],
        attributes={
            1: [("mild", 3), ("diffuse", 2)],
            2: [("left", 3), ("small", 1)],
            3: [("round", 2)],
        },
        attr_edges={1: [(1, 2)], 2: [(1, 2)]},
    )


def seeded_feature_map(seed: int, hw: int = 4, feature_dim: int = 8) -> VisualFeatureMap:
    gen = torch.Generator().manual_seed(seed)
    grid = torch.randn(hw, feature_dim, dtype=torch.float64, generator=gen)
    return VisualFeatureMap(grid=grid, height=hw, width=1)
