"""Graph embedding encoder: spatial attention over visual features, concept
embeddings, graph attention layers, and the weighted multi-label
classification objective.

All matrices indexed over graph nodes put the global node at row 0, matching
the adjacency convention of the graph module.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .errors import ValidationError
from .features import VisualFeatureMap
from .graph import AtagStructure
from .lexicon import ExtractionTuple, POSITIVE


def _check_finite(tensor: torch.Tensor, what: str) -> None:
    if not torch.isfinite(tensor).all():
        raise ValidationError(f"{what} contains non-finite values")


class SpatialAttention(nn.Module):
    """Per-channel 1x1 convolution over spatial positions, normalized so each
    channel's weights sum to 1 across positions (exponential normalization)."""

    def __init__(self, feature_dim: int, channels: int, dtype: torch.dtype = torch.float64):
        super().__init__()
        if channels < 1:
            raise ValidationError("need at least one attention channel")
        self.conv = nn.Linear(feature_dim, channels, dtype=dtype)

    def forward(self, grid: torch.Tensor) -> torch.Tensor:
        _check_finite(grid, "spatial attention input")
        logits = self.conv(grid).transpose(0, 1)  # (channels, positions)
        return torch.softmax(logits, dim=1)


def attend_features(alpha: torch.Tensor, fmap: VisualFeatureMap) -> torch.Tensor:
    """Attention-weighted visual features with a pooled global row at index 0.

    alpha is (channels, positions); returns (channels+1, feature_dim) where
    row 0 is the mean of the attended rows.
    """
    if alpha.shape[1] != fmap.grid.shape[0]:
        raise ValidationError("attention width must match the number of spatial positions")
    attended = alpha @ fmap.grid
    global_row = attended.mean(dim=0, keepdim=True)
    return torch.cat([global_row, attended], dim=0)


class GatLayer(nn.Module):
    """Single-head graph attention layer.

    Edge logits come from a shared linear map plus leaky-rectified additive
    scoring; self-loops are always added so every node attends at least to
    itself. Output activation defaults to ELU; tests use identity.
    """

    def __init__(
        self,
        dim_in: int,
        dim_out: int,
        negative_slope: float = 0.2,
        activation: str = "elu",
        dtype: torch.dtype = torch.float64,
    ):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(dim_in, dim_out, dtype=dtype))
        self.attn_src = nn.Parameter(torch.empty(dim_out, dtype=dtype))
        self.attn_dst = nn.Parameter(torch.empty(dim_out, dtype=dtype))
        nn.init.xavier_uniform_(self.weight)
        bound = (6.0 / (2 * dim_out)) ** 0.5
        nn.init.uniform_(self.attn_src, -bound, bound)
        nn.init.uniform_(self.attn_dst, -bound, bound)
        self.negative_slope = negative_slope
        if activation not in ("elu", "identity"):
            raise ValidationError(f"unsupported GAT activation {activation!r}")
        self.activation = activation

    def attention(self, x: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        """Neighborhood attention matrix (rows sum to 1 over each node's
        neighbors-plus-self)."""
        n = x.shape[0]
        h = x @ self.weight
        scores = h @ self.attn_src
        scores_dst = h @ self.attn_dst
        logits = F.leaky_relu(
            scores.unsqueeze(1) + scores_dst.unsqueeze(0), self.negative_slope
        )
        mask = adjacency.clone()
        mask = mask | torch.eye(n, dtype=torch.bool, device=x.device)
        logits = logits.masked_fill(~mask, float("-inf"))
        return torch.softmax(logits, dim=1)

    def forward(self, x: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        if adjacency.shape != (x.shape[0], x.shape[0]):
            raise ValidationError("adjacency shape must match the node count")
        if not torch.equal(adjacency, adjacency.T):
            raise ValidationError("adjacency must be symmetric")
        attn = self.attention(x, adjacency)
        out = attn @ (x @ self.weight)
        if self.activation == "elu":
            out = F.elu(out)
        return out


@dataclass
class EncoderOutput:
    """Everything a forward pass produces, node-aligned with the graph."""

    z_abnormality: torch.Tensor  # (|A|+1, D)
    z_attributes: dict[int, torch.Tensor]  # abnormality index -> (|B_i|+1, D)
    abnormality_logits: torch.Tensor  # (|A|+1,)
    attribute_logits: dict[int, torch.Tensor]
    spatial_attention: torch.Tensor  # (|A|, H*W)
    attribute_attention: dict[int, torch.Tensor]  # (|B_i|, H*W)

    @property
    def abnormality_probabilities(self) -> torch.Tensor:
        return torch.sigmoid(self.abnormality_logits)

    @property
    def attribute_probabilities(self) -> dict[int, torch.Tensor]:
        return {i: torch.sigmoid(v) for i, v in self.attribute_logits.items()}


class AtagEncoder(nn.Module):
    """Maps a visual feature map to node embeddings and node probabilities.

    The abnormality graph and every attribute graph get their own spatial
    attention channels and share concept-embedding tables; attribute graphs
    share one GAT weight set unless share_attribute_gat is disabled.
    """

    def __init__(
        self,
        structure: AtagStructure,
        model_dim: int,
        share_attribute_gat: bool = True,
        gat_activation: str = "elu",
        dtype: torch.dtype = torch.float64,
    ):
        super().__init__()
        self.model_dim = model_dim
        self.feature_dim = 2 * model_dim
        self.n_abnormalities = structure.n_abnormalities
        self.register_buffer(
            "abn_adjacency", torch.as_tensor(structure.abnormality_adjacency, dtype=torch.bool)
        )
        self.attr_sizes = {}
        union = sorted(structure.distinct_attributes())
        self.attr_union_index = {c: i for i, c in enumerate(union)}
        self.attr_rows = {}
        for idx in range(1, structure.n_abnormalities + 1):
            g = structure.attribute_graphs[idx]
            self.attr_sizes[idx] = g.size
            self.register_buffer(
                f"attr_adjacency_{idx}", torch.as_tensor(g.adjacency, dtype=torch.bool)
            )
            self.attr_rows[idx] = torch.tensor(
                [self.attr_union_index[n.canonical] for n in g.nodes], dtype=torch.long
            )

        d, fd = model_dim, self.feature_dim
        self.concept_abn = nn.Parameter(
            torch.randn(structure.n_abnormalities, d, dtype=dtype) * 0.1
        )
        self.concept_attr = nn.Parameter(torch.randn(len(union), d, dtype=dtype) * 0.1)
        self.spatial_abn = SpatialAttention(fd, structure.n_abnormalities, dtype=dtype)
        self.spatial_attr = nn.ModuleList(
            SpatialAttention(fd, self.attr_sizes[i], dtype=dtype)
            for i in range(1, structure.n_abnormalities + 1)
        )
        self.project_abn = nn.Linear(3 * d, d, bias=False, dtype=dtype)
        self.project_attr = nn.Linear(3 * d, d, bias=False, dtype=dtype)
        self.gat_abn = GatLayer(d, d, activation=gat_activation, dtype=dtype)
        self.share_attribute_gat = share_attribute_gat
        if share_attribute_gat:
            self.gat_attr = nn.ModuleList(
                [GatLayer(d, d, activation=gat_activation, dtype=dtype)]
            )
        else:
            self.gat_attr = nn.ModuleList(
                GatLayer(d, d, activation=gat_activation, dtype=dtype)
                for _ in range(structure.n_abnormalities)
            )
        self.classify_abn = nn.Linear(d, 1, dtype=dtype)
        self.classify_attr = nn.Linear(d, 1, dtype=dtype)

    def attr_adjacency(self, index: int) -> torch.Tensor:
        return getattr(self, f"attr_adjacency_{index}")

    def _attr_gat(self, index: int) -> GatLayer:
        return self.gat_attr[0] if self.share_attribute_gat else self.gat_attr[index - 1]

    @staticmethod
    def _with_global(rows: torch.Tensor) -> torch.Tensor:
        return torch.cat([rows.mean(dim=0, keepdim=True), rows], dim=0)

    def embed_abnormalities(self, fmap: VisualFeatureMap) -> tuple[torch.Tensor, torch.Tensor]:
        alpha = self.spatial_abn(fmap.grid)
        f_abn = attend_features(alpha, fmap)
        e_abn = self._with_global(self.concept_abn)
        z = self.gat_abn(self.project_abn(torch.cat([f_abn, e_abn], dim=1)), self.abn_adjacency)
        return z, alpha

    def embed_attributes(
        self, fmap: VisualFeatureMap, abn_index: int, alpha_row: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if not 1 <= abn_index <= self.n_abnormalities:
            raise ValidationError(f"abnormality index {abn_index} out of range")
        weighted = alpha_row.unsqueeze(1) * fmap.grid
        alpha_attr = self.spatial_attr[abn_index - 1](weighted)
        f_attr = attend_features(alpha_attr, fmap)
        rows = self.attr_rows[abn_index]
        e_attr = self._with_global(self.concept_attr[rows])
        z = self._attr_gat(abn_index)(
            self.project_attr(torch.cat([f_attr, e_attr], dim=1)),
            self.attr_adjacency(abn_index),
        )
        return z, alpha_attr

    def forward(self, fmap: VisualFeatureMap) -> EncoderOutput:
        if fmap.feature_dim != self.feature_dim:
            raise ValidationError(
                f"feature dim {fmap.feature_dim} does not match encoder ({self.feature_dim})"
            )
        z_abn, alpha = self.embed_abnormalities(fmap)
        z_attr: dict[int, torch.Tensor] = {}
        alpha_attr: dict[int, torch.Tensor] = {}
        attr_logits: dict[int, torch.Tensor] = {}
        for idx in range(1, self.n_abnormalities + 1):
            z, a = self.embed_attributes(fmap, idx, alpha[idx - 1])
            z_attr[idx] = z
            alpha_attr[idx] = a
            attr_logits[idx] = self.classify_attr(z).squeeze(-1)
        return EncoderOutput(
            z_abnormality=z_abn,
            z_attributes=z_attr,
            abnormality_logits=self.classify_abn(z_abn).squeeze(-1),
            attribute_logits=attr_logits,
            spatial_attention=alpha,
            attribute_attention=alpha_attr,
        )


# ---------------------------------------------------------------------------
# Labels and the classification objective


@dataclass
class CaseLabels:
    """Binary node labels for one case; row 0 of each vector is the global node
    (no-finding for the abnormality graph, any-attribute for attribute graphs)."""

    abnormality: torch.Tensor  # (|A|+1,)
    attributes: dict[int, torch.Tensor]  # index -> (|B_i|+1,)


def derive_labels(
    tuples: list[ExtractionTuple], structure: AtagStructure, dtype: torch.dtype = torch.float64
) -> CaseLabels:
    """Project positive extraction tuples onto graph nodes.

    Tuples naming abnormalities or attributes outside the graph are ignored
    (they fell below the construction thresholds).
    """
    abn_index = {n.canonical: n.index for n in structure.abnormalities}
    y_abn = torch.zeros(structure.n_abnormalities + 1, dtype=dtype)
    y_attr = {
        i: torch.zeros(structure.attribute_graphs[i].size + 1, dtype=dtype)
        for i in range(1, structure.n_abnormalities + 1)
    }
    any_positive = False
    for tup in tuples:
        if tup.negation != POSITIVE:
            continue
        any_positive = True
        idx = abn_index.get(tup.abnormality)
        if idx is None:
            continue
        y_abn[idx] = 1.0
        attr_index = {
            n.canonical: n.index for n in structure.attribute_graphs[idx].nodes
        }
        for attr in tup.attributes:
            a = attr_index.get(attr)
            if a is not None:
                y_attr[idx][a] = 1.0
        if y_attr[idx][1:].any():
            y_attr[idx][0] = 1.0
    if not any_positive:
        y_abn[0] = 1.0  # no finding
    return CaseLabels(abnormality=y_abn, attributes=y_attr)


def compute_class_weights(
    label_sets: list[CaseLabels], structure: AtagStructure, dtype: torch.dtype = torch.float64
) -> torch.Tensor:
    """Per-abnormality imbalance weights: absent-count / present-count.

    Index 0 carries the no-finding weight, or 1.0 when the corpus never (or
    always) hits the no-finding label.
    """
    total = len(label_sets)
    if total == 0:
        raise ValidationError("need at least one labeled case")
    counts = torch.stack([ls.abnormality for ls in label_sets]).sum(dim=0)
    w = torch.ones(structure.n_abnormalities + 1, dtype=dtype)
    for i, node in enumerate(structure.abnormalities, start=1):
        pos = float(counts[i])
        if pos == 0:
            raise ValidationError(
                f"abnormality {node.canonical!r} appears in no report; "
                "rebuild the graph with a higher frequency threshold or extend the corpus"
            )
        if pos == total:
            raise ValidationError(
                f"abnormality {node.canonical!r} appears in every report (weight 0); "
                "extend the corpus with negative cases"
            )
        w[i] = (total - pos) / pos
    pos0 = float(counts[0])
    if 0 < pos0 < total:
        w[0] = (total - pos0) / pos0
    return w


def attribute_loss_coefficients(weights: torch.Tensor) -> torch.Tensor:
    """Per-graph coefficients w_i / sqrt(sum_k w_k^2) over abnormalities 1..|A|."""
    w = weights[1:]
    denom = torch.sqrt((w ** 2).sum())
    if denom == 0:
        raise ValidationError("all abnormality weights are zero")
    return w / denom


def _weighted_bce(logits: torch.Tensor, targets: torch.Tensor, pos_weight) -> torch.Tensor:
    # -w*y*log(sigmoid) - (1-y)*log(1-sigmoid), numerically stable
    log_p = -F.softplus(-logits)
    log_not_p = -F.softplus(logits)
    return (-pos_weight * targets * log_p - (1 - targets) * log_not_p).mean()


def classification_loss(
    output: EncoderOutput,
    labels: CaseLabels,
    weights: torch.Tensor,
    beta_abnormality: float,
) -> torch.Tensor:
    """Convex combination of the abnormality loss and coefficient-weighted
    attribute-graph losses.
    """
    if not 0.0 <= beta_abnormality <= 1.0:
        raise ValidationError("beta_abnormality must lie in [0, 1]")
    loss_abn = _weighted_bce(output.abnormality_logits, labels.abnormality, weights)
    coeff = attribute_loss_coefficients(weights)
    loss_attr = output.abnormality_logits.new_zeros(())
    for idx, logits in output.attribute_logits.items():
        per_graph = _weighted_bce(logits, labels.attributes[idx], weights[idx])
        loss_attr = loss_attr + coeff[idx - 1] * per_graph
    return beta_abnormality * loss_abn + (1.0 - beta_abnormality) * loss_attr
