"""Stochastic graph views for contrastive pre-training.

Each view drops edges independently and zeroes whole feature columns, then
rebuilds the normalized adjacency from the surviving edges. Views are a pure
function of (graph, config, epoch); nothing is compounded across epochs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphdata import Graph, SparseAdjacency, normalized_from_edges
from .seeding import derive_seed


@dataclass
class AugmentConfig:
    edge_drop_1: float = 0.3
    edge_drop_2: float = 0.3
    feat_mask_1: float = 0.3
    feat_mask_2: float = 0.3
    seed: int | None = None

    def __post_init__(self):
        for name in ("edge_drop_1", "edge_drop_2", "feat_mask_1", "feat_mask_2"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ValueError(f"{name} must be in [0, 1); got {p}")


View = tuple[SparseAdjacency, np.ndarray]


def _one_view(g: Graph, adj: SparseAdjacency, p_edge: float, p_feat: float,
              rng: np.random.Generator) -> View:
    # Draw order is fixed (edges, then feature columns) for determinism.
    if p_edge > 0.0 and g.num_edges:
        drop = rng.random(g.num_edges) < p_edge
        view_adj = normalized_from_edges(g.num_nodes, g.edges[~drop])
    else:
        if p_edge > 0.0:
            rng.random(g.num_edges)
        view_adj = adj  # self-loops survive regardless
    if p_feat > 0.0:
        masked = rng.random(g.num_features) < p_feat
        features = g.features * ~masked[np.newaxis, :]
    else:
        features = g.features
    return view_adj, features


def make_views(g: Graph, adj: SparseAdjacency, cfg: AugmentConfig, epoch: int) -> tuple[View, View]:
    """Two fresh stochastic views, fully determined by (cfg.seed, epoch)."""
    seed = cfg.seed if cfg.seed is not None else 0
    rng1 = np.random.default_rng(derive_seed(seed, f"view1:epoch{epoch}"))
    rng2 = np.random.default_rng(derive_seed(seed, f"view2:epoch{epoch}"))
    view1 = _one_view(g, adj, cfg.edge_drop_1, cfg.feat_mask_1, rng1)
    view2 = _one_view(g, adj, cfg.edge_drop_2, cfg.feat_mask_2, rng2)
    return view1, view2
