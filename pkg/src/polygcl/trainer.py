"""Adam pre-training loop: views -> encoder -> loss -> backward -> update.

Training is full-batch over the whole graph, rebuilding the loss circuit
each epoch with fresh views; labels are never read anywhere on this path.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .augment import AugmentConfig, make_views
from .graphdata import Graph, SparseAdjacency, normalize_adjacency
from .model import EncoderParams, ModelConfig, encode, init_params
from .objectives import LossConfig, record_loss
from .seeding import derive_seed
from .tape import Tape, TapeError, value_and_grads


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-3
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    decoupled_weight_decay: bool = False
    grad_clip: float | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr <= 0.0:
            raise ValueError("lr must be > 0")


@dataclass
class TrainLog:
    losses: list[float]
    wall_time_s: float
    checkpoint_path: str | None = None

    def entries(self) -> list[dict]:
        return [{"epoch": i, "loss": loss} for i, loss in enumerate(self.losses)]


class DivergenceError(RuntimeError):
    """Training produced a non-finite value; carries where and the last good loss."""

    def __init__(self, epoch: int, last_finite_loss: float | None):
        self.epoch = epoch
        self.last_finite_loss = last_finite_loss
        last = "none" if last_finite_loss is None else f"{last_finite_loss:.6g}"
        super().__init__(
            f"non-finite loss at epoch {epoch}; last finite loss: {last}. "
            "Consider lowering lr, raising loss.lambda, enabling train.grad_clip "
            "or model.square_scale=0.5."
        )


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            t=0,
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    *,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    decoupled_weight_decay: bool = False,
    grad_clip: float | None = None,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update with bias correction; returns fresh params and state.

    Weight decay defaults to the classic L2 coupling (added to the gradient);
    the decoupled variant subtracts lr * wd * param after the Adam step.
    """
    t = state.t + 1
    if grad_clip is not None:
        norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if norm > grad_clip:
            grads = {k: g * (grad_clip / norm) for k, g in grads.items()}
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for k, p in params.items():
        g = grads[k]
        if weight_decay and not decoupled_weight_decay:
            g = g + weight_decay * p
        m = beta1 * state.m[k] + (1.0 - beta1) * g
        v = beta2 * state.v[k] + (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p_new = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        if weight_decay and decoupled_weight_decay:
            p_new = p_new - lr * weight_decay * p
        new_params[k], new_m[k], new_v[k] = p_new, m, v
    return new_params, AdamState(m=new_m, v=new_v, t=t)


def build_loss_tape(
    adj1: SparseAdjacency,
    x1: np.ndarray,
    adj2: SparseAdjacency,
    x2: np.ndarray,
    params: EncoderParams,
    loss_cfg: LossConfig,
    square_scale: float = 1.0,
) -> Tape:
    """Full pre-training circuit: two encodings sharing weights, then the loss.

    Features are the encrypted inputs; weights, adjacencies and scalars stay
    plaintext.
    """
    t = Tape()
    w1 = t.input("w1", value=params.w1)
    w2 = t.input("w2", value=params.w2)
    xin1 = t.input("x1", value=x1, encrypted=True)
    xin2 = t.input("x2", value=x2, encrypted=True)
    z1 = encode(t, adj1, xin1, w1, w2, params.activation, square_scale)
    z2 = encode(t, adj2, xin2, w1, w2, params.activation, square_scale)
    t.set_output(record_loss(t, z1, z2, loss_cfg))
    return t


def pretrain(g: Graph, cfg: TrainConfig) -> tuple[EncoderParams, TrainLog]:
    """Self-supervised pre-training on the full graph; labels are never read."""
    started = time.perf_counter()
    adj = normalize_adjacency(g)
    params = init_params(
        g.num_features, cfg.model.hidden, cfg.model.out_dim, cfg.model.activation,
        derive_seed(cfg.seed, "model-init"),
    )
    aug = cfg.augment
    if aug.seed is None:
        aug = replace(aug, seed=derive_seed(cfg.seed, "augment"))
    weights = {"w1": params.w1, "w2": params.w2}
    state = AdamState.zeros_like(weights)
    losses: list[float] = []
    for epoch in range(cfg.epochs):
        (adj1, x1), (adj2, x2) = make_views(g, adj, aug, epoch)
        current = EncoderParams(weights["w1"], weights["w2"], params.activation)
        tape = build_loss_tape(adj1, x1, adj2, x2, current, cfg.loss, cfg.model.square_scale)
        try:
            loss, grads = value_and_grads(tape)
        except TapeError as err:
            raise DivergenceError(epoch, losses[-1] if losses else None) from err
        if not np.isfinite(loss):
            raise DivergenceError(epoch, losses[-1] if losses else None)
        weights, state = adam_step(
            weights,
            {"w1": grads["w1"], "w2": grads["w2"]},
            state,
            lr=cfg.lr,
            beta1=cfg.beta1,
            beta2=cfg.beta2,
            eps=cfg.eps,
            weight_decay=cfg.weight_decay,
            decoupled_weight_decay=cfg.decoupled_weight_decay,
            grad_clip=cfg.grad_clip,
        )
        losses.append(loss)
    final = EncoderParams(weights["w1"], weights["w2"], params.activation)
    return final, TrainLog(losses=losses, wall_time_s=time.perf_counter() - started)
