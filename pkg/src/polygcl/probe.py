"""Frozen-encoder evaluation: a linear softmax probe on node embeddings."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graphdata import Graph, SplitMasks, normalize_adjacency
from .model import EncoderParams, encode_features, glorot_uniform
from .trainer import AdamState, adam_step

PROBE_LR = 0.01
PROBE_EPOCHS = 300
PROBE_WEIGHT_DECAY = 1e-4


@dataclass
class EvalReport:
    accuracy: float
    per_class_accuracy: list[float | None]
    train_size: int
    test_size: int
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class_accuracy": self.per_class_accuracy,
            "train_size": self.train_size,
            "test_size": self.test_size,
            "config": self.config,
        }


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def linear_probe(
    z: np.ndarray,
    labels: np.ndarray,
    masks: SplitMasks,
    seed: int,
    *,
    lr: float = PROBE_LR,
    epochs: int = PROBE_EPOCHS,
    weight_decay: float = PROBE_WEIGHT_DECAY,
    standardize: bool = False,
    init_w: np.ndarray | None = None,
) -> EvalReport:
    """Train softmax regression on train-mask embeddings; score the test mask.

    Full-batch Adam on W in R^{DxC}, no bias. The encoder is already frozen
    by construction: only the embedding matrix ever reaches this function.
    """
    if masks.test.size == 0:
        raise ValueError("empty test mask")
    if masks.train.size == 0:
        raise ValueError("empty train mask")
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    num_classes = int(labels.max()) + 1
    if standardize:
        mean = z.mean(axis=0, keepdims=True)
        std = z.std(axis=0, keepdims=True)
        z = (z - mean) / np.maximum(std, 1e-12)

    z_train = z[masks.train]
    y_train = labels[masks.train]
    onehot = np.zeros((y_train.size, num_classes))
    onehot[np.arange(y_train.size), y_train] = 1.0

    if init_w is None:
        rng = np.random.default_rng(seed)
        w = glorot_uniform(rng, z.shape[1], num_classes)
    else:
        w = np.asarray(init_w, dtype=np.float64).copy()
    params = {"w": w}
    state = AdamState.zeros_like(params)
    n_train = z_train.shape[0]
    for _ in range(epochs):
        probs = _softmax(z_train @ params["w"])
        grad = z_train.T @ (probs - onehot) / n_train
        params, state = adam_step(
            params, {"w": grad}, state, lr=lr, weight_decay=weight_decay
        )

    predictions = np.argmax(z @ params["w"], axis=1)
    correct = predictions[masks.test] == labels[masks.test]
    per_class: list[float | None] = []
    for c in range(num_classes):
        members = labels[masks.test] == c
        per_class.append(float(correct[members].mean()) if members.any() else None)
    return EvalReport(
        accuracy=float(correct.mean()),
        per_class_accuracy=per_class,
        train_size=int(masks.train.size),
        test_size=int(masks.test.size),
        config={
            "lr": lr,
            "epochs": epochs,
            "weight_decay": weight_decay,
            "standardize": standardize,
            "seed": seed,
        },
    )


def evaluate_pipeline(
    g: Graph,
    params: EncoderParams,
    masks: SplitMasks,
    seed: int,
    *,
    standardize: bool = False,
    square_scale: float = 1.0,
    probe_lr: float = PROBE_LR,
    probe_epochs: int = PROBE_EPOCHS,
    probe_weight_decay: float = PROBE_WEIGHT_DECAY,
) -> EvalReport:
    """Encode the un-augmented graph with frozen weights, then probe."""
    adj = normalize_adjacency(g)
    z = encode_features(adj, g.features, params, square_scale)
    return linear_probe(
        z, g.labels, masks, seed,
        lr=probe_lr, epochs=probe_epochs, weight_decay=probe_weight_decay,
        standardize=standardize,
    )


def export_embeddings(z: np.ndarray, labels: np.ndarray, path: str | Path) -> None:
    """CSV export "node_id,label,z_0..z_{D-1}" with exact round-trip floats."""
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if z.shape[0] != labels.shape[0]:
        raise ValueError(f"embeddings rows {z.shape[0]} != labels {labels.shape[0]}")
    header = "node_id,label," + ",".join(f"z_{j}" for j in range(z.shape[1]))
    with open(path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        for i in range(z.shape[0]):
            row = ",".join(repr(float(x)) for x in z[i])
            f.write(f"{i},{labels[i]},{row}\n")
