"""Contrastive objectives recorded onto a tape.

poly_loss uses additions and multiplications only. With S = Z1 Z2^T it
averages (S_ij - S_ii + m)^2 over the N(N-1) ordered pairs i != j and adds
lambda * (|Z1|_F^2 / N + |Z2|_F^2 / N). There is no hinge: over-separation
is penalized too, since clipping would need a non-polynomial max().

grace_loss is the symmetric NT-Xent baseline on cosine similarities at
temperature tau, with inter- and intra-view negatives. Its normalize, exp
and log nodes are flagged non-polynomial on the tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tape import Tape

LOSS_KINDS = ("poly", "grace")


@dataclass
class LossConfig:
    kind: str = "poly"
    margin: float = 0.5
    lam: float = 1e-2
    temperature: float = 0.4  # baseline only

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"loss kind must be one of {LOSS_KINDS}; got {self.kind!r}")
        if self.margin < 0.0:
            raise ValueError(f"margin must be >= 0; got {self.margin}")
        if self.lam < 0.0:
            raise ValueError(f"lambda must be >= 0; got {self.lam}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be > 0; got {self.temperature}")


def _check_pair(tape: Tape, z1: int, z2: int) -> int:
    s1, s2 = tape.shape_of(z1), tape.shape_of(z2)
    if s1 != s2:
        raise ValueError(f"embedding shapes differ: {s1} vs {s2}")
    if s1[0] < 2:
        raise ValueError("need at least 2 nodes (no negative pairs otherwise)")
    return s1[0]


def poly_loss(tape: Tape, z1: int, z2: int, margin: float, lam: float) -> int:
    """Record the margin objective; every node stays polynomial."""
    n = _check_pair(tape, z1, z2)
    s = tape.dense_matmul(z1, tape.transpose(z2))
    # (S_ij - S_ii + m): subtract the diagonal down each row, then shift.
    deltas = tape.add_constant(tape.sub(s, tape.diag_of(s)), margin)
    contrast = tape.off_diagonal_mean(tape.elem_square(deltas))
    reg1 = tape.scale_by_constant(tape.frobenius_sq(z1), lam / n)
    reg2 = tape.scale_by_constant(tape.frobenius_sq(z2), lam / n)
    return tape.add(tape.add(contrast, reg1), reg2)


def grace_loss(tape: Tape, z1: int, z2: int, temperature: float) -> int:
    """Record the symmetric NT-Xent baseline at the given temperature."""
    if temperature <= 0.0:
        raise ValueError(f"temperature must be > 0; got {temperature}")
    n = _check_pair(tape, z1, z2)
    u = tape.row_l2_normalize(z1)
    v = tape.row_l2_normalize(z2)
    ones = tape.constant(np.ones((n, 1)))

    def one_direction(a: int, b: int) -> int:
        e_ab = tape.exp(tape.scale_by_constant(
            tape.dense_matmul(a, tape.transpose(b)), 1.0 / temperature))
        e_aa = tape.exp(tape.scale_by_constant(
            tape.dense_matmul(a, tape.transpose(a)), 1.0 / temperature))
        # Denominator per anchor: all inter-view pairs plus intra-view pairs
        # excluding self-similarity; row sums via a constant ones vector.
        den = tape.add(tape.dense_matmul(e_ab, ones),
                       tape.sub(tape.dense_matmul(e_aa, ones), tape.diag_of(e_aa)))
        num = tape.diag_of(e_ab)
        return tape.mean_all(tape.sub(tape.log(den), tape.log(num)))

    both = tape.add(one_direction(u, v), one_direction(v, u))
    return tape.scale_by_constant(both, 0.5)


def record_loss(tape: Tape, z1: int, z2: int, cfg: LossConfig) -> int:
    if cfg.kind == "poly":
        return poly_loss(tape, z1, z2, cfg.margin, cfg.lam)
    return grace_loss(tape, z1, z2, cfg.temperature)
