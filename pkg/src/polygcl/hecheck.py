"""Static HE-compatibility analysis of a recorded tape.

Works purely on circuit structure, never on values. Two depth metrics are
reported because rescaling conventions differ between schemes: ctct_depth
counts only ciphertext-ciphertext multiplications, total_levels counts
ciphertext-plaintext products as well. Additions, subtractions, transposes,
diagonal extraction and means are level-free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .tape import Tape, evaluate

_DOUBLING_OPS = frozenset({"elem_square", "frobenius_sq"})


@dataclass
class DepthReport:
    compatible: bool
    offending_ops: list[tuple[int, str]]
    ctct_depth: int
    total_levels: int
    per_node_level: dict[int, int]
    max_degree: int

    def to_json_dict(self) -> dict:
        return {
            "compatible": self.compatible,
            "ctct_depth": self.ctct_depth,
            "total_levels": self.total_levels,
            "max_degree": self.max_degree,
            "offending_ops": [{"id": i, "op": op} for i, op in self.offending_ops],
            "per_node_level": {str(k): v for k, v in sorted(self.per_node_level.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    def format_table(self, tape: Tape | None = None) -> str:
        lines = [
            f"compatible:   {self.compatible}",
            f"ctct_depth:   {self.ctct_depth}",
            f"total_levels: {self.total_levels}",
            f"max_degree:   {self.max_degree}",
        ]
        if self.offending_ops:
            listed = ", ".join(f"{op}#{i}" for i, op in self.offending_ops)
            lines.append(f"non-polynomial on encrypted path: {listed}")
        if tape is not None:
            lines.append(f"{'id':>4} {'op':<18} {'level':>5} {'enc':>4} {'poly':>4} {'mult':>6}")
            for n in tape.nodes:
                lines.append(
                    f"{n.id:>4} {n.op:<18} {self.per_node_level.get(n.id, 0):>5} "
                    f"{str(n.encrypted).lower():>4} {str(n.polynomial).lower():>4} "
                    f"{n.mult_kind:>6}"
                )
        return "\n".join(lines)


class HEIncompatibleError(RuntimeError):
    """Raised when non-polynomial ops sit on the encrypted path."""

    def __init__(self, offending: list[tuple[int, str]]):
        self.offending = offending
        listed = ", ".join(f"{op} (node {i})" for i, op in offending)
        super().__init__(f"non-polynomial ops on the encrypted path: {listed}")


def analyze(tape: Tape) -> DepthReport:
    """Level, depth and degree propagation over the recorded circuit.

    Encrypted inputs start at level 0 and degree 1. A ct-ct multiplication
    raises both metrics by one and sums operand degrees (squaring ops double
    theirs); a ct-pt multiplication raises total_levels only and preserves
    degree. Everything else takes the max of its inputs. Non-polynomial
    nodes are collected as offenders; their levels propagate unchanged so
    the polynomial prefix of the circuit is still reported.
    """
    ctct: dict[int, int] = {}
    total: dict[int, int] = {}
    degree: dict[int, int] = {}
    offending: list[tuple[int, str]] = []
    for n in tape.nodes:
        in_ctct = max((ctct[i] for i in n.inputs), default=0)
        in_total = max((total[i] for i in n.inputs), default=0)
        in_degree = max((degree[i] for i in n.inputs), default=0)
        if n.op == "input":
            degree[n.id] = 1 if n.encrypted else 0
            ctct[n.id], total[n.id] = 0, 0
            continue
        if n.op == "const":
            degree[n.id] = 0
            ctct[n.id], total[n.id] = 0, 0
            continue
        if not n.encrypted:
            ctct[n.id], total[n.id], degree[n.id] = 0, 0, 0
            continue
        if not n.polynomial:
            offending.append((n.id, n.op))
        if n.mult_kind == "ct_ct":
            ctct[n.id] = in_ctct + 1
            total[n.id] = in_total + 1
            if n.op in _DOUBLING_OPS:
                degree[n.id] = 2 * degree[n.inputs[0]]
            else:
                degree[n.id] = sum(max(degree[i], 0) for i in n.inputs)
        elif n.mult_kind == "ct_pt":
            ctct[n.id] = in_ctct
            total[n.id] = in_total + 1
            degree[n.id] = in_degree
        else:
            ctct[n.id] = in_ctct
            total[n.id] = in_total
            degree[n.id] = in_degree
    if tape.output is not None:
        max_degree = degree.get(tape.output, 0)
    else:
        max_degree = max(degree.values(), default=0)
    return DepthReport(
        compatible=not offending,
        offending_ops=offending,
        ctct_depth=max(ctct.values(), default=0),
        total_levels=max(total.values(), default=0),
        per_node_level={n.id: total[n.id] for n in tape.nodes},
        max_degree=max_degree,
    )


def assert_compatible(tape: Tape) -> None:
    """Error out, naming every offending node, unless the tape is polynomial-only."""
    report = analyze(tape)
    if not report.compatible:
        raise HEIncompatibleError(report.offending_ops)


def magnitude_probe(tape: Tape, feeds: dict | None = None) -> dict[int, float]:
    """Max absolute value per node on concrete inputs.

    A plaintext stand-in for noise-growth risk: products of large ciphertext
    values grow noise fastest, so small per-node magnitudes are the healthy
    signature. No actual noise estimation happens here.
    """
    vals = evaluate(tape, feeds, checked=False)
    return {n.id: float(np.abs(vals[n.id]).max()) for n in tape.nodes}
