"""Reverse-mode autodiff over a closed op set on dense 2-D double tensors.

The recorded node list doubles as the arithmetic circuit walked by the
HE-compatibility analyzer, so every node carries encrypted-path,
polynomial, and multiplication-kind metadata next to its shape. Sparse
matrices enter only as constants attached to spmm nodes; no gradient
flows to them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphdata import SparseAdjacency, normalize_adjacency, ring_graph

#: Ops that cannot be expressed with additions and multiplications alone.
NON_POLYNOMIAL_OPS = frozenset({"relu", "exp", "log", "row_l2_normalize"})

LEAF_OPS = frozenset({"input", "const"})

OP_SET = (
    "dense_matmul", "spmm", "transpose", "add", "sub", "scale_by_constant",
    "add_constant", "elem_square", "elem_mul", "relu", "exp", "log",
    "row_l2_normalize", "diag_of", "mean_all", "sum_all", "frobenius_sq",
    "off_diagonal_mean",
)


class TapeError(ValueError):
    """Shape mismatch, invalid value, or misuse of the recorded graph."""


@dataclass
class Node:
    id: int
    op: str
    inputs: tuple[int, ...]
    shape: tuple[int, int]
    encrypted: bool
    polynomial: bool
    mult_kind: str                      # "none" | "ct_ct" | "ct_pt"
    name: str | None = None             # input leaves only
    scalar: float | None = None         # scale_by_constant / add_constant
    const: np.ndarray | None = None     # const leaves only
    sparse: SparseAdjacency | None = None  # spmm only


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise TapeError(f"tensors are 2-D; got shape {arr.shape}")
    return arr


class Tape:
    """Append-only record of a computation; rebuildable and re-evaluable.

    Leaves are named inputs (feedable, differentiable, optionally marked as
    living on the encrypted path) and plaintext constants. Every op method
    validates shapes at record time and returns the new node id.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.inputs: dict[str, int] = {}
        self.defaults: dict[str, np.ndarray] = {}
        self.output: int | None = None

    # -- leaves -----------------------------------------------------------

    def input(self, name: str, value=None, shape=None, encrypted: bool = False) -> int:
        if name in self.inputs:
            raise TapeError(f"duplicate input name {name!r}")
        if value is not None:
            value = _as_matrix(value)
            if not np.all(np.isfinite(value)):
                raise TapeError(f"input {name!r} contains non-finite values")
            if shape is not None and tuple(shape) != value.shape:
                raise TapeError(
                    f"input {name!r}: declared shape {tuple(shape)} != value shape {value.shape}"
                )
            shape = value.shape
            self.defaults[name] = value
        if shape is None:
            raise TapeError(f"input {name!r} needs a value or an explicit shape")
        node = self._record("input", (), tuple(shape), encrypted=encrypted, name=name)
        self.inputs[name] = node
        return node

    def constant(self, value) -> int:
        value = _as_matrix(value)
        if not np.all(np.isfinite(value)):
            raise TapeError("constant contains non-finite values")
        return self._record("const", (), value.shape, const=value)

    # -- ops --------------------------------------------------------------

    def dense_matmul(self, a: int, b: int) -> int:
        (ra, ca), (rb, cb) = self._shape(a), self._shape(b)
        if ca != rb:
            raise TapeError(f"dense_matmul: inner dims differ ({ra}x{ca} @ {rb}x{cb})")
        return self._record("dense_matmul", (a, b), (ra, cb))

    def spmm(self, adj: SparseAdjacency, x: int) -> int:
        rx, cx = self._shape(x)
        if adj.num_nodes != rx:
            raise TapeError(
                f"spmm: sparse is {adj.num_nodes}x{adj.num_nodes}, dense is {rx}x{cx}"
            )
        return self._record("spmm", (x,), (adj.num_nodes, cx), sparse=adj)

    def transpose(self, a: int) -> int:
        r, c = self._shape(a)
        return self._record("transpose", (a,), (c, r))

    def add(self, a: int, b: int) -> int:
        return self._record("add", (a, b), self._elementwise_shape("add", a, b))

    def sub(self, a: int, b: int) -> int:
        return self._record("sub", (a, b), self._elementwise_shape("sub", a, b))

    def scale_by_constant(self, a: int, c: float) -> int:
        return self._record("scale_by_constant", (a,), self._shape(a), scalar=float(c))

    def add_constant(self, a: int, c: float) -> int:
        return self._record("add_constant", (a,), self._shape(a), scalar=float(c))

    def elem_square(self, a: int) -> int:
        return self._record("elem_square", (a,), self._shape(a))

    def elem_mul(self, a: int, b: int) -> int:
        if self._shape(a) != self._shape(b):
            raise TapeError(f"elem_mul: shapes differ ({self._shape(a)} vs {self._shape(b)})")
        return self._record("elem_mul", (a, b), self._shape(a))

    def relu(self, a: int) -> int:
        return self._record("relu", (a,), self._shape(a))

    def exp(self, a: int) -> int:
        return self._record("exp", (a,), self._shape(a))

    def log(self, a: int) -> int:
        return self._record("log", (a,), self._shape(a))

    def row_l2_normalize(self, a: int) -> int:
        return self._record("row_l2_normalize", (a,), self._shape(a))

    def diag_of(self, a: int) -> int:
        r, c = self._shape(a)
        if r != c:
            raise TapeError(f"diag_of: input must be square, got {r}x{c}")
        return self._record("diag_of", (a,), (r, 1))

    def mean_all(self, a: int) -> int:
        return self._record("mean_all", (a,), (1, 1))

    def sum_all(self, a: int) -> int:
        return self._record("sum_all", (a,), (1, 1))

    def frobenius_sq(self, a: int) -> int:
        return self._record("frobenius_sq", (a,), (1, 1))

    def off_diagonal_mean(self, a: int) -> int:
        r, c = self._shape(a)
        if r != c:
            raise TapeError(f"off_diagonal_mean: input must be square, got {r}x{c}")
        if r < 2:
            raise TapeError("off_diagonal_mean: needs at least a 2x2 input")
        return self._record("off_diagonal_mean", (a,), (1, 1))

    # -- structure ----------------------------------------------------------

    def set_output(self, node_id: int) -> None:
        self._check_id(node_id)
        self.output = node_id

    def shape_of(self, node_id: int) -> tuple[int, int]:
        return self._shape(node_id)

    def dump(self) -> str:
        """Textual circuit: one node per line, for the analyzer and for humans."""
        lines = []
        for n in self.nodes:
            ins = ",".join(str(i) for i in n.inputs)
            lines.append(
                f"{n.id} {n.op} [{ins}] {n.shape[0]}x{n.shape[1]} "
                f"enc={str(n.encrypted).lower()} poly={str(n.polynomial).lower()} "
                f"mult={n.mult_kind}"
            )
        return "\n".join(lines)

    # -- internals ----------------------------------------------------------

    def _check_id(self, node_id: int) -> None:
        if not isinstance(node_id, (int, np.integer)) or not 0 <= node_id < len(self.nodes):
            raise TapeError(f"unknown node id {node_id!r}")

    def _shape(self, node_id: int) -> tuple[int, int]:
        self._check_id(node_id)
        return self.nodes[node_id].shape

    def _elementwise_shape(self, op: str, a: int, b: int) -> tuple[int, int]:
        # Same shape, or the second operand a column vector broadcast across
        # columns (the only broadcast the loss constructions need).
        sa, sb = self._shape(a), self._shape(b)
        if sa == sb:
            return sa
        if sb == (sa[0], 1):
            return sa
        raise TapeError(f"{op}: shapes {sa} and {sb} are not compatible")

    def _record(self, op: str, inputs: tuple[int, ...], shape: tuple[int, int], **payload) -> int:
        for i in inputs:
            self._check_id(i)
        enc_flags = [self.nodes[i].encrypted for i in inputs]
        encrypted = payload.pop("encrypted", any(enc_flags))
        mult_kind = "none"
        if op in ("dense_matmul", "elem_mul"):
            if enc_flags and all(enc_flags):
                mult_kind = "ct_ct"
            elif any(enc_flags):
                mult_kind = "ct_pt"
        elif op in ("elem_square", "frobenius_sq"):
            if encrypted:
                mult_kind = "ct_ct"
        elif op in ("spmm", "scale_by_constant"):
            # Sparse operands and bare scalars are plaintext by construction.
            if encrypted:
                mult_kind = "ct_pt"
        node = Node(
            id=len(self.nodes),
            op=op,
            inputs=inputs,
            shape=shape,
            encrypted=encrypted,
            polynomial=op not in NON_POLYNOMIAL_OPS,
            mult_kind=mult_kind,
            **payload,
        )
        self.nodes.append(node)
        return node.id


# -- evaluation -------------------------------------------------------------


def _resolve_feeds(tape: Tape, feeds: dict | None) -> dict[str, np.ndarray]:
    merged = dict(tape.defaults)
    if feeds:
        unknown = set(feeds) - set(tape.inputs)
        if unknown:
            raise TapeError(f"feeds name unknown inputs: {sorted(unknown)}")
        merged.update({k: _as_matrix(v) for k, v in feeds.items()})
    missing = set(tape.inputs) - set(merged)
    if missing:
        raise TapeError(f"missing feeds for inputs: {sorted(missing)}")
    return merged


def evaluate(tape: Tape, feeds: dict | None = None, checked: bool = True) -> list[np.ndarray]:
    """Evaluate every node in tape order; returns the per-node value list.

    In checked mode, feed tensors and all computed values must be finite,
    log inputs must be positive, and normalized rows must have nonzero norm.
    """
    resolved = _resolve_feeds(tape, feeds)
    vals: list[np.ndarray] = [None] * len(tape.nodes)  # type: ignore[list-item]
    # Overflow surfaces as a checked-mode TapeError, not a numpy warning.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _evaluate_nodes(tape, resolved, vals, checked)


def _evaluate_nodes(tape, resolved, vals, checked):
    for n in tape.nodes:
        op = n.op
        if op == "input":
            v = resolved[n.name]
            if v.shape != n.shape:
                raise TapeError(
                    f"node {n.id} (input {n.name!r}): fed shape {v.shape}, declared {n.shape}"
                )
            if checked and not np.all(np.isfinite(v)):
                raise TapeError(f"node {n.id} (input {n.name!r}): non-finite feed")
        elif op == "const":
            v = n.const
        elif op == "dense_matmul":
            v = vals[n.inputs[0]] @ vals[n.inputs[1]]
        elif op == "spmm":
            v = n.sparse.matmul(vals[n.inputs[0]])
        elif op == "transpose":
            v = vals[n.inputs[0]].T.copy()
        elif op == "add":
            v = vals[n.inputs[0]] + vals[n.inputs[1]]
        elif op == "sub":
            v = vals[n.inputs[0]] - vals[n.inputs[1]]
        elif op == "scale_by_constant":
            v = n.scalar * vals[n.inputs[0]]
        elif op == "add_constant":
            v = vals[n.inputs[0]] + n.scalar
        elif op == "elem_square":
            x = vals[n.inputs[0]]
            v = x * x
        elif op == "elem_mul":
            v = vals[n.inputs[0]] * vals[n.inputs[1]]
        elif op == "relu":
            v = np.maximum(vals[n.inputs[0]], 0.0)
        elif op == "exp":
            v = np.exp(vals[n.inputs[0]])
        elif op == "log":
            x = vals[n.inputs[0]]
            if checked and np.any(x <= 0.0):
                raise TapeError(f"node {n.id} (log): non-positive input")
            v = np.log(x)
        elif op == "row_l2_normalize":
            x = vals[n.inputs[0]]
            norms = np.sqrt((x * x).sum(axis=1, keepdims=True))
            if checked and np.any(norms == 0.0):
                raise TapeError(f"node {n.id} (row_l2_normalize): zero-norm row")
            v = x / norms
        elif op == "diag_of":
            v = np.diagonal(vals[n.inputs[0]]).reshape(-1, 1).copy()
        elif op == "mean_all":
            v = np.array([[vals[n.inputs[0]].mean()]])
        elif op == "sum_all":
            v = np.array([[vals[n.inputs[0]].sum()]])
        elif op == "frobenius_sq":
            x = vals[n.inputs[0]]
            v = np.array([[float((x * x).sum())]])
        elif op == "off_diagonal_mean":
            x = vals[n.inputs[0]]
            k = x.shape[0]
            v = np.array([[(x.sum() - np.trace(x)) / (k * (k - 1))]])
        else:  # pragma: no cover - op set is closed
            raise TapeError(f"unknown op {op!r}")
        if checked and op != "input" and not np.all(np.isfinite(v)):
            raise TapeError(f"node {n.id} ({op}): non-finite value")
        vals[n.id] = v
    return vals


def forward(tape: Tape, feeds: dict | None = None, checked: bool = True) -> np.ndarray:
    """Evaluate the tape and return the designated output value."""
    if tape.output is None:
        raise TapeError("tape has no designated output")
    return evaluate(tape, feeds, checked)[tape.output]


def _accumulate(adjoints: dict[int, np.ndarray], node_id: int, delta: np.ndarray) -> None:
    if node_id in adjoints:
        adjoints[node_id] = adjoints[node_id] + delta
    else:
        adjoints[node_id] = delta


def _reduce_broadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    # Second operand of add/sub may be a column vector broadcast across columns.
    if grad.shape != shape:
        return grad.sum(axis=1, keepdims=True)
    return grad


def _backward_from_values(tape: Tape, vals: list[np.ndarray]) -> dict[str, np.ndarray]:
    out = tape.output
    if out is None:
        raise TapeError("tape has no designated output")
    if tape.nodes[out].shape != (1, 1):
        raise TapeError(
            f"backward requires a scalar output; node {out} has shape {tape.nodes[out].shape}"
        )
    adjoints: dict[int, np.ndarray] = {out: np.ones((1, 1))}
    for n in reversed(tape.nodes):
        g = adjoints.get(n.id)
        if g is None or n.op in LEAF_OPS:
            continue
        a = n.inputs[0]
        op = n.op
        if op == "dense_matmul":
            b = n.inputs[1]
            _accumulate(adjoints, a, g @ vals[b].T)
            _accumulate(adjoints, b, vals[a].T @ g)
        elif op == "spmm":
            _accumulate(adjoints, a, n.sparse.t_matmul(g))
        elif op == "transpose":
            _accumulate(adjoints, a, g.T)
        elif op == "add":
            b = n.inputs[1]
            _accumulate(adjoints, a, g)
            _accumulate(adjoints, b, _reduce_broadcast(g, tape.nodes[b].shape))
        elif op == "sub":
            b = n.inputs[1]
            _accumulate(adjoints, a, g)
            _accumulate(adjoints, b, -_reduce_broadcast(g, tape.nodes[b].shape))
        elif op == "scale_by_constant":
            _accumulate(adjoints, a, n.scalar * g)
        elif op == "add_constant":
            _accumulate(adjoints, a, g)
        elif op == "elem_square":
            _accumulate(adjoints, a, 2.0 * vals[a] * g)
        elif op == "elem_mul":
            b = n.inputs[1]
            _accumulate(adjoints, a, vals[b] * g)
            _accumulate(adjoints, b, vals[a] * g)
        elif op == "relu":
            _accumulate(adjoints, a, (vals[a] > 0.0) * g)
        elif op == "exp":
            _accumulate(adjoints, a, vals[n.id] * g)
        elif op == "log":
            _accumulate(adjoints, a, g / vals[a])
        elif op == "row_l2_normalize":
            x = vals[a]
            y = vals[n.id]
            norms = np.sqrt((x * x).sum(axis=1, keepdims=True))
            # d(a/r)/da pulled back: (g - y <g, y>_row) / r
            _accumulate(adjoints, a, (g - y * (g * y).sum(axis=1, keepdims=True)) / norms)
        elif op == "diag_of":
            da = np.zeros(tape.nodes[a].shape)
            np.fill_diagonal(da, g[:, 0])
            _accumulate(adjoints, a, da)
        elif op == "mean_all":
            r, c = tape.nodes[a].shape
            _accumulate(adjoints, a, np.full((r, c), g[0, 0] / (r * c)))
        elif op == "sum_all":
            r, c = tape.nodes[a].shape
            _accumulate(adjoints, a, np.full((r, c), g[0, 0]))
        elif op == "frobenius_sq":
            _accumulate(adjoints, a, 2.0 * g[0, 0] * vals[a])
        elif op == "off_diagonal_mean":
            k = tape.nodes[a].shape[0]
            mask = (np.ones((k, k)) - np.eye(k)) * (g[0, 0] / (k * (k - 1)))
            _accumulate(adjoints, a, mask)
        else:  # pragma: no cover - op set is closed
            raise TapeError(f"no gradient rule for op {op!r}")
    grads = {}
    for name, nid in tape.inputs.items():
        grads[name] = adjoints.get(nid, np.zeros(tape.nodes[nid].shape))
    return grads


def backward(tape: Tape, feeds: dict | None = None, checked: bool = True) -> dict[str, np.ndarray]:
    """Gradients of the scalar output with respect to every named input."""
    vals = evaluate(tape, feeds, checked)
    return _backward_from_values(tape, vals)


def value_and_grads(
    tape: Tape, feeds: dict | None = None, checked: bool = True
) -> tuple[float, dict[str, np.ndarray]]:
    """One evaluation shared by the forward value and the backward pass."""
    vals = evaluate(tape, feeds, checked)
    grads = _backward_from_values(tape, vals)
    if tape.nodes[tape.output].shape != (1, 1):  # backward would have raised already
        raise TapeError("value_and_grads requires a scalar output")
    return float(vals[tape.output][0, 0]), grads


# -- gradient checking --------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_input: str | None
    worst_index: tuple[int, int] | None
    per_input: dict[str, float]
    eps: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= 1e-5


def _relu_input_margin(tape: Tape, vals: list[np.ndarray]) -> float:
    margin = np.inf
    for n in tape.nodes:
        if n.op == "relu":
            margin = min(margin, float(np.abs(vals[n.inputs[0]]).min()))
    return margin


def check_gradients(
    tape: Tape,
    feeds: dict | None = None,
    seed: int = 0,
    eps: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Feeds default to the tape's recorded input values; inputs without a
    recorded value are drawn uniformly from [-1, 1). When the tape contains
    relu nodes, generated feeds are re-drawn until every relu input is well
    away from the kink at zero, where the derivative comparison is undefined.
    """
    rng = np.random.default_rng(seed)
    has_relu = any(n.op == "relu" for n in tape.nodes)
    resolved: dict[str, np.ndarray] = {}
    for attempt in range(50):
        resolved = dict(tape.defaults)
        if feeds:
            resolved.update({k: _as_matrix(v) for k, v in feeds.items()})
        generated = False
        for name, nid in tape.inputs.items():
            if name not in resolved:
                resolved[name] = rng.uniform(-1.0, 1.0, size=tape.nodes[nid].shape)
                generated = True
        if not has_relu:
            break
        vals = evaluate(tape, resolved)
        if _relu_input_margin(tape, vals) > 1e-4 or not generated:
            break
    analytic = _backward_from_values(tape, evaluate(tape, resolved))

    per_input: dict[str, float] = {}
    worst = 0.0
    worst_input = None
    worst_index = None
    for name, base in resolved.items():
        worst_here = 0.0
        for idx in np.ndindex(base.shape):
            stepped = base.copy()
            stepped[idx] = base[idx] + eps
            f_plus = forward(tape, {**resolved, name: stepped})[0, 0]
            stepped[idx] = base[idx] - eps
            f_minus = forward(tape, {**resolved, name: stepped})[0, 0]
            fd = (f_plus - f_minus) / (2.0 * eps)
            ana = analytic[name][idx]
            rel = abs(fd - ana) / max(abs(fd), abs(ana), 1e-3)
            if rel > worst_here:
                worst_here = rel
            if rel > worst:
                worst, worst_input, worst_index = rel, name, idx
        per_input[name] = worst_here
    return GradCheckReport(
        max_rel_err=worst,
        worst_input=worst_input,
        worst_index=worst_index,
        per_input=per_input,
        eps=eps,
    )


def op_check_tapes(seed: int = 0) -> dict[str, Tape]:
    """One small scalar-output tape per op, for the gradient-check suite.

    Each tape reduces through a random plaintext weighting so adjoints are
    non-uniform. Ops with domain restrictions get suitable input offsets.
    """
    rng = np.random.default_rng(seed)

    def weighted_sum(t: Tape, node: int) -> int:
        r, c = t.shape_of(node)
        w = t.constant(rng.uniform(0.5, 1.5, size=(r, c)))
        return t.sum_all(t.elem_mul(node, w))

    tapes: dict[str, Tape] = {}

    def register(op: str, build) -> None:
        t = Tape()
        t.set_output(build(t))
        tapes[op] = t

    def rnd(shape):
        return rng.uniform(-1.0, 1.0, size=shape)

    register("dense_matmul", lambda t: weighted_sum(
        t, t.dense_matmul(t.input("a", rnd((3, 4)), encrypted=True),
                          t.input("b", rnd((4, 2)), encrypted=True))))
    ring_adj = normalize_adjacency(ring_graph(num_nodes=3, num_features=4, seed=seed))
    register("spmm", lambda t: weighted_sum(
        t, t.spmm(ring_adj, t.input("x", rnd((3, 4)), encrypted=True))))
    register("transpose", lambda t: weighted_sum(
        t, t.transpose(t.input("x", rnd((3, 4)), encrypted=True))))
    register("add", lambda t: weighted_sum(
        t, t.add(t.input("a", rnd((3, 4)), encrypted=True), t.input("b", rnd((3, 4))))))
    register("add_broadcast", lambda t: weighted_sum(
        t, t.add(t.input("a", rnd((3, 4)), encrypted=True), t.input("b", rnd((3, 1))))))
    register("sub", lambda t: weighted_sum(
        t, t.sub(t.input("a", rnd((3, 4)), encrypted=True), t.input("b", rnd((3, 4))))))
    register("sub_broadcast", lambda t: weighted_sum(
        t, t.sub(t.input("a", rnd((3, 4)), encrypted=True), t.input("b", rnd((3, 1))))))
    register("scale_by_constant", lambda t: weighted_sum(
        t, t.scale_by_constant(t.input("x", rnd((3, 4)), encrypted=True), 1.7)))
    register("add_constant", lambda t: weighted_sum(
        t, t.add_constant(t.input("x", rnd((3, 4)), encrypted=True), 0.3)))
    register("elem_square", lambda t: weighted_sum(
        t, t.elem_square(t.input("x", rnd((3, 4)), encrypted=True))))
    register("elem_mul", lambda t: weighted_sum(
        t, t.elem_mul(t.input("a", rnd((3, 4)), encrypted=True), t.input("b", rnd((3, 4))))))
    register("relu", lambda t: weighted_sum(
        t, t.relu(t.input("x", encrypted=True, shape=(3, 4)))))
    register("exp", lambda t: weighted_sum(
        t, t.exp(t.input("x", rnd((3, 4)), encrypted=True))))
    register("log", lambda t: weighted_sum(
        t, t.log(t.input("x", rnd((3, 4)) + 2.0, encrypted=True))))
    register("row_l2_normalize", lambda t: weighted_sum(
        t, t.row_l2_normalize(t.input("x", rnd((3, 4)) + 2.0, encrypted=True))))
    register("diag_of", lambda t: weighted_sum(
        t, t.diag_of(t.input("x", rnd((4, 4)), encrypted=True))))
    register("mean_all", lambda t: t.mean_all(
        t.elem_mul(t.input("x", rnd((3, 4)), encrypted=True), t.constant(rnd((3, 4)) + 2.0))))
    register("sum_all", lambda t: t.sum_all(
        t.elem_mul(t.input("x", rnd((3, 4)), encrypted=True), t.constant(rnd((3, 4)) + 2.0))))
    register("frobenius_sq", lambda t: t.frobenius_sq(
        t.input("x", rnd((3, 4)), encrypted=True)))
    register("off_diagonal_mean", lambda t: t.off_diagonal_mean(
        t.elem_mul(t.input("x", rnd((4, 4)), encrypted=True), t.constant(rnd((4, 4)) + 2.0))))
    return tapes
