"""Independent scalar-loop oracles.

Everything here is written with explicit Python loops over plain floats so
the values cannot share a code path with the tape engine they check.
"""

import math


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def poly_loss_oracle(z1, z2, margin, lam):
    """Margin objective by direct enumeration of all ordered pairs i != j."""
    n = len(z1)
    total = 0.0
    for i in range(n):
        s_ii = _dot(z1[i], z2[i])
        for j in range(n):
            if j == i:
                continue
            total += (_dot(z1[i], z2[j]) - s_ii + margin) ** 2
    contrast = total / (n * (n - 1))
    sumsq1 = sum(x * x for row in z1 for x in row)
    sumsq2 = sum(x * x for row in z2 for x in row)
    return contrast + lam * (sumsq1 / n + sumsq2 / n)


def _normalize_rows(z):
    out = []
    for row in z:
        r = math.sqrt(sum(x * x for x in row))
        out.append([x / r for x in row])
    return out


def grace_loss_oracle(z1, z2, tau):
    """Symmetric NT-Xent with inter- and intra-view negatives, loop by loop."""
    n = len(z1)
    u = _normalize_rows(z1)
    v = _normalize_rows(z2)

    def one_direction(a, b):
        total = 0.0
        for i in range(n):
            num = math.exp(_dot(a[i], b[i]) / tau)
            den = sum(math.exp(_dot(a[i], b[k]) / tau) for k in range(n))
            den += sum(math.exp(_dot(a[i], a[k]) / tau) for k in range(n) if k != i)
            total += -math.log(num / den)
        return total / n

    return 0.5 * (one_direction(u, v) + one_direction(v, u))


def _matmul(a, b):
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for k in range(inner):
                acc += a[i][k] * b[k][j]
            out[i][j] = acc
    return out


def encode_oracle(adj_dense, x, w1, w2, activation):
    """Two-layer propagation with explicit loops; adj_dense is a list of lists."""
    h = _matmul(_matmul(adj_dense, x), w1)
    if activation == "square":
        h = [[v * v for v in row] for row in h]
    elif activation == "relu":
        h = [[v if v > 0.0 else 0.0 for v in row] for row in h]
    else:
        raise ValueError(activation)
    return _matmul(_matmul(adj_dense, h), w2)


def adam_first_step_oracle(theta, grad, lr, eps, weight_decay=0.0):
    """Closed form for one Adam step from zero state: bias correction cancels."""
    g = grad + weight_decay * theta
    return theta - lr * g / (abs(g) + eps)
