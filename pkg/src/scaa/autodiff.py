"""Dense 2-D float64 arrays with reverse-mode automatic differentiation.

The graph is built define-by-run and discarded after each backward pass:
every operation that sees at least one gradient-tracked `Tensor` records a
node holding parent links and a vector-Jacobian closure, and `backward`
replays the recording in reverse topological order. Operations applied to
plain ndarrays (or to tensors that do not require gradients) return plain
ndarrays, so inference code pays no recording overhead.

`grad_check` is the independent correctness oracle: central finite
differences compared componentwise against what `backward` produced.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ShapeError",
    "NumericError",
    "Tensor",
    "no_grad",
    "gradient_fault",
    "matmul",
    "transpose",
    "add",
    "scale",
    "mul",
    "row_softmax",
    "mean_rows",
    "sum_all",
    "tanh",
    "concat_cols",
    "tile_rows",
    "gather_rows",
    "bce_with_logits",
    "sigmoid",
    "backward",
    "grad_check",
]


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class NumericError(ArithmeticError):
    """A computation produced or received a non-finite value."""


# Multiplier applied inside the tanh backward rule. Always 1.0 except inside
# a `gradient_fault` block, which exists so the finite-difference checker can
# prove it catches a wrong gradient.
_FAULT_SCALE = 1.0

# When False, no operation records graph nodes and everything returns plain
# ndarrays. Inference toggles this off; concurrent readers must not toggle.
_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording for inference."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._saved = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._saved
        return False


class gradient_fault:
    """Context manager that corrupts one backward rule by `scale`."""

    def __init__(self, scale: float = 1.01):
        self.scale = float(scale)
        self._saved = None

    def __enter__(self):
        global _FAULT_SCALE
        self._saved = _FAULT_SCALE
        _FAULT_SCALE = self.scale
        return self

    def __exit__(self, *exc):
        global _FAULT_SCALE
        _FAULT_SCALE = self._saved
        return False


def _as_value(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.value
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def _tracked(x) -> bool:
    return _GRAD_ENABLED and isinstance(x, Tensor) and x.requires_grad


class Tensor:
    """One 2-D float64 matrix, optionally participating in the gradient graph.

    Leaves (model parameters) are created directly with requires_grad=True;
    interior nodes are created by the operations below and carry parent links
    plus a closure mapping the upstream gradient to per-parent contributions.
    """

    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_vjp")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        v = np.asarray(value, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeError(f"Tensor must be 2-D, got shape {v.shape}")
        self.value = v
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple = ()
        self._vjp = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        tag = self.name or ("node" if self._parents else "leaf")
        return f"Tensor({tag}, shape={self.value.shape}, requires_grad={self.requires_grad})"


def _node(value: np.ndarray, parents: tuple, vjp) -> Tensor:
    out = Tensor(value, requires_grad=True)
    out._parents = parents
    out._vjp = vjp
    return out


def matmul(a, b):
    """Matrix product a @ b; recorded when either input is tracked."""
    av, bv = _as_value(a), _as_value(b)
    if av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {av.shape} x {bv.shape}")
    out = av @ bv
    ta, tb = _tracked(a), _tracked(b)
    if not (ta or tb):
        return out

    def vjp(g):
        return (g @ bv.T if ta else None, av.T @ g if tb else None)

    return _node(out, (a if ta else None, b if tb else None), vjp)


def transpose(a):
    av = _as_value(a)
    out = av.T.copy()
    if not _tracked(a):
        return out

    def vjp(g):
        return (g.T,)

    return _node(out, (a,), vjp)


def add(a, b):
    """Elementwise sum; also supports adding a 1-row matrix to every row."""
    av, bv = _as_value(a), _as_value(b)
    if av.shape == bv.shape:
        mode = "same"
    elif av.shape[1] == bv.shape[1] and bv.shape[0] == 1:
        mode = "b_row"
    elif av.shape[1] == bv.shape[1] and av.shape[0] == 1:
        mode = "a_row"
    else:
        raise ShapeError(f"add: shapes {av.shape} and {bv.shape} do not conform")
    out = av + bv
    ta, tb = _tracked(a), _tracked(b)
    if not (ta or tb):
        return out

    def vjp(g):
        ga = gb = None
        if ta:
            ga = g.sum(axis=0, keepdims=True) if mode == "a_row" else g
        if tb:
            gb = g.sum(axis=0, keepdims=True) if mode == "b_row" else g
        return (ga, gb)

    return _node(out, (a if ta else None, b if tb else None), vjp)


def scale(a, s: float):
    av = _as_value(a)
    s = float(s)
    out = av * s
    if not _tracked(a):
        return out

    def vjp(g):
        return (g * s,)

    return _node(out, (a,), vjp)


def mul(a, b):
    """Elementwise product of equal-shape matrices."""
    av, bv = _as_value(a), _as_value(b)
    if av.shape != bv.shape:
        raise ShapeError(f"mul: shapes {av.shape} and {bv.shape} differ")
    out = av * bv
    ta, tb = _tracked(a), _tracked(b)
    if not (ta or tb):
        return out

    def vjp(g):
        return (g * bv if ta else None, g * av if tb else None)

    return _node(out, (a if ta else None, b if tb else None), vjp)


def row_softmax(a):
    """Softmax over each row, stabilized by per-row max subtraction."""
    av = _as_value(a)
    if av.shape[1] == 0:
        raise ValueError("row_softmax: zero-width rows have no distribution")
    if av.shape[0] == 0:
        raise ShapeError("row_softmax: need at least one row")
    e = np.exp(av - av.max(axis=1, keepdims=True))
    out = e / e.sum(axis=1, keepdims=True)
    if not _tracked(a):
        return out

    def vjp(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return _node(out, (a,), vjp)


def mean_rows(a):
    """Arithmetic mean of the rows, as a 1-row matrix."""
    av = _as_value(a)
    m = av.shape[0]
    if m == 0:
        raise ShapeError("mean_rows: matrix has no rows")
    out = av.mean(axis=0, keepdims=True)
    if not _tracked(a):
        return out

    def vjp(g):
        return (np.repeat(g / m, m, axis=0),)

    return _node(out, (a,), vjp)


def sum_all(a):
    """Sum of all entries, as a 1x1 matrix."""
    av = _as_value(a)
    out = np.array([[av.sum()]])
    if not _tracked(a):
        return out

    def vjp(g):
        return (np.full(av.shape, g[0, 0]),)

    return _node(out, (a,), vjp)


def tanh(a):
    av = _as_value(a)
    out = np.tanh(av)
    if not _tracked(a):
        return out

    def vjp(g):
        return (g * (1.0 - out * out) * _FAULT_SCALE,)

    return _node(out, (a,), vjp)


def concat_cols(parts):
    """Concatenate same-height matrices side by side."""
    vals = [_as_value(p) for p in parts]
    if not vals:
        raise ShapeError("concat_cols: nothing to concatenate")
    rows = vals[0].shape[0]
    if any(v.shape[0] != rows for v in vals):
        raise ShapeError(f"concat_cols: row counts differ, {[v.shape for v in vals]}")
    out = np.concatenate(vals, axis=1)
    tracked = [_tracked(p) for p in parts]
    if not any(tracked):
        return out
    widths = [v.shape[1] for v in vals]

    def vjp(g):
        grads = []
        off = 0
        for w, t in zip(widths, tracked):
            grads.append(g[:, off : off + w] if t else None)
            off += w
        return tuple(grads)

    return _node(out, tuple(p if t else None for p, t in zip(parts, tracked)), vjp)


def tile_rows(a, reps: int):
    """Repeat a 1-row matrix `reps` times."""
    av = _as_value(a)
    if av.shape[0] != 1:
        raise ShapeError(f"tile_rows: expected a single row, got {av.shape}")
    if reps < 1:
        raise ShapeError(f"tile_rows: reps must be >= 1, got {reps}")
    out = np.repeat(av, reps, axis=0)
    if not _tracked(a):
        return out

    def vjp(g):
        return (g.sum(axis=0, keepdims=True),)

    return _node(out, (a,), vjp)


def gather_rows(table, ids):
    """Select rows of `table` by index; gradients scatter-add back."""
    tv = _as_value(table)
    idx = np.asarray(ids, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"gather_rows: ids must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= tv.shape[0]):
        raise IndexError(
            f"gather_rows: index out of range for table with {tv.shape[0]} rows"
        )
    out = tv[idx]
    if not _tracked(table):
        return out

    def vjp(g):
        full = np.zeros_like(tv)
        np.add.at(full, idx, g)
        return (full,)

    return _node(out, (table,), vjp)


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Overflow-safe logistic function on a plain array."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def bce_with_logits(logits, targets):
    """Mean binary cross-entropy in the stable logit form, as a 1x1 matrix.

    loss = mean( max(z, 0) - z*y + log(1 + exp(-|z|)) )
    """
    zv = _as_value(logits)
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != zv.shape:
        raise ShapeError(f"bce_with_logits: logits {zv.shape} vs targets {y.shape}")
    if zv.size == 0:
        raise ShapeError("bce_with_logits: empty batch")
    if not np.isfinite(zv).all():
        raise NumericError("bce_with_logits: non-finite logits")
    per = np.maximum(zv, 0.0) - zv * y + np.log1p(np.exp(-np.abs(zv)))
    out = np.array([[per.mean()]])
    if not _tracked(logits):
        return out
    n = zv.size

    def vjp(g):
        return ((sigmoid(zv) - y) * (g[0, 0] / n),)

    return _node(out, (logits,), vjp)


def backward(loss, params=None):
    """Accumulate gradients of a 1x1 loss node through the recorded graph.

    Sets `.grad` on every tracked tensor the loss depends on. When `params`
    is given, additionally returns their gradients in order, substituting
    zeros for parameters the loss does not depend on (their `.grad` is set
    to zeros as well).
    """
    if not isinstance(loss, Tensor) or not loss.requires_grad:
        raise ValueError("backward: loss is not a recorded graph node")
    if loss.value.shape != (1, 1):
        raise ValueError(f"backward: loss must be 1x1, got shape {loss.value.shape}")

    # Iterative post-order walk; parents end up before children.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p is not None and p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    acc: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(order):
        g = acc.get(id(node))
        if g is None:
            continue
        node.grad = g
        if node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if parent is None or pg is None:
                continue
            held = acc.get(id(parent))
            acc[id(parent)] = pg if held is None else held + pg

    if params is None:
        return None
    out = []
    for p in params:
        g = acc.get(id(p))
        if g is None:
            g = np.zeros_like(p.value)
            p.grad = g
        out.append(g)
    return out


def _scalar(x) -> float:
    v = x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if v.shape != (1, 1):
        raise ValueError(f"expected a 1x1 scalar result, got shape {v.shape}")
    return float(v[0, 0])


def grad_check(f, params, eps: float = 1e-5) -> float:
    """Largest relative disagreement between backward() and central differences.

    `f` must rebuild and return the scalar loss node from the current values
    of `params`. The relative error denominator is
    max(|analytic|, |numeric|, 1e-8) per component.
    """
    if not (0.0 < eps <= 1e-2):
        raise ValueError(f"grad_check: eps must be in (0, 1e-2], got {eps}")
    loss = f()
    base = _scalar(loss)
    if not np.isfinite(base):
        raise NumericError("grad_check: function value is not finite")
    analytic = backward(loss, params)

    worst = 0.0
    for p, a in zip(params, analytic):
        for idx in np.ndindex(p.value.shape):
            orig = p.value[idx]
            p.value[idx] = orig + eps
            fp = _scalar(f())
            p.value[idx] = orig - eps
            fm = _scalar(f())
            p.value[idx] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError("grad_check: perturbed function value is not finite")
            numeric = (fp - fm) / (2.0 * eps)
            rel = abs(a[idx] - numeric) / max(abs(a[idx]), abs(numeric), 1e-8)
            if rel > worst:
                worst = rel
    return worst
