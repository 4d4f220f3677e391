"""Minimal reverse-mode automatic differentiation over dense float64 tensors.

Operations record themselves on the active :class:`Tape` whenever any input
requires a gradient. ``Tape.backward`` replays the records in reverse and
accumulates adjoints per node, so a value consumed twice receives the sum of
both contributions. Everything is float64 with a fixed summation order, which
makes repeated runs bit-identical and keeps finite-difference checks sharp.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .errors import ContractError, DimensionError

__all__ = [
    "Tensor",
    "Tape",
    "forward_op",
    "finite_difference_check",
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "transpose",
    "relu",
    "tanh",
    "square",
    "reduce_sum",
    "reduce_mean",
    "exp",
    "log",
    "neg",
]


class Tensor:
    """Dense n-dimensional float64 array, optionally tracked on a tape."""

    __slots__ = ("data", "requires_grad", "node_id", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        # asarray keeps 0-d scalars 0-d (ascontiguousarray would promote to 1-d)
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.requires_grad = requires_grad
        self.node_id: int | None = None
        self._tape: "Tape | None" = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; scalars are allowed on the right of * only.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other) -> "Tensor":
        return scale(self, float(other))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)


class _Record(NamedTuple):
    op: str
    input_ids: tuple[int, ...]
    output_id: int
    # maps the output adjoint to one adjoint per input (None where not needed)
    backward: Callable[[np.ndarray], tuple]


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered log of recorded operations; inputs always precede their uses."""

    def __init__(self):
        self._records: list[_Record] = []
        self._next_id = 0

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self) -> int:
        return len(self._records)

    def bind(self, t: Tensor) -> int:
        """Assign ``t`` a node id on this tape (idempotent per tape)."""
        if t._tape is not self:
            t._tape = self
            t.node_id = self._next_id
            self._next_id += 1
        return t.node_id  # type: ignore[return-value]

    def record(self, op: str, inputs: tuple[Tensor, ...], output: Tensor,
               backward: Callable[[np.ndarray], tuple]) -> None:
        ids = tuple(self.bind(t) for t in inputs)
        out_id = self.bind(output)
        self._records.append(_Record(op, ids, out_id, backward))

    def backward(self, loss: Tensor) -> dict[int, Tensor]:
        """Adjoints of ``loss`` w.r.t. every gradient-tracked node on the tape.

        The returned map is keyed by node id and always contains the loss
        itself with adjoint 1.0. Records are replayed in reverse insertion
        order, so accumulation order is fixed and runs are bit-reproducible.
        """
        if loss.shape != ():
            raise ContractError(
                f"backward root must be a scalar, got shape {loss.shape}")
        if loss._tape is not self or loss.node_id is None:
            raise ContractError("backward root was not produced on this tape")

        grads: dict[int, np.ndarray] = {loss.node_id: np.asarray(1.0)}
        for rec in reversed(self._records):
            gout = grads.get(rec.output_id)
            if gout is None:
                continue
            for input_id, gin in zip(rec.input_ids, rec.backward(gout)):
                if gin is None:
                    continue
                acc = grads.get(input_id)
                grads[input_id] = gin if acc is None else acc + gin
        return {nid: Tensor(g) for nid, g in grads.items()}


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _unary(op: str, x: Tensor, out_data: np.ndarray,
           grad_fn: Callable[[np.ndarray], np.ndarray]) -> Tensor:
    out = Tensor(out_data, requires_grad=x.requires_grad)
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape.record(op, (x,), out, lambda g: (grad_fn(g),))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary_elementwise(op: str, a: Tensor, b: Tensor, out_data: np.ndarray,
                        grad_a: Callable[[np.ndarray], np.ndarray],
                        grad_b: Callable[[np.ndarray], np.ndarray]) -> Tensor:
    out = Tensor(out_data, requires_grad=a.requires_grad or b.requires_grad)
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        a_shape, b_shape = a.shape, b.shape

        def backward(g: np.ndarray) -> tuple:
            ga = _unbroadcast(grad_a(g), a_shape) if a.requires_grad else None
            gb = _unbroadcast(grad_b(g), b_shape) if b.requires_grad else None
            return ga, gb

        tape.record(op, (a, b), out, backward)
    return out


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(
            f"{op}: shapes {a.shape} and {b.shape} are not compatible") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("add", a, b)
    return _binary_elementwise("add", a, b, a.data + b.data,
                               lambda g: g, lambda g: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("subtract", a, b)
    return _binary_elementwise("subtract", a, b, a.data - b.data,
                               lambda g: g, lambda g: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product."""
    _check_broadcast("multiply", a, b)
    a_data, b_data = a.data, b.data
    return _binary_elementwise("multiply", a, b, a_data * b_data,
                               lambda g: g * b_data, lambda g: g * a_data)


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a plain Python scalar (no gradient w.r.t. the scalar)."""
    c = float(c)
    return _unary("scalar_multiply", x, x.data * c, lambda g: g * c)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: shapes {a.shape} and {b.shape} are not compatible")
    out = Tensor(a.data @ b.data, requires_grad=a.requires_grad or b.requires_grad)
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        a_data, b_data = a.data, b.data

        def backward(g: np.ndarray) -> tuple:
            ga = g @ b_data.T if a.requires_grad else None
            gb = a_data.T @ g if b.requires_grad else None
            return ga, gb

        tape.record("matmul", (a, b), out, backward)
    return out


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError(f"transpose: expected a matrix, got shape {x.shape}")
    return _unary("transpose", x, x.data.T.copy(), lambda g: g.T.copy())


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _unary("relu", x, np.where(mask, x.data, 0.0), lambda g: g * mask)


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)
    return _unary("tanh", x, out_data, lambda g: g * (1.0 - out_data * out_data))


def square(x: Tensor) -> Tensor:
    x_data = x.data
    return _unary("square", x, x_data * x_data, lambda g: g * (2.0 * x_data))


def reduce_sum(x: Tensor) -> Tensor:
    shape = x.shape
    return _unary("sum", x, np.asarray(np.sum(x.data)),
                  lambda g: np.full(shape, g, dtype=np.float64))


def reduce_mean(x: Tensor) -> Tensor:
    shape, n = x.shape, x.data.size
    return _unary("mean", x, np.asarray(np.mean(x.data)),
                  lambda g: np.full(shape, g / n, dtype=np.float64))


def exp(x: Tensor) -> Tensor:
    out_data = np.exp(x.data)
    return _unary("exponential", x, out_data, lambda g: g * out_data)


def log(x: Tensor) -> Tensor:
    x_data = x.data
    return _unary("logarithm", x, np.log(x_data), lambda g: g / x_data)


def neg(x: Tensor) -> Tensor:
    return _unary("negation", x, -x.data, lambda g: -g)


_OPS: dict[str, Callable] = {
    "add": add,
    "subtract": sub,
    "multiply": mul,
    "scalar_multiply": scale,
    "matmul": matmul,
    "transpose": transpose,
    "relu": relu,
    "tanh": tanh,
    "square": square,
    "sum": reduce_sum,
    "mean": reduce_mean,
    "exponential": exp,
    "logarithm": log,
    "negation": neg,
}


def forward_op(op_tag: str, *inputs) -> Tensor:
    """Apply a primitive by tag. Unknown tags raise ContractError."""
    fn = _OPS.get(op_tag)
    if fn is None:
        raise ContractError(f"unknown op tag {op_tag!r}")
    return fn(*inputs)


def finite_difference_check(f: Callable[[Tensor], Tensor], x: Tensor,
                            eps: float = 1e-5) -> float:
    """Max relative disagreement between analytic and central-difference grads.

    ``f`` must be a deterministic map from one tensor to a scalar tensor.
    Returns max over coordinates of |analytic - numeric| / max(1, |analytic|).
    """
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")

    probe = Tensor(x.data.copy(), requires_grad=True)
    with Tape() as tape:
        out = f(probe)
    if out.shape != ():
        raise ContractError(f"f must return a scalar, got shape {out.shape}")
    if out._tape is tape:
        grads = tape.backward(out)
        g = grads.get(probe.node_id) if probe.node_id is not None else None
        analytic = g.data if g is not None else np.zeros_like(probe.data)
    else:
        # f never touched the tape (constant function): zero gradient
        analytic = np.zeros_like(probe.data)

    numeric = np.zeros_like(probe.data)
    flat_base = probe.data.reshape(-1)
    flat_num = numeric.reshape(-1)
    for i in range(flat_base.size):
        saved = flat_base[i]
        flat_base[i] = saved + eps
        f_plus = f(Tensor(probe.data)).item()
        flat_base[i] = saved - eps
        f_minus = f(Tensor(probe.data)).item()
        flat_base[i] = saved
        flat_num[i] = (f_plus - f_minus) / (2.0 * eps)

    denom = np.maximum(1.0, np.abs(analytic))
    err = np.abs(analytic - numeric) / denom
    return float(err.max()) if err.size else 0.0
