"""Dense tensors with reverse-mode automatic differentiation.

Every operation computes its forward value with numpy and, when any input
requires gradients, records a closure that maps the output gradient back onto
its inputs. ``Tensor.backward`` replays those closures in reverse topological
order.

Example:
    ```python
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    (x * x).sum().backward()
    x.grad  # array([2., 4., 6.])
    ```
"""

from contextlib import contextmanager
from typing import Any, Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.exceptions import ShapeError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[Any]]
Axis = Optional[Union[int, Tuple[int, ...]]]
Shape = Tuple[int, ...]

_GRAD_ENABLED = True

GELU_COEFF = 0.044715
SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


def _broadcast_shape(a: Shape, b: Shape, op: str) -> Shape:
    try:
        return tuple(np.broadcast_shapes(a, b))
    except ValueError:
        raise ShapeError(
            f"Cannot {op} tensors of shapes {a} and {b}",
            {"op": op, "left": list(a), "right": list(b)},
        )


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _as_tensor(value: ArrayLike) -> "Tensor":
    return value if isinstance(value, Tensor) else Tensor(value)


class Tensor:
    """A float64 array node in the differentiation graph.

    Attributes:
        data: Forward value
        grad: Accumulated gradient, same shape as data, or None
        requires_grad: Whether gradients flow into this tensor
    """

    __array_priority__ = 100

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        _parents: Tuple["Tensor", ...] = (),
        _backward: Optional[Callable[[np.ndarray], None]] = None,
        name: Optional[str] = None,
    ):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    # Basic properties

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        grad_note = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad_note})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + grad

    @staticmethod
    def _result(
        data: np.ndarray,
        parents: Tuple["Tensor", ...],
        backward: Callable[[np.ndarray], None],
    ) -> "Tensor":
        needs_grad = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        if not needs_grad:
            return Tensor(data)
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)

    # Graph traversal

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into every leaf that requires gradients."""
        if grad is None:
            if self.size != 1:
                raise ShapeError(
                    "backward() without a gradient needs a scalar, "
                    f"got shape {self.shape}",
                    {"shape": list(self.shape)},
                )
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.shape:
            raise ShapeError(
                f"Gradient shape {grad.shape} does not match tensor shape {self.shape}",
                {"grad": list(grad.shape), "tensor": list(self.shape)},
            )

        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # Interior gradients are not needed after propagation
                if node._parents:
                    node.grad = None

    # Elementwise arithmetic

    def __add__(self, other: ArrayLike) -> "Tensor":
        other = _as_tensor(other)
        _broadcast_shape(self.shape, other.shape, "add")
        a, b = self, other

        def _backward(g: np.ndarray) -> None:
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))

        return Tensor._result(a.data + b.data, (a, b), _backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        a = self

        def _backward(g: np.ndarray) -> None:
            a._accumulate(-g)

        return Tensor._result(-a.data, (a,), _backward)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return self + (-_as_tensor(other))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return _as_tensor(other) + (-self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = _as_tensor(other)
        _broadcast_shape(self.shape, other.shape, "multiply")
        a, b = self, other

        def _backward(g: np.ndarray) -> None:
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))

        return Tensor._result(a.data * b.data, (a, b), _backward)

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        other = _as_tensor(other)
        _broadcast_shape(self.shape, other.shape, "divide")
        a, b = self, other

        def _backward(g: np.ndarray) -> None:
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

        return Tensor._result(a.data / b.data, (a, b), _backward)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return _as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        if isinstance(exponent, Tensor):
            raise TypeError("Only scalar exponents are supported")
        a = self
        p = float(exponent)

        def _backward(g: np.ndarray) -> None:
            a._accumulate(g * p * np.power(a.data, p - 1.0))

        return Tensor._result(np.power(a.data, p), (a,), _backward)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, _as_tensor(other))

    def __rmatmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(_as_tensor(other), self)

    def __getitem__(self, key: Any) -> "Tensor":
        a = self
        if isinstance(key, Tensor):
            key = key.data.astype(np.int64)

        def _backward(g: np.ndarray) -> None:
            full = np.zeros_like(a.data)
            np.add.at(full, key, g)
            a._accumulate(full)

        return Tensor._result(a.data[key], (a,), _backward)

    # Unary functions

    def exp(self) -> "Tensor":
        a = self
        out = np.exp(a.data)

        def _backward(g: np.ndarray) -> None:
            a._accumulate(g * out)

        return Tensor._result(out, (a,), _backward)

    def log(self) -> "Tensor":
        a = self

        def _backward(g: np.ndarray) -> None:
            a._accumulate(g / a.data)

        return Tensor._result(np.log(a.data), (a,), _backward)

    def sqrt(self) -> "Tensor":
        a = self
        out = np.sqrt(a.data)

        def _backward(g: np.ndarray) -> None:
            a._accumulate(g * 0.5 / out)

        return Tensor._result(out, (a,), _backward)

    def abs(self) -> "Tensor":
        a = self

        def _backward(g: np.ndarray) -> None:
            a._accumulate(g * np.sign(a.data))

        return Tensor._result(np.abs(a.data), (a,), _backward)

    def relu(self) -> "Tensor":
        a = self

        def _backward(g: np.ndarray) -> None:
            a._accumulate(g * (a.data > 0))

        return Tensor._result(np.maximum(a.data, 0.0), (a,), _backward)

    def clamp_min(self, minimum: float) -> "Tensor":
        """Clamp from below; values at or under the floor get no gradient."""
        a = self

        def _backward(g: np.ndarray) -> None:
            a._accumulate(g * (a.data > minimum))

        return Tensor._result(np.maximum(a.data, minimum), (a,), _backward)

    def gelu(self) -> "Tensor":
        """GELU, tanh approximation."""
        a = self
        x = a.data
        inner = SQRT_2_OVER_PI * (x + GELU_COEFF * x**3)
        t = np.tanh(inner)
        out = 0.5 * x * (1.0 + t)

        def _backward(g: np.ndarray) -> None:
            d_inner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEFF * x * x)
            local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
            a._accumulate(g * local)

        return Tensor._result(out, (a,), _backward)

    # Reductions

    def sum(self, axis: Axis = None, keepdims: bool = False) -> "Tensor":
        a = self

        def _backward(g: np.ndarray) -> None:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape))

        return Tensor._result(a.data.sum(axis=axis, keepdims=keepdims), (a,), _backward)

    def mean(self, axis: Axis = None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[ax] for ax in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / max(count, 1))

    def max(self, axis: int = -1, keepdims: bool = False) -> "Tensor":
        """Maximum over one axis; the gradient goes to the first maximal entry."""
        a = self
        axis = axis % a.ndim
        idx = np.expand_dims(np.argmax(a.data, axis=axis), axis)
        out = np.take_along_axis(a.data, idx, axis=axis)
        if not keepdims:
            out = np.squeeze(out, axis=axis)

        def _backward(g: np.ndarray) -> None:
            if not keepdims:
                g = np.expand_dims(g, axis)
            full = np.zeros_like(a.data)
            np.put_along_axis(full, idx, g, axis=axis)
            a._accumulate(full)

        return Tensor._result(out, (a,), _backward)

    def min(self, axis: int = -1, keepdims: bool = False) -> "Tensor":
        return -((-self).max(axis=axis, keepdims=keepdims))

    def softmax(self, axis: int = -1) -> "Tensor":
        a = self
        shifted = a.data - a.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)

        def _backward(g: np.ndarray) -> None:
            a._accumulate(out * (g - (g * out).sum(axis=axis, keepdims=True)))

        return Tensor._result(out, (a,), _backward)

    def log_softmax(self, axis: int = -1) -> "Tensor":
        a = self
        shifted = a.data - a.data.max(axis=axis, keepdims=True)
        out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        probs = np.exp(out)

        def _backward(g: np.ndarray) -> None:
            a._accumulate(g - probs * g.sum(axis=axis, keepdims=True))

        return Tensor._result(out, (a,), _backward)

    # Shape manipulation

    def reshape(self, *shape: Any) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        try:
            out = a.data.reshape(shape)
        except ValueError:
            raise ShapeError(
                f"Cannot reshape tensor of shape {a.shape} into {tuple(shape)}",
                {"from": list(a.shape), "to": list(shape)},
            )

        def _backward(g: np.ndarray) -> None:
            a._accumulate(g.reshape(a.shape))

        return Tensor._result(out, (a,), _backward)

    def transpose(self, *axes: int) -> "Tensor":
        a = self
        perm = tuple(axes) if axes else tuple(reversed(range(a.ndim)))
        inverse = tuple(np.argsort(perm))

        def _backward(g: np.ndarray) -> None:
            a._accumulate(g.transpose(inverse))

        return Tensor._result(a.data.transpose(perm), (a,), _backward)

    def swapaxes(self, axis1: int, axis2: int) -> "Tensor":
        perm = list(range(self.ndim))
        perm[axis1], perm[axis2] = perm[axis2], perm[axis1]
        return self.transpose(*perm)

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def expand_dims(self, axis: int) -> "Tensor":
        shape = list(self.shape)
        axis = axis if axis >= 0 else self.ndim + 1 + axis
        shape.insert(axis, 1)
        return self.reshape(tuple(shape))

    def dropout(self, rate: float, rng: np.random.Generator) -> "Tensor":
        """Inverted dropout with an explicit generator."""
        if rate <= 0.0:
            return self
        keep = (rng.random(self.shape) >= rate) / (1.0 - rate)
        return self * keep


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"Cannot matmul tensors of shapes {a.shape} and {b.shape}",
            {"op": "matmul", "left": list(a.shape), "right": list(b.shape)},
        )
    _broadcast_shape(a.shape[:-2], b.shape[:-2], "matmul")

    def _backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return Tensor._result(a.data @ b.data, (a, b), _backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along an existing axis."""
    tensors = [_as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            "Cannot concatenate tensors of shapes "
            + ", ".join(str(t.shape) for t in tensors),
            {"shapes": [list(t.shape) for t in tensors], "axis": axis},
        )
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def _backward(g: np.ndarray) -> None:
        for t, start, stop in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(int(start), int(stop))
                t._accumulate(g[tuple(index)])

    return Tensor._result(out, tuple(tensors), _backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return concat([_as_tensor(t).expand_dims(axis) for t in tensors], axis=axis)


def gather_rows(x: Tensor, indices: np.ndarray) -> Tensor:
    """Select rows along axis 1 per batch entry.

    ``x`` has shape (B, m, ...) and ``indices`` shape (B, r); the result has
    shape (B, r, ...).
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim != 2 or indices.shape[0] != x.shape[0]:
        raise ShapeError(
            f"Cannot gather indices of shape {indices.shape} "
            f"from tensor of shape {x.shape}",
            {"indices": list(indices.shape), "tensor": list(x.shape)},
        )
    batch = np.arange(x.shape[0])[:, None]
    return x[batch, indices]


def zeros(shape: Tuple[int, ...], requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape: Tuple[int, ...], requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)
