"""Reverse-mode automatic differentiation over dense numpy arrays.

A Tensor wraps one ndarray plus an optional gradient and a backward
closure; backward() walks the tape in reverse topological order. The op
set is exactly what the denoiser needs: broadcasting arithmetic, matmul,
reductions, a few activations, row softmax (optionally masked), gather,
and an im2col-based 3x3 convolution in NHWC layout. Gradients keep the
dtype of the forward data, so float64 graphs check cleanly against
finite differences.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tensor", "concat"]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape the operand had before broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    # -- plumbing ---------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    @staticmethod
    def _lift(value, like: np.ndarray) -> "Tensor":
        if isinstance(value, Tensor):
            return value
        if np.isscalar(value):
            return Tensor(np.asarray(value, dtype=like.dtype))
        return Tensor(np.asarray(value))

    @classmethod
    def _node(cls, data, parents, backward):
        out = cls(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def backward(self, grad=None) -> None:
        """Accumulate gradients of self w.r.t. every reachable parent."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                topo.append(node)
                continue
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen and parent.requires_grad:
                    stack.append((parent, False))
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = self._lift(other, self.data)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.data.shape))

        return self._node(a.data + b.data, (a, b), backward)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def backward(g):
            a._accumulate(-g)

        return self._node(-a.data, (a,), backward)

    def __sub__(self, other):
        other = self._lift(other, self.data)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g, b.data.shape))

        return self._node(a.data - b.data, (a, b), backward)

    def __rsub__(self, other):
        return self._lift(other, self.data).__sub__(self)

    def __mul__(self, other):
        other = self._lift(other, self.data)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        return self._node(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other, self.data)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return self._node(a.data / b.data, (a, b), backward)

    def __rtruediv__(self, other):
        return self._lift(other, self.data).__truediv__(self)

    def __pow__(self, exponent: float):
        a = self
        e = float(exponent)

        def backward(g):
            a._accumulate(g * e * a.data ** (e - 1.0))

        return self._node(a.data**e, (a,), backward)

    def __matmul__(self, other):
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

        return self._node(a.data @ b.data, (a, b), backward)

    # -- shape ops --------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old = a.data.shape

        def backward(g):
            a._accumulate(g.reshape(old))

        return self._node(a.data.reshape(shape), (a,), backward)

    def transpose(self, *axes):
        a = self
        inverse = tuple(np.argsort(axes))

        def backward(g):
            a._accumulate(np.transpose(g, inverse))

        return self._node(np.transpose(a.data, axes), (a,), backward)

    def take_rows(self, indices):
        """Gather rows along the first axis; scatter-adds on backward."""
        a = self
        idx = np.asarray(indices, dtype=np.int64)

        def backward(g):
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            np.add.at(a.grad, idx, g)

        return self._node(a.data[idx], (a,), backward)

    # -- reductions -------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        a = self
        axes = (axis,) if isinstance(axis, int) else axis

        def backward(g):
            if axes is not None and not keepdims:
                g = np.expand_dims(g, tuple(sorted(ax % a.data.ndim for ax in axes)))
            a._accumulate(np.broadcast_to(g, a.data.shape))

        return self._node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.data.shape[ax] for ax in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- activations ------------------------------------------------------

    def exp(self):
        a = self
        out_data = np.exp(a.data)

        def backward(g):
            a._accumulate(g * out_data)

        return self._node(out_data, (a,), backward)

    def log(self):
        a = self

        def backward(g):
            a._accumulate(g / a.data)

        return self._node(np.log(a.data), (a,), backward)

    def sigmoid(self):
        a = self
        x = a.data
        out_data = np.empty_like(x)
        pos = x >= 0
        out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out_data[~pos] = ex / (1.0 + ex)

        def backward(g):
            a._accumulate(g * out_data * (1.0 - out_data))

        return self._node(out_data, (a,), backward)

    def silu(self):
        a = self
        sig = a.sigmoid().data  # stable sigmoid, reused in both directions

        def backward(g):
            a._accumulate(g * (sig + a.data * sig * (1.0 - sig)))

        return self._node(a.data * sig, (a,), backward)

    # -- softmax ----------------------------------------------------------

    def softmax(self):
        """Row softmax along the last axis."""
        a = self
        shifted = a.data - a.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        out_data = e / e.sum(axis=-1, keepdims=True)

        def backward(g):
            dot = (g * out_data).sum(axis=-1, keepdims=True)
            a._accumulate(out_data * (g - dot))

        return self._node(out_data, (a,), backward)

    def masked_softmax(self, masked: np.ndarray):
        """Row softmax along the last axis, excluding masked entries.

        Masked slots get exactly 0 in the output and receive no gradient.
        Rows must keep at least one unmasked entry.
        """
        a = self
        masked = np.broadcast_to(np.asarray(masked, dtype=bool), a.data.shape)
        neg = np.where(masked, -np.inf, a.data)
        shifted = neg - neg.max(axis=-1, keepdims=True)
        e = np.exp(shifted)  # exp(-inf) == 0 exactly
        out_data = e / e.sum(axis=-1, keepdims=True)

        def backward(g):
            dot = (g * out_data).sum(axis=-1, keepdims=True)
            a._accumulate(out_data * (g - dot))

        return self._node(out_data, (a,), backward)

    # -- spatial ops (NHWC) -------------------------------------------------

    def conv3x3(self, weight: "Tensor", bias: "Tensor" = None):
        """Same-padding 3x3 convolution; x (B,H,W,Ci), weight (3,3,Ci,Co)."""
        a, w = self, weight
        B, H, W, Ci = a.data.shape
        Co = w.data.shape[-1]
        padded = np.zeros((B, H + 2, W + 2, Ci), dtype=a.data.dtype)
        padded[:, 1 : H + 1, 1 : W + 1] = a.data
        cols = np.empty((B, H, W, 9 * Ci), dtype=a.data.dtype)
        for k in range(9):
            i, j = divmod(k, 3)
            cols[..., k * Ci : (k + 1) * Ci] = padded[:, i : i + H, j : j + W]
        cols2d = cols.reshape(B * H * W, 9 * Ci)
        out_data = cols2d @ w.data.reshape(9 * Ci, Co)
        if bias is not None:
            out_data += bias.data
        out_data = out_data.reshape(B, H, W, Co)

        def backward(g):
            g2d = g.reshape(B * H * W, Co)
            if w.requires_grad:
                w._accumulate((cols2d.T @ g2d).reshape(3, 3, Ci, Co))
            if bias is not None and bias.requires_grad:
                bias._accumulate(g2d.sum(axis=0))
            if a.requires_grad:
                dcols = (g2d @ w.data.reshape(9 * Ci, Co).T).reshape(B, H, W, 9 * Ci)
                dpad = np.zeros_like(padded)
                for k in range(9):
                    i, j = divmod(k, 3)
                    dpad[:, i : i + H, j : j + W] += dcols[..., k * Ci : (k + 1) * Ci]
                a._accumulate(dpad[:, 1 : H + 1, 1 : W + 1])

        parents = (a, w) if bias is None else (a, w, bias)
        return self._node(out_data, parents, backward)

    def avg_pool2(self):
        """2x2 mean pooling; spatial dims must be even."""
        a = self
        B, H, W, C = a.data.shape
        out_data = a.data.reshape(B, H // 2, 2, W // 2, 2, C).mean(axis=(2, 4))

        def backward(g):
            up = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2)
            a._accumulate(up * 0.25)

        return self._node(out_data, (a,), backward)

    def upsample2(self):
        """Nearest-neighbor 2x upsampling on both spatial dims."""
        a = self
        B, H, W, C = a.data.shape
        out_data = np.repeat(np.repeat(a.data, 2, axis=1), 2, axis=2)

        def backward(g):
            a._accumulate(g.reshape(B, H, 2, W, 2, C).sum(axis=(2, 4)))

        return self._node(out_data, (a,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    """Concatenate tensors along an axis; splits the gradient back."""
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(start, stop)
                t._accumulate(g[tuple(index)])

    return Tensor._node(data, tuple(tensors), backward)
