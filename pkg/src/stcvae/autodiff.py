"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps an ndarray and records, per operation, a closure that
scatters the output gradient back to its parents.  Constants default to
``requires_grad=False`` and record nothing, so evaluation-only use costs
no more than the underlying numpy calls.

Beyond the usual elementwise/matmul/reduction ops there are three fused
primitives with analytic backward passes, chosen so the tape stays small
on the hot paths: ``logsumexp``, ``pairwise_gaussian_log_density`` (the
M x M x n density matrix of the aggregate-posterior estimators) and
``bernoulli_log_likelihood`` (pixel reconstruction from logits).
Convolutions are strided-slice GEMM loops, sufficient for the small
image sizes used here.
"""

import math

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


class Tensor:
    """An ndarray plus the bookkeeping needed for reverse-mode gradients."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __float__(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph construction --------------------------------------------

    def backward(self):
        """Accumulate gradients of this (scalar) tensor into the graph."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        for node in order:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, -1.0))

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __rtruediv__(self, other):
        return mul(power(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, idx):
        return take(self, idx)

    # -- method forms ----------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def as_tensor(x) -> Tensor:
    """Wrap ``x`` as a constant Tensor (no-op when it already is one)."""
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _node(data, parents, backward) -> Tensor:
    """Create an output tensor, recording the tape entry only if needed."""
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` along the axes numpy broadcast over."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _accumulate(t: Tensor, grad: np.ndarray):
    if t.requires_grad:
        t.grad += _unbroadcast(grad, t.data.shape).astype(t.data.dtype, copy=False)


# -- elementwise and structural ops -------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _node(a.data + b.data, (a, b), None)

    def backward():
        _accumulate(a, out.grad)
        _accumulate(b, out.grad)

    out._backward = backward if out.requires_grad else None
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _node(a.data * b.data, (a, b), None)

    def backward():
        _accumulate(a, out.grad * b.data)
        _accumulate(b, out.grad * a.data)

    out._backward = backward if out.requires_grad else None
    return out


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    out = _node(a.data ** exponent, (a,), None)

    def backward():
        _accumulate(a, out.grad * exponent * a.data ** (exponent - 1.0))

    out._backward = backward if out.requires_grad else None
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = _node(np.exp(a.data), (a,), None)

    def backward():
        _accumulate(a, out.grad * out.data)

    out._backward = backward if out.requires_grad else None
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    out = _node(np.log(a.data), (a,), None)

    def backward():
        _accumulate(a, out.grad / a.data)

    out._backward = backward if out.requires_grad else None
    return out


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = _node(np.tanh(a.data), (a,), None)

    def backward():
        _accumulate(a, out.grad * (1.0 - out.data * out.data))

    out._backward = backward if out.requires_grad else None
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = _node(np.maximum(a.data, 0.0), (a,), None)

    def backward():
        _accumulate(a, out.grad * (a.data > 0))

    out._backward = backward if out.requires_grad else None
    return out


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    out = _node(np.where(a.data > 0, a.data, slope * a.data), (a,), None)

    def backward():
        _accumulate(a, out.grad * np.where(a.data > 0, 1.0, slope))

    out._backward = backward if out.requires_grad else None
    return out


def softplus(a) -> Tensor:
    """log(1 + exp(a)), computed without overflow for large |a|."""
    a = as_tensor(a)
    data = np.logaddexp(0.0, a.data)
    out = _node(data, (a,), None)

    def backward():
        _accumulate(a, out.grad / (1.0 + np.exp(-a.data)))

    out._backward = backward if out.requires_grad else None
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _node(a.data @ b.data, (a, b), None)

    def backward():
        _accumulate(a, out.grad @ b.data.T)
        _accumulate(b, a.data.T @ out.grad)

    out._backward = backward if out.requires_grad else None
    return out


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), None)

    def backward():
        grad = out.grad
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        _accumulate(a, np.broadcast_to(grad, a.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in np.atleast_1d(axis)]
    )
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def reshape(a, *shape) -> Tensor:
    a = as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = _node(a.data.reshape(shape), (a,), None)

    def backward():
        _accumulate(a, out.grad.reshape(a.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def take(a, idx) -> Tensor:
    """Indexing/slicing; gradients scatter-add back into place."""
    a = as_tensor(a)
    out = _node(a.data[idx], (a,), None)

    def backward():
        grad = np.zeros_like(a.data)
        np.add.at(grad, idx, out.grad)
        _accumulate(a, grad)

    out._backward = backward if out.requires_grad else None
    return out


def logsumexp(a, axis: int) -> Tensor:
    """Max-shifted log-sum-exp along ``axis`` (axis is removed)."""
    a = as_tensor(a)
    shift = np.max(a.data, axis=axis, keepdims=True)
    expd = np.exp(a.data - shift)
    total = expd.sum(axis=axis, keepdims=True)
    data = np.squeeze(shift + np.log(total), axis=axis)
    out = _node(data, (a,), None)

    def backward():
        softmax = expd / total
        _accumulate(a, np.expand_dims(out.grad, axis) * softmax)

    out._backward = backward if out.requires_grad else None
    return out


# -- fused model primitives ----------------------------------------------


def pairwise_gaussian_log_density(mu, log_var, z) -> Tensor:
    """Per-dimension log densities of every sample under every posterior.

    Inputs are M x n.  Output entry [i, j, d] is the log density of
    ``z[i, d]`` under the diagonal Gaussian with mean ``mu[j, d]`` and
    log variance ``log_var[j, d]``.
    """
    mu, log_var, z = as_tensor(mu), as_tensor(log_var), as_tensor(z)
    if not (mu.shape == log_var.shape == z.shape) or mu.data.ndim != 2:
        raise ValueError(
            f"mu/log_var/z must share an M x n shape, got {mu.shape}, "
            f"{log_var.shape}, {z.shape}"
        )
    if not (
        np.all(np.isfinite(mu.data))
        and np.all(np.isfinite(log_var.data))
        and np.all(np.isfinite(z.data))
    ):
        raise ValueError("non-finite posterior parameters or samples")
    inv_var = np.exp(-log_var.data)  # [M, n]
    diff = z.data[:, None, :] - mu.data[None, :, :]  # [M, M, n]
    data = -0.5 * (LOG_2PI + log_var.data[None, :, :] + diff * diff * inv_var[None, :, :])
    out = _node(data, (mu, log_var, z), None)

    def backward():
        weighted = out.grad * (diff * inv_var[None, :, :])
        _accumulate(z, -weighted.sum(axis=1))
        _accumulate(mu, weighted.sum(axis=0))
        dz2 = out.grad * (diff * diff * inv_var[None, :, :])
        _accumulate(log_var, 0.5 * (dz2 - out.grad).sum(axis=0))
    out._backward = backward if out.requires_grad else None
    return out


def gaussian_log_density(mu, log_var, z) -> Tensor:
    """Elementwise diagonal-Gaussian log density (shapes broadcast)."""
    mu, log_var, z = as_tensor(mu), as_tensor(log_var), as_tensor(z)
    diff = z - mu
    return (
        -0.5 * LOG_2PI - 0.5 * log_var - 0.5 * (diff * diff) * exp(-log_var)
    )


def bernoulli_log_likelihood(logits, targets) -> Tensor:
    """Mean over rows of the summed Bernoulli log likelihood.

    ``logits`` are pre-sigmoid outputs, ``targets`` values in [0, 1].
    Stable form: -sum(t*softplus(-l) + (1-t)*softplus(l)), averaged over
    the leading (batch) axis.
    """
    logits, targets = as_tensor(logits), as_tensor(targets)
    if logits.shape != targets.shape:
        raise ValueError(
            f"logits shape {logits.shape} != targets shape {targets.shape}"
        )
    l = logits.data
    t = targets.data
    per_elem = -(t * np.logaddexp(0.0, -l) + (1.0 - t) * np.logaddexp(0.0, l))
    batch = l.shape[0]
    out = _node(np.asarray(per_elem.sum() / batch, dtype=l.dtype), (logits,), None)

    def backward():
        sig = 1.0 / (1.0 + np.exp(-l))
        _accumulate(logits, out.grad * (t - sig) / batch)

    out._backward = backward if out.requires_grad else None
    return out


# -- convolutions ----------------------------------------------------------


def conv2d(x, w, b, stride: int = 2, pad: int = 1) -> Tensor:
    """2-D convolution, NHWC layout, kernel layout (kh, kw, cin, cout)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    m, h, wd, cin = x.shape
    kh, kw, cin_w, cout = w.shape
    if cin != cin_w:
        raise ValueError(f"input has {cin} channels but kernel expects {cin_w}")
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    data = np.broadcast_to(b.data, (m, ho, wo, cout)).copy()
    for ki in range(kh):
        for kj in range(kw):
            patch = xp[:, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride, :]
            data += patch @ w.data[ki, kj]
    out = _node(data, (x, w, b), None)

    def backward():
        g = out.grad
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        for ki in range(kh):
            for kj in range(kw):
                sl = (
                    slice(None),
                    slice(ki, ki + stride * ho, stride),
                    slice(kj, kj + stride * wo, stride),
                    slice(None),
                )
                gxp[sl] += g @ w.data[ki, kj].T
                gw[ki, kj] = np.tensordot(xp[sl], g, axes=([0, 1, 2], [0, 1, 2]))
        _accumulate(x, gxp[:, pad : pad + h, pad : pad + wd, :])
        _accumulate(w, gw)
        _accumulate(b, g.sum(axis=(0, 1, 2)))

    out._backward = backward if out.requires_grad else None
    return out


def conv2d_transpose(x, w, b, stride: int = 2, pad: int = 1) -> Tensor:
    """Transposed 2-D convolution (the adjoint of ``conv2d``), NHWC.

    Kernel layout (kh, kw, cout, cin); output spatial size is
    ``(in - 1) * stride - 2 * pad + k``.
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    m, hi, wi, cin = x.shape
    kh, kw, cout, cin_w = w.shape
    if cin != cin_w:
        raise ValueError(f"input has {cin} channels but kernel expects {cin_w}")
    ho = (hi - 1) * stride - 2 * pad + kh
    wo = (wi - 1) * stride - 2 * pad + kw
    full = np.zeros((m, ho + 2 * pad, wo + 2 * pad, cout), dtype=x.data.dtype)
    for ki in range(kh):
        for kj in range(kw):
            sl = (
                slice(None),
                slice(ki, ki + stride * hi, stride),
                slice(kj, kj + stride * wi, stride),
                slice(None),
            )
            full[sl] += x.data @ w.data[ki, kj].T
    data = full[:, pad : pad + ho, pad : pad + wo, :] + b.data
    out = _node(data, (x, w, b), None)

    def backward():
        gp = np.pad(out.grad, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
        gx = np.zeros_like(x.data)
        gw = np.zeros_like(w.data)
        for ki in range(kh):
            for kj in range(kw):
                sl = (
                    slice(None),
                    slice(ki, ki + stride * hi, stride),
                    slice(kj, kj + stride * wi, stride),
                    slice(None),
                )
                gx += gp[sl] @ w.data[ki, kj]
                gw[ki, kj] = np.tensordot(gp[sl], x.data, axes=([0, 1, 2], [0, 1, 2]))
        _accumulate(x, gx)
        _accumulate(w, gw)
        _accumulate(b, out.grad.sum(axis=(0, 1, 2)))

    out._backward = backward if out.requires_grad else None
    return out
