# -*- coding: utf-8 -*-
"""
Dense 64-bit tensors with reverse-mode automatic differentiation. Define `Tensor`, `ComputationTape` and the primitive operations.

Every operation records a backward closure on the output tensor when at least one input requires a gradient
and recording is enabled (see `no_grad`). Calling `Tensor.backward` on a scalar walks the recorded graph in reverse
creation order and accumulates gradients into the leaves.

Exemple:

>>> from eegdg.tensor import Tensor
>>> x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
>>> (x * x).sum().backward()
>>> x.grad
array([2., 4., 6.])
"""

import contextlib
import itertools
import logging
import threading

import numpy as np

from .core.errors import ConfigurationError, ContractError, DimensionError

log = logging.getLogger("eegdg")

_state = threading.local()
_creation = itertools.count()


def is_grad_enabled():
    """Weither operations record their backward closure in the current thread."""
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """
    Context manager disabling graph recording in the current thread, for evaluation passes.
    """
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Tensor:
    """
    Dense n-dimensional array of 64-bit reals taking part in reverse-mode differentiation.

    :ivar data: Underlying `numpy.ndarray` (``float64``, row-major).
    :ivar requires_grad: Weither gradients flow to this tensor.
    :ivar grad: Accumulated gradient, same shape as `data`, `None` until a backward pass reaches it.
    :ivar name: Optional name, set on model parameters.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        """
        Arguments:
            - `data`: array-like, copied into a ``float64`` array.
            - `requires_grad` (`bool`): Make the tensor a differentiable leaf.
            - `name` (`str`): Optional name.
        """
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None
        self._order = next(_creation)

    def __repr__(self):
        return "Tensor(shape={}, requires_grad={}{})".format(
            list(self.shape),
            self.requires_grad,
            ", name=" + self.name if self.name else "",
        )

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return self._backward is None

    def item(self):
        """Value of a one-element tensor as a `float`."""
        if self.data.size != 1:
            raise ContractError(
                "item() needs a one-element tensor, got shape {}".format(list(self.shape))
            )
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        """Copy of the data as a `numpy.ndarray`."""
        return self.data.copy()

    def detach(self):
        """New leaf tensor sharing no graph with this one."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """
        Accumulate d(self)/d(leaf) into every reachable leaf requiring a gradient.

        Arguments:
            - `grad`: Seed gradient, only for non-scalar tensors. Scalars are seeded with 1.

        Raises:
            `ContractError` on a non-scalar tensor without seed, or when nothing requires a gradient.
        """
        ComputationTape.from_loss(self).backward(self, grad)

    # Operator sugar

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    # Method sugar

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    @property
    def T(self):
        return transpose(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log_(self)

    def sqrt(self):
        return sqrt(self)

    def square(self):
        return square(self)

    def elu(self):
        return elu(self)

    def softmax(self, axis=-1):
        return softmax(self, axis)

    def log_softmax(self, axis=-1):
        return log_softmax(self, axis)


class ComputationTape:
    """
    Ordered record of the operations leading to a loss.

    Nodes are ordered by their creation index, which is a topological order since an operation output
    is always created after its inputs. The backward traversal visits each node once in reverse order.

    :ivar nodes: `list[Tensor]` reachable from the loss that require a gradient, ascending creation order.
    """

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def from_loss(cls, loss):
        """Collect the nodes reachable from `loss`."""
        seen = set()
        nodes = list()
        stack = [loss]
        while stack:
            node = stack.pop()
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            nodes.append(node)
            stack.extend(node._parents)
        nodes.sort(key=lambda n: n._order)
        return cls(nodes)

    def __len__(self):
        return len(self.nodes)

    def backward(self, loss, grad=None):
        """
        Run the backward pass from `loss`.
        """
        if not loss.requires_grad:
            raise ContractError("backward() called on a tensor that does not require grad")
        if grad is None:
            if loss.data.size != 1:
                raise ContractError(
                    "backward() needs a scalar loss, got shape {}".format(list(loss.shape))
                )
            grad = np.ones_like(loss.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != loss.shape:
                raise DimensionError(
                    "seed gradient shape {} differs from tensor shape {}".format(
                        list(grad.shape), list(loss.shape)
                    )
                )

        pending = {id(loss): grad}
        for node in reversed(self.nodes):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in pending:
                    pending[id(parent)] = pending[id(parent)] + pg
                else:
                    pending[id(parent)] = pg


def as_tensor(value):
    """Wrap constants (numbers, arrays) in a non-differentiable `Tensor`."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data, parents, backward):
    """Create an operation output and record `backward` when needed."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._order = next(_creation)
    out.requires_grad = is_grad_enabled() and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` over the axes numpy broadcasting added or stretched to reach it."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(
            "{}: shapes {} and {} do not broadcast".format(
                op, list(a.shape), list(b.shape)
            )
        )


def _norm_axis(axis, ndim):
    """Validate an axis (or tuple of axes) against `ndim`, returns a tuple of positive axes."""
    if axis is None:
        return tuple(range(ndim))
    axes = axis if isinstance(axis, (tuple, list)) else (axis,)
    normalized = list()
    for a in axes:
        if not -ndim <= a < ndim:
            raise DimensionError(
                "axis {} is out of range for a tensor of rank {}".format(a, ndim)
            )
        normalized.append(a % ndim)
    return tuple(normalized)


# Elementwise arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def backward(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)

    def backward(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        )

    return _result(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _result(a.data / b.data, (a, b), backward)


def scale(a, c):
    """Multiply by the constant scalar `c`."""
    a = as_tensor(a)
    c = float(c)
    return _result(a.data * c, (a,), lambda g: (g * c,))


def neg(a):
    return scale(a, -1.0)


def square(a):
    a = as_tensor(a)
    return _result(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def sqrt(a):
    """Square root, defined for nonnegative inputs. Callers add a small epsilon where 0 can occur."""
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _result(out, (a,), lambda g: (0.5 * g / out,))


def stable_sqrt(a, eps=1e-12):
    """
    Square root whose derivative is evaluated at ``a + eps``, finite at zero.
    The forward value is the exact square root.
    """
    a = as_tensor(a)
    slope = 0.5 / np.sqrt(a.data + eps)
    return _result(np.sqrt(a.data), (a,), lambda g: (g * slope,))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,))


def log_(a):
    a = as_tensor(a)
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def maximum_scalar(a, floor):
    """Elementwise ``max(a, floor)``; the gradient flows where ``a >= floor``."""
    a = as_tensor(a)
    mask = a.data >= floor
    return _result(np.maximum(a.data, floor), (a,), lambda g: (g * mask,))


def elu(a):
    """ELU activation: x for x >= 0, e^x - 1 below."""
    a = as_tensor(a)
    positive = a.data >= 0
    out = np.where(positive, a.data, np.expm1(np.minimum(a.data, 0.0)))
    slope = np.where(positive, 1.0, out + 1.0)
    return _result(out, (a,), lambda g: (g * slope,))


def softmax(a, axis=-1):
    a = as_tensor(a)
    (axis,) = _norm_axis(axis, a.ndim)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), backward)


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    (axis,) = _norm_axis(axis, a.ndim)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _result(out, (a,), backward)


# Reductions and shape manipulation


def sum(a, axis=None, keepdims=False):  # pylint: disable=W0622
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(np.asarray(out, dtype=np.float64), (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    return scale(sum(a, axis=axes, keepdims=keepdims), 1.0 / count)


def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(
            "cannot reshape {} into {}".format(list(a.shape), list(shape))
        )
    return _result(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = _norm_axis(axes, a.ndim)
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError("invalid permutation {}".format(axes))
    inverse = tuple(np.argsort(axes))
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def concat(tensors, axis=0):
    """Concatenate along an existing axis."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat() needs at least one tensor")
    (axis,) = _norm_axis(axis, tensors[0].ndim)
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(t.ndim) if i != axis
        ):
            raise DimensionError(
                "concat: shapes {} and {} differ outside axis {}".format(
                    list(tensors[0].shape), list(t.shape), axis
                )
            )
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward
    )


def take(a, index):
    """Numpy basic/advanced indexing, repeated indices accumulate in the backward pass."""
    a = as_tensor(a)
    try:
        out = np.array(a.data[index], dtype=np.float64)
    except IndexError as e:
        raise DimensionError("index out of range for shape {}: {}".format(list(a.shape), e))

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _result(out, (a,), backward)


# Linear algebra and distances


def matmul(a, b):
    """Matrix product of ``[m x k]`` and ``[k x n]`` tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            "matmul: shapes {} and {} are not aligned".format(
                list(a.shape), list(b.shape)
            )
        )

    def backward(g):
        return (g @ b.data.T, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), backward)


def pairwise_sq_dist(a, b):
    """
    Squared Euclidean distances between the rows of ``a [m x d]`` and ``b [n x d]``.

    Computed from explicit differences, so entries are exactly nonnegative and the diagonal of
    ``pairwise_sq_dist(a, a)`` is exactly zero.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(
            "pairwise_sq_dist: feature dimensions of {} and {} differ".format(
                list(a.shape), list(b.shape)
            )
        )
    diff = a.data[:, None, :] - b.data[None, :, :]

    def backward(g):
        weighted = g[:, :, None] * diff
        return (2.0 * weighted.sum(axis=1), -2.0 * weighted.sum(axis=0))

    return _result((diff * diff).sum(axis=-1), (a, b), backward)


# Convolutional network primitives


def _pair(value, name):
    if isinstance(value, int):
        return (value, value)
    if isinstance(value, (tuple, list)) and len(value) == 2:
        return (int(value[0]), int(value[1]))
    raise ConfigurationError("{} must be an int or a pair, not {!r}".format(name, value))


def _conv_padding(padding, kh, kw, stride):
    """Returns ``((top, bottom), (left, right))``."""
    if padding == "same":
        if stride != (1, 1):
            raise ConfigurationError("'same' padding needs stride 1")
        return (
            ((kh - 1) // 2, kh - 1 - (kh - 1) // 2),
            ((kw - 1) // 2, kw - 1 - (kw - 1) // 2),
        )
    ph, pw = _pair(padding, "padding")
    if ph < 0 or pw < 0:
        raise ConfigurationError("padding must be >= 0")
    return ((ph, ph), (pw, pw))


def conv2d(x, kernel, groups=1, stride=1, padding=0):
    """
    2-D cross-correlation of ``x [B x Cin x H x W]`` with ``kernel [Cout x Cin/groups x kh x kw]``.

    Arguments:
        - `groups` (`int`): ``1`` for a plain convolution, ``Cin`` for a depthwise one.
        - `stride` (`int` or pair)
        - `padding`: ``"same"`` (stride 1, extra padding on the bottom/right for even kernels), an `int` or a pair.

    Output spatial size is ``floor((H + pad_total - kh) / stride) + 1``.
    The convolution is computed directly, one kernel tap at a time.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(
            "conv2d expects 4-D input and kernel, got {} and {}".format(
                list(x.shape), list(kernel.shape)
            )
        )
    B, cin, H, W = x.shape
    cout, cpg, kh, kw = kernel.shape
    if groups < 1 or cin % groups != 0 or cout % groups != 0:
        raise ConfigurationError(
            "conv2d: {} input and {} output channels are not divisible by groups={}".format(
                cin, cout, groups
            )
        )
    if cpg * groups != cin:
        raise DimensionError(
            "conv2d: kernel {} does not match {} input channels with groups={}".format(
                list(kernel.shape), cin, groups
            )
        )
    sh, sw = _pair(stride, "stride")
    (pt, pb), (pl, pr) = _conv_padding(padding, kh, kw, (sh, sw))
    Hp, Wp = H + pt + pb, W + pl + pr
    Ho, Wo = (Hp - kh) // sh + 1, (Wp - kw) // sw + 1
    if Hp < kh or Wp < kw:
        raise DimensionError(
            "conv2d: kernel {}x{} larger than padded input {}x{}".format(kh, kw, Hp, Wp)
        )
    opg = cout // groups

    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    xg = xp.reshape(B, groups, cpg, Hp, Wp)
    wg = kernel.data.reshape(groups, opg, cpg, kh, kw)

    def tap(i, j):
        return (
            slice(None),
            slice(None),
            slice(None),
            slice(i, i + sh * (Ho - 1) + 1, sh),
            slice(j, j + sw * (Wo - 1) + 1, sw),
        )

    out = np.zeros((B, groups, opg, Ho, Wo))
    for i in range(kh):
        for j in range(kw):
            out += np.einsum("bgchw,goc->bgohw", xg[tap(i, j)], wg[:, :, :, i, j])

    def backward(g):
        gg = g.reshape(B, groups, opg, Ho, Wo)
        dxg = np.zeros_like(xg)
        dwg = np.zeros_like(wg)
        for i in range(kh):
            for j in range(kw):
                idx = tap(i, j)
                dwg[:, :, :, i, j] = np.einsum("bgohw,bgchw->goc", gg, xg[idx])
                dxg[idx] += np.einsum("bgohw,goc->bgchw", gg, wg[:, :, :, i, j])
        dx = dxg.reshape(B, cin, Hp, Wp)[:, :, pt : pt + H, pl : pl + W]
        return (dx, dwg.reshape(kernel.shape))

    return _result(out.reshape(B, cout, Ho, Wo), (x, kernel), backward)


def avg_pool2d(x, kernel):
    """
    Average pooling with stride equal to the kernel, trailing rows/columns that don't fill a window are dropped.
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError("avg_pool2d expects a 4-D input, got {}".format(list(x.shape)))
    kh, kw = _pair(kernel, "kernel")
    B, C, H, W = x.shape
    Ho, Wo = H // kh, W // kw
    if Ho < 1 or Wo < 1:
        raise DimensionError(
            "avg_pool2d: window {}x{} larger than input {}x{}".format(kh, kw, H, W)
        )
    window = x.data[:, :, : Ho * kh, : Wo * kw].reshape(B, C, Ho, kh, Wo, kw)

    def backward(g):
        grad = np.zeros_like(x.data)
        spread = np.repeat(np.repeat(g, kh, axis=2), kw, axis=3) / (kh * kw)
        grad[:, :, : Ho * kh, : Wo * kw] = spread
        return (grad,)

    return _result(window.mean(axis=(3, 5)), (x,), backward)


def batch_norm(
    x, gamma, beta, running_mean, running_var, train, momentum=0.1, eps=1e-5
):
    """
    Batch normalization over the batch (and spatial) axes of a ``[B x C]`` or ``[B x C x H x W]`` input.

    Arguments:
        - `gamma`, `beta` (`Tensor` of shape ``[C]``): affine parameters.
        - `running_mean`, `running_var` (`numpy.ndarray` of shape ``[C]``): updated in place in train mode
          with an exponential moving average of rate `momentum` (unbiased variance), used as statistics in eval mode.
        - `train` (`bool`)
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim not in (2, 4):
        raise DimensionError("batch_norm expects a 2-D or 4-D input, got {}".format(list(x.shape)))
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise DimensionError("batch_norm: parameters must have shape [{}]".format(C))
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    view = (1, C) if x.ndim == 2 else (1, C, 1, 1)
    n = x.data.size // C

    if train:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        unbiased = var * n / (n - 1) if n > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        mu, var = running_mean, running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(view)) * inv_std.reshape(view)
    out = xhat * gamma.data.reshape(view) + beta.data.reshape(view)

    def backward(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(view)
        if train:
            dx = (
                inv_std.reshape(view)
                / n
                * (
                    n * dxhat
                    - dxhat.sum(axis=axes, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
                )
            )
        else:
            dx = dxhat * inv_std.reshape(view)
        return (dx, dgamma, dbeta)

    return _result(out, (x, gamma, beta), backward)


def dropout(x, p, train, rng=None):
    """
    Inverted dropout: in train mode zero each entry with probability `p` and scale the survivors by ``1/(1-p)``.
    Eval mode returns `x` itself.

    Arguments:
        - `rng` (`numpy.random.Generator`): mandatory in train mode when ``p > 0``.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigurationError("dropout probability must be in [0, 1), not {}".format(p))
    x = as_tensor(x)
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in train mode needs a random generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


# Helpers


def zero_grad(params):
    """Reset the gradient of every tensor in `params`."""
    for p in params:
        p.grad = None


def gradcheck(fn, inputs, h=1e-5):
    """
    Compare analytic gradients with central finite differences.

    Arguments:
        - `fn` (`callable`): ``fn(*inputs)`` returns a scalar `Tensor`. Must be deterministic.
        - `inputs` (`list[Tensor]`): tensors to check, they must require a gradient.
        - `h` (`float`): finite difference step.

    Returns:
        `float`: worst relative error ``||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-10)`` over the inputs.
    """
    zero_grad(inputs)
    fn(*inputs).backward()
    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        with no_grad():
            for k in range(flat.size):
                original = flat[k]
                flat[k] = original + h
                up = fn(*inputs).item()
                flat[k] = original - h
                down = fn(*inputs).item()
                flat[k] = original
                numeric.reshape(-1)[k] = (up - down) / (2.0 * h)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-10)
        worst = max(worst, float(np.linalg.norm(analytic - numeric) / denom))
    return worst
