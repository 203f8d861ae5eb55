"""Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a float32 or float64 numpy array.  Ops (in ``ops``)
record their inputs and a vector-Jacobian closure on the output tensor;
``backward`` walks the resulting graph in reverse topological order and
accumulates gradients on the ``requires_grad`` leaves.  Graphs are dynamic:
every forward pass builds a fresh one and it is garbage-collected with its
tensors, so nothing needs explicit clearing between optimizer steps.

Two precisions are supported: float32 (training/inference default) and
float64 (used by ``gradcheck``, where finite differences need the headroom).
"""

import contextlib

import numpy as np

from .errors import ShapeError

FLOAT_DTYPES = (np.float32, np.float64)

_grad_enabled = True
_alloc_tracker = None


class Tensor:
    """N-dimensional float array, optionally tracked by autograd."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def is_leaf(self):
        return self._vjp is None

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def assert_finite(self, what="tensor"):
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError(f"non-finite values in {what}")

    def numpy(self):
        return self.data

    def __repr__(self):
        grad = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype}{grad})"

    # arithmetic operators are attached by the ops module on import


def make_op_output(data, parents, vjp):
    """Wrap an op result, wiring the graph edges if grad mode is on."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    track = any(p.requires_grad for p in parents) and _grad_enabled
    out.requires_grad = track
    out._parents = tuple(parents) if track else ()
    out._vjp = vjp if track else None
    if _alloc_tracker is not None:
        _alloc_tracker.add(data.nbytes)
    return out


def is_grad_enabled():
    return _grad_enabled


@contextlib.contextmanager
def no_grad():
    """Disable graph construction (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class AllocTracker:
    """Counts bytes of op outputs allocated while active.

    ``peak`` is the largest single allocation, a proxy for transient
    working-set size (the op graph frees intermediates as it goes).
    """

    def __init__(self):
        self.bytes = 0
        self.peak = 0

    def add(self, n):
        self.bytes += n
        if n > self.peak:
            self.peak = n


@contextlib.contextmanager
def track_allocations():
    """Context manager yielding an AllocTracker for the enclosed region."""
    global _alloc_tracker
    prev = _alloc_tracker
    tracker = AllocTracker()
    _alloc_tracker = tracker
    try:
        yield tracker
    finally:
        _alloc_tracker = prev


def _topo_order(root):
    """Reverse-topological op order; visits each node exactly once."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss, grad=None, into=None):
    """Backpropagate from ``loss``, accumulating grads on requires_grad leaves.

    ``loss`` must hold a single scalar unless an explicit seed ``grad`` array
    is given.  With ``into`` (a dict), leaf gradients are accumulated there
    keyed by tensor id instead of on ``Tensor.grad``; this keeps concurrent
    per-sample backward passes from racing on shared parameters.
    Accumulation is additive: leaves used several times, or across repeated
    calls, sum their contributions.
    """
    if grad is None:
        if loss.data.size != 1:
            raise ShapeError(
                f"backward() needs a scalar loss, got shape {loss.shape}")
        grad = np.ones_like(loss.data)
    else:
        grad = np.asarray(grad, dtype=loss.data.dtype)
        if grad.shape != loss.data.shape:
            raise ShapeError("seed gradient shape mismatch")
    if not loss.requires_grad:
        raise ValueError("backward() on a tensor detached from any graph")

    grads = {id(loss): grad}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            if node.requires_grad:
                if into is not None:
                    acc = into.get(id(node))
                    into[id(node)] = g if acc is None else acc + g
                elif node.grad is None:
                    node.grad = g.copy()
                else:
                    node.grad += g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg


def gradcheck(op, inputs, eps=1e-5, seed=0):
    """Max relative error between analytic and central-difference gradients.

    ``op`` maps the given tensors to one output tensor.  All float64 inputs
    with requires_grad are checked coordinate by coordinate; the output is
    reduced to a scalar through a fixed random projection so a single
    backward pass yields every analytic gradient.  Relative error per
    coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    checked = [t for t in inputs if isinstance(t, Tensor) and t.requires_grad]
    for t in checked:
        if t.dtype != np.float64:
            raise ValueError("gradcheck requires float64 inputs")
        t.zero_grad()

    rng = np.random.default_rng(seed)
    out = op(*inputs)
    proj = rng.standard_normal(out.shape).astype(np.float64)
    backward(out, grad=proj)

    def loss():
        with no_grad():
            return float((op(*inputs).data * proj).sum())

    worst = 0.0
    for t in checked:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss()
            flat[i] = orig - eps
            lo = loss()
            flat[i] = orig
            numeric = (hi - lo) / (2 * eps)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
