"""Dense-tensor reverse-mode autodiff engine.

Every network and loss in this package is built on the `Tensor` graph node
defined here. Design points:

* values are numpy arrays (float64 by default; float32 supported for
  training-speed runs, gradient checking requires float64),
* `backward` accumulates into persistent ``.grad`` buffers; callers must
  zero gradients explicitly between steps (parameter sharing across time
  steps relies on accumulation),
* graph construction is single-threaded; tensors without gradients are
  plain immutable values.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float64

_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class DomainError(ValueError):
    """Operand values outside the mathematical domain of the operation."""


class no_grad:
    """Context manager that disables graph recording (forward values only)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._saved = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._saved
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A node in the computation graph: value, optional grad, provenance."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, parents=(), vjp=None):
        if not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=DEFAULT_DTYPE)
        self.data = data
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean_(self, axis)


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def tensor(data, dtype=None) -> Tensor:
    """Constant (non-trainable) tensor."""
    return Tensor(np.asarray(data, dtype=dtype or DEFAULT_DTYPE))


def parameter(data, dtype=None) -> Tensor:
    """Trainable leaf tensor."""
    return Tensor(np.asarray(data, dtype=dtype or DEFAULT_DTYPE), requires_grad=True)


def _node(data, parents, vjp) -> Tensor:
    """Create an op output; records provenance only when gradients are live."""
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, vjp=vjp)
    return Tensor(data)


# ---------------------------------------------------------------------------
# elementwise arithmetic with restricted broadcasting
# ---------------------------------------------------------------------------

def _broadcast_ok(sa, sb):
    # identical shapes, a size-1 operand, or (batch, n) against (n,)
    if sa == sb:
        return True
    if int(np.prod(sa)) == 1 or int(np.prod(sb)) == 1:
        return True
    if len(sa) == len(sb) + 1 and sa[1:] == sb:
        return True
    if len(sb) == len(sa) + 1 and sb[1:] == sa:
        return True
    return False


def _reduce_to(g, shape):
    """Sum gradient g down to `shape` (undo leading-extent/scalar broadcast)."""
    if g.shape == tuple(shape):
        return g
    if int(np.prod(shape)) == 1:
        return np.asarray(g.sum()).reshape(shape)
    return g.sum(axis=0)


def _binary(a, b, fwd, vjp_a, vjp_b):
    if not isinstance(a, Tensor):
        a = _as_tensor(a, b.dtype if isinstance(b, Tensor) else DEFAULT_DTYPE)
    b = _as_tensor(b, a.dtype)
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"elementwise operands do not conform: {a.shape} vs {b.shape}")
    out = fwd(a.data, b.data)

    def vjp(g):
        ga = _reduce_to(vjp_a(g, a.data, b.data), a.shape) if a.requires_grad else None
        gb = _reduce_to(vjp_b(g, a.data, b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return _node(out, (a, b), vjp)


def add(a, b):
    return _binary(a, b, lambda x, y: x + y,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, lambda x, y: x - y,
                   lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(a, b, lambda x, y: x * y,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b):
    bt = b if isinstance(b, Tensor) else _as_tensor(b, a.dtype)
    if np.any(bt.data == 0):
        raise DomainError("division by zero")
    return _binary(a, bt, lambda x, y: x / y,
                   lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a = _as_tensor(a, DEFAULT_DTYPE)
    b = _as_tensor(b, a.dtype)
    if a.data.ndim == 0 or b.data.ndim == 0 or a.data.ndim > 2 or b.data.ndim > 2:
        raise ShapeError(f"matmul supports 1-D/2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        ad, bd = a.data, b.data
        ga = gb = None
        if a.requires_grad:
            if ad.ndim == 2 and bd.ndim == 2:
                ga = g @ bd.T
            elif ad.ndim == 1 and bd.ndim == 2:
                ga = bd @ g
            elif ad.ndim == 2 and bd.ndim == 1:
                ga = np.outer(g, bd)
            else:  # 1-D dot
                ga = g * bd
        if b.requires_grad:
            if ad.ndim == 2 and bd.ndim == 2:
                gb = ad.T @ g
            elif ad.ndim == 1 and bd.ndim == 2:
                gb = np.outer(ad, g)
            elif ad.ndim == 2 and bd.ndim == 1:
                gb = ad.T @ g
            else:
                gb = g * ad
        return ga, gb

    return _node(out, (a, b), vjp)


# ---------------------------------------------------------------------------
# elementwise nonlinearities
# ---------------------------------------------------------------------------

def _unary(a: Tensor, out_data, grad_local):
    def vjp(g):
        return (g * grad_local,)
    return _node(out_data, (a,), vjp)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _unary(a, out, out * (1.0 - out))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _unary(a, out, 1.0 - out * out)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _unary(a, out, out)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError("log requires strictly positive values")
    return _unary(a, np.log(a.data), 1.0 / a.data)


def absolute(a: Tensor) -> Tensor:
    # subgradient 0 at x == 0
    return _unary(a, np.abs(a.data), np.sign(a.data))


def square(a: Tensor) -> Tensor:
    return _unary(a, a.data * a.data, 2.0 * a.data)


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0):
        raise DomainError("sqrt requires nonnegative values")
    out = np.sqrt(a.data)
    safe = np.where(out > 0, out, np.inf)  # subgradient 0 at x == 0
    return _unary(a, out, 0.5 / safe)


def clip_values(a: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(a.data, lo, hi)
    inside = ((a.data > lo) & (a.data < hi)).astype(a.data.dtype)
    return _unary(a, out, inside)


# ---------------------------------------------------------------------------
# reductions and structure ops
# ---------------------------------------------------------------------------

def sum_(a: Tensor, axis=None) -> Tensor:
    out = a.data.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _node(np.asarray(out), (a,), vjp)


def mean_(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    out = a.data.mean(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / n, a.shape).astype(a.dtype, copy=True),)
        return (np.broadcast_to(np.expand_dims(g / n, axis), a.shape).copy(),)

    return _node(np.asarray(out), (a,), vjp)


def concat(parts, axis=0) -> Tensor:
    parts = [p if isinstance(p, Tensor) else tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat of an empty list")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]

    def vjp(g):
        grads, off = [], 0
        for p, s in zip(parts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(off, off + s)
            grads.append(g[tuple(sl)] if p.requires_grad else None)
            off += s
        return tuple(grads)

    return _node(out, tuple(parts), vjp)


def rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Slice along the leading (time) axis."""
    out = a.data[start:stop]

    def vjp(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _node(out, (a,), vjp)


def cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"cols expects a 2-D tensor, got {a.shape}")
    out = a.data[:, start:stop]

    def vjp(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return _node(out, (a,), vjp)


def take_row(a: Tensor, index: int) -> Tensor:
    """Single row as a 1-D tensor."""
    out = a.data[index]

    def vjp(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _node(out, (a,), vjp)


def flip_rows(a: Tensor) -> Tensor:
    out = a.data[::-1].copy()

    def vjp(g):
        return (g[::-1].copy(),)

    return _node(out, (a,), vjp)


def tile_rows(v: Tensor, k: int) -> Tensor:
    """Stack a 1-D tensor k times into a (k, n) matrix."""
    if v.data.ndim != 1:
        raise ShapeError(f"tile_rows expects a 1-D tensor, got {v.shape}")
    out = np.tile(v.data, (k, 1))

    def vjp(g):
        return (g.sum(axis=0),)

    return _node(out, (v,), vjp)


def scale_rows(m: Tensor, s: Tensor) -> Tensor:
    """Row-wise scaling: out[t] = s[t] * m[t]; grads flow to both."""
    if m.data.ndim != 2 or s.data.ndim != 1 or m.shape[0] != s.shape[0]:
        raise ShapeError(f"scale_rows needs (k,d) and (k,), got {m.shape} and {s.shape}")
    out = m.data * s.data[:, None]

    def vjp(g):
        gm = g * s.data[:, None] if m.requires_grad else None
        gs = (g * m.data).sum(axis=1) if s.requires_grad else None
        return gm, gs

    return _node(out, (m, s), vjp)


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.shape),)

    return _node(out, (a,), vjp)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(root: Tensor):
    """Populate ``.grad`` on every node reachable from a scalar root.

    Gradients accumulate: two backward calls without zeroing double them.
    """
    if root.data.size != 1:
        raise ShapeError(f"backward root must be scalar, got shape {root.shape}")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    flowing: dict[int, np.ndarray] = {
        id(root): np.ones_like(root.data)
    }
    for node in reversed(topo):
        g = flowing.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            # leaf: accumulate into the persistent buffer
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad += g
            continue
        parent_grads = node._vjp(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            acc = flowing.get(id(p))
            # vjp outputs may alias g or its views; never mutate them in place
            flowing[id(p)] = pg if acc is None else acc + pg


# ---------------------------------------------------------------------------
# parameter store
# ---------------------------------------------------------------------------

class ParamStore:
    """Named collection of trainable tensors with deterministic iteration.

    Names are dot-delimited paths; iteration is always lexicographic.
    """

    def __init__(self, clip_bound: float | None = None):
        self._params: dict[str, Tensor] = {}
        self.clip_bound = clip_bound

    def add(self, name: str, t: Tensor) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name!r}")
        if not t.requires_grad:
            raise ValueError(f"parameter {name!r} must require gradients")
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return sorted(self._params)

    def items(self):
        return [(n, self._params[n]) for n in self.names()]

    def zero_grads(self):
        for _, t in self.items():
            t.grad = None

    def num_values(self) -> int:
        return sum(t.size for _, t in self.items())

    def copy_values(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.items()}

    def load_values(self, values: dict[str, np.ndarray]):
        for n, t in self.items():
            v = values[n]
            if v.shape != t.data.shape:
                raise ShapeError(f"parameter {n!r}: stored shape {v.shape} != expected {t.data.shape}")
            t.data[...] = v


def xavier_init(shape, rng: np.random.Generator, dtype=None) -> Tensor:
    """Uniform init in +-sqrt(6/(fan_in+fan_out)); fans from the last two extents."""
    shape = tuple(int(s) for s in shape)
    if len(shape) < 1:
        raise ShapeError("xavier_init needs at least one extent")
    if len(shape) == 1:
        fan_in, fan_out = shape[0], 1
    else:
        fan_in, fan_out = shape[-2], shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    data = rng.uniform(-bound, bound, size=shape).astype(dtype or DEFAULT_DTYPE)
    return Tensor(data, requires_grad=True)


def clip_params(store: ParamStore, c: float):
    """Clamp every parameter entry into [-c, c] in place; idempotent."""
    if c <= 0:
        raise ValueError(f"clip bound must be positive, got {c}")
    for _, t in store.items():
        np.clip(t.data, -c, c, out=t.data)
    store.clip_bound = c


class RmsPropState:
    """Per-parameter squared-gradient accumulators."""

    def __init__(self):
        self.v: dict[str, np.ndarray] = {}

    def accum(self, name: str, like: np.ndarray) -> np.ndarray:
        a = self.v.get(name)
        if a is None:
            a = np.zeros_like(like)
            self.v[name] = a
        return a


def rmsprop_step(store: ParamStore, state: RmsPropState, lr: float, decay: float = 0.9,
                 eps: float = 1e-8, direction: str = "descend", grads=None):
    """v <- decay*v + (1-decay)*g^2 ; theta -+= lr*g/(sqrt(v)+eps)."""
    if lr < 0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")
    if not 0 < decay < 1:
        raise ValueError(f"decay must be in (0,1), got {decay}")
    if direction not in ("descend", "ascend"):
        raise ValueError(f"direction must be 'descend' or 'ascend', got {direction!r}")
    sign = -1.0 if direction == "descend" else 1.0
    for name, t in store.items():
        g = grads[name] if grads is not None else t.grad
        if g is None:
            raise ValueError(f"missing gradient for parameter {name!r}")
        v = state.accum(name, t.data)
        v *= decay
        v += (1.0 - decay) * g * g
        t.data += sign * lr * g / (np.sqrt(v) + eps)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

class GradCheckReport:
    def __init__(self, per_param: dict[str, float], tol: float, failures: dict[str, str]):
        self.per_param = per_param
        self.tol = tol
        self.failures = failures

    @property
    def max_rel_err(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def passed(self) -> bool:
        return not self.failures and self.max_rel_err <= self.tol

    def __repr__(self):
        return f"GradCheckReport(max_rel_err={self.max_rel_err:.3e}, passed={self.passed})"


def grad_check(f, store: ParamStore, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of scalar f(store) to central differences.

    Relative error per entry is |a-n| / max(|a|, |n|, 1e-8); the report keeps
    the max per parameter name. Non-finite probe values are recorded as
    failures instead of raising.
    """
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")
    store.zero_grads()
    out = f(store)
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise ShapeError("grad_check target must return a scalar Tensor")
    backward(out)
    analytic = {n: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for n, t in store.items()}

    per_param: dict[str, float] = {}
    failures: dict[str, str] = {}
    for name, t in store.items():
        flat = t.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            try:
                flat[i] = orig + h
                with no_grad():
                    f_plus = f(store).item()
                flat[i] = orig - h
                with no_grad():
                    f_minus = f(store).item()
            finally:
                flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                failures[name] = f"non-finite value at entry {i}"
                continue
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = a_flat[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > worst:
                worst = rel
        per_param[name] = worst
    return GradCheckReport(per_param, tol, failures)


# ---------------------------------------------------------------------------
# checkpoint serialization
# ---------------------------------------------------------------------------

_DTYPE_TAGS = {"float64": "<f8", "float32": "<f4"}


def save_checkpoint(stores: dict[str, ParamStore], base_path: str):
    """Write `<base>.manifest` (text) and `<base>.params` (raw little-endian).

    Manifest: one entry per line, tab-separated: name, shape, dtype, byte
    offset into the flat buffer. Entries appear in manifest order in the
    buffer. Store names become leading path components.
    """
    lines = []
    chunks = []
    offset = 0
    for store_name in sorted(stores):
        for pname, t in stores[store_name].items():
            dt = str(t.data.dtype)
            if dt not in _DTYPE_TAGS:
                raise ValueError(f"unsupported checkpoint dtype {dt}")
            raw = t.data.astype(_DTYPE_TAGS[dt]).tobytes(order="C")
            shape_txt = ",".join(str(s) for s in t.data.shape)
            lines.append(f"{store_name}.{pname}\t{shape_txt}\t{dt}\t{offset}")
            chunks.append(raw)
            offset += len(raw)
    with open(base_path + ".manifest", "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(base_path + ".params", "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(base_path: str) -> dict[str, dict[str, np.ndarray]]:
    """Read a checkpoint back as {store_name: {param_name: array}}."""
    entries = []
    with open(base_path + ".manifest", "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            name, shape_txt, dt, off = line.split("\t")
            shape = tuple(int(s) for s in shape_txt.split(",")) if shape_txt else ()
            entries.append((name, shape, dt, int(off)))
    with open(base_path + ".params", "rb") as fh:
        buf = fh.read()
    out: dict[str, dict[str, np.ndarray]] = {}
    for name, shape, dt, off in entries:
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(buf, dtype=_DTYPE_TAGS[dt], count=n, offset=off)
        arr = arr.astype(dt).reshape(shape)
        store_name, pname = name.split(".", 1)
        out.setdefault(store_name, {})[pname] = arr
    return out
