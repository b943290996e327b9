"""Dense numerical kernel: traced linear algebra, reverse-mode gradients, Adam.

The tape only knows the handful of primitives the network needs (affine
map, elementwise activation, elementwise product, row-wise Euclidean norm).
Values are numpy arrays; a ``Var`` is a handle to a value recorded on a tape.
Batched inputs have shape ``(n, features)``; weights are ``(out, in)``.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805

ACTIVATIONS = ("relu", "selu", "tanh", "gcu")


class ShapeError(ValueError):
    pass


class TapeError(RuntimeError):
    pass


class DivergenceError(FloatingPointError):
    """Raised when a non-finite value shows up during optimisation."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


# --------------------------------------------------------------------------
# activations
# --------------------------------------------------------------------------


def activation_forward(kind, z):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "gcu":
        return z * np.cos(z)
    if kind == "selu":
        # expm1(min(z, 0)) vanishes for z > 0, so the two branches simply add
        out = np.expm1(np.minimum(z, 0.0))
        out *= SELU_ALPHA
        out += np.maximum(z, 0.0)
        out *= SELU_SCALE
        return out
    raise ValueError(f"unknown activation {kind!r}")


def activation_derivative(kind, z, out=None):
    """Derivative of the activation at ``z``; ``out`` is the cached forward value."""
    if kind == "relu":
        # derivative at exactly 0 is taken as 0
        return (z > 0).astype(z.dtype)
    if kind == "tanh":
        t = np.tanh(z) if out is None else out
        return 1.0 - t * t
    if kind == "gcu":
        return np.cos(z) - z * np.sin(z)
    if kind == "selu":
        pos = (z > 0).astype(z.dtype)
        if out is None:
            out = activation_forward("selu", z)
        # for z <= 0: d/dz [s a (e^z - 1)] = out + s a
        neg = out + SELU_SCALE * SELU_ALPHA
        neg *= 1.0 - pos
        pos *= SELU_SCALE
        return pos + neg
    raise ValueError(f"unknown activation {kind!r}")


# --------------------------------------------------------------------------
# tape
# --------------------------------------------------------------------------


class Var:
    """Handle to a value recorded on a :class:`GradientTape`."""

    __slots__ = ("_tape", "index", "value", "requires_grad")

    def __init__(self, tape, index, value, requires_grad):
        # weak, so a finished tape and its cached activations are freed at once
        self._tape = weakref.ref(tape)
        self.index = index
        self.value = value
        self.requires_grad = requires_grad

    @property
    def tape(self):
        return self._tape()

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(index={self.index}, shape={self.value.shape})"


@dataclass
class _Op:
    kind: str
    inputs: tuple
    output: int
    cache: dict = field(default_factory=dict)


class GradientTape:
    """Ordered record of primitive operations with cached forward values.

    A tape is meant for a single forward/backward pass; it is not thread safe.
    """

    def __init__(self):
        self._ops = []
        self._vars = []
        self._params = {}

    def __len__(self):
        return len(self._ops)

    def _new(self, value, requires_grad):
        var = Var(self, len(self._vars), value, requires_grad)
        self._vars.append(var)
        return var

    def watch(self, name, value):
        """Register a parameter; its gradient is reported under ``name``."""
        var = self._new(_floating(value), True)
        self._params[name] = var.index
        return var

    def constant(self, value):
        return self._new(_floating(value), False)

    def _record(self, op_kind, inputs, value, **cache):
        requires_grad = any(v.requires_grad for v in inputs)
        out = self._new(value, requires_grad)
        if requires_grad:
            self._ops.append(_Op(op_kind, tuple(v.index for v in inputs), out.index, cache))
        return out

    def _lift(self, x):
        if isinstance(x, Var):
            if x.tape is not self:
                raise TapeError("variable belongs to a different tape")
            return x
        return self.constant(x)

    # primitives -----------------------------------------------------------

    def linear(self, W, b, x):
        W, b, x = self._lift(W), self._lift(b), self._lift(x)
        return self._record("linear", (W, b, x), _affine(W.value, b.value, x.value))

    def activation(self, kind, z):
        z = self._lift(z)
        out = activation_forward(kind, z.value)
        return self._record("activation", (z,), out, kind=kind)

    def multiply(self, u, v):
        u, v = self._lift(u), self._lift(v)
        if u.shape != v.shape:
            raise ShapeError(f"elementwise product of {u.shape} and {v.shape}")
        return self._record("multiply", (u, v), u.value * v.value)

    def norm(self, v):
        """Euclidean norm over the last axis."""
        v = self._lift(v)
        return self._record("norm", (v,), np.linalg.norm(v.value, axis=-1))

    # reverse pass ---------------------------------------------------------

    def gradients(self, output, seed):
        if not self._ops:
            raise TapeError("tape is empty; nothing to differentiate")
        seed = np.asarray(seed, dtype=output.value.dtype)
        if seed.shape != output.value.shape:
            raise ShapeError(f"seed shape {seed.shape} != output shape {output.value.shape}")
        grads = {output.index: seed}
        for op in reversed(self._ops):
            g = grads.pop(op.output, None)
            if g is None:
                continue
            for index, gin in _op_backward(op, self._vars, g):
                if not self._vars[index].requires_grad:
                    continue
                if index in grads:
                    grads[index] = grads[index] + gin
                else:
                    grads[index] = gin
        return {
            name: grads.get(index, np.zeros_like(self._vars[index].value))
            for name, index in self._params.items()
        }


def _floating(value):
    value = np.asarray(value)
    return value if np.issubdtype(value.dtype, np.floating) else value.astype(float)


def _affine(W, b, x):
    if W.ndim != 2:
        raise ShapeError(f"weight must be 2-D, got shape {W.shape}")
    if x.shape[-1] != W.shape[1]:
        raise ShapeError(f"cannot apply {W.shape} weight to input of shape {x.shape}")
    if b.shape != (W.shape[0],):
        raise ShapeError(f"bias shape {b.shape} does not match {W.shape[0]} outputs")
    out = x @ W.T
    out += b
    return out


def _op_backward(op, values, g):
    if op.kind == "linear":
        iW, ib, ix = op.inputs
        W, x = values[iW].value, values[ix].value
        out = []
        if values[iW].requires_grad:
            out.append((iW, np.outer(g, x) if x.ndim == 1 else g.T @ x))
        if values[ib].requires_grad:
            out.append((ib, g if g.ndim == 1 else g.sum(axis=0)))
        if values[ix].requires_grad:
            out.append((ix, g @ W))
        return out
    if op.kind == "activation":
        (iz,) = op.inputs
        z = values[iz].value
        return [(iz, g * activation_derivative(op.cache["kind"], z, values[op.output].value))]
    if op.kind == "multiply":
        iu, iv = op.inputs
        return [(iu, g * values[iv].value), (iv, g * values[iu].value)]
    if op.kind == "norm":
        (iv,) = op.inputs
        v = values[iv].value
        n = values[op.output].value
        # zero subgradient where the norm vanishes
        safe = np.where(n > 0, n, 1.0)
        unit = np.where(np.expand_dims(n > 0, -1), v / np.expand_dims(safe, -1), 0.0)
        return [(iv, np.expand_dims(g, -1) * unit)]
    raise TapeError(f"unknown op {op.kind!r}")


def linear_forward(W, b, x):
    """``W @ x + b``; recorded on the tape when any argument is a ``Var``."""
    for arg in (W, b, x):
        if isinstance(arg, Var):
            return arg.tape.linear(W, b, x)
    return _affine(_floating(W), _floating(b), _floating(x))


def backward(tape, output, seed_gradient):
    """Reverse-mode gradients of ``output`` (seeded) w.r.t. every watched parameter."""
    return tape.gradients(output, seed_gradient)


def finite_difference_grad(f, params, step=1e-5):
    """Central differences of scalar ``f(params)`` for every entry of every array."""
    grads = {}
    for name, value in params.items():
        g = np.zeros_like(value)
        flat = value.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = f(params)
            flat[i] = orig - step
            fm = f(params)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * step)
        grads[name] = g
    return grads


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. Returns ``(new_params, state)``.

    ``state`` is updated in place and also returned.
    """
    if lr <= 0:
        raise ValueError("lr must be positive")
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ValueError("beta1 and beta2 must lie in [0, 1)")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {name}")
    state.t += 1
    t = state.t
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    new = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            new[name] = p
            continue
        g = np.asarray(g, dtype=p.dtype)
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        new[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return new, state
