"""Noise-conditioned regression network.

Layout, for feature vector ``x`` and base noise ``a`` in ``[0, 1]^d_a``::

    h_x = W_x x + b_x                               (no activation)
    h_a = tanh(W_a cos_embed(a) + b_a)
    h   = h_x * h_a                                 (Hadamard merge)
    h   = act(W_k h + b_k)   for each hidden layer
    y   = W_out h + b_out

The network itself is deterministic; every bit of randomness comes in
through ``a``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import ACTIVATIONS, GradientTape, ShapeError, activation_forward

PARAMS_FORMAT = "discouq-params"
PARAMS_VERSION = 1


@dataclass
class ModelConfig:
    feature_dim: int
    noise_dim: int = 1
    embedding_dim: int = 128
    hidden_width: int = 128
    hidden_layers: int = 2
    output_dim: int = 1
    mlp_activation: str = "tanh"
    init_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.mlp_activation = self.mlp_activation.lower()
        if self.mlp_activation not in ACTIVATIONS:
            raise ValueError(f"mlp_activation must be one of {ACTIVATIONS}, got {self.mlp_activation!r}")
        if self.noise_dim not in (1, 2):
            raise ValueError("noise_dim must be 1 or 2")
        if self.output_dim not in (1, 2):
            raise ValueError("output_dim must be 1 or 2")
        if self.output_dim > self.noise_dim:
            raise ValueError(
                f"output_dim ({self.output_dim}) may not exceed noise_dim ({self.noise_dim})"
            )
        if self.embedding_dim % self.noise_dim:
            raise ValueError("embedding_dim must be divisible by noise_dim")
        for name in ("feature_dim", "embedding_dim", "hidden_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.hidden_layers < 0:
            raise ValueError("hidden_layers must be non-negative")
        if self.init_std < 0:
            raise ValueError("init_std must be non-negative")

    def to_dict(self):
        return asdict(self)

    def layer_shapes(self):
        """Ordered ``name -> shape`` for every parameter array."""
        shapes = {
            "feature.weight": (self.embedding_dim, self.feature_dim),
            "feature.bias": (self.embedding_dim,),
            "noise.weight": (self.embedding_dim, self.embedding_dim),
            "noise.bias": (self.embedding_dim,),
        }
        width_in = self.embedding_dim
        for k in range(self.hidden_layers):
            shapes[f"hidden{k}.weight"] = (self.hidden_width, width_in)
            shapes[f"hidden{k}.bias"] = (self.hidden_width,)
            width_in = self.hidden_width
        shapes["out.weight"] = (self.output_dim, width_in)
        shapes["out.bias"] = (self.output_dim,)
        return shapes


@dataclass
class ModelParams:
    config: ModelConfig
    arrays: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, shape in self.config.layer_shapes().items():
            if name not in self.arrays:
                raise ShapeError(f"missing parameter {name}")
            if self.arrays[name].shape != shape:
                raise ShapeError(f"{name} has shape {self.arrays[name].shape}, expected {shape}")

    def __getitem__(self, name):
        return self.arrays[name]

    def copy(self):
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def n_parameters(self):
        return sum(v.size for v in self.arrays.values())

    def is_finite(self):
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())


def init_params(config):
    """i.i.d. Gaussian(0, init_std^2) weights and biases from ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    arrays = {}
    for name, shape in config.layer_shapes().items():
        arrays[name] = config.init_std * rng.standard_normal(shape)
    return ModelParams(config, arrays)


def activation_apply(kind, z):
    return activation_forward(kind.lower(), np.asarray(z, dtype=float))


def embed_noise(a, embedding_dim=128, dtype=np.float64):
    """Cosine features ``cos(k pi a_j)``, ``k = 0 .. n-1`` per noise component.

    ``a`` has shape ``(d_a,)`` or ``(n, d_a)``; each noise component fills a
    block of ``embedding_dim // d_a`` features.
    """
    a = np.asarray(a, dtype=dtype)
    single = a.ndim == 1
    a2 = np.atleast_2d(a)
    if np.any(a2 < 0) or np.any(a2 > 1) or not np.all(np.isfinite(a2)):
        raise ValueError("noise components must lie in [0, 1]")
    n, d_a = a2.shape
    if embedding_dim % d_a:
        raise ValueError("embedding_dim must be divisible by the noise dimension")
    block = embedding_dim // d_a
    feats = np.empty((embedding_dim, n), dtype=dtype)
    for j in range(d_a):
        base = j * block
        c = np.cos(np.pi * a2[:, j])
        feats[base] = 1.0
        if block > 1:
            feats[base + 1] = c
        # Chebyshev recurrence: cos(k t) = 2 cos(t) cos((k-1) t) - cos((k-2) t)
        two_c = 2.0 * c
        for k in range(2, block):
            np.multiply(two_c, feats[base + k - 1], out=feats[base + k])
            feats[base + k] -= feats[base + k - 2]
    out = np.ascontiguousarray(feats.T)
    return out[0] if single else out


def _check_inputs(config, x, a):
    if x.shape[-1] != config.feature_dim:
        raise ShapeError(f"expected {config.feature_dim} features, got shape {x.shape}")
    if a.shape[-1] != config.noise_dim:
        raise ShapeError(f"expected noise of dimension {config.noise_dim}, got shape {a.shape}")
    if x.ndim != a.ndim or (x.ndim == 2 and x.shape[0] != a.shape[0]):
        raise ShapeError(f"inputs {x.shape} and noise {a.shape} do not pair up")


def forward(params, x, a):
    """Network output for inputs ``x`` paired with noise ``a`` (batched or single)."""
    cfg = params.config
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    _check_inputs(cfg, x, a)
    p = params.arrays
    hx = x @ p["feature.weight"].T + p["feature.bias"]
    ha = np.tanh(embed_noise(a, cfg.embedding_dim) @ p["noise.weight"].T + p["noise.bias"])
    h = hx * ha
    for k in range(cfg.hidden_layers):
        h = activation_forward(cfg.mlp_activation, h @ p[f"hidden{k}.weight"].T + p[f"hidden{k}.bias"])
    return h @ p["out.weight"].T + p["out.bias"]


def forward_traced(params, x, a, tape=None, dtype=np.float64):
    """Same computation as :func:`forward`, recorded on ``tape`` in ``dtype``.

    Returns ``(tape, output_var)``; parameters are watched under their names.
    """
    cfg = params.config
    x = np.asarray(x, dtype=dtype)
    a = np.asarray(a, dtype=dtype)
    _check_inputs(cfg, x, a)
    tape = GradientTape() if tape is None else tape
    w = {name: tape.watch(name, value.astype(dtype, copy=False)) for name, value in params.arrays.items()}
    hx = tape.linear(w["feature.weight"], w["feature.bias"], x)
    za = tape.linear(w["noise.weight"], w["noise.bias"], embed_noise(a, cfg.embedding_dim, dtype))
    h = tape.multiply(hx, tape.activation("tanh", za))
    for k in range(cfg.hidden_layers):
        h = tape.activation(cfg.mlp_activation, tape.linear(w[f"hidden{k}.weight"], w[f"hidden{k}.bias"], h))
    out = tape.linear(w["out.weight"], w["out.bias"], h)
    return tape, out


# --------------------------------------------------------------------------
# serialisation
# --------------------------------------------------------------------------


def params_to_dict(params, extra=None):
    doc = {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "config": params.config.to_dict(),
        "arrays": {
            name: {"shape": list(v.shape), "data": v.reshape(-1).tolist()}
            for name, v in params.arrays.items()
        },
    }
    if extra:
        doc.update(extra)
    return doc


def params_from_dict(doc):
    if doc.get("format") != PARAMS_FORMAT:
        raise ValueError("not a discouq parameter file")
    if doc.get("version") != PARAMS_VERSION:
        raise ValueError(f"unsupported parameter file version {doc.get('version')}")
    config = ModelConfig(**doc["config"])
    arrays = {
        name: np.asarray(entry["data"], dtype=float).reshape(entry["shape"])
        for name, entry in doc["arrays"].items()
    }
    return ModelParams(config, arrays)


def save_params(path, params, extra=None):
    """Write parameters as JSON. Python's float repr round-trips binary64 exactly."""
    doc = params_to_dict(params, extra)
    Path(path).write_text(json.dumps(doc, separators=(",", ":")))


def load_params(path):
    """Return ``(params, document)``; the document carries any extra sections."""
    doc = json.loads(Path(path).read_text())
    return params_from_dict(doc), doc
