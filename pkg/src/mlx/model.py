"""Feedforward relu classifiers: spec, init, forward pass, task loss.

Default architectures:
* image task: 2352-512-512-10 (3x28x28 flattened input, two hidden
  layers of width 512),
* 2-D toy task: 2-32-32-2.

Checkpoint file layout (all little-endian):
    magic    4 bytes  b'MLXW'
    version  u32      1
    seed     u64
    hash_len u32, then hash_len bytes of utf-8 config hash (may be empty)
    n_sizes  u32, then n_sizes u32 layer sizes (input, hidden..., classes)
    per layer: weight matrix (fan_in*fan_out f64, row-major), bias (fan_out f64)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

MAGIC = b"MLXW"
VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths of a relu MLP: input dim, hidden widths, class count."""

    input_dim: int
    hidden: tuple[int, ...]
    classes: int

    def __post_init__(self):
        if len(self.hidden) < 1:
            raise ValueError("need at least one hidden layer")
        for w in self.sizes():
            if w <= 0:
                raise ValueError(f"zero-width layer in {self.sizes()}")

    def sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.classes)


def image_spec() -> MlpSpec:
    return MlpSpec(3 * 28 * 28, (512, 512), 10)


def toy2d_spec() -> MlpSpec:
    return MlpSpec(2, (32, 32), 2)


@dataclass
class ModelParams:
    """Weight matrices (fan_in, fan_out) and bias vectors per layer.

    A single-layer instance is a plain affine (linear) model; relu sits
    between layers only.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    spec: MlpSpec = field(repr=False, default=None)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def classes(self) -> int:
        return self.weights[-1].shape[1]

    def sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *(w.shape[1] for w in self.weights))

    def flat(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.spec)

    def sq_norm(self) -> float:
        return float(sum(np.sum(a * a) for a in self.flat()))


def linear_model(w: np.ndarray, b: np.ndarray | None = None) -> ModelParams:
    """Single affine layer f(x) = x @ w + b; handy for oracles and tests."""
    w = np.asarray(w, dtype=np.float64)
    if b is None:
        b = np.zeros(w.shape[1])
    return ModelParams([w], [np.asarray(b, dtype=np.float64)])


def init_params(spec: MlpSpec, seed) -> ModelParams:
    """He-scaled Gaussian weights, zero biases, deterministic in seed.

    ``seed`` may be an int or a numpy Generator.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    sizes = spec.sizes()
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases, spec)


def param_tensors(params: ModelParams) -> list[ad.Tensor]:
    """Wrap current parameter arrays as graph leaves (one list, W/b interleaved)."""
    return [ad.tensor(a) for a in params.flat()]


def logits_graph(ptensors: list[ad.Tensor], x: ad.Tensor) -> ad.Tensor:
    """Forward pass through the relu MLP; x is a (n, input_dim) tensor node."""
    h = x
    n_layers = len(ptensors) // 2
    for i in range(n_layers):
        h = ad.affine(h, ptensors[2 * i], ptensors[2 * i + 1])
        if i < n_layers - 1:
            h = ad.relu(h)
    return h


def logits(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Class logits for a (n, input_dim) batch; plain numpy inference."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != params.input_dim:
        raise ad.ShapeError(f"input dim {x.shape[1]} != model {params.input_dim}")
    h = x
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < len(params.weights) - 1:
            h = np.maximum(h, 0.0)
    return h


def predict(params: ModelParams, x: np.ndarray) -> np.ndarray:
    return np.argmax(logits(params, x), axis=1)


def task_loss(z, y, reduction: str = "mean") -> ad.Tensor:
    """Softmax cross-entropy -log softmax_y(z); z may be a Tensor or array."""
    z = z if isinstance(z, ad.Tensor) else ad.tensor(np.atleast_2d(z))
    return ad.cross_entropy(z, y, reduction=reduction)


def save_checkpoint(path, params: ModelParams, seed: int = 0, config_hash: str = "") -> None:
    sizes = params.sizes()
    h = config_hash.encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, seed))
        f.write(struct.pack("<I", len(h)))
        f.write(h)
        f.write(struct.pack("<I", len(sizes)))
        f.write(struct.pack(f"<{len(sizes)}I", *sizes))
        for w, b in zip(params.weights, params.biases):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        version, seed = struct.unpack("<IQ", f.read(12))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (hash_len,) = struct.unpack("<I", f.read(4))
        config_hash = f.read(hash_len).decode("utf-8")
        (n_sizes,) = struct.unpack("<I", f.read(4))
        sizes = struct.unpack(f"<{n_sizes}I", f.read(4 * n_sizes))
        spec = MlpSpec(sizes[0], tuple(sizes[1:-1]), sizes[-1]) if n_sizes >= 3 else None
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = np.frombuffer(f.read(8 * fan_in * fan_out), dtype="<f8").reshape(fan_in, fan_out)
            b = np.frombuffer(f.read(8 * fan_out), dtype="<f8")
            weights.append(w.astype(np.float64))
            biases.append(b.astype(np.float64))
        trailing = f.read(1)
        if trailing:
            raise ValueError(f"{path}: trailing bytes after parameters")
    return ModelParams(weights, biases, spec), {"seed": seed, "config_hash": config_hash}
