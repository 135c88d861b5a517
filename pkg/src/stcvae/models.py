"""Encoder/decoder architectures and their forward passes.

Two families are supported, capacity-scaled by ``neuron_num`` and
``layers``:

* MLP -- ReLU encoder trunk, Tanh decoder trunk, for flat image vectors.
  The encoder stacks one fixed hidden layer plus ``layers`` repeated ones
  before the linear 2*latent_dim head (mean and log-variance); the
  decoder mirrors this and ends in a linear pixel layer.
* Conv -- for 64 x 64 inputs: three 4x4 stride-2 LeakyReLU convolutions
  (16/32/64 filters), an FC trunk of ``layers`` repetitions, and the
  linear head; the decoder runs the FC trunk, expands to 8 x 8 x 64 and
  mirrors the convolutions with stride-2 transposed convolutions.

Decoders emit pre-sigmoid logits; reconstruction likelihood is Bernoulli
per pixel (``bernoulli_log_likelihood``).  The final transposed
convolution therefore has no activation, so its output is unbounded as
logits require.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .params import ParamStore

LEAKY_SLOPE = 0.2


class ModelError(ValueError):
    """Raised for architecture/shape mismatches."""


@dataclass(frozen=True)
class MlpSpec:
    """Fully-connected encoder/decoder for ``input_shape`` = (H, W, C)."""

    input_shape: tuple[int, int, int]
    latent_dim: int
    neuron_num: int
    layers: int = 1

    def __post_init__(self):
        if self.latent_dim < 1 or self.neuron_num < 1 or self.layers < 0:
            raise ModelError(
                f"bad MLP spec: latent_dim={self.latent_dim}, "
                f"neuron_num={self.neuron_num}, layers={self.layers}"
            )

    @property
    def pixels(self) -> int:
        h, w, c = self.input_shape
        return h * w * c


@dataclass(frozen=True)
class ConvSpec:
    """Convolutional encoder/decoder; requires 64 x 64 inputs."""

    input_shape: tuple[int, int, int]
    latent_dim: int
    neuron_num: int
    layers: int = 2

    def __post_init__(self):
        h, w, c = self.input_shape
        if (h, w) != (64, 64):
            raise ModelError(f"conv architecture requires 64x64 inputs, got {h}x{w}")
        if self.latent_dim < 1 or self.neuron_num < 1 or self.layers < 0:
            raise ModelError(
                f"bad conv spec: latent_dim={self.latent_dim}, "
                f"neuron_num={self.neuron_num}, layers={self.layers}"
            )

    @property
    def pixels(self) -> int:
        h, w, c = self.input_shape
        return h * w * c


ENC_CHANNELS = (16, 32, 64)
CONV_FLAT = 8 * 8 * 64  # spatial size after three stride-2 stages


def param_shapes(spec) -> dict[str, tuple[int, ...]]:
    """Name -> shape manifest for every trainable array of ``spec``."""
    n, nn = spec.latent_dim, spec.neuron_num
    shapes: dict[str, tuple[int, ...]] = {}
    if isinstance(spec, MlpSpec):
        widths = [spec.pixels] + [nn] * (1 + spec.layers)
        for i in range(len(widths) - 1):
            shapes[f"enc.fc{i}.w"] = (widths[i], widths[i + 1])
            shapes[f"enc.fc{i}.b"] = (widths[i + 1],)
        shapes["enc.head.w"] = (nn, 2 * n)
        shapes["enc.head.b"] = (2 * n,)
        widths = [n] + [nn] * (1 + spec.layers)
        for i in range(len(widths) - 1):
            shapes[f"dec.fc{i}.w"] = (widths[i], widths[i + 1])
            shapes[f"dec.fc{i}.b"] = (widths[i + 1],)
        shapes["dec.out.w"] = (nn, spec.pixels)
        shapes["dec.out.b"] = (spec.pixels,)
    elif isinstance(spec, ConvSpec):
        cin = spec.input_shape[2]
        chans = (cin,) + ENC_CHANNELS
        for i in range(3):
            shapes[f"enc.conv{i}.w"] = (4, 4, chans[i], chans[i + 1])
            shapes[f"enc.conv{i}.b"] = (chans[i + 1],)
        widths = [CONV_FLAT] + [nn] * spec.layers
        for i in range(len(widths) - 1):
            shapes[f"enc.fc{i}.w"] = (widths[i], widths[i + 1])
            shapes[f"enc.fc{i}.b"] = (widths[i + 1],)
        shapes["enc.head.w"] = (widths[-1], 2 * n)
        shapes["enc.head.b"] = (2 * n,)
        widths = [n] + [nn] * spec.layers
        for i in range(len(widths) - 1):
            shapes[f"dec.fc{i}.w"] = (widths[i], widths[i + 1])
            shapes[f"dec.fc{i}.b"] = (widths[i + 1],)
        shapes["dec.expand.w"] = (widths[-1], CONV_FLAT)
        shapes["dec.expand.b"] = (CONV_FLAT,)
        dchans = (64, 32, 16, cin)
        for i in range(3):
            shapes[f"dec.upconv{i}.w"] = (4, 4, dchans[i + 1], dchans[i])
            shapes[f"dec.upconv{i}.b"] = (dchans[i + 1],)
    else:
        raise ModelError(f"unknown spec type {type(spec).__name__}")
    return shapes


def param_count(spec) -> int:
    """Total trainable parameter count, exact by construction."""
    return sum(int(np.prod(s)) for s in param_shapes(spec).values())


def init_params(spec, seed: int, dtype=np.float32) -> ParamStore:
    """Fan-in-scaled uniform weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(spec).items():
        if name.endswith(".b"):
            arrays[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[:-1]))
            bound = 1.0 / np.sqrt(fan_in)
            arrays[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return ParamStore(arrays)


def _as_tensor_map(params) -> dict[str, Tensor]:
    if isinstance(params, ParamStore):
        return params.tensors()
    return {k: ad.as_tensor(v) for k, v in params.items()}


def _fc(p: dict[str, Tensor], name: str, x: Tensor) -> Tensor:
    return x @ p[f"{name}.w"] + p[f"{name}.b"]


def encode(spec, params, x_batch) -> tuple[Tensor, Tensor]:
    """Forward pass to posterior parameters (mu, log_var), each M x n.

    ``x_batch`` may be flat (M x pixels) or shaped (M x H x W x C);
    values are expected in [0, 1].
    """
    p = _as_tensor_map(params)
    x = ad.as_tensor(x_batch)
    if isinstance(spec, MlpSpec):
        if x.data.ndim > 2:
            x = x.reshape(x.shape[0], spec.pixels)
        if x.shape[1] != spec.pixels:
            raise ModelError(
                f"input has {x.shape[1]} pixels but spec expects {spec.pixels}"
            )
        h = x
        for i in range(1 + spec.layers):
            h = ad.relu(_fc(p, f"enc.fc{i}", h))
    else:
        if x.data.ndim == 2:
            x = x.reshape((x.shape[0],) + spec.input_shape)
        if x.shape[1:] != spec.input_shape:
            raise ModelError(
                f"input shape {x.shape[1:]} does not match {spec.input_shape}"
            )
        h = x
        for i in range(3):
            h = ad.leaky_relu(
                ad.conv2d(h, p[f"enc.conv{i}.w"], p[f"enc.conv{i}.b"]),
                LEAKY_SLOPE,
            )
        h = h.reshape(h.shape[0], CONV_FLAT)
        for i in range(spec.layers):
            h = ad.relu(_fc(p, f"enc.fc{i}", h))
    head = _fc(p, "enc.head", h)
    n = spec.latent_dim
    return head[:, :n], head[:, n:]


def reparameterize(mu, log_var, noise) -> Tensor:
    """Sample z = mu + exp(log_var / 2) * noise."""
    mu, log_var = ad.as_tensor(mu), ad.as_tensor(log_var)
    return mu + ad.exp(0.5 * log_var) * ad.as_tensor(noise)


def decode(spec, params, z) -> Tensor:
    """Forward pass from latents to pixel logits (M x pixels)."""
    p = _as_tensor_map(params)
    z = ad.as_tensor(z)
    if z.data.ndim != 2 or z.shape[1] != spec.latent_dim:
        raise ModelError(
            f"latents must be M x {spec.latent_dim}, got {z.shape}"
        )
    if isinstance(spec, MlpSpec):
        h = z
        for i in range(1 + spec.layers):
            h = ad.tanh(_fc(p, f"dec.fc{i}", h))
        return _fc(p, "dec.out", h)
    h = z
    for i in range(spec.layers):
        h = ad.tanh(_fc(p, f"dec.fc{i}", h))
    h = ad.tanh(_fc(p, "dec.expand", h))
    h = h.reshape(h.shape[0], 8, 8, 64)
    for i in range(3):
        h = ad.conv2d_transpose(h, p[f"dec.upconv{i}.w"], p[f"dec.upconv{i}.b"])
        if i < 2:
            h = ad.leaky_relu(h, LEAKY_SLOPE)
    return h.reshape(h.shape[0], spec.pixels)


def reconstruction_log_likelihood(logits, x_batch) -> Tensor:
    """Bernoulli log p(x | sigmoid(logits)), summed over pixels, batch mean."""
    x = ad.as_tensor(x_batch)
    if x.data.ndim > 2:
        x = x.reshape(x.shape[0], -1)
    return ad.bernoulli_log_likelihood(logits, x)


def make_spec(arch: str, input_shape, latent_dim, neuron_num, layers):
    """Build an MlpSpec/ConvSpec from the config-level arch name."""
    if arch == "mlp":
        return MlpSpec(tuple(input_shape), latent_dim, neuron_num, layers)
    if arch == "conv":
        return ConvSpec(tuple(input_shape), latent_dim, neuron_num, layers)
    raise ModelError(f"unknown arch {arch!r}; expected 'mlp' or 'conv'")
