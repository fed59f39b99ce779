"""Dense ReLU networks with hand-written backprop and an Adam optimizer.

Checkpoint layout (all little-endian)::

    uint32  L                 number of layer sizes
    uint32  sizes[L]          input size, hidden sizes..., output size
    float64 params[...]       for each layer: W (row-major, fan_in x fan_out), then b

"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MlpNet:
    """ReLU hidden layers; output is identity or ``output_scale * tanh``."""

    def __init__(self, sizes, rng: np.random.Generator | None = None, output_scale: float | None = None):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid layer sizes {sizes}")
        self.sizes = sizes
        self.output_scale = output_scale
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            if rng is None:
                w, b = np.zeros((fan_in, fan_out)), np.zeros(fan_out)
            else:
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
                b = rng.uniform(-bound, bound, size=fan_out)
            self.params += [w, b]

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def layer(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.params[2 * i], self.params[2 * i + 1]

    def copy(self) -> "MlpNet":
        other = MlpNet.__new__(MlpNet)
        other.sizes = list(self.sizes)
        other.output_scale = self.output_scale
        other.params = [p.copy() for p in self.params]
        return other

    def forward(self, x) -> np.ndarray:
        return self.forward_cached(x)[0]

    def forward_cached(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[-1]} != {self.sizes[0]}")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite network input")
        activations = [x]
        pre = []
        h = x
        for i in range(self.n_layers):
            w, b = self.layer(i)
            z = h @ w + b
            pre.append(z)
            if i < self.n_layers - 1:
                h = np.maximum(z, 0.0)
                activations.append(h)
            else:
                h = z if self.output_scale is None else self.output_scale * np.tanh(z)
        out = h[0] if single else h
        return out, (activations, pre, single, h)

    def backward(self, cache, output_grad):
        """Gradients of ``sum(output * output_grad)``.

        Returns ``(param_grads, input_grad)`` with ``param_grads`` aligned to
        ``self.params``.
        """
        activations, pre, single, out = cache
        g = np.asarray(output_grad, dtype=np.float64)
        if single:
            g = g[None, :]
        if g.shape != out.shape:
            raise ValueError(f"output_grad shape {g.shape} != output shape {out.shape}")
        if self.output_scale is not None:
            t = out / self.output_scale
            g = g * self.output_scale * (1.0 - t * t)
        grads: list[np.ndarray] = [None] * len(self.params)
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                # Subgradient 0 at exactly z == 0.
                g = g * (pre[i] > 0.0)
            w, _ = self.layer(i)
            grads[2 * i] = activations[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ w.T
        return grads, (g[0] if single else g)

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params)


def soft_update(target: MlpNet, source: MlpNet, tau: float) -> None:
    for t, s in zip(target.params, source.params):
        t *= 1.0 - tau
        t += tau * s


@dataclass
class AdamState:
    shapes: list[tuple[int, ...]]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros(s) for s in self.shapes]
            self.v = [np.zeros(s) for s in self.shapes]

    @classmethod
    def for_net(cls, net: MlpNet, lr: float = 1e-3, **kwargs) -> "AdamState":
        return cls([p.shape for p in net.params], lr=lr, **kwargs)


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
    """Bias-corrected Adam update applied in place; returns ``params``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state disagree in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def save_params(net: MlpNet, path) -> None:
    header = struct.pack(f"<I{len(net.sizes)}I", len(net.sizes), *net.sizes)
    body = net.flat().astype("<f8").tobytes()
    Path(path).write_bytes(header + body)


def load_params(path, output_scale: float | None = None) -> MlpNet:
    data = Path(path).read_bytes()
    (n,) = struct.unpack_from("<I", data, 0)
    sizes = list(struct.unpack_from(f"<{n}I", data, 4))
    offset = 4 + 4 * n
    flat = np.frombuffer(data, dtype="<f8", offset=offset).astype(np.float64)
    net = MlpNet(sizes, rng=None, output_scale=output_scale)
    expected = sum(p.size for p in net.params)
    if flat.size != expected:
        raise ValueError(f"checkpoint holds {flat.size} parameters, layer sizes imply {expected}")
    pos = 0
    for p in net.params:
        p[...] = flat[pos:pos + p.size].reshape(p.shape)
        pos += p.size
    return net
