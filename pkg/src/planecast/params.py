"""Trainable scene parameterizations decoded to RGB-sigma planes.

Two modes:

- direct: one unconstrained pre-activation value per plane sample, squashed
  elementwise (sigmoid for color, softplus for density).
- implicit: a small fully-connected coordinate network mapping normalized
  pixel position plus a sinusoidal depth embedding to the four channels;
  the scene lives in the network weights.

Both decode to planes that satisfy the stack invariants for any finite
parameter values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_FREQ_COUNT = 5
DEFAULT_HIDDEN = (64, 64, 64, 64)
_CHUNK = 1 << 16


def depth_embedding(d: float, freq_count: int) -> np.ndarray:
    """Sinusoidal embedding [sin(2^k pi d), cos(2^k pi d)] for k < freq_count.

    ``d`` is the plane ordinal already normalized to [0, 1].
    """
    if freq_count < 1:
        raise ValueError("freq_count must be >= 1")
    freqs = (2.0 ** np.arange(freq_count)) * np.pi * d
    out = np.empty(2 * freq_count)
    out[0::2] = np.sin(freqs)
    out[1::2] = np.cos(freqs)
    return out


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def squash(pre: np.ndarray) -> np.ndarray:
    """Map pre-activations (..., 4) to valid plane samples."""
    out = np.empty_like(pre)
    out[..., :3] = sigmoid(pre[..., :3])
    out[..., 3] = softplus(pre[..., 3])
    return out


def squash_backward(pre: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    grad = np.empty_like(grad_out)
    s = sigmoid(pre[..., :3])
    grad[..., :3] = grad_out[..., :3] * s * (1.0 - s)
    grad[..., 3] = grad_out[..., 3] * sigmoid(pre[..., 3])
    return grad


@dataclass
class DirectParameterization:
    """Raw per-sample pre-activations, shape (D, H, W, 4) float64.

    ``gain`` rescales the pre-activations before squashing (decode is
    ``squash(gain * values)``). It plays the role of a per-parameter step
    scale: raw sample values need to traverse several squashing units within
    a fixed optimizer step budget, unlike network weights.
    """

    values: np.ndarray = field(repr=False)
    gain: float = 4.0

    mode = "direct"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4 or v.shape[3] != 4:
            raise ValueError(f"values must be (D, H, W, 4), got {v.shape}")
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        self.values = v

    @property
    def plane_shape(self):
        return self.values.shape

    def parameters(self) -> list[np.ndarray]:
        return [self.values]

    def decode(self) -> np.ndarray:
        return squash(self.gain * self.values)

    def decode_backward(self, grad_planes: np.ndarray) -> list[np.ndarray]:
        return [self.gain * squash_backward(self.gain * self.values, grad_planes)]


@dataclass
class ImplicitParameterization:
    """Coordinate network (x/W, y/H, depth embedding) -> (r, g, b, sigma)."""

    weights: list = field(repr=False)
    depth_count: int
    height: int
    width: int
    freq_count: int = DEFAULT_FREQ_COUNT

    mode = "implicit"

    def __post_init__(self):
        self._features = self._build_features()

    @classmethod
    def create(cls, rng: np.random.Generator, depth_count: int, height: int,
               width: int, freq_count: int = DEFAULT_FREQ_COUNT,
               hidden: tuple = DEFAULT_HIDDEN,
               output_bias=(0.0, 0.0, 0.0, 0.0)) -> "ImplicitParameterization":
        """Xavier-initialized network; the output layer starts small so the
        decoded stack is near-constant, and ``output_bias`` shifts the
        initial pre-activations (index 3 controls the starting density)."""
        sizes = [2 + 2 * freq_count, *hidden, 4]
        weights = []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            scale = np.sqrt(6.0 / (n_in + n_out))
            if i == len(sizes) - 2:
                scale *= 0.1
            weights.append(rng.uniform(-scale, scale, size=(n_in, n_out)))
            weights.append(np.zeros(n_out))
        weights[-1] = np.asarray(output_bias, dtype=np.float64).copy()
        return cls(weights=weights, depth_count=depth_count, height=height,
                   width=width, freq_count=freq_count)

    @property
    def plane_shape(self):
        return (self.depth_count, self.height, self.width, 4)

    def parameters(self) -> list[np.ndarray]:
        return self.weights

    def _build_features(self) -> np.ndarray:
        d, h, w = self.depth_count, self.height, self.width
        xs = np.arange(w) / w
        ys = np.arange(h) / h
        grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
        pix = np.stack([grid_x.ravel(), grid_y.ravel()], axis=1)
        feats = np.empty((d, h * w, 2 + 2 * self.freq_count))
        for i in range(d):
            dn = i / (d - 1) if d > 1 else 0.0
            feats[i, :, :2] = pix
            feats[i, :, 2:] = depth_embedding(dn, self.freq_count)
        return feats.reshape(d * h * w, -1)

    def _layer_count(self) -> int:
        return len(self.weights) // 2

    def _forward(self, x: np.ndarray):
        acts = [x]
        n_layers = self._layer_count()
        for li in range(n_layers):
            w, b = self.weights[2 * li], self.weights[2 * li + 1]
            z = acts[-1] @ w + b
            acts.append(z if li == n_layers - 1 else np.tanh(z))
        return acts

    def decode(self) -> np.ndarray:
        pre = np.empty((self._features.shape[0], 4))
        for lo in range(0, self._features.shape[0], _CHUNK):
            pre[lo:lo + _CHUNK] = self._forward(self._features[lo:lo + _CHUNK])[-1]
        return squash(pre.reshape(self.plane_shape))

    def decode_backward(self, grad_planes: np.ndarray) -> list[np.ndarray]:
        """Accumulate d(loss)/d(weights) given d(loss)/d(decoded planes)."""
        grads = [np.zeros_like(w) for w in self.weights]
        n_layers = self._layer_count()
        flat_grad = grad_planes.reshape(-1, 4)
        for lo in range(0, self._features.shape[0], _CHUNK):
            x = self._features[lo:lo + _CHUNK]
            acts = self._forward(x)
            pre = acts[-1]
            delta = squash_backward(pre, flat_grad[lo:lo + _CHUNK])
            for li in range(n_layers - 1, -1, -1):
                w = self.weights[2 * li]
                grads[2 * li] += acts[li].T @ delta
                grads[2 * li + 1] += delta.sum(axis=0)
                if li > 0:
                    delta = (delta @ w.T) * (1.0 - acts[li] * acts[li])
        return grads
