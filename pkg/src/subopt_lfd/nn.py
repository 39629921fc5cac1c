"""Small numpy multilayer perceptron with hand-written backprop and Adam.

Every learned function in the package (policies, the AIRL discriminator,
SSRR and D-REX rewards) is an :class:`Mlp`.  Parameters live in a single
flat float64 vector so optimizers and checkpoints never need to know the
layer structure.
"""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from .exceptions import DimensionError, NonFiniteError

ACTIVATIONS = ("tanh", "relu")


class Mlp:
    """Fully connected network with a linear output layer.

    Args:
        widths: Layer widths, input first and output last.
        activation: Hidden-layer nonlinearity, ``"tanh"`` or ``"relu"``.
        params: Flat parameter vector. Zeros when omitted.

    Parameter layout is, per layer, the ``(w_in, w_out)`` weight matrix in
    row-major order followed by the ``w_out`` bias.
    """

    def __init__(self, widths: Sequence[int], activation: str = "tanh", params=None):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError(f"need at least two positive widths, got {widths}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.widths = widths
        self.activation = activation
        n = self.param_count(widths)
        if params is None:
            params = np.zeros(n)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (n,):
            raise DimensionError(f"expected {n} parameters, got shape {params.shape}")
        self.params = params.copy()

    @staticmethod
    def param_count(widths: Sequence[int]) -> int:
        return sum((a + 1) * b for a, b in zip(widths[:-1], widths[1:]))

    @classmethod
    def initialize(cls, widths, rng: np.random.Generator, activation="tanh"):
        """Uniform init in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` for weights and biases."""
        chunks = []
        for a, b in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(a)
            chunks.append(rng.uniform(-bound, bound, size=a * b))
            chunks.append(rng.uniform(-bound, bound, size=b))
        return cls(widths, activation, np.concatenate(chunks))

    @property
    def n_params(self) -> int:
        return self.params.size

    @property
    def n_inputs(self) -> int:
        return self.widths[0]

    @property
    def n_outputs(self) -> int:
        return self.widths[-1]

    def layers(self, params=None):
        """Return ``[(W, b), ...]`` as views into ``params``."""
        params = self.params if params is None else params
        out, i = [], 0
        for a, b in zip(self.widths[:-1], self.widths[1:]):
            W = params[i : i + a * b].reshape(a, b)
            i += a * b
            out.append((W, params[i : i + b]))
            i += b
        return out

    def _act(self, z):
        return np.tanh(z) if self.activation == "tanh" else np.maximum(z, 0.0)

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        x2 = x[None, :] if squeeze else x
        if x2.ndim != 2 or x2.shape[1] != self.n_inputs:
            raise DimensionError(
                f"input has shape {x.shape}, network expects width {self.n_inputs}"
            )
        return x2, squeeze

    def forward(self, x):
        """Evaluate the network on one input vector or a batch of rows."""
        out, _ = self.forward_cache(x)
        return out

    def forward_cache(self, x):
        x2, squeeze = self._check_input(x)
        layers = self.layers()
        acts = [x2]
        h = x2
        for li, (W, b) in enumerate(layers):
            z = h @ W + b
            h = z if li == len(layers) - 1 else self._act(z)
            acts.append(h)
        out = h[0] if squeeze else h
        return out, (acts, squeeze)

    def backward(self, cache, grad_out, return_input_grad=False):
        """Backpropagate ``dL/d(output)`` into ``dL/d(params)``.

        ``grad_out`` must have the shape that ``forward`` returned.
        """
        acts, squeeze = cache
        g = np.asarray(grad_out, dtype=np.float64)
        if squeeze:
            g = g[None, :]
        if g.shape != acts[-1].shape:
            raise DimensionError(f"grad_out shape {g.shape} != output {acts[-1].shape}")
        layers = self.layers()
        grads = []
        for li in range(len(layers) - 1, -1, -1):
            W, _ = layers[li]
            h_in = acts[li]
            grads.append((h_in.T @ g, g.sum(axis=0)))
            if li == 0 and not return_input_grad:
                break
            g = g @ W.T
            if li > 0:
                if self.activation == "tanh":
                    g = g * (1.0 - h_in**2)
                else:
                    g = g * (h_in > 0)
        flat = np.concatenate([part.ravel() for gw, gb in reversed(grads) for part in (gw, gb)])
        if return_input_grad:
            return flat, (g[0] if squeeze else g)
        return flat

    def copy(self) -> "Mlp":
        return Mlp(self.widths, self.activation, self.params)

    def to_dict(self) -> dict:
        return {
            "widths": list(self.widths),
            "activation": self.activation,
            "params": [float(v) for v in self.params],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        return cls(d["widths"], d["activation"], np.asarray(d["params"], dtype=np.float64))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def check_finite(value, what="loss"):
    """Raise :class:`NonFiniteError` if ``value`` contains NaN or inf."""
    arr = np.asarray(value)
    if not np.all(np.isfinite(arr)):
        bad = arr if arr.ndim == 0 else arr[~np.isfinite(arr)].ravel()[0]
        raise NonFiniteError(f"non-finite {what}", float(bad))
    return value


class Adam:
    """Adam optimizer over a flat parameter vector.

    Attributes ``m``, ``v`` and ``t`` are the first/second moment estimates
    and the step counter.
    """

    def __init__(self, n_params: int, step_size=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if step_size <= 0:
            raise ValueError("step_size must be positive")
        self.step_size = float(step_size)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params, grad):
        """Return updated parameters; ``params`` is not modified."""
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.m.shape or np.shape(params) != self.m.shape:
            raise DimensionError(
                f"gradient {grad.shape} / params {np.shape(params)} vs state {self.m.shape}"
            )
        check_finite(grad, "gradient")
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.step_size * m_hat / (np.sqrt(v_hat) + self.eps)


def optimize_step(opt: Adam, mlp: Mlp, grad) -> Mlp:
    """Apply one optimizer step to ``mlp`` in place and return it."""
    mlp.params = opt.step(mlp.params, grad)
    return mlp
