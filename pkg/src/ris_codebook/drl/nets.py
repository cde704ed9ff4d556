"""Minimal feed-forward networks with explicit backprop, on flat parameters.

Parameters live in one contiguous float64 vector; layer weights are views
into it. That keeps finite-difference checks, soft target updates, and
transfer (parameter copy) trivial and exact.
"""

from __future__ import annotations

import numpy as np

_OUTPUTS = ("linear", "tanh_pi")


class MLP:
    """Fully connected net with tanh hidden units.

    output="linear" leaves the last layer unbounded (critic); "tanh_pi"
    maps it through pi*tanh, so outputs stay inside (-pi, pi) (actor).
    """

    def __init__(self, dims, output: str = "linear", rng: np.random.Generator | None = None):
        dims = tuple(int(d) for d in dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError("need at least input and output dims, all positive")
        if output not in _OUTPUTS:
            raise ValueError(f"output must be one of {_OUTPUTS}")
        self.dims = dims
        self.output = output
        self.size = sum(fi * fo + fo for fi, fo in zip(dims[:-1], dims[1:]))
        self.theta = np.zeros(self.size)
        self._views = []
        offset = 0
        for fi, fo in zip(dims[:-1], dims[1:]):
            w = self.theta[offset:offset + fi * fo].reshape(fi, fo)
            offset += fi * fo
            b = self.theta[offset:offset + fo]
            offset += fo
            self._views.append((w, b))
        if rng is not None:
            self.init_params(rng)

    def init_params(self, rng: np.random.Generator) -> None:
        for w, b in self._views:
            bound = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            w[...] = rng.uniform(-bound, bound, w.shape)
            b[...] = 0.0

    @property
    def layers(self):
        """(weight, bias) view pairs into the flat parameter vector."""
        return self._views

    def forward(self, x, want_cache: bool = False):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [x]
        h = x
        last = len(self._views) - 1
        for i, (w, b) in enumerate(self._views):
            z = h @ w + b
            if i < last:
                h = np.tanh(z)
            elif self.output == "tanh_pi":
                h = np.pi * np.tanh(z)
            else:
                h = z
            acts.append(h)
        if want_cache:
            return acts[-1], acts
        return acts[-1]

    def backward(self, cache, upstream):
        """Backprop dL/d(output) through the cached forward pass.

        Returns (flat parameter gradient, gradient w.r.t. the input batch).
        """
        grad = np.zeros(self.size)
        offset = self.size
        delta = np.atleast_2d(np.asarray(upstream, dtype=float))
        last = len(self._views) - 1
        for i in range(last, -1, -1):
            w, _ = self._views[i]
            out = cache[i + 1]
            if i == last:
                if self.output == "tanh_pi":
                    delta = delta * (np.pi**2 - out**2) / np.pi
            else:
                delta = delta * (1.0 - out**2)
            gw = cache[i].T @ delta
            gb = delta.sum(axis=0)
            fo = w.shape[1]
            offset -= fo
            grad[offset:offset + fo] = gb
            offset -= w.size
            grad[offset:offset + w.size] = gw.reshape(-1)
            delta = delta @ w.T
        return grad, delta

    def copy_params_from(self, other: "MLP") -> None:
        if other.dims != self.dims or other.output != self.output:
            raise ValueError("parameter copy requires identical architectures")
        self.theta[...] = other.theta

    def clone(self) -> "MLP":
        twin = MLP(self.dims, self.output)
        twin.theta[...] = self.theta
        return twin


class Adam:
    """Adam on a flat parameter vector (state resets on transfer)."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def reset(self) -> None:
        self.m[...] = 0.0
        self.v[...] = 0.0
        self.t = 0


def soft_update(target: MLP, online: MLP, tau: float) -> None:
    """Polyak-average online parameters into the target network."""
    target.theta[...] = tau * online.theta + (1.0 - tau) * target.theta
