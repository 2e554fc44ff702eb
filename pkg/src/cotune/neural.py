"""Minimal dense feed-forward networks with exact reverse-mode gradients.

Covers the two shapes used by the tuner: per-agent policies (one hidden layer
of 20 relu units, softmax output split into one group per owned knob) and the
centralized critic (three hidden layers of 20 tanh units, linear scalar head).
"""

from __future__ import annotations

import numpy as np


def softmax(logits: np.ndarray, groups: tuple[int, ...] | None = None) -> np.ndarray:
    """Shift-invariant softmax; with groups, each contiguous group normalizes to 1."""
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    if groups is None:
        groups = (z.shape[1],)
    out = np.empty_like(z)
    start = 0
    for g in groups:
        block = z[:, start:start + g]
        e = np.exp(block - block.max(axis=1, keepdims=True))
        out[:, start:start + g] = e / e.sum(axis=1, keepdims=True)
        start += g
    if start != z.shape[1]:
        raise ValueError(f"groups sum to {start}, logits have {z.shape[1]} entries")
    return out[0] if single else out


def categorical_sample(probabilities, rng: np.random.Generator) -> int:
    """Draw one index with the given probabilities (must sum to 1 within 1e-9)."""
    p = np.asarray(probabilities, dtype=np.float64)
    if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("probabilities must be non-negative and sum to 1")
    cum = np.cumsum(p)
    idx = int(np.searchsorted(cum, rng.random(), side="right"))
    return min(idx, len(p) - 1)


class DenseNet:
    """Fully-connected net: hidden activation relu or tanh, head linear or grouped softmax."""

    def __init__(self, sizes, hidden="relu", head="linear",
                 groups: tuple[int, ...] | None = None,
                 rng: np.random.Generator | None = None):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if hidden not in ("relu", "tanh"):
            raise ValueError(f"unknown hidden activation {hidden!r}")
        if head not in ("linear", "softmax"):
            raise ValueError(f"unknown head {head!r}")
        if head == "softmax":
            groups = tuple(groups) if groups else (sizes[-1],)
            if sum(groups) != sizes[-1]:
                raise ValueError("softmax groups must partition the output layer")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.sizes = tuple(int(s) for s in sizes)
        self.hidden = hidden
        self.head = head
        self.groups = groups
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes, self.sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    # -- forward ---------------------------------------------------------

    def _activate(self, pre):
        return np.maximum(pre, 0.0) if self.hidden == "relu" else np.tanh(pre)

    def _forward_cached(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = np.atleast_2d(x)
        if a.shape[1] != self.sizes[0]:
            raise ValueError(f"input has {a.shape[1]} entries, net expects {self.sizes[0]}")
        acts = [a]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = self._activate(a @ w + b)
            acts.append(a)
        logits = acts[-1] @ self.weights[-1] + self.biases[-1]
        out = softmax(logits, self.groups) if self.head == "softmax" else logits
        return acts, out, single

    def forward(self, x) -> np.ndarray:
        """Output for a single input vector or an (n, d) batch."""
        acts, out, single = self._forward_cached(x)
        return out[0] if single else out

    # -- gradients -------------------------------------------------------

    def _backprop(self, acts, g_logits):
        grads = []
        g = g_logits
        for layer in range(len(self.weights) - 1, -1, -1):
            grads.append((acts[layer].T @ g, g.sum(axis=0)))
            if layer > 0:
                g = g @ self.weights[layer].T
                a = acts[layer]
                g = g * (a > 0) if self.hidden == "relu" else g * (1.0 - a * a)
        grads.reverse()
        return grads

    def _head_to_logits(self, out, upstream):
        if self.head == "linear":
            return upstream
        g = np.empty_like(upstream)
        start = 0
        for gsize in self.groups:
            p = out[:, start:start + gsize]
            u = upstream[:, start:start + gsize]
            g[:, start:start + gsize] = p * u - p * (p * u).sum(axis=1, keepdims=True)
            start += gsize
        return g

    def grad(self, x, upstream):
        """Exact gradients of sum(upstream * output) w.r.t. all weights and biases.

        upstream matches the output shape; batched inputs sum gradients over rows.
        Returns a list of (dW, db) pairs, one per layer.
        """
        acts, out, single = self._forward_cached(x)
        up = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
        if up.shape != out.shape:
            raise ValueError(f"upstream shape {up.shape} does not match output {out.shape}")
        return self._backprop(acts, self._head_to_logits(out, up))

    def grad_logits(self, x, g_logits):
        """Like grad, but g_logits is taken w.r.t. pre-head logits (log-domain path)."""
        acts, _, _ = self._forward_cached(x)
        g = np.atleast_2d(np.asarray(g_logits, dtype=np.float64))
        return self._backprop(acts, g)

    # -- training --------------------------------------------------------

    def sgd_step(self, grads, lr: float) -> None:
        """In-place plain gradient-descent step: theta <- theta - lr * grad."""
        for (dw, db), w, b in zip(grads, self.weights, self.biases):
            if dw.shape != w.shape or db.shape != b.shape:
                raise ValueError("gradient shapes do not match parameters")
            w -= lr * dw
            b -= lr * db

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def policy_net(obs_dim: int, n_knobs: int, rng: np.random.Generator) -> DenseNet:
    """Agent policy: 20 relu units, one 3-way softmax head per owned knob."""
    return DenseNet([obs_dim, 20, 3 * n_knobs], hidden="relu", head="softmax",
                    groups=(3,) * n_knobs, rng=rng)


def critic_net(state_dim: int, rng: np.random.Generator) -> DenseNet:
    """Centralized critic: three hidden layers of 20 tanh units, scalar output."""
    return DenseNet([state_dim, 20, 20, 20, 1], hidden="tanh", head="linear", rng=rng)
