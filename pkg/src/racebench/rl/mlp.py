"""Tiny fully connected networks with hand-rolled reverse-mode gradients.

Two hidden tanh layers; the output layer is tanh for actors and identity
for critics. Parameters are plain numpy arrays, trained with SGD+momentum
and global gradient-norm clipping.
"""

import numpy as np


class Mlp:
    """Fully connected net: in -> h1 -> h2 -> out."""

    def __init__(self, sizes, output_activation, rng):
        if len(sizes) != 4:
            raise ValueError("expected (in, h1, h2, out) sizes")
        if output_activation not in ("tanh", "identity"):
            raise ValueError(f"unknown output activation {output_activation!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.output_activation = output_activation
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    def parameters(self):
        return self.weights + self.biases

    def copy_from(self, other):
        for dst, src in zip(self.parameters(), other.parameters()):
            dst[...] = src

    def soft_update_from(self, other, tau):
        """Polyak averaging toward another net's parameters."""
        for dst, src in zip(self.parameters(), other.parameters()):
            dst *= 1.0 - tau
            dst += tau * src

    def forward(self, x, cache=None):
        """Batched forward pass; x is (batch, in) or (in,)."""
        squeeze = x.ndim == 1
        h = np.atleast_2d(x)
        acts = [h]
        for layer in range(3):
            z = h @ self.weights[layer] + self.biases[layer]
            if layer < 2 or self.output_activation == "tanh":
                h = np.tanh(z)
            else:
                h = z
            acts.append(h)
        if cache is not None:
            cache["acts"] = acts
        return h[0] if squeeze else h

    def backward(self, cache, grad_out):
        """Gradients of sum(grad_out * output) w.r.t. parameters and input.

        Returns (weight_grads, bias_grads, input_grad).
        """
        acts = cache["acts"]
        g = np.atleast_2d(grad_out).astype(np.float64)
        w_grads = [None] * 3
        b_grads = [None] * 3
        for layer in (2, 1, 0):
            out = acts[layer + 1]
            if layer < 2 or self.output_activation == "tanh":
                g = g * (1.0 - out * out)  # d tanh
            w_grads[layer] = acts[layer].T @ g
            b_grads[layer] = g.sum(axis=0)
            g = g @ self.weights[layer].T
        return w_grads, b_grads, g


class SgdOptimizer:
    """SGD with momentum and global gradient-norm clipping."""

    def __init__(self, net, lr=1e-3, momentum=0.9, clip_norm=10.0):
        self.net = net
        self.lr = lr
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.velocity = [np.zeros_like(p) for p in net.parameters()]

    def step(self, w_grads, b_grads):
        grads = list(w_grads) + list(b_grads)
        total = np.sqrt(sum(float((g * g).sum()) for g in grads))
        scale = 1.0
        if self.clip_norm > 0 and total > self.clip_norm:
            scale = self.clip_norm / total
        for vel, param, grad in zip(self.velocity, self.net.parameters(), grads):
            vel *= self.momentum
            vel += scale * grad
            param -= self.lr * vel
        return total
