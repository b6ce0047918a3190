"""ReLU multilayer perceptrons and the RMSProp optimizer.

Two network roles: a scalar field mapping R^m -> R (the density-ratio or
density-difference model) and a generator mapping a low-dimensional latent
space into sample space.  Both are plain fully connected ReLU stacks with a
linear output layer, built on the autodiff engine so that input gradients and
gradient penalties come for free.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .rng import stream


class NonFiniteGradientError(RuntimeError):
    """A parameter gradient contained NaN or Inf; the update was aborted."""


class Mlp:
    """Fully connected ReLU network with a linear output layer."""

    def __init__(self, dims, weights, biases):
        if len(dims) < 2:
            raise ValueError("need at least an input and an output dimension")
        if any(d <= 0 for d in dims):
            raise ValueError(f"zero-width layer in {dims}")
        self.dims = list(dims)
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            if self.weights[i].shape != (fan_in, fan_out) or self.biases[i].shape != (fan_out,):
                raise ValueError("parameter shapes do not match layer widths")

    @classmethod
    def initialized(cls, dims, rng: np.random.Generator) -> "Mlp":
        """He-style fan-in uniform weights, U(-sqrt(6/fan_in), +sqrt(6/fan_in)); zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            if fan_in <= 0 or fan_out <= 0:
                raise ValueError(f"zero-width layer in {dims}")
            bound = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(dims, weights, biases)

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    @property
    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list[np.ndarray]:
        """Flat parameter list, weight then bias per layer; aliases, not copies."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def param_leaves(self, tape: ad.Tape, trainable=True) -> list[ad.Var]:
        return [tape.leaf(p, trainable=trainable) for p in self.params()]

    def apply(self, x: ad.Var, param_leaves: list[ad.Var]) -> ad.Var:
        """Forward graph for a batch ``x`` of shape (n, in_dim) -> (n, out_dim)."""
        h = x
        n_layers = len(self.weights)
        for i in range(n_layers):
            w, b = param_leaves[2 * i], param_leaves[2 * i + 1]
            h = ad.matmul(h, w) + b
            if i < n_layers - 1:
                h = ad.relu(h)
        return h

    def graph(self, tape: ad.Tape, xs: np.ndarray, trainable=True):
        """Build leaves and forward graph; returns (output, input leaf, param leaves)."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.in_dim:
            raise ValueError(f"expected batch of shape (n, {self.in_dim}), got {xs.shape}")
        x = tape.leaf(xs)
        params = self.param_leaves(tape, trainable=trainable)
        return self.apply(x, params), x, params

    def eval_batch(self, xs: np.ndarray) -> np.ndarray:
        """Row-wise outputs, shape (n, out_dim)."""
        out, _, _ = self.graph(ad.Tape(), xs, trainable=False)
        return out.value

    def state(self) -> dict:
        return {
            "dims": list(self.dims),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_state(cls, state: dict) -> "Mlp":
        return cls(state["dims"], state["weights"], state["biases"])


class ScalarFieldNet(Mlp):
    """MLP R^m -> R; the trainable field behind ratio and difference estimates."""

    def __init__(self, dims, weights, biases):
        super().__init__(dims, weights, biases)
        if self.out_dim != 1:
            raise ValueError("a scalar field must have output dimension 1")

    def eval_batch(self, xs: np.ndarray) -> np.ndarray:
        """Per-row scalar outputs, shape (n,)."""
        return super().eval_batch(xs)[:, 0]

    def values(self, xs: np.ndarray) -> np.ndarray:
        return self.eval_batch(xs)

    def values_and_input_grads(self, xs: np.ndarray):
        """Row-wise values (n,) and input gradients (n, m)."""
        tape = ad.Tape()
        out, x, _ = self.graph(tape, xs, trainable=False)
        gx = tape.grad(ad.vsum(out), x)
        return out.value[:, 0], gx.value


class GeneratorNet(Mlp):
    """MLP from an l-dimensional latent space into R^m."""

    def generate(self, zs: np.ndarray) -> np.ndarray:
        return self.eval_batch(zs)


def init_scalar_net(m: int, widths, seed: int) -> ScalarFieldNet:
    """Fresh ratio/difference network for inputs in R^m, reproducible from seed."""
    dims = [int(m), *[int(w) for w in widths], 1]
    rng = stream(seed, "scalar-net-init")
    net = Mlp.initialized(dims, rng)
    return ScalarFieldNet(net.dims, net.weights, net.biases)


def init_generator_net(latent_dim: int, m: int, widths, seed: int) -> GeneratorNet:
    dims = [int(latent_dim), *[int(w) for w in widths], int(m)]
    rng = stream(seed, "generator-net-init")
    net = Mlp.initialized(dims, rng)
    return GeneratorNet(net.dims, net.weights, net.biases)


class RmsProp:
    """RMSProp with per-parameter running mean-square accumulators.

    acc <- rho * acc + (1 - rho) * g^2;  p <- p - lr * g / sqrt(acc + eps).
    """

    def __init__(self, params, learning_rate: float, rho: float = 0.99, eps: float = 1e-8):
        self.learning_rate = float(learning_rate)
        self.rho = float(rho)
        self.eps = float(eps)
        self.acc = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        """Update ``params`` in place.  A ``None`` gradient counts as zero."""
        if len(params) != len(self.acc):
            raise ValueError("parameter list does not match optimizer state")
        for p, g, a in zip(params, grads, self.acc):
            if g is None:
                a *= self.rho
                continue
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(f"non-finite gradient for parameter of shape {p.shape}")
            a *= self.rho
            a += (1.0 - self.rho) * g * g
            p -= self.learning_rate * g / np.sqrt(a + self.eps)

    def state(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "rho": self.rho,
            "eps": self.eps,
            "acc": [a.tolist() for a in self.acc],
        }

    @classmethod
    def from_state(cls, state: dict, params) -> "RmsProp":
        opt = cls(params, state["learning_rate"], rho=state["rho"], eps=state["eps"])
        acc = [np.asarray(a, dtype=np.float64) for a in state["acc"]]
        if len(acc) != len(opt.acc) or any(a.shape != b.shape for a, b in zip(acc, opt.acc)):
            raise ValueError("optimizer state does not match parameters")
        opt.acc = acc
        return opt
