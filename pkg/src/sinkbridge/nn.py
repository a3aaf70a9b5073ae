"""Feedforward drift distillation: hand-derived gradients plus decoupled
weight-decay adaptive-moment optimization."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .clouds import PointCloud
from .drift import BrownianBridgeSampler

_CKPT_MAGIC = b"SBNN"

BETA1 = 0.9
BETA2 = 0.999
ADAM_DELTA = 1e-8


def _silu(z: np.ndarray) -> np.ndarray:
    return z / (1.0 + np.exp(-z))


def _silu_grad(z: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-z))
    return s * (1.0 + z * (1.0 - s))


class MlpModel:
    """Fully-connected net mapping (z, t) -> drift, float64 throughout.

    The nonlinearity is the sigmoid-weighted linear unit, chosen smooth so
    central finite differences converge cleanly.
    """

    def __init__(self, layer_dims: list[int], seed: int = 0):
        if len(layer_dims) < 2:
            raise ValueError("need at least input and output dims")
        self.layer_dims = list(layer_dims)
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.weights.append(scale * rng.standard_normal((fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def parameters(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, list, list]:
        pre, act = [], [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = z if i == last else _silu(z)
            act.append(h)
        return h, pre, act

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        out, _, _ = self._forward(np.asarray(inputs, dtype=np.float64))
        return out

    def drift(self, z: np.ndarray, t: float) -> np.ndarray:
        """Drift-field interface: append the raw time coordinate to z."""
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim == 1
        zb = np.atleast_2d(z)
        inputs = np.hstack([zb, np.full((zb.shape[0], 1), t)])
        out = self.predict(inputs)
        return out[0] if single else out

    def save(self, path: str | Path) -> None:
        dims = self.layer_dims
        with open(path, "wb") as fh:
            fh.write(_CKPT_MAGIC + struct.pack("<I", len(dims)))
            fh.write(struct.pack(f"<{len(dims)}I", *dims))
            for p in self.parameters():
                fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "MlpModel":
        raw = Path(path).read_bytes()
        if raw[:4] != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint (bad magic)")
        (n_dims,) = struct.unpack_from("<I", raw, 4)
        dims = list(struct.unpack_from(f"<{n_dims}I", raw, 8))
        model = cls(dims, seed=0)
        offset = 8 + 4 * n_dims
        flat = np.frombuffer(raw, dtype="<f8", offset=offset)
        pos = 0
        for p in model.parameters():
            p[...] = flat[pos : pos + p.size].reshape(p.shape)
            pos += p.size
        if pos != flat.size:
            raise ValueError(f"{path}: parameter payload size mismatch")
        return model


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4096
    lr: float = 1e-3
    weight_decay: float = 1e-5
    max_steps: int = 1000
    tau: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError("lr must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must lie in the open interval (0, 1), got {self.tau}")


@dataclass(frozen=True)
class TrainBatch:
    inputs: np.ndarray  # (N, d+1): (x_t, t)
    targets: np.ndarray  # (N, d): (x1 - x_t) / (1 - t)

    def __post_init__(self):
        if np.any(self.inputs[:, -1] >= 1.0):
            raise ValueError("batch contains times t >= 1")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValueError("batch entries must be finite")


def sample_training_batch(
    coupling: np.ndarray,
    source: PointCloud,
    targets: PointCloud,
    epsilon: float,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> TrainBatch:
    """Draw (x0, x1) from the coupling, t ~ U[0, tau], x_t from the
    Brownian-bridge marginal; regression target is (x1 - x_t)/(1 - t)."""
    coupling = np.asarray(coupling, dtype=np.float64)
    m, n = coupling.shape
    flat = coupling.reshape(-1)
    cells = rng.choice(m * n, size=cfg.batch_size, p=flat / flat.sum())
    x0 = source.points[cells // n]
    x1 = targets.points[cells % n]
    t = rng.uniform(0.0, cfg.tau, size=cfg.batch_size)

    mean = (1.0 - t)[:, None] * x0 + t[:, None] * x1
    std = np.sqrt(epsilon * t * (1.0 - t))[:, None]
    x_t = mean + std * rng.standard_normal(mean.shape)

    inputs = np.hstack([x_t, t[:, None]])
    target_vals = (x1 - x_t) / (1.0 - t)[:, None]
    return TrainBatch(inputs, target_vals)


def loss_eval(model: MlpModel, batch: TrainBatch) -> float:
    out = model.predict(batch.inputs)
    return float(np.mean(np.sum((out - batch.targets) ** 2, axis=1)))


def grad_params(model: MlpModel, batch: TrainBatch) -> list[np.ndarray]:
    """Exact reverse-mode gradient of `loss_eval`, ordered as `parameters()`."""
    n = batch.inputs.shape[0]
    out, pre, act = model._forward(np.asarray(batch.inputs, dtype=np.float64))
    delta = 2.0 * (out - batch.targets) / n
    grads: list[np.ndarray] = []
    for i in reversed(range(len(model.weights))):
        grads.append(np.sum(delta, axis=0))  # bias
        grads.append(act[i].T @ delta)  # weight
        if i > 0:
            delta = (delta @ model.weights[i].T) * _silu_grad(pre[i - 1])
    grads.reverse()
    return grads


class AdamW:
    """Decoupled weight decay with bias-corrected first/second moment EMAs."""

    def __init__(self, params: list[np.ndarray], lr: float, weight_decay: float):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.step_count = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.step_count += 1
        bc1 = 1.0 - BETA1**self.step_count
        bc2 = 1.0 - BETA2**self.step_count
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= BETA1
            m += (1.0 - BETA1) * g
            v *= BETA2
            v += (1.0 - BETA2) * g**2
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_DELTA)
            p -= self.lr * self.weight_decay * p


def train(
    model: MlpModel,
    cfg: TrainConfig,
    batch_sampler: Callable[[np.random.Generator], TrainBatch],
) -> tuple[MlpModel, list[float]]:
    """Run the optimizer for max_steps; returns the model and per-step losses."""
    rng = np.random.default_rng(cfg.seed)
    opt = AdamW(model.parameters(), cfg.lr, cfg.weight_decay)
    losses: list[float] = []
    for step in range(cfg.max_steps):
        batch = batch_sampler(rng)
        loss = loss_eval(model, batch)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at step {step}")
        losses.append(loss)
        opt.step(grad_params(model, batch))
    return model, losses


def train_from_coupling(
    coupling: np.ndarray,
    source: PointCloud,
    targets: PointCloud,
    epsilon: float,
    model: MlpModel,
    cfg: TrainConfig,
) -> tuple[MlpModel, list[float]]:
    def sampler(rng: np.random.Generator) -> TrainBatch:
        return sample_training_batch(coupling, source, targets, epsilon, cfg, rng)

    return train(model, cfg, sampler)


def save_loss_curve(losses: list[float], path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("step,loss\n")
        for i, loss in enumerate(losses):
            fh.write(f"{i},{repr(float(loss))}\n")
