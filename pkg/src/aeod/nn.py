"""Fully-connected autoencoder engine: layer schedule, forward/backward passes, Adam.

Parameters live in one flat float64 vector; per-layer weight (out x in) and
bias arrays are views into it, which keeps Adam and checkpointing trivial.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

SIGMA_FLOOR = 1e-6
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class NumericalError(FloatingPointError):
    """Non-finite values appeared during training or optimisation."""


@dataclass(frozen=True)
class LayerSchedule:
    unit_counts: tuple
    doubled_output: bool = False

    def __post_init__(self):
        units = tuple(int(u) for u in self.unit_counts)
        if len(units) < 2 or min(units) < 1:
            raise ValueError(f"invalid unit counts {units}")
        object.__setattr__(self, "unit_counts", units)
        expected = 2 * units[0] if self.doubled_output else units[0]
        if units[-1] != expected:
            raise ValueError(f"output width {units[-1]} does not match input {units[0]}")

    @property
    def input_dim(self):
        return self.unit_counts[0]

    @property
    def output_dim(self):
        return self.unit_counts[-1]

    @property
    def layer_shapes(self):
        u = self.unit_counts
        return [(u[i + 1], u[i]) for i in range(len(u) - 1)]

    @property
    def n_params(self):
        return sum(o * i + o for o, i in self.layer_shapes)


def build_schedule(D: int, doubled_output: bool = False) -> LayerSchedule:
    """Layer widths by input dimension; interior widths below 1 are raised to 1."""
    D = int(D)
    if D < 1:
        raise ValueError(f"input dimension must be >= 1, got {D}")
    if D < 20:
        divisors = [2]
    elif D < 100:
        divisors = [2, 4]
    elif D < 200:
        divisors = [2, 4, 8]
    else:
        divisors = [2, 4, 16]
    encoder = [max(1, D // q) for q in divisors]
    units = [D] + encoder + encoder[-2::-1] + [2 * D if doubled_output else D]
    return LayerSchedule(tuple(units), bool(doubled_output))


class NetworkParams:
    """Weights and biases for a :class:`LayerSchedule`, backed by one flat vector."""

    def __init__(self, schedule: LayerSchedule, flat):
        flat = np.array(flat, dtype=np.float64, copy=True)
        if flat.shape != (schedule.n_params,):
            raise ValueError(f"expected {schedule.n_params} parameters, got {flat.shape}")
        if not np.all(np.isfinite(flat)):
            raise NumericalError("network parameters contain non-finite values")
        flat.setflags(write=False)
        self.schedule = schedule
        self.flat = flat
        self.weights, self.biases = _unflatten(schedule, flat)

    def __eq__(self, other):
        return (
            isinstance(other, NetworkParams)
            and self.schedule == other.schedule
            and np.array_equal(self.flat, other.flat)
        )

    def __repr__(self):
        return f"NetworkParams(units={self.schedule.unit_counts}, n={self.flat.size})"


def _unflatten(schedule, flat):
    weights, biases = [], []
    pos = 0
    for out_dim, in_dim in schedule.layer_shapes:
        weights.append(flat[pos : pos + out_dim * in_dim].reshape(out_dim, in_dim))
        pos += out_dim * in_dim
        biases.append(flat[pos : pos + out_dim])
        pos += out_dim
    return tuple(weights), tuple(biases)


def flatten(weights, biases):
    parts = []
    for W, b in zip(weights, biases):
        parts.append(np.ravel(W))
        parts.append(np.ravel(b))
    return np.concatenate(parts)


def params_from_arrays(schedule, weights, biases) -> NetworkParams:
    return NetworkParams(schedule, flatten(weights, biases))


def init_params(schedule: LayerSchedule, seed: int) -> NetworkParams:
    """Glorot-uniform weights and zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for out_dim, in_dim in schedule.layer_shapes:
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        weights.append(rng.uniform(-limit, limit, size=(out_dim, in_dim)))
        biases.append(np.zeros(out_dim))
    return params_from_arrays(schedule, weights, biases)


@dataclass
class ForwardTrace:
    activations: list  # inputs to each layer; activations[0] is the batch
    pre_activations: list


def forward(params: NetworkParams, batch):
    """Run a batch through the network.

    ReLU follows every layer but the last. For a doubled output the second
    half passes through Softplus and gets a 1e-6 floor.
    """
    a = np.asarray(batch, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != params.schedule.input_dim:
        raise ValueError(f"batch shape {a.shape} does not match input width {params.schedule.input_dim}")
    if not np.all(np.isfinite(a)):
        raise ValueError("batch contains non-finite values")
    acts, pres = [a], []
    n_layers = len(params.weights)
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ W.T + b
        pres.append(z)
        if i < n_layers - 1:
            a = np.maximum(z, 0.0)
            acts.append(a)
    out = pres[-1]
    if params.schedule.doubled_output:
        D = params.schedule.input_dim
        out = out.copy()
        out[:, D:] = np.logaddexp(0.0, out[:, D:]) + SIGMA_FLOOR
    return out, ForwardTrace(acts, pres)


def backward(trace: ForwardTrace, params: NetworkParams, output_grad) -> np.ndarray:
    """Gradient of the loss w.r.t. the flat parameter vector.

    ``output_grad`` is dLoss/dOutput, i.e. with respect to the post-Softplus
    values for a doubled output. The ReLU derivative at 0 is taken as 0.
    """
    n_layers = len(params.weights)
    if len(trace.pre_activations) != n_layers or len(trace.activations) != n_layers:
        raise ValueError("trace does not match network depth")
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != trace.pre_activations[-1].shape:
        raise ValueError(f"output_grad shape {g.shape} != output shape {trace.pre_activations[-1].shape}")
    dz = g
    if params.schedule.doubled_output:
        D = params.schedule.input_dim
        dz = g.copy()
        dz[:, D:] = g[:, D:] * expit(trace.pre_activations[-1][:, D:])
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        grad_w[i] = dz.T @ trace.activations[i]
        grad_b[i] = dz.sum(axis=0)
        if i > 0:
            dz = (dz @ params.weights[i]) * (trace.pre_activations[i - 1] > 0)
    return flatten(grad_w, grad_b)


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, params: NetworkParams):
        return cls(np.zeros_like(params.flat), np.zeros_like(params.flat), 0)


def adam_step(params: NetworkParams, grads, state: AdamState, lr: float = 1e-3):
    """One bias-corrected Adam update; returns new (params, state)."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    g = np.asarray(grads, dtype=np.float64)
    if g.shape != params.flat.shape or state.m.shape != g.shape:
        raise ValueError("gradient / optimizer state shape mismatch")
    if not np.all(np.isfinite(g)):
        bad = np.flatnonzero(~np.isfinite(g))
        raise NumericalError(
            f"non-finite gradient at step {state.step + 1}: {bad.size} entries, first index {bad[0]}"
        )
    t = state.step + 1
    m = ADAM_BETA1 * state.m + (1 - ADAM_BETA1) * g
    v = ADAM_BETA2 * state.v + (1 - ADAM_BETA2) * g * g
    m_hat = m / (1 - ADAM_BETA1**t)
    v_hat = v / (1 - ADAM_BETA2**t)
    new_flat = params.flat - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return NetworkParams(params.schedule, new_flat), AdamState(m, v, t)


# -- checkpoints ------------------------------------------------------------
# One JSON header line, then the parameter vector as little-endian float64.


def save_checkpoint(path, params: NetworkParams, **meta):
    header = {
        "unit_counts": list(params.schedule.unit_counts),
        "doubled_output": params.schedule.doubled_output,
        "n_params": int(params.flat.size),
    }
    header.update(meta)
    blob = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    blob += params.flat.astype("<f8").tobytes()
    Path(path).write_bytes(blob)


def load_checkpoint(path):
    """Returns (params, header dict)."""
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode("utf-8"))
    schedule = LayerSchedule(tuple(header["unit_counts"]), header["doubled_output"])
    flat = np.frombuffer(raw[nl + 1 :], dtype="<f8")
    if flat.size != header["n_params"]:
        raise ValueError(f"{path}: expected {header['n_params']} parameters, found {flat.size}")
    return NetworkParams(schedule, flat.astype(np.float64)), header
