"""Monotone value networks: forward/backward passes, init, projection, checkpoints.

A network maps a bundle ``x`` to
``W[K] @ brelu(... brelu(W[1] @ (D x) + b[1]) ...)`` with every weight
nonnegative, every bias nonpositive and ``brelu(z) = min(t, max(0, z))``.
That makes the output monotone in ``x`` and zero at the empty bundle.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MvnnArchitecture:
    num_inputs: int
    hidden_widths: tuple[int, ...] = (20, 20)
    cutoffs: tuple[float, ...] | None = None
    normalizers: tuple[float, ...] | None = None

    def __post_init__(self):
        widths = tuple(int(w) for w in self.hidden_widths)
        if not widths or min(widths) < 1:
            raise ValueError("need at least one hidden layer of positive width")
        cutoffs = tuple(float(t) for t in (self.cutoffs or (1.0,) * len(widths)))
        if len(cutoffs) != len(widths) or min(cutoffs) <= 0:
            raise ValueError("one positive cutoff per hidden layer is required")
        norms = tuple(float(c) for c in (self.normalizers or (1.0,) * self.num_inputs))
        if len(norms) != self.num_inputs or min(norms) <= 0:
            raise ValueError("one positive normalizer per input is required")
        object.__setattr__(self, "hidden_widths", widths)
        object.__setattr__(self, "cutoffs", cutoffs)
        object.__setattr__(self, "normalizers", norms)

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.num_inputs, *self.hidden_widths, 1)

    @property
    def input_scale(self) -> np.ndarray:
        return 1.0 / np.asarray(self.normalizers)

    def to_dict(self) -> dict:
        return {"num_inputs": self.num_inputs, "hidden_widths": list(self.hidden_widths),
                "cutoffs": list(self.cutoffs), "normalizers": list(self.normalizers)}

    @classmethod
    def from_dict(cls, d: dict) -> "MvnnArchitecture":
        return cls(d["num_inputs"], tuple(d["hidden_widths"]), tuple(d["cutoffs"]),
                   tuple(d["normalizers"]))


@dataclass
class MvnnParams:
    """``weights[k]`` has shape ``(d_out, d_in)``; the output layer has no bias."""

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def arrays(self) -> list[np.ndarray]:
        out = []
        for k, W in enumerate(self.weights):
            out.append(W)
            if k < len(self.biases):
                out.append(self.biases[k])
        return out

    def copy(self) -> "MvnnParams":
        return MvnnParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def unflatten_into(self, theta: np.ndarray) -> None:
        pos = 0
        for a in self.arrays():
            a[...] = theta[pos:pos + a.size].reshape(a.shape)
            pos += a.size

    def is_feasible(self) -> bool:
        return all(np.all(W >= 0) for W in self.weights) and all(np.all(b <= 0) for b in self.biases)

    def sq_norm(self) -> float:
        return float(sum(np.sum(a * a) for a in self.arrays()))


def brelu(z, t):
    return np.minimum(t, np.maximum(0.0, z))


def forward(params: MvnnParams, arch: MvnnArchitecture, X, return_cache: bool = False):
    """Network outputs for the rows of ``X``; optionally the activation cache."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != arch.num_inputs:
        raise ValueError(f"expected {arch.num_inputs} inputs, got {X.shape[1]}")
    a = X * arch.input_scale
    cache = {"inputs": [a], "pre": []}
    for k, (W, b) in enumerate(zip(params.weights[:-1], params.biases)):
        z = a @ W.T + b
        a = brelu(z, arch.cutoffs[k])
        cache["pre"].append(z)
        cache["inputs"].append(a)
    out = (a @ params.weights[-1].T)[:, 0]
    return (out, cache) if return_cache else out


def brelu_grad(z, t):
    # 1 strictly inside (0, t); the kinks at 0 and t get 0
    return ((z > 0.0) & (z < t)).astype(float)


def backward(params: MvnnParams, arch: MvnnArchitecture, cache, upstream) -> MvnnParams:
    """Gradient of ``sum(upstream * output)`` with respect to every parameter."""
    g = np.asarray(upstream, dtype=float).reshape(-1, 1)
    grads_W = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    grads_W[-1] = g.T @ cache["inputs"][-1]
    delta = g @ params.weights[-1]
    for k in range(len(params.biases) - 1, -1, -1):
        delta = delta * brelu_grad(cache["pre"][k], arch.cutoffs[k])
        grads_W[k] = delta.T @ cache["inputs"][k]
        grads_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = delta @ params.weights[k]
    return MvnnParams(grads_W, grads_b)


def initialize(arch: MvnnArchitecture, rng_seed, input_density: float = 0.2) -> MvnnParams:
    """Sign-feasible random parameters that keep hidden units off both kinks.

    Weights are uniform on ``(0, a)`` with ``a`` chosen so the mean
    pre-activation is about half the layer cutoff, given that a fraction
    ``input_density`` of the inputs is on and hidden units sit near half
    their cutoff. Biases are uniform on ``(-t / 4, 0]``.
    """
    rng = np.random.default_rng(rng_seed)
    dims = arch.layer_dims
    weights, biases = [], []
    mean_act = input_density
    for k in range(len(dims) - 1):
        d_in, d_out = dims[k], dims[k + 1]
        target = arch.cutoffs[k] / 2 if k < len(arch.cutoffs) else 0.5
        a = 2.0 * target / max(d_in * mean_act, 1e-12)
        weights.append(rng.uniform(0.0, a, size=(d_out, d_in)))
        if k < len(arch.cutoffs):
            t = arch.cutoffs[k]
            biases.append(-rng.uniform(0.0, t / 4, size=d_out))
            mean_act = t / 2
    return MvnnParams(weights, biases)


def project_params(params: MvnnParams) -> MvnnParams:
    """Clamp weights to ``>= 0`` and biases to ``<= 0`` in place; returns ``params``."""
    for W in params.weights:
        np.maximum(W, 0.0, out=W)
    for b in params.biases:
        np.minimum(b, 0.0, out=b)
    return params


def ensemble_outputs(members, arch: MvnnArchitecture, X) -> np.ndarray:
    """Stacked member outputs, shape ``(n_members, n_bundles)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != arch.num_inputs:
        raise ValueError(f"expected {arch.num_inputs} inputs, got {X.shape[1]}")
    a = X * arch.input_scale
    n_layers = len(arch.hidden_widths)
    for k in range(n_layers):
        Wt = np.stack([p.weights[k].T for p in members])
        b = np.stack([p.biases[k] for p in members])[:, None, :]
        a = a @ Wt
        a += b
        np.clip(a, 0.0, arch.cutoffs[k], out=a)
    w_out = np.stack([p.weights[-1][0] for p in members])[:, :, None]
    return (a @ w_out)[:, :, 0]


def ensemble_mean(members, arch: MvnnArchitecture, X) -> np.ndarray:
    return ensemble_outputs(members, arch, X).mean(axis=0)


def ensemble_variance(members, arch: MvnnArchitecture, X) -> np.ndarray:
    # population variance over members
    return ensemble_outputs(members, arch, X).var(axis=0)


def save_checkpoint(path, arch: MvnnArchitecture, members, extra: dict | None = None) -> None:
    """Write architecture and every member's arrays to a ``.npz`` file."""
    arrays = {}
    for j, p in enumerate(members):
        for k, W in enumerate(p.weights):
            arrays[f"m{j}_W{k}"] = W
        for k, b in enumerate(p.biases):
            arrays[f"m{j}_b{k}"] = b
    meta = {"version": CHECKPOINT_VERSION, "arch": arch.to_dict(), "n_members": len(members),
            "extra": extra or {}}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> tuple[MvnnArchitecture, list[MvnnParams], dict]:
    with np.load(Path(path)) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        arch = MvnnArchitecture.from_dict(meta["arch"])
        n_layers = len(arch.hidden_widths)
        members = []
        for j in range(meta["n_members"]):
            members.append(MvnnParams(
                [data[f"m{j}_W{k}"].copy() for k in range(n_layers + 1)],
                [data[f"m{j}_b{k}"].copy() for k in range(n_layers)],
            ))
    return arch, members, meta["extra"]
