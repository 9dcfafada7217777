"""Mixed training: cardinal regression on GUI data, then pairwise fine-tuning.

The regression phase is full-batch MSE plus L2 under Adam. The comparison
phase runs minibatch Bradley-Terry training with a GCE or BCE loss, L2,
global-norm gradient clipping and Adam; its inner loop is compiled with
numba because the winning configuration uses a batch size of one.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .mvnn import MvnnArchitecture, MvnnParams, backward, forward, project_params

logger = logging.getLogger(__name__)

PROB_EPS = 1e-12


class TrainingDivergedError(RuntimeError):
    """Raised when a loss becomes NaN or infinite."""


@dataclass
class TrainConfig:
    reg_epochs: int = 500
    reg_lr: float = 0.01
    reg_l2: float = 1e-5
    class_epochs: int = 10
    class_lr: float = 1e-3
    class_l2: float = 1e-4
    class_batch_size: int = 1
    grad_clip_norm: float = 0.2
    loss: str = "gce"
    q: float = 0.3
    comparison_scale: float = 1.0

    def __post_init__(self):
        if self.loss not in ("gce", "bce"):
            raise ValueError(f"loss must be 'gce' or 'bce', got {self.loss!r}")
        if not 0.0 < self.q <= 1.0:
            raise ValueError(f"q must lie in (0, 1], got {self.q}")
        if min(self.reg_lr, self.class_lr) <= 0:
            raise ValueError("learning rates must be positive")
        if self.class_batch_size < 1 or self.grad_clip_norm <= 0:
            raise ValueError("batch size and clip norm must be positive")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, theta: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(theta), np.zeros_like(theta))

    def update(self, theta: np.ndarray, grad: np.ndarray, lr: float) -> None:
        """One in-place Adam step on ``theta``."""
        self.step += 1
        self.m *= self.beta1
        self.m += (1 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.step)
        v_hat = self.v / (1 - self.beta2 ** self.step)
        theta -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class RegressionDataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if len(self.X) != len(self.y):
            raise ValueError("X and y lengths differ")
        if np.any(self.y < 0):
            raise ValueError("regression targets must be nonnegative")


@dataclass
class ComparisonDataset:
    """``y[i] == 1`` means ``X1[i]`` was preferred to ``X2[i]``."""

    X1: np.ndarray
    X2: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.X1 = _as_rows(self.X1, len(self.y))
        self.X2 = _as_rows(self.X2, len(self.y))
        if self.X1.shape != self.X2.shape:
            raise ValueError("X1 and X2 shapes differ")
        if np.any((self.y != 0) & (self.y != 1)):
            raise ValueError("comparison labels must be 0 or 1")
        if len(self.y) and np.any(np.all(self.X1 == self.X2, axis=1)):
            raise ValueError("a comparison must involve two different bundles")

    def __len__(self):
        return len(self.y)


def _as_rows(X, n: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(n, -1) if n else X.reshape(0, X.shape[0])
    if len(X) != n:
        raise ValueError(f"expected {n} bundles, got {len(X)}")
    return X


def bradley_terry_prob(v1, v2):
    """Probability that the first option wins, ``sigmoid(v1 - v2)``."""
    d = np.asarray(v1, dtype=float) - np.asarray(v2, dtype=float)
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                   np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    return out if out.ndim else float(out)


def _clamp_prob(p):
    p = np.asarray(p, dtype=float)
    if np.any(p < PROB_EPS):
        logger.debug("clamping %d probabilities to %g", int(np.sum(p < PROB_EPS)), PROB_EPS)
    return np.clip(p, PROB_EPS, 1.0)


def gce_loss(p_correct, q: float):
    """Generalized cross-entropy ``(1 - p**q) / q``."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    p = _clamp_prob(p_correct)
    out = (1.0 - p ** q) / q
    return out if out.ndim else float(out)


def bce_loss(p_correct):
    out = -np.log(_clamp_prob(p_correct))
    return out if out.ndim else float(out)


def clip_gradient(grads, max_norm: float):
    """Rescale a gradient (array or list of arrays) to global L2 norm ``<= max_norm``."""
    arrays = grads if isinstance(grads, (list, tuple)) else [grads]
    norm = math.sqrt(sum(float(np.sum(np.square(g))) for g in arrays))
    scale = max_norm / norm if norm > max_norm else 1.0
    clipped = [np.asarray(g) * scale for g in arrays]
    return clipped if isinstance(grads, (list, tuple)) else clipped[0]


def _check_finite(loss: float, phase: str, epoch: int, params: MvnnParams) -> None:
    if not np.isfinite(loss):
        raise TrainingDivergedError(
            f"{phase} loss became {loss} at epoch {epoch}; "
            f"param sq-norm={params.sq_norm():.4g}, feasible={params.is_feasible()}"
        )


def train_regression(params: MvnnParams, arch: MvnnArchitecture, dataset: RegressionDataset,
                     config: TrainConfig, adam: AdamState | None = None,
                     log: "TrainingLog | None" = None) -> MvnnParams:
    """Full-batch MSE + L2 regression for ``config.reg_epochs`` Adam steps, in place."""
    if config.reg_epochs == 0 or len(dataset.y) == 0:
        return params
    theta = params.flatten()
    adam = adam or AdamState.zeros_like(theta)
    n = len(dataset.y)
    for epoch in range(config.reg_epochs):
        pred, cache = forward(params, arch, dataset.X, return_cache=True)
        resid = pred - dataset.y
        loss = float(np.mean(resid ** 2)) + config.reg_l2 * float(theta @ theta)
        _check_finite(loss, "regression", epoch, params)
        g = backward(params, arch, cache, 2.0 * resid / n).flatten() + 2.0 * config.reg_l2 * theta
        adam.update(theta, g, config.reg_lr)
        params.unflatten_into(theta)
        project_params(params)
        theta = params.flatten()
        if log is not None:
            log.record(epoch=epoch, phase="regression", loss=loss)
    return params


def train_regression_members(members: list, arch: MvnnArchitecture, dataset: RegressionDataset,
                             config: TrainConfig, log: "TrainingLog | None" = None) -> list:
    """:func:`train_regression` applied to every member at once, in place.

    Each member keeps its own Adam state; stacking only batches the matrix
    products, so results agree with the one-at-a-time loop up to rounding.
    """
    if config.reg_epochs == 0 or len(dataset.y) == 0 or not members:
        return members
    n_hidden = len(arch.hidden_widths)
    Ws = [np.stack([p.weights[k] for p in members]) for k in range(n_hidden + 1)]
    bs = [np.stack([p.biases[k] for p in members]) for k in range(n_hidden)]
    arrays = Ws + bs
    moments = [(np.zeros_like(a), np.zeros_like(a)) for a in arrays]
    b1, b2, eps = 0.9, 0.999, 1e-8
    X = dataset.X * arch.input_scale
    y = dataset.y
    n = len(y)
    lam = config.reg_l2
    for epoch in range(config.reg_epochs):
        acts, masks = [X], []
        a = X
        for k in range(n_hidden):
            z = a @ Ws[k].transpose(0, 2, 1)
            z += bs[k][:, None, :]
            masks.append((z > 0.0) & (z < arch.cutoffs[k]))
            np.clip(z, 0.0, arch.cutoffs[k], out=z)
            a = z
            acts.append(a)
        pred = (a @ Ws[-1].transpose(0, 2, 1))[:, :, 0]
        resid = pred - y
        sq = sum(np.sum(t * t, axis=tuple(range(1, t.ndim))) for t in arrays)
        losses = np.mean(resid ** 2, axis=1) + lam * sq
        if not np.all(np.isfinite(losses)):
            j = int(np.argmin(np.isfinite(losses)))
            _check_finite(float(losses[j]), "regression", epoch, members[j])
        g = (2.0 / n) * resid[:, :, None]
        gW = [None] * (n_hidden + 1)
        gb = [None] * n_hidden
        gW[-1] = g.transpose(0, 2, 1) @ acts[-1]
        delta = g @ Ws[-1]
        for k in range(n_hidden - 1, -1, -1):
            delta = delta * masks[k]
            gW[k] = delta.transpose(0, 2, 1) @ acts[k]
            gb[k] = delta.sum(axis=1)
            if k > 0:
                delta = delta @ Ws[k]
        t = epoch + 1
        for arr, grad, (m, v) in zip(arrays, gW + gb, moments):
            grad = grad + 2.0 * lam * arr
            m *= b1
            m += (1 - b1) * grad
            v *= b2
            v += (1 - b2) * grad * grad
            arr -= config.reg_lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        for W in Ws:
            np.maximum(W, 0.0, out=W)
        for b in bs:
            np.minimum(b, 0.0, out=b)
        if log is not None:
            for j, loss in enumerate(losses):
                log.record(epoch=epoch, phase="regression", loss=float(loss), member=j)
    for j, p in enumerate(members):
        for k in range(n_hidden + 1):
            p.weights[k][...] = Ws[k][j]
        for k in range(n_hidden):
            p.biases[k][...] = bs[k][j]
    return members


def _layout(arch: MvnnArchitecture):
    dims = np.asarray(arch.layer_dims, dtype=np.int64)
    is_bias = []
    for k in range(len(dims) - 1):
        is_bias.append(np.zeros(dims[k] * dims[k + 1], dtype=np.bool_))
        if k < len(dims) - 2:
            is_bias.append(np.ones(dims[k + 1], dtype=np.bool_))
    return dims, np.asarray(arch.cutoffs, dtype=float), np.concatenate(is_bias)


@numba.njit(cache=True, fastmath=True, error_model="numpy")
def _net_forward(theta, dims, cutoffs, x, acts, pre, idx):
    # idx[:nnz] lists the active inputs and idx[n0] stores nnz for the backward pass
    L = dims.shape[0] - 1
    n0 = dims[0]
    nnz = 0
    for i in range(n0):
        acts[0, i] = x[i]
        if x[i] != 0.0:
            idx[nnz] = i
            nnz += 1
    off = 0
    for k in range(L):
        d_in = dims[k]
        d_out = dims[k + 1]
        w_off = off
        off += d_in * d_out
        for j in range(d_out):
            s = 0.0
            row = w_off + j * d_in
            if k == 0:
                # bundles are sparse
                for r in range(nnz):
                    i = idx[r]
                    s += theta[row + i] * acts[0, i]
            else:
                for i in range(d_in):
                    s += theta[row + i] * acts[k, i]
            if k < L - 1:
                s += theta[off + j]
                pre[k, j] = s
                t = cutoffs[k]
                acts[k + 1, j] = min(t, max(0.0, s))
            else:
                acts[k + 1, j] = s
        if k < L - 1:
            off += d_out
    idx[n0] = nnz
    return acts[L, 0]


@numba.njit(cache=True, fastmath=True, error_model="numpy")
def _net_backward(theta, dims, cutoffs, acts, pre, upstream, grad, delta, delta_next, offs, idx):
    L = dims.shape[0] - 1
    delta[0] = upstream
    for k in range(L - 1, -1, -1):
        d_in = dims[k]
        d_out = dims[k + 1]
        w_off = offs[k]
        if k < L - 1:
            b_off = w_off + d_in * d_out
            t = cutoffs[k]
            for j in range(d_out):
                z = pre[k, j]
                if z > 0.0 and z < t:
                    grad[b_off + j] += delta[j]
                else:
                    delta[j] = 0.0
        for i in range(d_in):
            delta_next[i] = 0.0
        for j in range(d_out):
            dj = delta[j]
            if dj == 0.0:
                continue
            row = w_off + j * d_in
            if k == 0:
                nnz = idx[d_in]
                for r in range(nnz):
                    i = idx[r]
                    grad[row + i] += dj * acts[0, i]
            else:
                for i in range(d_in):
                    grad[row + i] += dj * acts[k, i]
                    delta_next[i] += dj * theta[row + i]
        if k > 0:
            for i in range(d_in):
                delta[i] = delta_next[i]


@numba.njit(cache=True, fastmath=True, error_model="numpy")
def _finetune_kernel(theta, adam_m, adam_v, step0, dims, cutoffs, is_bias, X1, X2, y, order,
                     batch_size, lr, l2, clip, q, use_gce, scale, beta1, beta2, eps,
                     epoch_loss, epoch_acc):
    n_par = theta.shape[0]
    L = dims.shape[0] - 1
    maxw = 0
    for k in range(L + 1):
        if dims[k] > maxw:
            maxw = dims[k]
    acts1 = np.zeros((L + 1, maxw))
    acts2 = np.zeros((L + 1, maxw))
    pre1 = np.zeros((L, maxw))
    pre2 = np.zeros((L, maxw))
    delta = np.zeros(maxw)
    delta_next = np.zeros(maxw)
    grad = np.zeros(n_par)
    idx1 = np.zeros(dims[0] + 1, dtype=np.int64)
    idx2 = np.zeros(dims[0] + 1, dtype=np.int64)
    # box constraints: weights in [0, inf), biases in (-inf, 0]
    lower = np.where(is_bias, -1e300, 0.0)
    upper = np.where(is_bias, 0.0, 1e300)
    offs = np.empty(L, dtype=np.int64)
    off = 0
    for k in range(L):
        offs[k] = off
        off += dims[k] * dims[k + 1]
        if k < L - 1:
            off += dims[k + 1]
    step = step0
    n_epochs = order.shape[0]
    n = order.shape[1]
    for e in range(n_epochs):
        loss_sum = 0.0
        correct = 0.0
        start = 0
        while start < n:
            stop = min(start + batch_size, n)
            bsz = stop - start
            for s in range(start, stop):
                i = order[e, s]
                v1 = _net_forward(theta, dims, cutoffs, X1[i], acts1, pre1, idx1)
                v2 = _net_forward(theta, dims, cutoffs, X2[i], acts2, pre2, idx2)
                d = scale * (v1 - v2)
                if y[i] < 0.5:
                    d = -d
                # probability assigned to the labelled winner
                if d >= 0:
                    pc = 1.0 / (1.0 + math.exp(-d))
                else:
                    ed = math.exp(d)
                    pc = ed / (1.0 + ed)
                if (v1 > v2 and y[i] > 0.5) or (v1 < v2 and y[i] < 0.5):
                    correct += 1.0
                pcl = max(pc, 1e-12)
                if use_gce:
                    loss_sum += (1.0 - pcl ** q) / q
                    dd = -(pcl ** q) * (1.0 - pc)
                else:
                    loss_sum += -math.log(pcl)
                    dd = -(1.0 - pc)
                # dL/dv1 in the labelled direction
                g1 = dd * scale / bsz
                if y[i] < 0.5:
                    g1 = -g1
                _net_backward(theta, dims, cutoffs, acts1, pre1, g1, grad, delta, delta_next, offs, idx1)
                _net_backward(theta, dims, cutoffs, acts2, pre2, -g1, grad, delta, delta_next, offs, idx2)
            sq = 0.0
            for p in range(n_par):
                gp = grad[p] + 2.0 * l2 * theta[p]
                grad[p] = gp
                sq += gp * gp
            norm = math.sqrt(sq)
            c = 1.0
            if norm > clip:
                c = clip / norm
            step += 1
            bc1 = 1.0 - beta1 ** step
            bc2 = 1.0 - beta2 ** step
            step_size = lr / bc1
            inv_bc2 = 1.0 / bc2
            for p in range(n_par):
                g = grad[p] * c
                mp = beta1 * adam_m[p] + (1.0 - beta1) * g
                vp = beta2 * adam_v[p] + (1.0 - beta2) * g * g
                adam_m[p] = mp
                adam_v[p] = vp
                th = theta[p] - step_size * mp / (math.sqrt(vp * inv_bc2) + eps)
                theta[p] = min(max(th, lower[p]), upper[p])
                grad[p] = 0.0
            start = stop
        epoch_loss[e] = loss_sum / n
        epoch_acc[e] = correct / n
    return step


def train_comparisons(params: MvnnParams, arch: MvnnArchitecture, dataset: ComparisonDataset,
                      config: TrainConfig, adam: AdamState | None = None, rng=None,
                      log: "TrainingLog | None" = None) -> MvnnParams:
    """Bradley-Terry fine-tuning for ``config.class_epochs`` epochs, in place.

    Each epoch visits the comparisons in a fresh random order in minibatches
    of ``config.class_batch_size``; every step adds the L2 term, clips the
    global gradient norm, takes an Adam step and projects onto the feasible
    set.
    """
    n = len(dataset)
    if n == 0 or config.class_epochs == 0:
        return params
    rng = np.random.default_rng(rng)
    theta = params.flatten()
    adam = adam or AdamState.zeros_like(theta)
    dims, cutoffs, is_bias = _layout(arch)
    scale_in = arch.input_scale
    X1 = np.ascontiguousarray(dataset.X1 * scale_in)
    X2 = np.ascontiguousarray(dataset.X2 * scale_in)
    order = np.stack([rng.permutation(n) for _ in range(config.class_epochs)]).astype(np.int64)
    losses = np.zeros(config.class_epochs)
    accs = np.zeros(config.class_epochs)
    adam.step = int(_finetune_kernel(
        theta, adam.m, adam.v, adam.step, dims, cutoffs, is_bias, X1, X2,
        np.ascontiguousarray(dataset.y), order, config.class_batch_size, config.class_lr,
        config.class_l2, config.grad_clip_norm, config.q, config.loss == "gce",
        config.comparison_scale, adam.beta1, adam.beta2, adam.eps, losses, accs))
    params.unflatten_into(theta)
    for e in range(config.class_epochs):
        _check_finite(float(losses[e]), "comparison", e, params)
        if log is not None:
            log.record(epoch=e, phase="comparison", loss=float(losses[e]),
                       pairwise_accuracy=float(accs[e]))
    return params


@dataclass
class TrainingLog:
    """Append-only training curve; optionally mirrored to a JSON-lines file."""

    path: str | None = None
    records: list = field(default_factory=list)
    context: dict = field(default_factory=dict)

    def record(self, **rec) -> None:
        rec = {**self.context, **rec}
        self.records.append(rec)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def pairwise_accuracy(v1, v2, y) -> float:
    """Fraction of comparisons whose predicted winner matches the label."""
    v1, v2, y = np.asarray(v1), np.asarray(v2), np.asarray(y)
    if len(y) == 0:
        return float("nan")
    return float(np.mean(np.where(y > 0.5, v1 > v2, v1 < v2)))


def config_to_dict(config: TrainConfig) -> dict:
    return asdict(config)
