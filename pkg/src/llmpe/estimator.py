"""Scikit-learn style wrapper around an ensemble of monotone value networks."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .mvnn import (MvnnArchitecture, ensemble_outputs, initialize, load_checkpoint,
                   save_checkpoint)
from .training import (ComparisonDataset, RegressionDataset, TrainConfig, TrainingLog,
                       train_comparisons, train_regression_members)


class MVNNEnsembleRegressor(RegressorMixin, BaseEstimator):
    """Epistemic ensemble of monotone value networks.

    ``fit`` runs the cardinal regression phase on (bundle, value) pairs and
    ``fit_comparisons`` fine-tunes every member on the full set of pairwise
    preferences, by default restarting from the regression weights. ``predict`` is the ensemble mean;
    ``predict_var`` the population variance over members.

    Parameters
    ----------
    hidden_widths : tuple of int
        Widths of the hidden layers.
    cutoff : float
        Bounded-ReLU cutoff shared by every hidden layer.
    n_members : int
        Ensemble size, at least 2.
    reg_epochs, reg_lr, reg_l2 : regression-phase epochs, Adam rate, L2 weight.
    class_epochs, class_lr, class_l2 : comparison-phase epochs, Adam rate, L2 weight.
    class_batch_size : int
        Minibatch size of the comparison phase.
    grad_clip_norm : float
        Global gradient-norm cap in the comparison phase.
    loss : {"gce", "bce"}
        Comparison loss.
    q : float
        GCE exponent in (0, 1].
    comparison_scale : float or None
        Multiplier on the difference of normalised outputs inside the
        Bradley-Terry sigmoid. The default of 10 keeps the sigmoid out of
        saturation so the GCE gradient still reaches confidently misranked
        pairs. ``None`` uses ``target_scale_`` (raw value units).
    target_scale : float or None
        Regression targets are divided by this before training; ``None``
        uses the largest target seen by ``fit``.
    finetune_from : {"regression", "current"}
        Weights each ``fit_comparisons`` call starts from: the result of the
        regression phase, or whatever the previous call left behind.
    random_state : int or None
        Seed for initialisation and for shuffling comparisons.
    """

    def __init__(self, hidden_widths=(20, 20), cutoff=1.0, n_members=10, reg_epochs=500,
                 reg_lr=0.01, reg_l2=1e-5, class_epochs=10, class_lr=1e-3, class_l2=1e-4,
                 class_batch_size=1, grad_clip_norm=0.2, loss="gce", q=0.3,
                 comparison_scale=10.0, target_scale=None, finetune_from="regression",
                 random_state=None):
        self.hidden_widths = hidden_widths
        self.cutoff = cutoff
        self.n_members = n_members
        self.reg_epochs = reg_epochs
        self.reg_lr = reg_lr
        self.reg_l2 = reg_l2
        self.class_epochs = class_epochs
        self.class_lr = class_lr
        self.class_l2 = class_l2
        self.class_batch_size = class_batch_size
        self.grad_clip_norm = grad_clip_norm
        self.loss = loss
        self.q = q
        self.comparison_scale = comparison_scale
        self.target_scale = target_scale
        self.finetune_from = finetune_from
        self.random_state = random_state

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            reg_epochs=self.reg_epochs, reg_lr=self.reg_lr, reg_l2=self.reg_l2,
            class_epochs=self.class_epochs, class_lr=self.class_lr, class_l2=self.class_l2,
            class_batch_size=self.class_batch_size, grad_clip_norm=self.grad_clip_norm,
            loss=self.loss, q=self.q, comparison_scale=self._bt_scale(),
        )

    def _bt_scale(self) -> float:
        if self.comparison_scale is not None:
            return float(self.comparison_scale)
        return float(getattr(self, "target_scale_", 1.0))

    def _init_members(self, n_features: int):
        if self.n_members < 2:
            raise ValueError("an ensemble needs at least two members")
        widths = tuple(self.hidden_widths)
        self.arch_ = MvnnArchitecture(n_features, widths, (float(self.cutoff),) * len(widths))
        seq = np.random.SeedSequence(self.random_state)
        init_seq, shuffle_seq = seq.spawn(2)
        self.members_ = [initialize(self.arch_, s) for s in init_seq.spawn(self.n_members)]
        self._shuffle_rng = np.random.default_rng(shuffle_seq)
        self.n_features_in_ = n_features
        self.n_comparisons_seen_ = 0

    def fit(self, X, y, log: TrainingLog | None = None):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        config = self.train_config()
        self._init_members(X.shape[1])
        scale = self.target_scale if self.target_scale is not None else float(np.max(y))
        self.target_scale_ = scale if scale > 0 else 1.0
        data = RegressionDataset(X, y / self.target_scale_)
        train_regression_members(self.members_, self.arch_, data, config, log=log)
        self.reg_members_ = [p.copy() for p in self.members_]
        return self

    def fit_comparisons(self, X1, X2, y, log: TrainingLog | None = None):
        """Fine-tune every member on comparisons; ``y == 1`` means ``X1`` won.

        Can be called before ``fit``, in which case members start from their
        random initialisation with unit target scale.
        """
        if not hasattr(self, "members_"):
            X1a = check_array(X1, dtype=float)
            self._init_members(X1a.shape[1])
            self.target_scale_ = self.target_scale or 1.0
            self.reg_members_ = [p.copy() for p in self.members_]
        if len(np.asarray(y)) == 0:
            return self
        X1 = check_array(X1, dtype=float)
        X2 = check_array(X2, dtype=float)
        self._check_n_features(X1)
        data = ComparisonDataset(X1, X2, y)
        config = self.train_config()
        if self.finetune_from == "regression":
            self.members_ = [p.copy() for p in self.reg_members_]
        elif self.finetune_from != "current":
            raise ValueError(f"finetune_from must be 'current' or 'regression', got {self.finetune_from!r}")
        seeds = self._shuffle_rng.integers(0, 2**63 - 1, size=len(self.members_))
        for j, (p, s) in enumerate(zip(self.members_, seeds)):
            if log is not None:
                log.context["member"] = j
            train_comparisons(p, self.arch_, data, config, rng=s, log=log)
        self.n_comparisons_seen_ = len(data)
        return self

    def _check_n_features(self, X):
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")

    def predict_members(self, X) -> np.ndarray:
        """Member outputs in target units, shape ``(n_members, n_samples)``."""
        check_is_fitted(self, "members_")
        X = check_array(X, dtype=float)
        self._check_n_features(X)
        return ensemble_outputs(self.members_, self.arch_, X) * self.target_scale_

    def bt_utilities(self, X) -> np.ndarray:
        """Member outputs on the scale used inside the Bradley-Terry sigmoid."""
        return self.predict_members(X) * (self._bt_scale() / self.target_scale_)

    def predict(self, X) -> np.ndarray:
        return self.predict_members(X).mean(axis=0)

    def predict_var(self, X) -> np.ndarray:
        return self.predict_members(X).var(axis=0)

    def save(self, path) -> None:
        check_is_fitted(self, "members_")
        save_checkpoint(path, self.arch_, self.members_,
                        extra={"params": _jsonable(self.get_params()),
                               "target_scale": self.target_scale_})

    @classmethod
    def load(cls, path) -> "MVNNEnsembleRegressor":
        arch, members, extra = load_checkpoint(path)
        params = dict(extra["params"])
        params["hidden_widths"] = tuple(params["hidden_widths"])
        est = cls(**params)
        est._init_members(arch.num_inputs)
        est.arch_, est.members_ = arch, members
        est.target_scale_ = extra["target_scale"]
        # the regression weights are not saved, so later fine-tunes start here
        est.reg_members_ = [p.copy() for p in members]
        return est


def _jsonable(params: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in params.items()}
