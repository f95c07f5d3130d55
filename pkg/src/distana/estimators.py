"""Scikit-learn style front end for training and rolling out sequence models."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import autograd as ag
from .checkpoint import Checkpoint
from .evaluation import EvalConfig, closed_loop, evaluate, induce_and_roll, teacher_force
from .models import MODEL_IDS
from .trainer import TrainConfig, train
from .validation import check_sequence, check_sequences


class SequenceForecaster(BaseEstimator):
    """Next-frame forecaster over ``(T, H, W)`` wave sequences.

    Parameters
    ----------
    model : str
        One of ``distana4``, ``distana24``, ``convlstm2``, ``convlstm8``,
        ``tcn121``, ``tcn191``.
    epochs, lr : training schedule (Adam, one step per sequence).
    train_snr : float
        Noise level applied to the training sequences.
    n_seeds : int
        Independent training runs; the one with the lowest final loss is kept.
    random_state : int
        First seed.

    Attributes
    ----------
    checkpoint_ : Checkpoint
    report_ : TrainReport
    """

    def __init__(self, model: str = "distana4", epochs: int = 200, lr: float = 0.001, train_snr: float = 1e5,
                 n_seeds: int = 1, random_state: int = 0):
        self.model = model
        self.epochs = epochs
        self.lr = lr
        self.train_snr = train_snr
        self.n_seeds = n_seeds
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        if self.model not in MODEL_IDS:
            raise ValueError(f"unknown model {self.model!r}; choose from {', '.join(MODEL_IDS)}")
        return TrainConfig(model=self.model, epochs=self.epochs, lr=self.lr, train_snr=self.train_snr,
                           n_seeds=self.n_seeds, seed=self.random_state)

    def fit(self, X, y=None):
        """Train on clean sequences ``X`` of shape ``(n, T, H, W)``."""
        X = check_sequences(X, min_length=2)
        ckpts, report = train(X, self._train_config())
        if not ckpts:
            raise RuntimeError(f"every training seed diverged: {report.failures}")
        finals = [report.curves[c.meta["seed"]][-1] for c in ckpts]
        self.checkpoint_ = ckpts[int(np.argmin(finals))]
        self.report_ = report
        return self

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> "SequenceForecaster":
        est = cls(model=checkpoint.model_id)
        for key in ("train_snr", "epochs"):
            if key in checkpoint.meta:
                setattr(est, key, checkpoint.meta[key])
        est.checkpoint_ = checkpoint
        return est

    def predict(self, X):
        """One-step teacher-forced predictions: frame ``t`` predicts ``t + 1``."""
        check_is_fitted(self, "checkpoint_")
        X = check_sequence(X)
        net, params = self.checkpoint_.network, self.checkpoint_.tensors()
        state = net.initial_state(*X.shape[1:])
        out = np.empty_like(X)
        with ag.no_grad():
            for t, frame in enumerate(X):
                state = net.step(params, state, frame)
                out[t] = state.prediction.data
        return out

    def rollout(self, X, n_steps: int = 120):
        """Teacher-force every frame of ``X``, then run ``n_steps`` closed-loop frames."""
        check_is_fitted(self, "checkpoint_")
        X = check_sequence(X)
        state = teacher_force(self.checkpoint_, X, X.shape[0])
        return closed_loop(self.checkpoint_, state, n_steps)

    def induce_and_roll(self, X, mode: str = "tf", **kwargs):
        """Evaluation protocol on one noisy sequence; returns the closed-loop frames."""
        check_is_fitted(self, "checkpoint_")
        return induce_and_roll(self.checkpoint_, check_sequence(X), EvalConfig(mode=mode, **kwargs))

    def score(self, X, y=None, **kwargs):
        """Negative mean closed-loop DTW on clean test sequences (higher is better)."""
        check_is_fitted(self, "checkpoint_")
        X = check_sequences(X)
        cfg = EvalConfig(n_sequences=len(X), **kwargs)
        return -evaluate(self.checkpoint_, X, cfg).mean_dtw
