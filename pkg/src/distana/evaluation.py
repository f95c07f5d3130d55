"""Test-time protocol: activity induction, closed-loop rollout, DTW scoring."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from .checkpoint import Checkpoint
from .models import StepState
from .validation import check_positive, check_sequence, check_sequences
from .wavegen import noise_like


def dtw_batch(a, b) -> np.ndarray:
    """DTW distances between matching rows of ``a`` (n, T1) and ``b`` (n, T2).

    Absolute-difference local cost, full window, both ends matched.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[0] != b.shape[0] or a.shape[1] == 0 or b.shape[1] == 0:
        raise ValueError(f"dtw: incompatible batches {a.shape} and {b.shape}")
    n, T1 = a.shape
    T2 = b.shape[1]
    cost = np.abs(a[:, :, None] - b[:, None, :])  # (n, T1, T2)
    prev = np.cumsum(cost[:, 0, :], axis=1)
    for i in range(1, T1):
        row = np.empty((n, T2))
        row[:, 0] = prev[:, 0] + cost[:, i, 0]
        diag = np.minimum(prev[:, :-1], prev[:, 1:])  # min(D[i-1, j-1], D[i-1, j])
        ci = cost[:, i]
        for j in range(1, T2):
            row[:, j] = ci[:, j] + np.minimum(diag[:, j - 1], row[:, j - 1])
        prev = row
    return prev[:, -1]


def dtw(a, b) -> float:
    """Dynamic time warping distance between two 1-D series."""
    a, b = np.ravel(a), np.ravel(b)
    if a.size == 0 or b.size == 0:
        raise ValueError("dtw: series must be non-empty")
    return float(dtw_batch(a[None], b[None])[0])


def cellwise_dtw(pred, clean) -> float:
    """Mean over grid cells of the DTW between per-cell time series."""
    pred, clean = np.asarray(pred), np.asarray(clean)
    T = pred.shape[0]
    return float(dtw_batch(pred.reshape(T, -1).T, clean.reshape(clean.shape[0], -1).T).mean())


def cellwise_correlation(pred, clean) -> float:
    """Mean over cells of the Pearson correlation of per-cell time series.

    Cells where either series is constant score 0.
    """
    p = np.asarray(pred).reshape(len(pred), -1)
    c = np.asarray(clean).reshape(len(clean), -1)
    p = p - p.mean(axis=0)
    c = c - c.mean(axis=0)
    denom = np.sqrt((p * p).sum(axis=0) * (c * c).sum(axis=0))
    corr = np.divide((p * c).sum(axis=0), denom, out=np.zeros(p.shape[1]), where=denom > 0)
    return float(corr.mean())


def teacher_force(model: Checkpoint, noisy, n_steps: int, state: StepState | None = None) -> StepState:
    """Feed the first ``n_steps`` frames of ``noisy``; the state holds the last prediction."""
    noisy = np.asarray(noisy, dtype=np.float64)
    if n_steps > noisy.shape[0]:
        raise ValueError(f"teacher_force: {n_steps} steps requested, sequence has {noisy.shape[0]}")
    net, params = model.network, model.tensors()
    state = state or net.initial_state(*noisy.shape[1:])
    with ag.no_grad():
        for t in range(n_steps):
            state = net.step(params, state, noisy[t])
    return state


def closed_loop(model: Checkpoint, state: StepState, n_steps: int) -> np.ndarray:
    """Free-running rollout of ``n_steps`` frames.

    The first frame is the prediction already held by ``state``; each later
    frame comes from feeding the previous prediction back as input.
    """
    net, params = model.network, model.tensors()
    H, W = state.prediction.shape
    out = np.empty((n_steps, H, W))
    with ag.no_grad():
        for k in range(n_steps):
            out[k] = state.prediction.data
            if k + 1 < n_steps:
                state = net.step(params, state, state.prediction)
    return out


@dataclass
class EvalConfig:
    mode: str = "tf"
    induction_steps: int = 30
    closed_loop_steps: int = 120
    test_snr: float = 1e5
    n_sequences: int = 20
    eta: float | None = None
    history: int | None = None
    cycles: int = 30
    seed: int = 0

    def __post_init__(self):
        self.mode = self.mode.lower()
        if self.mode not in ("tf", "at"):
            raise ValueError(f"mode must be 'tf' or 'at', got {self.mode!r}")
        if self.mode == "at" and (self.eta is None or self.history is None):
            raise ValueError("active tuning needs eta and history")
        check_positive(self.test_snr, "test_snr")
        if self.induction_steps < 0 or self.closed_loop_steps < 1:
            raise ValueError("need induction_steps >= 0 and closed_loop_steps >= 1")


@dataclass
class EvalReport:
    model_id: str
    config: EvalConfig
    dtw: list[float] = field(default_factory=list)
    correlation: list[float] = field(default_factory=list)
    seconds: float = 0.0
    train_snr: float | None = None

    @property
    def mean_dtw(self) -> float:
        return float(np.mean(self.dtw))

    @property
    def std_dtw(self) -> float:
        return float(np.std(self.dtw)) if len(self.dtw) > 1 else 0.0

    @property
    def mean_correlation(self) -> float:
        return float(np.mean(self.correlation))

    def row(self) -> dict:
        c = self.config
        return {
            "model": self.model_id,
            "train_snr": "" if self.train_snr is None else self.train_snr,
            "test_snr": c.test_snr,
            "mode": c.mode,
            "eta": "" if c.eta is None else c.eta,
            "history": "" if c.history is None else c.history,
            "mean_dtw": self.mean_dtw,
            "std_dtw": self.std_dtw,
        }


def induce_and_roll(model: Checkpoint, noisy: np.ndarray, config: EvalConfig, trace=None) -> np.ndarray:
    """Induce activity from noisy frames, then return the closed-loop rollout.

    The rollout covers frames ``n .. n + closed_loop_steps - 1`` where ``n`` is
    the number of induction steps; no frame at or beyond ``n`` is read.
    """
    n, m = config.induction_steps, config.closed_loop_steps
    observed = noisy[:n]
    if config.mode == "tf":
        state = teacher_force(model, observed, n)
        return closed_loop(model, state, m)
    from .active_tuning import ATConfig, at_induce

    at = ATConfig(eta=config.eta, history=config.history, cycles=config.cycles)
    result = at_induce(model, observed, at, n, trace=trace)
    # the tuned state holds the estimate of frame n-1; drop it
    return closed_loop(model, result.state, m + 1)[1:]


def evaluate(model: Checkpoint, test_set, config: EvalConfig, trace=None) -> EvalReport:
    """Score a model on clean test sequences corrupted at ``config.test_snr``.

    Clean data is only read by the scorer, after the rollout is complete.
    """
    if not isinstance(model, Checkpoint):
        raise TypeError(f"evaluate expects a Checkpoint, got {type(model).__name__}")
    test_set = check_sequences(test_set)
    n_total = config.induction_steps + config.closed_loop_steps
    if test_set.shape[1] < n_total:
        raise ValueError(f"test sequences have {test_set.shape[1]} frames, protocol needs {n_total}")
    seqs = test_set[: config.n_sequences]
    report = EvalReport(model.model_id, config, train_snr=model.meta.get("train_snr"))
    seeds = np.random.SeedSequence(config.seed).spawn(len(seqs))
    t0 = time.perf_counter()
    for clean, ss in zip(seqs, seeds):
        noisy = clean + noise_like(clean, config.test_snr, np.random.default_rng(ss))
        rollout = induce_and_roll(model, noisy, config, trace=trace)
        ref = clean[config.induction_steps:n_total]
        report.dtw.append(cellwise_dtw(rollout, ref))
        report.correlation.append(cellwise_correlation(rollout, ref))
    report.seconds = time.perf_counter() - t0
    return report
