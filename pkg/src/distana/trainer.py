"""Noisy-data training loop: teacher forcing, MSE, one Adam step per sequence."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import autograd as ag
from .checkpoint import Checkpoint
from .models import build_network
from .optim import Adam
from .validation import check_positive, check_sequences
from .wavegen import noise_like

log = logging.getLogger(__name__)

SNR_GRID = (0.25, 0.5, 1.0, 2.0, 4.0, 10.0, 100.0, 1e3, 1e5)


class TrainingDiverged(RuntimeError):
    def __init__(self, msg: str, epoch: int, seed: int):
        super().__init__(msg)
        self.epoch = epoch
        self.seed = seed


@dataclass
class TrainConfig:
    model: str = "distana4"
    epochs: int = 200
    lr: float = 0.001
    train_snr: float = 1e5
    n_seeds: int = 10
    seed: int = 0
    fresh_noise: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.lr >= 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        check_positive(self.train_snr, "train_snr")
        if self.n_seeds < 1:
            raise ValueError(f"n_seeds must be >= 1, got {self.n_seeds}")

    def run_seeds(self) -> list[int]:
        return [self.seed + k for k in range(self.n_seeds)]


@dataclass
class TrainReport:
    config: TrainConfig
    curves: dict[int, list[float]] = field(default_factory=dict)
    seconds: dict[int, float] = field(default_factory=dict)
    failures: dict[int, str] = field(default_factory=dict)

    def final(self) -> np.ndarray:
        return np.array([c[-1] for s, c in sorted(self.curves.items()) if s not in self.failures])

    @property
    def final_mean(self) -> float:
        f = self.final()
        return float(f.mean()) if f.size else float("nan")

    @property
    def final_std(self) -> float:
        f = self.final()
        return float(f.std()) if f.size > 1 else 0.0

    def rows(self):
        for seed, curve in sorted(self.curves.items()):
            for epoch, mse in enumerate(curve):
                yield epoch, seed, mse

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "seed", "mse"])
            for epoch, seed, mse in self.rows():
                w.writerow([epoch, seed, repr(float(mse))])


def _noisy_copies(clean: np.ndarray, snr: float, rng: np.random.Generator) -> np.ndarray:
    return np.stack([s + noise_like(s, snr, rng) for s in clean])


def train_one(clean: np.ndarray, config: TrainConfig, seed: int, callback=None) -> tuple[Checkpoint, list[float]]:
    """Train a fresh model with one seed; returns the checkpoint and per-epoch mean MSE.

    Each epoch visits every sequence once in a seed-dependent order.  Inputs
    and targets are both taken from the noisy sequence.
    """
    clean = check_sequences(clean, min_length=2)
    net = build_network(config.model)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    noise_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    ckpt = Checkpoint(net, net.init_params(rng), {"train_snr": config.train_snr, "seed": seed})
    params = ckpt.tensors(requires_grad=True)
    opt = Adam(params, lr=config.lr)
    noisy = None if config.fresh_noise else _noisy_copies(clean, config.train_snr, noise_rng)
    curve = []
    for epoch in range(config.epochs):
        if config.fresh_noise:
            noisy = _noisy_copies(clean, config.train_snr, noise_rng)
        order = rng.permutation(len(clean))
        total = 0.0
        for k in order:
            opt.zero_grad()
            with ag.Tape():
                loss = net.teacher_forced_loss(params, noisy[k])
                value = float(loss.data)
                if not np.isfinite(value):
                    raise TrainingDiverged(f"loss {value} at epoch {epoch}, seed {seed}", epoch, seed)
                ag.backward(loss)
            opt.step()
            total += value
        curve.append(total / len(clean))
        log.debug("%s seed %d epoch %d mse %.3e", config.model, seed, epoch, curve[-1])
        if callback is not None:
            callback(epoch, seed, curve[-1])
    ckpt.meta["epochs"] = config.epochs
    return ckpt, curve


def train(clean, config: TrainConfig, callback=None) -> tuple[list[Checkpoint], TrainReport]:
    """Run every seed of ``config``; failed seeds are recorded, not raised."""
    clean = check_sequences(clean, min_length=2)
    report = TrainReport(config)
    ckpts = []
    for seed in config.run_seeds():
        t0 = time.perf_counter()
        try:
            ckpt, curve = train_one(clean, config, seed, callback)
        except TrainingDiverged as exc:
            report.failures[seed] = str(exc)
            log.warning("seed %d diverged: %s", seed, exc)
            continue
        finally:
            report.seconds[seed] = time.perf_counter() - t0
        report.curves[seed] = curve
        ckpts.append(ckpt)
    return ckpts, report


def sweep_snr(models: Sequence[str], snrs: Sequence[float], clean, base: TrainConfig | None = None):
    """Final training MSE (mean, std over seeds) for every (model, SNR) pair."""
    base = base or TrainConfig()
    rows = []
    for model in models:
        for snr in snrs:
            cfg = TrainConfig(**{**asdict(base), "model": model, "train_snr": float(snr)})
            _, report = train(clean, cfg)
            rows.append({
                "model": model,
                "train_snr": float(snr),
                "n_seeds": len(report.curves),
                "mean_mse": report.final_mean,
                "std_mse": report.final_std,
                "failures": len(report.failures),
            })
    return rows


def write_sweep_csv(rows, path) -> None:
    fields = ["model", "train_snr", "n_seeds", "mean_mse", "std_mse", "failures"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
