"""Circular-wave benchmark: leapfrog simulation, RMSA, calibrated noise."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import check_sequence, check_sequences


@dataclass(frozen=True)
class WaveConfig:
    """Parameters of one simulated sequence.

    ``source`` is the continuous (row, col) centre of the Gaussian bump; when
    ``None`` the centre of the grid is used.
    """

    height: int = 16
    width: int = 16
    length: int = 40
    courant: float = 0.5  # c_wave * dt / dx
    sigma: float = 0.5
    amplitude: float = 1.0
    source: tuple[float, float] | None = None
    normalize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.length < 1:
            raise ValueError(f"grid and length must be positive, got {self.length}x{self.height}x{self.width}")
        if not (0 < self.courant <= 1 / math.sqrt(2)):
            raise ValueError(f"CFL condition violated: courant={self.courant} > 1/sqrt(2)")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.source is not None:
            r, c = self.source
            if not (0 < r < self.height - 1 and 0 < c < self.width - 1):
                raise ValueError(f"source {self.source} not strictly inside {self.height}x{self.width} grid")

    @property
    def center(self) -> tuple[float, float]:
        if self.source is None:
            return ((self.height - 1) / 2, (self.width - 1) / 2)
        return self.source


def laplacian(u: np.ndarray) -> np.ndarray:
    """4-neighbour discrete Laplacian with zero values outside the grid."""
    p = np.pad(u, 1)
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * u


def leapfrog(u0: np.ndarray, steps: int, courant: float) -> np.ndarray:
    """Integrate u_tt = c^2 lap(u) from rest; returns ``steps`` frames starting with ``u0``.

    Cells outside the grid are held at zero (Dirichlet), which reflects the
    wave at the borders.
    """
    r2 = courant * courant
    out = np.empty((steps,) + u0.shape)
    prev = u0.copy()
    cur = u0.copy()
    out[0] = cur
    for t in range(1, steps):
        # first step reduces to u0 + r2*lap(u0) because u^{-1} = u^0
        nxt = 2.0 * cur - prev + r2 * laplacian(cur)
        prev, cur = cur, nxt
        out[t] = cur
    return out


def gaussian_bump(config: WaveConfig) -> np.ndarray:
    r0, c0 = config.center
    rows = np.arange(config.height, dtype=np.float64)[:, None] - r0
    cols = np.arange(config.width, dtype=np.float64)[None, :] - c0
    return config.amplitude * np.exp(-(rows**2 + cols**2) / (2.0 * config.sigma**2))


def simulate_wave(config: WaveConfig) -> np.ndarray:
    """Simulate one ``length x height x width`` wave sequence.

    With ``normalize`` the sequence is scaled to max |u| = 1 (all-zero
    sequences are returned unchanged).
    """
    seq = leapfrog(gaussian_bump(config), config.length, config.courant)
    if config.normalize:
        peak = np.abs(seq).max()
        if peak > 0:
            seq = seq / peak
    return seq


def rmsa(seq) -> float:
    """Root mean square amplitude over every entry of the sequence."""
    s = np.asarray(seq, dtype=np.float64)
    if s.size == 0:
        raise ValueError("rmsa of an empty sequence")
    return float(np.sqrt(np.mean(s * s)))


def noise_like(seq: np.ndarray, snr: float, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean Gaussian field with standard deviation rmsa(seq)/snr."""
    if not snr > 0:
        raise ValueError(f"target SNR must be positive, got {snr}")
    power = rmsa(seq)
    if power == 0.0:
        raise ValueError("cannot calibrate noise against a zero-power signal")
    return rng.normal(0.0, power / snr, size=np.shape(seq))


def add_noise(seq, snr: float, seed=None) -> np.ndarray:
    """Return ``seq`` plus Gaussian noise at signal-to-noise ratio ``snr``.

    ``seed`` may be an int or a :class:`numpy.random.Generator`.
    """
    s = check_sequence(seq)
    return s + noise_like(s, snr, np.random.default_rng(seed))


def measured_snr(clean, noisy) -> float:
    clean = np.asarray(clean, dtype=np.float64)
    return rmsa(clean) / rmsa(np.asarray(noisy, dtype=np.float64) - clean)


def make_dataset(n_sequences: int, template: WaveConfig | None = None, seed: int = 0) -> np.ndarray:
    """Clean sequences with a uniformly random interior source each.

    Returns an array ``(n_sequences, length, height, width)``.
    """
    if n_sequences < 1:
        raise ValueError(f"n_sequences must be >= 1, got {n_sequences}")
    template = template or WaveConfig()
    if template.height < 3 or template.width < 3:
        raise ValueError("random interior sources need a grid of at least 3x3")
    seeds = np.random.SeedSequence(seed).spawn(n_sequences)
    out = np.empty((n_sequences, template.length, template.height, template.width))
    for k, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        # open interval (1, side-2) keeps the centre strictly inside the grid
        r = rng.uniform(1.0, template.height - 2.0)
        c = rng.uniform(1.0, template.width - 2.0)
        cfg = replace(template, source=(float(r), float(c)), seed=int(ss.generate_state(1)[0]))
        out[k] = simulate_wave(cfg)
    return out


def dataset_digest(data) -> str:
    arr = np.ascontiguousarray(np.asarray(data, dtype="<f8"))
    return hashlib.sha256(arr.tobytes()).hexdigest()


class NoiseInjector(TransformerMixin, BaseEstimator):
    """Add Gaussian noise at a fixed SNR to each sequence of a batch.

    Each sequence is calibrated against its own RMSA.
    """

    def __init__(self, snr: float = 1e5, random_state=None):
        self.snr = snr
        self.random_state = random_state

    def fit(self, X, y=None):
        check_sequences(X)
        if not self.snr > 0:
            raise ValueError(f"snr must be positive, got {self.snr}")
        return self

    def transform(self, X):
        X = check_sequences(X)
        rng = np.random.default_rng(self.random_state)
        return np.stack([x + noise_like(x, self.snr, rng) for x in X])
