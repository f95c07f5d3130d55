"""Active tuning: infer a model's input frames by gradient descent on its output error.

The model never receives an observed frame as input.  Over a sliding window of
the last ``history`` steps the input frames are adjusted so that the model's
predictions, run from the frozen state at the window start, match the noisy
observations.  Step ``tau`` of the model consumes input ``x[tau]`` and its
prediction is compared with observation ``tau + 1``, the same pairing teacher
forcing trains on.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import autograd as ag
from .autograd import Tensor
from .checkpoint import Checkpoint
from .models import StepState
from .validation import check_positive, check_sequence


class TuningDiverged(RuntimeError):
    pass


#: published (eta, H) per (train SNR, test SNR) for DISTANA4
TABLE1_SETTINGS = {
    (0.25, 0.25): (0.400, 1), (0.25, 4.0): (0.350, 2), (0.25, 100.0): (0.500, 5), (0.25, 1e5): (0.500, 5),
    (4.0, 0.25): (0.020, 25), (4.0, 4.0): (0.100, 25), (4.0, 100.0): (0.100, 25), (4.0, 1e5): (0.500, 1),
    (100.0, 0.25): (0.010, 25), (100.0, 4.0): (0.070, 10), (100.0, 100.0): (0.400, 4), (100.0, 1e5): (0.300, 1),
    (1e5, 0.25): (0.002, 25), (1e5, 4.0): (0.004, 25), (1e5, 100.0): (0.005, 25), (1e5, 1e5): (0.300, 2),
}


@dataclass(frozen=True)
class ATConfig:
    eta: float = 0.1
    history: int = 1
    cycles: int = 30
    init: str = "zero"
    seed: int = 0
    #: step multiplier per grid cell; None applies eta to the mean loss as is
    cell_gain: float | None = 0.25

    def step_size(self, height: int, width: int) -> float:
        """Gradient step applied to the mean window loss on an ``height x width`` grid.

        The mean loss spreads its gradient over all cells, so a fixed eta would
        shrink the per-cell update as the grid grows.  Scaling by the cell
        count keeps eta comparable across grid sizes.
        """
        if self.cell_gain is None:
            return self.eta
        return self.eta * self.cell_gain * height * width

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError(f"eta must be non-negative, got {self.eta}")
        if self.history < 1 or self.cycles < 1:
            raise ValueError(f"need history >= 1 and cycles >= 1, got H={self.history} c={self.cycles}")
        if self.init not in ("zero", "random"):
            raise ValueError(f"init must be 'zero' or 'random', got {self.init!r}")
        if self.cell_gain is not None and not self.cell_gain > 0:
            raise ValueError(f"cell_gain must be positive or None, got {self.cell_gain}")


@dataclass
class ATWindow:
    start: StepState
    inputs: list[np.ndarray]
    targets: list[np.ndarray]

    def __len__(self) -> int:
        return len(self.inputs)


@dataclass
class ATResult:
    state: StepState
    inputs: np.ndarray
    trace: list[tuple[int, int, float]] = field(default_factory=list)
    step_seconds: list[float] = field(default_factory=list)


def window_loss(model: Checkpoint, window: ATWindow, inputs: list[Tensor]) -> Tensor:
    """Mean squared prediction error over all cells and window steps."""
    net, params = model.network, model.tensors(requires_grad=False)
    state = window.start
    total = None
    for x, target in zip(inputs, window.targets):
        state = net.step(params, state, x)
        err = ag.mse(state.prediction, Tensor(target))
        total = err if total is None else ag.add(total, err)
    return ag.scale(total, 1.0 / len(inputs))


def at_cycle(model: Checkpoint, window: ATWindow, eta: float) -> float:
    """One forward/backward pass; updates ``window.inputs`` in place.

    Returns the window loss before the update.  Only the inputs receive
    gradients.
    """
    xs = [Tensor(x, requires_grad=True) for x in window.inputs]
    with ag.Tape():
        loss = window_loss(model, window, xs)
        value = float(loss.data)
        if not np.isfinite(value):
            raise TuningDiverged(f"non-finite window loss {value} over {len(window)} steps")
        ag.backward(loss)
    for x, t in zip(window.inputs, xs):
        if t.grad is not None:
            x -= eta * t.grad
    return value


def _evaluate_loss(model: Checkpoint, window: ATWindow) -> float:
    with ag.Tape(), ag.no_grad():
        return float(window_loss(model, window, [Tensor(x) for x in window.inputs]).data)


def at_induce(model: Checkpoint, noisy, config: ATConfig, n_steps: int | None = None, trace=None) -> ATResult:
    """Run active tuning over the first ``n_steps`` noisy observations.

    Inputs ``x[0] .. x[n_steps - 2]`` are tuned against observations
    ``1 .. n_steps - 1``; observation 0 only fixes the time origin.  The
    window grows to ``history`` steps and then slides; once full, the oldest
    optimized input is committed into the window-start state.  The returned
    state has consumed every optimized input, so its pending prediction is the
    model's estimate of observation ``n_steps - 1``.

    ``trace`` (a list) receives ``(step, cycle, loss)`` rows; cycle 0 is the
    loss before the first update, cycle ``c`` the loss after the last.
    """
    noisy = check_sequence(noisy)
    n_steps = noisy.shape[0] if n_steps is None else n_steps
    if n_steps > noisy.shape[0]:
        raise ValueError(f"at_induce: {n_steps} steps requested, sequence has {noisy.shape[0]}")
    net = model.network
    H, W = noisy.shape[1:]
    rng = np.random.default_rng(config.seed)
    step = config.step_size(H, W)
    window = ATWindow(net.initial_state(H, W), [], [])
    committed: list[np.ndarray] = []
    result = ATResult(window.start, np.zeros((max(n_steps - 1, 0), H, W)))
    rows = result.trace
    for t in range(n_steps - 1):
        t0 = time.perf_counter()
        x0 = np.zeros((H, W)) if config.init == "zero" else rng.uniform(-0.1, 0.1, (H, W))
        window.inputs.append(x0)
        window.targets.append(noisy[t + 1])
        for k in range(config.cycles):
            rows.append((t, k, at_cycle(model, window, step)))
        rows.append((t, config.cycles, _evaluate_loss(model, window)))
        if len(window) == config.history:
            x = window.inputs.pop(0)
            window.targets.pop(0)
            committed.append(x)
            with ag.no_grad():
                window.start = net.step(model.tensors(), window.start, x)
        result.step_seconds.append(time.perf_counter() - t0)
    state = window.start
    with ag.no_grad():
        for x in window.inputs:
            state = net.step(model.tensors(), state, x)
    committed.extend(window.inputs)
    result.state = state
    if committed:
        result.inputs = np.stack(committed)
    if trace is not None:
        trace.extend(rows)
    return result


def at_grid_search(model: Checkpoint, etas, histories, validation_clean, test_snr: float,
                   cycles: int = 30, seed: int = 0, **eval_kwargs) -> tuple[float, int]:
    """Pick the (eta, H) pair with the lowest mean closed-loop DTW.

    Ties go to the smaller history, then the smaller eta.
    """
    from .evaluation import EvalConfig, evaluate

    pairs = sorted({(int(h), float(e)) for e in etas for h in histories})
    if not pairs:
        raise ValueError("at_grid_search needs at least one eta and one history")
    if len(pairs) == 1:
        h, e = pairs[0]
        return e, h
    best = None
    for h, e in pairs:
        cfg = EvalConfig(mode="at", eta=e, history=h, cycles=cycles, test_snr=test_snr, seed=seed,
                         n_sequences=len(validation_clean), **eval_kwargs)
        score = evaluate(model, validation_clean, cfg).mean_dtw
        if best is None or score < best[0]:
            best = (score, h, e)
    return best[2], best[1]


class ActiveTuner(BaseEstimator):
    """Estimator-style front end: ``transform`` returns denoised input estimates."""

    def __init__(self, eta: float = 0.1, history: int = 1, cycles: int = 30, init: str = "zero",
                 cell_gain: float | None = 0.25, random_state: int = 0):
        self.eta = eta
        self.cell_gain = cell_gain
        self.history = history
        self.cycles = cycles
        self.init = init
        self.random_state = random_state

    def _config(self) -> ATConfig:
        return ATConfig(self.eta, self.history, self.cycles, self.init, self.random_state, self.cell_gain)

    def fit(self, model: Checkpoint, y=None):
        self._config()
        self.model_ = model
        return self

    def induce(self, noisy, n_steps: int | None = None) -> ATResult:
        return at_induce(self.model_, noisy, self._config(), n_steps)

    def transform(self, noisy):
        """Optimized input frames for each observation of ``noisy``."""
        return self.induce(noisy).inputs
