import os
from pathlib import Path

import pytest

from distana.checkpoint import Checkpoint
from distana.trainer import TrainConfig, train_one
from distana.wavegen import WaveConfig, dataset_digest, make_dataset

TRAIN_DATA_SEED = 1
TEST_DATA_SEED = 999
CACHE = Path(os.environ.get("DISTANA_TEST_CACHE", Path(__file__).resolve().parent.parent / ".acceptance_cache"))

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    lines = request.config.stash[_LINES_KEY]

    def report(name: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return report


@pytest.fixture(scope="session")
def train_set():
    return make_dataset(100, WaveConfig(length=40), seed=TRAIN_DATA_SEED)


@pytest.fixture(scope="session")
def test_set():
    return make_dataset(20, WaveConfig(length=150), seed=TEST_DATA_SEED)


@pytest.fixture(scope="session")
def trained(train_set):
    """Train (or load from the on-disk cache) one checkpoint per configuration.

    Returns ``(checkpoint, loss_curve)``.  The cache key covers the model,
    SNR, epochs, seed and a digest of the training data.
    """
    digest = dataset_digest(train_set)[:12]

    def get(model: str, snr: float, epochs: int, seed: int):
        key = f"{model}_snr{snr:g}_ep{epochs}_seed{seed}_{digest}"
        ck_path, curve_path = CACHE / f"{key}.ckpt", CACHE / f"{key}.curve"
        if ck_path.exists() and curve_path.exists():
            ck = Checkpoint.load(ck_path)
            curve = [float(x) for x in curve_path.read_text().split()]
        else:
            ck, curve = train_one(train_set, TrainConfig(model=model, train_snr=snr, epochs=epochs), seed)
            CACHE.mkdir(parents=True, exist_ok=True)
            ck.save(ck_path)
            curve_path.write_text("\n".join(repr(x) for x in curve) + "\n")
        ck.meta.update(train_snr=snr, seed=seed, epochs=epochs)
        return ck, curve

    return get


