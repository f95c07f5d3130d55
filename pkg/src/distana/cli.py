"""Command line entry point: ``distana {gen,train,eval,report}``.

Every command writes into one output directory holding a ``manifest.json``.
Options can also come from a ``key=value`` file given with ``--config``;
explicit flags win over the file, the file wins over built-in defaults.
Without ``--out`` results go below ``$DISTANA_OUT`` (default ``runs``).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .active_tuning import TuningDiverged
from .checkpoint import Checkpoint, CheckpointError
from .evaluation import EvalConfig, evaluate, induce_and_roll
from .io import (
    FormatError,
    frame_strip,
    pgm_text,
    read_csv,
    read_kv,
    read_wavd,
    read_wavd_dir,
    write_kv,
    write_manifest,
    write_wavd,
)
from .models import MODEL_IDS
from .trainer import TrainConfig, train
from .wavegen import WaveConfig, make_dataset, noise_like

log = logging.getLogger("distana")

OUT_ENV = "DISTANA_OUT"
EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_ALL_FAILED = 0, 1, 2, 3

EVAL_FIELDS = ["model", "train_snr", "test_snr", "mode", "eta", "history", "mean_dtw", "std_dtw"]


class UsageError(Exception):
    pass


class RunError(Exception):
    pass


# option name -> (type, default); shared by flags and config files
OPTIONS = {
    "gen": {
        "sequences": (int, 100),
        "length": (int, 40),
        "grid": (int, 16),
        "seed": (int, 0),
    },
    "train": {
        "model": (str, "distana4"),
        "snr": (float, 1e5),
        "epochs": (int, 200),
        "lr": (float, 0.001),
        "seeds": (int, 10),
        "seed": (int, 0),
        "data": (str, None),
    },
    "eval": {
        "checkpoint": (str, None),
        "mode": (str, "tf"),
        "test_snr": (float, 1e5),
        "eta": (float, None),
        "history": (int, None),
        "cycles": (int, 30),
        "sequences": (int, 20),
        "induction": (int, 30),
        "closed_loop": (int, 120),
        "seed": (int, 0),
        "data": (str, None),
        "dump": (int, 0),
    },
    "report": {
        "step": (int, 15),
    },
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distana", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    helps = {
        "gen": "generate wave sequences as WAVD files",
        "train": "train a model on a generated data set",
        "eval": "teacher forcing or active tuning followed by a closed-loop rollout",
        "report": "merge evaluation tables and render frame strips",
    }
    for name, opts in OPTIONS.items():
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="key=value file with defaults for the options below")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV}/{name})")
        p.add_argument("--force", action="store_true", help="overwrite an existing run directory")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        for key, (typ, default) in opts.items():
            flag = "--" + key.replace("_", "-")
            kw = {"type": typ, "default": None, "help": f"default: {default}"}
            if key == "model":
                kw["choices"] = MODEL_IDS
            if key == "mode":
                kw["choices"] = ("tf", "at")
            p.add_argument(flag, **kw)
        if name == "report":
            p.add_argument("--in", dest="inputs", nargs="+", required=True, help="run directories to merge")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the optional config file and explicit flags."""
    opts = OPTIONS[args.command]
    values = {k: default for k, (_, default) in opts.items()}
    if args.config:
        for key, raw in read_kv(args.config).items():
            key = key.replace("-", "_")
            if key not in opts:
                raise UsageError(f"unknown option {key!r} in {args.config}")
            try:
                values[key] = opts[key][0](raw)
            except ValueError:
                raise UsageError(f"bad value {raw!r} for {key} in {args.config}") from None
    for key in opts:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return values


def output_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUT_ENV, "runs")) / args.command


@contextmanager
def run_directory(path: Path, force: bool):
    """Own ``path`` for the duration of a command via an exclusive lock file."""
    path.mkdir(parents=True, exist_ok=True)
    lock = path / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RunError(f"{path} is locked by another command (remove {lock} if stale)") from None
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    try:
        if (path / "manifest.json").exists():
            if not force:
                raise RunError(f"{path} already holds a run; use --force to overwrite")
            for f in sorted(path.rglob("*"), reverse=True):
                if f.is_file() and f != lock:
                    f.unlink()
                elif f.is_dir():
                    f.rmdir()
        yield path
    finally:
        lock.unlink(missing_ok=True)


def _load_data(path) -> np.ndarray:
    p = Path(path)
    return read_wavd_dir(p) if p.is_dir() else read_wavd(p)[None]


def cmd_gen(cfg: dict, out: Path) -> int:
    if cfg["sequences"] < 1 or cfg["length"] < 1 or cfg["grid"] < 3:
        raise UsageError("need --sequences >= 1, --length >= 1 and --grid >= 3")
    template = WaveConfig(height=cfg["grid"], width=cfg["grid"], length=cfg["length"])
    data = make_dataset(cfg["sequences"], template, seed=cfg["seed"])
    width = max(3, len(str(len(data) - 1)))
    for k, seq in enumerate(data):
        write_wavd(out / f"seq_{k:0{width}d}.wavd", seq)
    write_manifest(out, "gen", cfg, version=__version__)
    return EXIT_OK


def cmd_train(cfg: dict, out: Path) -> int:
    data = _load_data(cfg["data"])
    tc = TrainConfig(model=cfg["model"], epochs=cfg["epochs"], lr=cfg["lr"], train_snr=cfg["snr"],
                     n_seeds=cfg["seeds"], seed=cfg["seed"])

    def progress(epoch, seed, mse):
        log.info("seed %d epoch %d mse %.4e", seed, epoch, mse)

    ckpts, report = train(data, tc, callback=progress)
    for ck in ckpts:
        stem = out / f"{tc.model}_seed{ck.meta['seed']}"
        ck.save(stem.with_suffix(".ckpt"))
        write_kv(stem.with_suffix(".meta"), ck.meta)
    report.write_csv(out / "curves.csv")
    if report.failures:
        with open(out / "failures.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "error"])
            for seed, msg in sorted(report.failures.items()):
                w.writerow([seed, msg])
                print(f"distana train: seed {seed} failed: {msg}", file=sys.stderr)
    write_manifest(out, "train", cfg, inputs=[cfg["data"]], version=__version__)
    return EXIT_OK if ckpts else EXIT_ALL_FAILED


def _load_checkpoint(path) -> Checkpoint:
    ck = Checkpoint.load(path)
    meta = Path(path).with_suffix(".meta")
    if meta.exists():
        for k, v in read_kv(meta).items():
            try:
                ck.meta[k] = float(v)
            except ValueError:
                ck.meta[k] = v
    return ck


def check_options(command: str, cfg: dict) -> None:
    """Reject inconsistent options before any file is touched."""
    if command in ("train", "eval") and cfg["data"] is None:
        raise UsageError("--data is required")
    if command == "eval":
        if cfg["checkpoint"] is None:
            raise UsageError("--checkpoint is required")
        if cfg["mode"] not in ("tf", "at"):
            raise UsageError(f"--mode must be tf or at, got {cfg['mode']!r}")
        if cfg["mode"] == "at" and (cfg["eta"] is None or cfg["history"] is None):
            raise UsageError("--mode at requires --eta and --history")
    if command == "train" and cfg["model"] not in MODEL_IDS:
        raise UsageError(f"unknown model {cfg['model']!r}; choose from {', '.join(MODEL_IDS)}")


def cmd_eval(cfg: dict, out: Path) -> int:
    ck = _load_checkpoint(cfg["checkpoint"])
    data = _load_data(cfg["data"])
    ec = EvalConfig(mode=cfg["mode"], induction_steps=cfg["induction"], closed_loop_steps=cfg["closed_loop"],
                    test_snr=cfg["test_snr"], n_sequences=cfg["sequences"], eta=cfg["eta"],
                    history=cfg["history"], cycles=cfg["cycles"], seed=cfg["seed"])
    trace = [] if ec.mode == "at" else None
    report = evaluate(ck, data, ec, trace=trace)
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EVAL_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerow(report.row())
    with open(out / "sequences.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sequence", "dtw", "correlation"])
        for k, (d, c) in enumerate(zip(report.dtw, report.correlation)):
            w.writerow([k, repr(d), repr(c)])
    if trace is not None:
        with open(out / "trace.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "cycle", "loss"])
            w.writerows(trace)
    if cfg["dump"] > 0:
        _dump_rollouts(ck, data, ec, out, cfg["dump"])
    write_manifest(out, "eval", cfg, inputs=[cfg["checkpoint"], cfg["data"]], version=__version__)
    return EXIT_OK


def _dump_rollouts(ck, data, ec: EvalConfig, out: Path, n: int) -> None:
    """Write target, noisy input and rollout of the first ``n`` sequences.

    Noise is drawn exactly as in :func:`evaluate`, so the rollouts match the
    scored ones.
    """
    end = ec.induction_steps + ec.closed_loop_steps
    seeds = np.random.SeedSequence(ec.seed).spawn(min(ec.n_sequences, len(data)))
    for k, (clean, ss) in enumerate(zip(data[:n], seeds)):
        noisy = clean + noise_like(clean, ec.test_snr, np.random.default_rng(ss))
        roll = induce_and_roll(ck, noisy, ec)
        write_wavd(out / f"target_{k:03d}.wavd", clean[ec.induction_steps:end])
        write_wavd(out / f"noisy_{k:03d}.wavd", noisy[ec.induction_steps:end])
        write_wavd(out / f"rollout_{k:03d}.wavd", roll)


def cmd_report(cfg: dict, out: Path, inputs) -> int:
    runs = [Path(p) for p in inputs]
    rows = []
    for run in runs:
        path = run / "report.csv"
        if not path.exists():
            raise RunError(f"{run} has no report.csv")
        fields, table = read_csv(path)
        missing = [f for f in EVAL_FIELDS if f not in fields]
        if missing:
            raise RunError(f"{path} lacks columns {', '.join(missing)}")
        rows += [{"run": run.name, **{f: r[f] for f in EVAL_FIELDS}} for r in table]
    fields = EVAL_FIELDS if len(runs) == 1 else ["run"] + EVAL_FIELDS
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)

    # frame strips: target | noisy | up to three rollouts, padded with blanks
    dumped = [r for r in runs if (r / "rollout_000.wavd").exists()]
    if dumped:
        first = dumped[0]
        for target_file in sorted(first.glob("target_*.wavd")):
            k = target_file.stem.split("_")[1]
            target = read_wavd(target_file)
            noisy = read_wavd(first / f"noisy_{k}.wavd")
            step = cfg["step"]
            if not 0 <= step < len(target):
                raise UsageError(f"--step {step} outside the dumped rollout of {len(target)} frames")
            panels = [target[step], noisy[step]]
            for run in dumped[:3]:
                f = run / f"rollout_{k}.wavd"
                panels.append(read_wavd(f)[step] if f.exists() else np.zeros_like(target[step]))
            while len(panels) < 5:
                panels.append(np.zeros_like(target[step]))
            (out / f"strip_{k}_step{step:03d}.pgm").write_text(pgm_text(frame_strip(panels)))
    write_manifest(out, "report", {**cfg, "inputs": [str(r) for r in runs]}, inputs=runs, version=__version__)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve(args)
        check_options(args.command, cfg)
        out = output_dir(args)
        with run_directory(out, args.force):
            write_kv(out / "config.txt", {k: v for k, v in cfg.items() if v is not None})
            if args.command == "gen":
                return cmd_gen(cfg, out)
            if args.command == "train":
                return cmd_train(cfg, out)
            if args.command == "eval":
                return cmd_eval(cfg, out)
            return cmd_report(cfg, out, args.inputs)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"distana {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RunError, FormatError, CheckpointError, TuningDiverged, ValueError, OSError) as exc:
        print(f"distana {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
