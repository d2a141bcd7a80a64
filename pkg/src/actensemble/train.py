"""Minibatch training with validation-based early stopping."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import checkpoint, data as data_io
from .config import RunConfig
from .export import TRACE_FIELDS, trace_rows
from .layers import softmax_xent
from .network import Network, parse_spec
from .optim import AdaDelta

log = logging.getLogger(__name__)

EVAL_BATCH = 1000
RUN_LOG_FIELDS = ["epoch", "split", "loss", "accuracy"]


class TrainingError(RuntimeError):
    pass


@dataclass
class Splits:
    train: data_io.Dataset
    val: data_io.Dataset
    test: data_io.Dataset


def prepare_data(cfg: RunConfig) -> Splits:
    """Load and split the configured dataset; deterministic in ``cfg.split_seed``."""
    val_fracs = (1.0 - cfg.val_fraction, cfg.val_fraction)
    if cfg.dataset == "mnist":
        files = data_io.mnist_files(cfg.mnist_dir)
        full = data_io.load_mnist(files["train_images"], files["train_labels"], "train")
        test = data_io.load_mnist(files["test_images"], files["test_labels"], "test")
        if cfg.train_limit:
            full = full.subset(np.arange(min(cfg.train_limit, len(full))))
        train, val = data_io.split(full, val_fracs, cfg.split_seed, ("train", "val"))
    else:
        paths = [p.strip() for p in cfg.isolet_path.split(",") if p.strip()]
        full = data_io.load_isolet(paths)
        if cfg.train_limit:
            full = full.subset(np.arange(min(cfg.train_limit, len(full))))
        rest, test = data_io.split(full, (1.0 - cfg.test_fraction, cfg.test_fraction),
                                   cfg.split_seed, ("train", "test"))
        train, val = data_io.split(rest, val_fracs, cfg.split_seed + 1, ("train", "val"))
        train, val, test = data_io.standardize(train, val, test)
    if cfg.test_limit:
        test = test.subset(np.arange(min(cfg.test_limit, len(test))))
    return Splits(train, val, test)


def build_network(cfg: RunConfig, sample_shape, n_classes: int) -> Network:
    spec = parse_spec(cfg.spec, cfg.mode, cfg.bn)
    return Network(spec, sample_shape, n_classes, seed=cfg.seed,
                   eta_delta_init=cfg.eta_delta_init, ens_eps=cfg.ensemble_eps,
                   ens_momentum=cfg.ensemble_momentum, padding=cfg.padding)


def _sample_shape(ds: data_io.Dataset) -> tuple[int, ...]:
    return tuple(ds.sample_shape) if ds.sample_shape is not None else (ds.features.shape[1],)


def predict(net: Network, ds: data_io.Dataset) -> tuple[float, np.ndarray]:
    """Eval-mode mean loss and predicted labels, in fixed-size chunks."""
    total, preds = 0.0, []
    for start in range(0, len(ds), EVAL_BATCH):
        idx = np.arange(start, min(start + EVAL_BATCH, len(ds)))
        x, y = ds.batch(idx)
        logits = net.forward(x, train=False)
        loss, _ = softmax_xent(logits, y)
        total += loss * len(idx)
        preds.append(logits.argmax(axis=1))
    return total / len(ds), np.concatenate(preds)


@dataclass
class EvalResult:
    accuracy: float
    loss: float
    confusion: np.ndarray   # [true, predicted]

    @property
    def correct(self) -> int:
        return int(np.trace(self.confusion))


def evaluate_network(net: Network, ds: data_io.Dataset) -> EvalResult:
    if net.n_classes != ds.class_count:
        raise TrainingError(f"network predicts {net.n_classes} classes, data has {ds.class_count}")
    loss, pred = predict(net, ds)
    conf = np.zeros((ds.class_count, ds.class_count), dtype=np.int64)
    np.add.at(conf, (ds.labels, pred), 1)
    return EvalResult(float(np.trace(conf)) / len(ds), loss, conf)


StepHook = Callable[["Trainer", int, int], None]


@dataclass
class Trainer:
    cfg: RunConfig
    splits: Splits
    net: Network = field(init=False)
    opt: AdaDelta = field(init=False)
    epoch: int = 0
    best_val: float = -1.0
    best_epoch: int = 0
    wait: int = 0

    def __post_init__(self):
        self.net = build_network(self.cfg, _sample_shape(self.splits.train),
                                 self.splits.train.class_count)
        self.opt = AdaDelta(self.cfg.adadelta_rho, self.cfg.adadelta_eps, self.cfg.adadelta_lr)
        self.batches = data_io.BatchIterator(self.splits.train, self.cfg.batch_size, self.cfg.seed)

    @property
    def out_dir(self) -> Path:
        return Path(self.cfg.out_dir)

    def train_step(self, x: np.ndarray, y: np.ndarray) -> tuple[float, int]:
        net = self.net
        net.zero_grad()
        logits = net.forward(x, train=True)
        loss, dlogits = softmax_xent(logits, y)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss} at epoch {self.epoch + 1}")
        net.backward(dlogits)
        for name, value, grad, is_alpha in net.trainables():
            self.opt.update(name, value, grad, simplex=is_alpha)
        return loss, int((logits.argmax(axis=1) == y).sum())

    def run_epoch(self, on_step: StepHook | None = None) -> tuple[float, float]:
        """One pass over the training split; returns mean train-mode loss and accuracy."""
        epoch = self.epoch + 1
        loss_sum, correct, seen = 0.0, 0, 0
        for step, idx in enumerate(self.batches.indices(epoch)):
            x, y = self.splits.train.batch(idx)
            loss, ok = self.train_step(x, y)
            loss_sum += loss * len(idx)
            correct += ok
            seen += len(idx)
            if on_step is not None:
                on_step(self, epoch, step)
        self.epoch = epoch
        return loss_sum / seen, correct / seen

    # --- checkpoints ------------------------------------------------------

    def checkpoint_meta(self) -> dict:
        return {
            "format": checkpoint.VERSION,
            "config": self.cfg.to_dict(),
            "sample_shape": list(_sample_shape(self.splits.train)),
            "n_classes": self.net.n_classes,
            "functions": (self.net.ensemble_layers()[0].act_set.ids
                          if self.net.ensemble_layers() else []),
            "epoch": self.epoch,
            "best_val": self.best_val,
            "best_epoch": self.best_epoch,
            "wait": self.wait,
            # minibatch order for epoch e is a pure function of (seed, e)
            "rng": {"seed": self.cfg.seed, "next_epoch": self.epoch + 1},
        }

    def checkpoint_arrays(self) -> dict[str, np.ndarray]:
        arrays = dict(self.net.arrays())
        arrays.update({f"opt/{k}": v for k, v in self.opt.arrays().items()})
        return arrays

    def save_checkpoint(self, path) -> None:
        checkpoint.save(path, self.checkpoint_meta(), self.checkpoint_arrays())

    def restore(self, meta: dict, arrays: dict[str, np.ndarray]) -> None:
        self.net.load_arrays(arrays)
        self.opt.load_arrays({k[4:]: v for k, v in arrays.items() if k.startswith("opt/")})
        self.epoch = int(meta["epoch"])
        self.best_val = float(meta["best_val"])
        self.best_epoch = int(meta["best_epoch"])
        self.wait = int(meta["wait"])

    @classmethod
    def from_checkpoint(cls, path, splits: Splits | None = None, **overrides) -> "Trainer":
        meta, arrays = checkpoint.load(path)
        cfg = RunConfig(**meta["config"])
        for k, v in overrides.items():
            setattr(cfg, k, v)
        cfg.validate()
        trainer = cls(cfg, splits if splits is not None else prepare_data(cfg))
        trainer.restore(meta, arrays)
        return trainer

    # --- full run ---------------------------------------------------------

    def _append_trace(self, epoch: int) -> None:
        path = self.out_dir / "alpha_trace.csv"
        with open(path, "a", newline="") as fh:
            csv.writer(fh).writerows(trace_rows(self.net, epoch))

    def fit(self, on_step: StepHook | None = None) -> dict:
        cfg = self.cfg
        out = self.out_dir
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.dumps())
        ensemble = bool(self.net.ensemble_layers())
        run_log = open(out / "run_log.csv", "w", newline="")
        timing = open(out / "timing.csv", "w", newline="")
        try:
            log_w = csv.writer(run_log)
            log_w.writerow(RUN_LOG_FIELDS)
            time_w = csv.writer(timing)
            time_w.writerow(["epoch", "wall_seconds"])
            if ensemble:
                with open(out / "alpha_trace.csv", "w", newline="") as fh:
                    csv.writer(fh).writerow(TRACE_FIELDS)
                self._append_trace(0)
            else:
                (out / "alpha_trace.csv").unlink(missing_ok=True)
            start = time.perf_counter()
            while self.epoch < cfg.max_epochs:
                tr_loss, tr_acc = self.run_epoch(on_step)
                val = evaluate_network(self.net, self.splits.val)
                log_w.writerow([self.epoch, "train", repr(tr_loss), repr(tr_acc)])
                log_w.writerow([self.epoch, "val", repr(val.loss), repr(val.accuracy)])
                run_log.flush()
                time_w.writerow([self.epoch, f"{time.perf_counter() - start:.3f}"])
                timing.flush()
                if ensemble:
                    self._append_trace(self.epoch)
                log.info("epoch %d train loss %.4f acc %.4f | val loss %.4f acc %.4f",
                         self.epoch, tr_loss, tr_acc, val.loss, val.accuracy)
                if val.accuracy > self.best_val:
                    self.best_val, self.best_epoch, self.wait = val.accuracy, self.epoch, 0
                    self.save_checkpoint(out / "best.ckpt")
                else:
                    self.wait += 1
                    if self.wait >= cfg.patience:
                        log.info("no val improvement for %d epochs, stopping", self.wait)
                        break
            self.save_checkpoint(out / "last.ckpt")
            best = Trainer.from_checkpoint(out / "best.ckpt", self.splits)
            test = evaluate_network(best.net, self.splits.test)
            log_w.writerow([self.best_epoch, "test", repr(test.loss), repr(test.accuracy)])
        finally:
            run_log.close()
            timing.close()
        return {
            "epochs_run": self.epoch,
            "best_epoch": self.best_epoch,
            "best_val_accuracy": self.best_val,
            "test_accuracy": test.accuracy,
            "test_loss": test.loss,
            "out_dir": str(out),
        }


def train(cfg: RunConfig, splits: Splits | None = None, on_step: StepHook | None = None) -> dict:
    cfg.validate()
    trainer = Trainer(cfg, splits if splits is not None else prepare_data(cfg))
    return trainer.fit(on_step)


def train_seeds(cfg: RunConfig, seeds, splits: Splits | None = None) -> dict:
    """Train once per seed (each in ``out_dir/seed_<n>``) and average test accuracy."""
    base = Path(cfg.out_dir)
    splits = splits if splits is not None else prepare_data(cfg)
    runs = []
    for seed in seeds:
        run_cfg = RunConfig(**{**cfg.to_dict(), "seed": int(seed),
                               "out_dir": str(base / f"seed_{seed}")})
        runs.append(train(run_cfg, splits))
    return {
        "runs": runs,
        "mean_test_accuracy": float(np.mean([r["test_accuracy"] for r in runs])),
    }


def load_network(checkpoint_path, **overrides) -> tuple[Network, RunConfig]:
    meta, arrays = checkpoint.load(checkpoint_path)
    cfg = RunConfig(**meta["config"])
    for k, v in overrides.items():
        setattr(cfg, k, v)
    net = build_network(cfg, tuple(meta["sample_shape"]), meta["n_classes"])
    net.load_arrays(arrays)
    return net, cfg.validate()


def evaluate(checkpoint_path, dataset: data_io.Dataset | None = None,
             split: str = "test", **overrides) -> EvalResult:
    """Score a checkpoint on ``dataset``, or on the named split of the run's own data."""
    net, cfg = load_network(checkpoint_path, **overrides)
    if dataset is None:
        dataset = getattr(prepare_data(cfg), split)
    return evaluate_network(net, dataset)
