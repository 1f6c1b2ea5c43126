"""Training loop with early stopping, and evaluation under perturbations."""

from __future__ import annotations

import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import metrics
from .datasets import LabeledWindowSet, PerturbationSpec, split_indices, standardize
from .model import MHNN, MHNNConfig, build
from .nn import functional as F
from .nn.optim import Adam
from .nn.tensor import backward

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 128
    lr: float = 5e-4
    max_epochs: int = 300
    patience: int = 20
    seed: int = 0
    eval_split: float = 0.15
    test_split: float = 0.15
    precision: int = 32
    paper_protocol: bool = False

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 < self.eval_split < 1 or not 0 < self.test_split < 1 or self.eval_split + self.test_split >= 1:
            raise ValueError("eval_split and test_split must be in (0, 1) and leave room for training")
        if self.precision not in (32, 64):
            raise ValueError("precision must be 32 or 64")
        if self.max_epochs < 1 or self.patience < 0:
            raise ValueError("max_epochs must be >= 1 and patience >= 0")

    @property
    def dtype(self):
        return np.float32 if self.precision == 32 else np.float64

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Splits:
    train: LabeledWindowSet
    val: LabeledWindowSet
    test: LabeledWindowSet
    mean: np.ndarray
    std: np.ndarray
    indices: list[np.ndarray] = field(default_factory=list)


def prepare_splits(ws: LabeledWindowSet, cfg: TrainConfig) -> Splits:
    """Stratified train/val/test split, standardized with training statistics.

    Under ``paper_protocol`` the validation set is the test set, so model
    selection sees the same data the final report does.
    """
    fractions = (1 - cfg.eval_split - cfg.test_split, cfg.eval_split, cfg.test_split)
    idx = split_indices(ws.labels, fractions, seed=cfg.seed)
    if cfg.paper_protocol:
        idx = [np.sort(np.concatenate([idx[0], idx[1]])), idx[2], idx[2]]
    (train, val, test), mean, std = standardize(*(ws.subset(i) for i in idx))
    return Splits(train, val, test, mean, std, idx)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainResult:
    model: MHNN
    history: list[dict]
    best_epoch: int
    best_val_accuracy: float


def _stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def _batches(order: np.ndarray, size: int) -> list[np.ndarray]:
    """Consecutive minibatches; a lone trailing sample joins the previous batch
    so batch statistics never see a single value per channel."""
    batches = [order[i : i + size] for i in range(0, len(order), size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def _nonfinite_branches(model: MHNN, xb) -> list[str]:
    _, tr = model.forward(xb, trace=True)
    bad = [s.name for s, f in zip(model.roster, tr["branches"]) if not np.all(np.isfinite(f.data))]
    if not bad and not np.all(np.isfinite(tr["aggregated"].output.data)):
        bad = ["aggregation"]
    return bad or ["classifier"]


def _val_metrics(model: MHNN, ws: LabeledWindowSet, batch_size: int):
    probs = model.predict_proba(ws.windows, batch_size=max(batch_size, 256))
    preds = probs.argmax(axis=1)
    cm = metrics.confusion(preds, ws.labels, model.config.classes)
    loss = float(F.cross_entropy(probs, F.one_hot(ws.labels, model.config.classes, probs.dtype)).data)
    return metrics.accuracy(cm), loss, metrics.precision_recall_f1(cm)["avg_f1"]


def train(model_config: MHNNConfig, train_set: LabeledWindowSet, val_set: LabeledWindowSet,
          cfg: TrainConfig, model: MHNN | None = None) -> TrainResult:
    """Minibatch Adam with validation-accuracy early stopping.

    After each epoch the whole validation set is scored in eval mode. Training
    stops once ``patience`` epochs pass without a strict rise in validation
    accuracy; the best epoch's weights are restored.
    """
    cfg.validate()
    if model is None:
        model = build(model_config, seed=cfg.seed, dtype=cfg.dtype)
    opt = Adam(model.parameters(), lr=cfg.lr)
    shuffle_rng = _stream(cfg.seed, "shuffle")
    n_classes = model_config.classes
    x_all = train_set.windows.astype(model.dtype)
    y_all = train_set.labels

    history: list[dict] = []
    best_acc = -1.0
    best_state, best_epoch, stale = None, 0, 0
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        order = shuffle_rng.permutation(len(y_all))
        total_loss, correct = 0.0, 0
        for b, idx in enumerate(_batches(order, cfg.batch_size)):
            xb, yb = x_all[idx], y_all[idx]
            probs = model.forward(xb)
            loss = F.cross_entropy(probs, F.one_hot(yb, n_classes, model.dtype))
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {b}; "
                    f"offending stage: {', '.join(_nonfinite_branches(model, xb))}"
                )
            opt.zero_grad()
            backward(loss)
            opt.step()
            total_loss += value * len(idx)
            correct += int((probs.data.argmax(axis=1) == yb).sum())

        val_acc, val_loss, val_f1 = _val_metrics(model, val_set, cfg.batch_size)
        history.append({
            "epoch": epoch,
            "train_loss": total_loss / len(y_all),
            "train_accuracy": correct / len(y_all),
            "val_accuracy": val_acc,
            "val_loss": val_loss,
            "val_macro_f1": val_f1,
        })
        log.info("epoch %d loss %.4f train_acc %.4f val_acc %.4f", epoch,
                 history[-1]["train_loss"], history[-1]["train_accuracy"], val_acc)
        if val_acc > best_acc:
            best_acc = val_acc
            best_state, best_epoch, stale = model.state_arrays(), epoch, 0
        else:
            stale += 1
        if stale >= cfg.patience:
            break

    model.load_state_arrays(best_state)
    model.eval()
    return TrainResult(model, history, best_epoch, best_acc)


@dataclass
class EvaluationReport:
    metrics: dict
    variant: str
    levels: int
    last_level_mode: str
    perturb_kind: str = "none"
    param: float | None = None
    seed: int = 0
    n_windows: int = 0

    def to_dict(self) -> dict:
        d = dict(self.metrics)
        d.update({
            "variant": self.variant,
            "levels": self.levels,
            "last_level_mode": self.last_level_mode,
            "perturb_kind": self.perturb_kind,
            "param": self.param,
            "seed": self.seed,
            "n_windows": self.n_windows,
        })
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @property
    def accuracy(self) -> float:
        return self.metrics["accuracy"]


def evaluate(model: MHNN, ws: LabeledWindowSet, perturbation: PerturbationSpec | None = None,
             seed: int = 0, batch_size: int = 256) -> EvaluationReport:
    """Eval-mode metrics on ``ws``, perturbing a copy first when asked."""
    cfg = model.config
    if ws.windows.shape[1:] != (cfg.channels, cfg.window):
        raise ValueError(f"window set shape {ws.windows.shape[1:]} does not match model "
                         f"({cfg.channels}, {cfg.window})")
    data = perturbation.apply(ws) if perturbation is not None else ws
    preds = model.predict(data.windows, batch_size=batch_size)
    cm = metrics.confusion(preds, data.labels, cfg.classes)
    return EvaluationReport(
        metrics=metrics.report(cm, ws.class_names if len(ws.class_names) == cfg.classes else None),
        variant=cfg.variant,
        levels=cfg.levels,
        last_level_mode=cfg.last_level_mode,
        perturb_kind=perturbation.kind if perturbation else "none",
        param=perturbation.param if perturbation else None,
        seed=perturbation.seed if perturbation else seed,
        n_windows=ws.n_windows,
    )
