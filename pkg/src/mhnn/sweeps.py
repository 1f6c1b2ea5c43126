"""Robustness, ablation and sensitivity sweeps producing one CSV row per cell."""

from __future__ import annotations

import csv
import io
import logging
import zlib
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .datasets import LabeledWindowSet, PerturbationSpec
from .model import LAST_LEVEL_MODES, VARIANTS, MHNN, MHNNConfig
from .training import EvaluationReport, Splits, TrainConfig, evaluate, prepare_splits, train

log = logging.getLogger(__name__)

CSV_COLUMNS = [
    "cell", "variant", "levels", "last_level_mode", "perturb_kind", "param",
    "accuracy", "precision", "recall", "f1", "seed",
    "accuracy_pct", "precision_pct", "recall_pct", "f1_pct",
]
SWEEP_KINDS = ("noise", "missing", "ablation", "sensitivity")


@dataclass
class SweepSpec:
    snr_levels: tuple[float, ...] = (-20, -10, -5, 0, 5, 10, 20)
    mask_ratios: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    mask_kinds: tuple[str, ...] = ("mask_fixed", "mask_random")
    variants: tuple[str, ...] = VARIANTS
    sensitivity_levels: tuple[int, ...] = (2, 3, 4)
    sensitivity_modes: tuple[str, ...] = LAST_LEVEL_MODES

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, tuple(getattr(self, f.name)))

    def validate(self) -> None:
        for f in fields(self):
            if not getattr(self, f.name):
                raise ValueError(f"sweep spec field {f.name} is empty")
        bad = set(self.mask_kinds) - {"mask_fixed", "mask_random"}
        if bad:
            raise ValueError(f"unknown mask kinds {sorted(bad)}")
        bad = set(self.variants) - set(VARIANTS)
        if bad:
            raise ValueError(f"unknown variants {sorted(bad)}")
        bad = set(self.sensitivity_modes) - set(LAST_LEVEL_MODES)
        if bad:
            raise ValueError(f"unknown last-level modes {sorted(bad)}")

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown sweep config keys: {sorted(unknown)}")
        return cls(**d)


def cell_seed(seed: int, cell_id: str) -> int:
    """Independent, schedule-free seed for one sweep cell."""
    return int(np.random.SeedSequence([seed, zlib.crc32(cell_id.encode())]).generate_state(1)[0])


def _row(cell: str, report: EvaluationReport, seed: int) -> dict:
    m = report.metrics
    prec, rec, f1 = m["macro_precision"], m["macro_recall"], m["macro_f1"]
    return {
        "cell": cell,
        "variant": report.variant,
        "levels": report.levels,
        "last_level_mode": report.last_level_mode,
        "perturb_kind": report.perturb_kind,
        "param": "" if report.param is None else report.param,
        "accuracy": m["accuracy"],
        "precision": prec,
        "recall": rec,
        "f1": f1,
        "seed": seed,
        "accuracy_pct": 100 * m["accuracy"],
        "precision_pct": 100 * prec,
        "recall_pct": 100 * rec,
        "f1_pct": 100 * f1,
    }


def perturbation_cells(kind: str, spec: SweepSpec, seed: int) -> list[tuple[str, PerturbationSpec]]:
    cells = []
    if kind == "noise":
        for snr in spec.snr_levels:
            cid = f"noise:{snr:g}"
            cells.append((cid, PerturbationSpec("noise", snr_db=float(snr), seed=cell_seed(seed, cid))))
    elif kind == "missing":
        for mk in spec.mask_kinds:
            for ratio in spec.mask_ratios:
                cid = f"{mk}:{ratio:g}"
                cells.append((cid, PerturbationSpec(mk, ratio=float(ratio), seed=cell_seed(seed, cid))))
    else:
        raise ValueError(f"{kind!r} is not a perturbation sweep")
    return cells


def perturbation_sweep(kind: str, spec: SweepSpec, model: MHNN, test_set: LabeledWindowSet, seed: int) -> list[dict]:
    """Evaluate one trained model under every perturbation of the sweep."""
    rows = []
    for cid, pert in perturbation_cells(kind, spec, seed):
        rows.append(_row(cid, evaluate(model, test_set, pert), pert.seed))
    return rows


def training_cells(kind: str, spec: SweepSpec, base: MHNNConfig) -> list[tuple[str, MHNNConfig]]:
    if kind == "ablation":
        return [(f"variant:{v}", replace(base, variant=v)) for v in spec.variants]
    if kind == "sensitivity":
        return [
            (f"L{lv}_{mode}", replace(base, variant="Full", levels=lv, last_level_mode=mode))
            for lv in spec.sensitivity_levels
            for mode in spec.sensitivity_modes
        ]
    raise ValueError(f"{kind!r} is not a training sweep")


def training_sweep(kind: str, spec: SweepSpec, base: MHNNConfig, splits: Splits, cfg: TrainConfig,
                   pretrained: dict[str, MHNN] | None = None) -> list[dict]:
    """Train and test one model per variant (ablation) or per (levels, mode) cell.

    ``pretrained`` maps cell ids to models already trained with the same
    seed and splits; those cells are evaluated without retraining.
    """
    pretrained = pretrained or {}
    rows = []
    for cid, mcfg in training_cells(kind, spec, base):
        model = pretrained.get(cid)
        if model is None:
            log.info("sweep cell %s", cid)
            model = train(mcfg, splits.train, splits.val, cfg).model
        elif model.config != mcfg:
            raise ValueError(f"pretrained model for {cid} has a different configuration")
        rows.append(_row(cid, evaluate(model, splits.test, seed=cfg.seed), cfg.seed))
    return rows


def sweep(kind: str, spec: SweepSpec, data: LabeledWindowSet, cfg: TrainConfig,
          base: MHNNConfig | None = None, model: MHNN | None = None, splits: Splits | None = None,
          pretrained: dict[str, MHNN] | None = None) -> list[dict]:
    """Run a sweep over a raw (unstandardized) window set.

    Perturbation sweeps reuse ``model`` when given, otherwise train one Full
    model first; perturbations always hit a copy of the standardized test split.
    """
    if kind not in SWEEP_KINDS:
        raise ValueError(f"unknown sweep kind {kind!r}")
    spec.validate()
    splits = splits or prepare_splits(data, cfg)
    if base is None:
        base = MHNNConfig(channels=data.n_channels, window=data.window_length, classes=data.n_classes)
    if kind in ("noise", "missing"):
        if model is None:
            model = train(replace(base, variant="Full"), splits.train, splits.val, cfg).model
        return perturbation_sweep(kind, spec, model, splits.test, cfg.seed)
    return training_sweep(kind, spec, base, splits, cfg, pretrained)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))
