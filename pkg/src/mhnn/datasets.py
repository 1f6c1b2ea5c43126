"""Window sets: ingestion, segmentation, standardization, synthetic data and
the two evaluation-time perturbations (additive noise at a target SNR, and
zero-filled sensor masking)."""

from __future__ import annotations

import csv
import json
import math
import re
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

MAGIC = b"MHWS"
VERSION = 1


@dataclass
class LabeledWindowSet:
    windows: np.ndarray  # (N, C, T)
    labels: np.ndarray  # (N,)
    channel_names: list[str] = field(default_factory=list)
    sample_rate_hz: float = 1.0
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.windows = np.asarray(self.windows)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.windows.ndim != 3:
            raise ValueError(f"windows must be (N, C, T), got {self.windows.shape}")
        n, c, _ = self.windows.shape
        if n < 1:
            raise ValueError("window set is empty")
        if self.labels.shape != (n,):
            raise ValueError("labels must have one entry per window")
        if not np.all(np.isfinite(self.windows)):
            raise ValueError("windows contain NaN or Inf")
        if not self.channel_names:
            self.channel_names = [f"ch{i}" for i in range(c)]
        if len(self.channel_names) != c:
            raise ValueError("channel_names length does not match channel count")
        if not self.class_names:
            self.class_names = [str(k) for k in range(int(self.labels.max()) + 1)]
        k = len(self.class_names)
        if self.labels.min() < 0 or self.labels.max() >= k:
            raise ValueError(f"labels must lie in [0, {k})")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    @property
    def n_windows(self) -> int:
        return self.windows.shape[0]

    @property
    def n_channels(self) -> int:
        return self.windows.shape[1]

    @property
    def window_length(self) -> int:
        return self.windows.shape[2]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def with_windows(self, windows: np.ndarray) -> "LabeledWindowSet":
        return replace(self, windows=windows, labels=self.labels.copy(),
                       channel_names=list(self.channel_names), class_names=list(self.class_names))

    def subset(self, index) -> "LabeledWindowSet":
        index = np.asarray(index)
        return replace(self, windows=self.windows[index], labels=self.labels[index],
                       channel_names=list(self.channel_names), class_names=list(self.class_names))


def sliding_window(series, labels_per_step, width: int, overlap: float,
                   channel_names=None, sample_rate_hz: float = 1.0, class_names=None) -> LabeledWindowSet:
    """Cut a (C, L) recording into windows of ``width`` steps.

    Windows start at multiples of ``round(width * (1 - overlap))``; each gets
    the majority label of its steps (ties go to the smaller label).
    """
    series = np.asarray(series, dtype=np.float64)
    steps = np.asarray(labels_per_step, dtype=np.int64)
    if series.ndim != 2 or steps.shape != (series.shape[1],):
        raise ValueError("series must be (C, L) with one label per step")
    length = series.shape[1]
    if width > length:
        raise ValueError(f"window width {width} exceeds series length {length}")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must be in [0, 1)")
    stride = int(round(width * (1 - overlap)))
    if stride < 1:
        raise ValueError("overlap leaves a zero stride")
    starts = range(0, length - width + 1, stride)
    minlength = int(steps.max()) + 1
    windows = np.stack([series[:, s : s + width] for s in starts])
    labels = np.array([np.bincount(steps[s : s + width], minlength=minlength).argmax() for s in starts])
    return LabeledWindowSet(windows.astype(np.float32), labels, list(channel_names or []),
                            sample_rate_hz, list(class_names or []))


def standardize(train: LabeledWindowSet, *others: LabeledWindowSet, min_std: float = 1e-8):
    """Z-score every set per channel with the training set's statistics.

    Returns ``(sets, mean, std)`` where ``sets[0]`` is the standardized train set.
    """
    mean = train.windows.mean(axis=(0, 2), dtype=np.float64)
    std = np.maximum(train.windows.std(axis=(0, 2), dtype=np.float64), min_std)
    return [apply_standardization(s, mean, std) for s in (train, *others)], mean, std


def apply_standardization(ws: LabeledWindowSet, mean, std) -> LabeledWindowSet:
    mean = np.asarray(mean, dtype=np.float64)[None, :, None]
    std = np.asarray(std, dtype=np.float64)[None, :, None]
    return ws.with_windows(((ws.windows - mean) / std).astype(ws.windows.dtype))


def synth_base_bins(window: int, n_classes: int) -> list[int]:
    """DFT bin (cycles per window) of each synthetic class."""
    step = max(1, window // 32)
    return [(k + 1) * step for k in range(n_classes)]


def synth_generate(n_per_class: int, channels: int, window: int, n_classes: int, seed: int) -> LabeledWindowSet:
    """Class-separable sinusoid windows.

    Class ``k`` oscillates at ``synth_base_bins(...)[k]`` cycles per window with
    amplitude ``1 + 0.5 k``; each (class, channel) has its own random phase,
    and every sample gets Gaussian noise of standard deviation 0.1.
    """
    if not 2 <= n_classes <= 8:
        raise ValueError("synthetic generator supports 2..8 classes")
    bins = synth_base_bins(window, n_classes)
    if bins[-1] >= window / 2:
        raise ValueError("window too short for the requested number of classes")
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0, 2 * np.pi, size=(n_classes, channels))
    t = np.arange(window) / window
    windows, labels = [], []
    for k in range(n_classes):
        clean = (1 + 0.5 * k) * np.sin(2 * np.pi * bins[k] * t[None, :] + phases[k][:, None])
        noise = 0.1 * rng.standard_normal((n_per_class, channels, window))
        windows.append(clean[None] + noise)
        labels.append(np.full(n_per_class, k))
    return LabeledWindowSet(
        np.concatenate(windows).astype(np.float32),
        np.concatenate(labels),
        [f"ch{i}" for i in range(channels)],
        float(window),
        [f"class{k}" for k in range(n_classes)],
    )


def window_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def add_noise(ws: LabeledWindowSet, snr_db: float, seed: int) -> LabeledWindowSet:
    """Add Gaussian noise to each window at exactly ``snr_db`` decibels.

    Power is the mean square over a window's samples; the drawn noise is
    rescaled so its empirical power hits the target.
    """
    if not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    out = np.empty_like(ws.windows)
    for i, w in enumerate(ws.windows):
        out[i] = w + noise_for_window(w, snr_db, window_rng(seed, i)).astype(w.dtype)
    return ws.with_windows(out)


def noise_for_window(window: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    w = window.astype(np.float64)
    p_signal = np.mean(w**2)
    if p_signal == 0:
        raise ValueError("silent window")
    z = rng.standard_normal(w.shape)
    p_target = p_signal / 10 ** (snr_db / 10)
    return z * math.sqrt(p_target / np.mean(z**2))


def measured_snr_db(signal: np.ndarray, noise: np.ndarray) -> float:
    return 10 * math.log10(np.mean(np.asarray(signal, np.float64) ** 2) / np.mean(np.asarray(noise, np.float64) ** 2))


def masked_count(ratio: float, n: int) -> int:
    if not 0 <= ratio <= 1:
        raise ValueError("ratio must be in [0, 1]")
    if ratio == 0:
        return 0
    return min(n, max(1, int(math.floor(ratio * n + 0.5))))


def _groups(ws: LabeledWindowSet, by_prefix: bool) -> list[list[int]]:
    if not by_prefix:
        return [[c] for c in range(ws.n_channels)]
    groups: dict[str, list[int]] = {}
    for c, name in enumerate(ws.channel_names):
        groups.setdefault(name.split("_", 1)[0], []).append(c)
    return list(groups.values())


def mask_sensors_fixed(ws: LabeledWindowSet, ratio: float, seed: int, group_by_prefix: bool = False):
    """Zero the same sensors in every window. Returns ``(masked_set, channel_ids)``.

    A sensor is one channel, or with ``group_by_prefix`` every channel sharing
    the name prefix before the first underscore.
    """
    groups = _groups(ws, group_by_prefix)
    m = masked_count(ratio, len(groups))
    chosen = np.random.default_rng(seed).choice(len(groups), m, replace=False) if m else []
    channels = sorted(c for g in chosen for c in groups[g])
    out = ws.windows.copy()
    out[:, channels, :] = 0
    return ws.with_windows(out), channels


def mask_sensors_random(ws: LabeledWindowSet, ratio: float, seed: int, group_by_prefix: bool = False):
    """Zero an independently drawn sensor subset in each window."""
    groups = _groups(ws, group_by_prefix)
    m = masked_count(ratio, len(groups))
    out = ws.windows.copy()
    if m:
        for i in range(ws.n_windows):
            chosen = window_rng(seed, i).choice(len(groups), m, replace=False)
            out[i, [c for g in chosen for c in groups[g]], :] = 0
    return ws.with_windows(out)


@dataclass
class PerturbationSpec:
    kind: str  # "noise" | "mask_fixed" | "mask_random"
    snr_db: float | None = None
    ratio: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind == "noise":
            if self.snr_db is None:
                raise ValueError("noise perturbation needs snr_db")
        elif self.kind in ("mask_fixed", "mask_random"):
            if self.ratio is None or not 0 <= self.ratio <= 1:
                raise ValueError("mask perturbation needs ratio in [0, 1]")
        else:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")

    @property
    def param(self) -> float:
        return self.snr_db if self.kind == "noise" else self.ratio

    def apply(self, ws: LabeledWindowSet) -> LabeledWindowSet:
        if self.kind == "noise":
            return add_noise(ws, self.snr_db, self.seed)
        if self.kind == "mask_fixed":
            return mask_sensors_fixed(ws, self.ratio, self.seed)[0]
        return mask_sensors_random(ws, self.ratio, self.seed)


def split_indices(labels, fractions=(0.7, 0.15, 0.15), seed: int = 0) -> list[np.ndarray]:
    """Stratified split into len(fractions) index arrays, each sorted."""
    labels = np.asarray(labels)
    fractions = np.asarray(fractions, dtype=np.float64)
    if np.any(fractions <= 0) or abs(fractions.sum() - 1) > 1e-9:
        raise ValueError("split fractions must be positive and sum to 1")
    rng = np.random.default_rng(seed)
    parts = [[] for _ in fractions]
    for k in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == k))
        bounds = np.round(np.cumsum(fractions) * idx.size).astype(int)
        lo = 0
        for p, hi in zip(parts, bounds):
            p.extend(idx[lo:hi].tolist())
            lo = hi
    return [np.array(sorted(p), dtype=np.int64) for p in parts]


# --- file formats -----------------------------------------------------------


def save_binary(ws: LabeledWindowSet, path) -> None:
    n, c, t = ws.windows.shape
    trailer = json.dumps(
        {"channel_names": ws.channel_names, "class_names": ws.class_names, "sample_rate_hz": ws.sample_rate_hz},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<5I", VERSION, n, c, t, ws.n_classes))
        fh.write(np.ascontiguousarray(ws.windows, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(ws.labels, dtype="<u4").tobytes())
        fh.write(trailer)


def load_binary(path) -> LabeledWindowSet:
    payload = Path(path).read_bytes()
    if payload[:4] != MAGIC:
        raise ValueError(f"{path}: not an MHWS window set")
    version, n, c, t, k = struct.unpack_from("<5I", payload, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    offset = 4 + 20
    count = n * c * t
    windows = np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(n, c, t)
    offset += 4 * count
    labels = np.frombuffer(payload, dtype="<u4", count=n, offset=offset)
    offset += 4 * n
    meta = json.loads(payload[offset:].decode("utf-8")) if len(payload) > offset else {}
    class_names = meta.get("class_names") or [str(i) for i in range(k)]
    if len(class_names) != k:
        raise ValueError(f"{path}: trailer lists {len(class_names)} classes, header says {k}")
    return LabeledWindowSet(windows.astype(np.float32), labels.astype(np.int64),
                            meta.get("channel_names", []), meta.get("sample_rate_hz", 1.0), class_names)


@dataclass
class CsvSchema:
    """``wide``: one row per window, header ``label,ch0_t0,ch0_t1,...``.
    ``long``: one row per time step of a continuous recording, header
    ``label,<channel names...>``, segmented with ``width``/``overlap``."""

    format: str = "wide"
    n_classes: int | None = None
    class_names: list[str] | None = None
    sample_rate_hz: float = 1.0
    width: int | None = None
    overlap: float = 0.5


_WIDE_COL = re.compile(r"^(.+)_t(\d+)$")


def _parse_row(row, lineno: int, n_classes: int | None):
    try:
        label = int(row[0])
        values = [float(v) for v in row[1:]]
    except ValueError as exc:
        raise ValueError(f"row {lineno}: {exc}") from None
    if any(not math.isfinite(v) for v in values):
        raise ValueError(f"row {lineno}: NaN or infinite value")
    if label < 0 or (n_classes is not None and label >= n_classes):
        raise ValueError(f"row {lineno}: label {label} out of range")
    return label, values


def load_csv(path, schema: CsvSchema | None = None) -> LabeledWindowSet:
    schema = schema or CsvSchema()
    n_classes = schema.n_classes or (len(schema.class_names) if schema.class_names else None)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "label":
            raise ValueError(f"{path}: first column must be 'label'")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append(_parse_row(row, lineno, n_classes))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    labels = np.array([r[0] for r in rows])
    values = np.array([r[1] for r in rows], dtype=np.float64)
    class_names = schema.class_names or [str(i) for i in range(n_classes or int(labels.max()) + 1)]

    if schema.format == "wide":
        channels: list[str] = []
        steps = set()
        for col in header[1:]:
            m = _WIDE_COL.match(col.strip())
            if not m:
                raise ValueError(f"{path}: column {col!r} is not of the form <channel>_t<step>")
            if m.group(1) not in channels:
                channels.append(m.group(1))
            steps.add(int(m.group(2)))
        c, t = len(channels), len(steps)
        if c * t != len(header) - 1:
            raise ValueError(f"{path}: columns do not form a channel x time grid")
        windows = values.reshape(len(rows), c, t)
        return LabeledWindowSet(windows.astype(np.float32), labels, channels, schema.sample_rate_hz, class_names)
    if schema.format == "long":
        if schema.width is None:
            raise ValueError("long format needs a window width")
        return sliding_window(values.T, labels, schema.width, schema.overlap,
                              [h.strip() for h in header[1:]], schema.sample_rate_hz, class_names)
    raise ValueError(f"unknown csv format {schema.format!r}")
