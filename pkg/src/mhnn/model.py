"""MHNN: wavelet extractor, heterogeneous branches, cross aggregation, classifier."""

from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import wavelet
from .nn import functional as F
from .nn.checkpoint import load_into, read_checkpoint, save_checkpoint
from .nn.gradcheck import gradient_check
from .nn.layers import MLP, ConvStack, Linear, Module, ResidualConvStack
from .nn.tensor import Tensor, no_grad

VARIANTS = ("Full", "NoMSE", "NoHFL", "NoCA")
LAST_LEVEL_MODES = ("NoAC", "ConAC", "SepAC")
X_BRANCH_KERNELS = (7, 7, 5, 5, 3, 3, 3)
H1_KERNELS = (7, 5, 3)
MID_LEVEL_KERNELS = (7,)
MLP_DEPTH = 3


@dataclass
class MHNNConfig:
    channels: int
    window: int
    classes: int
    levels: int = 3
    variant: str = "Full"
    last_level_mode: str = "NoAC"
    filters: int = 128
    agg_kernels: tuple[int, ...] = (7, 5, 3)
    dropout: float = 0.2
    leaky_slope: float = 0.01
    common_length: int | None = None

    def __post_init__(self):
        self.agg_kernels = tuple(int(k) for k in self.agg_kernels)

    @property
    def aligned_length(self) -> int:
        if self.common_length is not None:
            return self.common_length
        return math.ceil(self.window / 2**self.levels)

    def validate(self) -> None:
        problems = []
        if self.channels < 1:
            problems.append("channels >= 1")
        if self.levels < 1:
            problems.append("levels >= 1")
        elif self.window < 2**self.levels:
            problems.append("window >= 2**levels")
        if self.classes < 2:
            problems.append("classes >= 2")
        if self.variant not in VARIANTS:
            problems.append(f"variant in {VARIANTS}")
        if self.last_level_mode not in LAST_LEVEL_MODES:
            problems.append(f"last_level_mode in {LAST_LEVEL_MODES}")
        if not self.agg_kernels or any(k < 1 or k % 2 == 0 for k in self.agg_kernels):
            problems.append("agg_kernels all odd")
        if self.filters < 1:
            problems.append("filters >= 1")
        if not 0 <= self.dropout < 1:
            problems.append("0 <= dropout < 1")
        if not 0 <= self.leaky_slope < 1:
            problems.append("0 <= leaky_slope < 1")
        if self.common_length is not None and self.common_length < 1:
            problems.append("common_length >= 1")
        if problems:
            raise ValueError("invalid MHNNConfig: violated " + "; ".join(problems))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["agg_kernels"] = list(self.agg_kernels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MHNNConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class BranchSpec:
    name: str
    kind: str  # "residual" | "conv" | "mlp"
    source: str  # component key, "+"-joined when concatenated along channels
    in_channels: int
    in_length: int
    kernels: tuple[int, ...] = ()


def branch_roster(config: MHNNConfig) -> list[BranchSpec]:
    c, levels = config.channels, config.levels
    lengths = {"x": config.window}
    length = config.window
    for i in range(1, levels + 1):
        length = math.ceil(length / 2)
        lengths[f"h{i}"] = length
    lengths[f"l{levels}"] = length

    last, approx = f"h{levels}", f"l{levels}"
    plan = [("x", "residual", "x", X_BRANCH_KERNELS)]
    for i in range(1, levels):
        plan.append((f"h{i}", "conv", f"h{i}", H1_KERNELS if i == 1 else MID_LEVEL_KERNELS))
    if config.last_level_mode == "ConAC":
        plan.append((last, "mlp", f"{last}+{approx}", ()))
    else:
        plan.append((last, "mlp", last, ()))
    if config.last_level_mode == "SepAC":
        plan.append((approx, "mlp", approx, ()))

    specs = []
    for name, kind, source, kernels in plan:
        if config.variant == "NoMSE":
            source = "x"
        if config.variant == "NoHFL":
            kind, kernels = "conv", tuple(config.agg_kernels)
        parts = source.split("+")
        specs.append(BranchSpec(name, kind, source, c * len(parts), lengths[parts[0]], kernels))
    return specs


def _rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


class Branch(Module):
    """One heterogeneous feature extractor, emitting (B, filters, aligned_length)."""

    def __init__(self, spec: BranchSpec, config: MHNNConfig, rng, dropout_rng, dtype):
        self.spec = spec
        self.out_length = config.aligned_length
        if spec.kind == "residual":
            self.body = ResidualConvStack(spec.in_channels, config.filters, spec.kernels, rng, dtype)
        elif spec.kind == "conv":
            self.body = ConvStack(spec.in_channels, config.filters, spec.kernels, rng, dtype)
        else:
            self.body = MLP(spec.in_channels * spec.in_length, config.filters, MLP_DEPTH, rng,
                            slope=config.leaky_slope, p=config.dropout,
                            dropout_rng=dropout_rng, dtype=dtype)

    def forward(self, x):
        expected = (self.spec.in_channels, self.spec.in_length)
        if tuple(x.shape[1:]) != expected:
            raise ValueError(f"branch {self.spec.name}: expected (B, {expected[0]}, {expected[1]}), got {x.shape}")
        if self.spec.kind == "mlp":
            return F.tile_time(self.body(F.flatten(x)), self.out_length)
        return F.adaptive_avg_pool1d(self.body(x), self.out_length)


@dataclass
class AggregatedFeature:
    output: Tensor
    cross: list[Tensor] = field(default_factory=list)
    auxiliaries: list[Tensor] = field(default_factory=list)


class CrossAggregation(Module):
    """Each branch gets auxiliary features from its own conv stack; branch i is
    then refined from its own features concatenated with every other branch's
    auxiliaries, and the refined features are summed."""

    def __init__(self, n: int, filters: int, kernels, seed: int, dtype):
        if n < 2:
            raise ValueError("cross aggregation needs at least two branches")
        self.auxiliary = [ConvStack(filters, filters, kernels, _rng(seed, f"aux{i}"), dtype) for i in range(n)]
        self.cross = [ConvStack(n * filters, filters, kernels, _rng(seed, f"cross{i}"), dtype) for i in range(n)]

    def forward(self, features) -> AggregatedFeature:
        n = len(self.auxiliary)
        if len(features) != n:
            raise ValueError(f"expected {n} branch features, got {len(features)}")
        shape = features[0].shape
        if any(f.shape != shape for f in features):
            raise ValueError("branch features differ in shape")
        aux = [stack(f) for stack, f in zip(self.auxiliary, features)]
        cross = []
        for i in range(n):
            inputs = [aux[j] for j in range(n) if j != i] + [features[i]]
            cross.append(self.cross[i](F.concat(inputs, axis=1)))
        return AggregatedFeature(F.add_n(cross), cross, aux)


class MHNN(Module):
    def __init__(self, config: MHNNConfig, seed: int = 0, dtype=np.float32):
        config.validate()
        self.config = config
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.filters = wavelet.haar_filters()
        self.dropout_rng = _rng(seed, "dropout")
        self.roster = branch_roster(config)
        self.branches = {
            s.name: Branch(s, config, _rng(seed, f"branch.{s.name}"), self.dropout_rng, self.dtype)
            for s in self.roster
        }
        n = len(self.roster)
        if config.variant == "NoCA":
            self.aggregation = None
            head_in = n * config.filters
        else:
            self.aggregation = CrossAggregation(n, config.filters, config.agg_kernels, seed, self.dtype)
            head_in = config.filters
        self.classifier = Linear(head_in, config.classes, _rng(seed, "classifier"), self.dtype)

    def reseed_dropout(self, seed: int) -> None:
        rng = _rng(seed, "dropout")
        self.dropout_rng = rng
        for branch in self.branches.values():
            if isinstance(branch.body, MLP):
                branch.body.dropout_rng = rng

    def branch_inputs(self, x: np.ndarray) -> dict[str, np.ndarray]:
        cfg = self.config
        if x.ndim != 3 or x.shape[1:] != (cfg.channels, cfg.window):
            raise ValueError(f"expected windows of shape (B, {cfg.channels}, {cfg.window}), got {x.shape}")
        if cfg.variant == "NoMSE":
            comps = {"x": x}
        else:
            comps = wavelet.mdwd(x, self.filters, cfg.levels).components()
        out = {}
        for spec in self.roster:
            parts = spec.source.split("+")
            arr = comps[parts[0]] if len(parts) == 1 else np.concatenate([comps[p] for p in parts], axis=1)
            out[spec.name] = np.ascontiguousarray(arr, dtype=self.dtype)
        return out

    def run_branches(self, inputs: dict[str, np.ndarray]) -> list[Tensor]:
        return [self.branches[s.name](Tensor(inputs[s.name])) for s in self.roster]

    def cross_aggregate(self, features) -> AggregatedFeature:
        if self.aggregation is None:
            return AggregatedFeature(F.concat(features, axis=1))
        return self.aggregation(features)

    def classify(self, agg: AggregatedFeature, logits: bool = False) -> Tensor:
        out = self.classifier(F.global_avg_pool1d(agg.output))
        return out if logits else F.softmax(out)

    def forward(self, x, trace: bool = False):
        x = x.data if isinstance(x, Tensor) else np.asarray(x)
        inputs = self.branch_inputs(x.astype(self.dtype, copy=False))
        features = self.run_branches(inputs)
        agg = self.cross_aggregate(features)
        logits = self.classify(agg, logits=True)
        probs = F.softmax(logits)
        if trace:
            return probs, {"inputs": inputs, "branches": features, "aggregated": agg, "logits": logits}
        return probs

    def predict_proba(self, windows, batch_size: int = 256) -> np.ndarray:
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                out = [self.forward(windows[i : i + batch_size]).data for i in range(0, len(windows), batch_size)]
        finally:
            self.train(was_training)
        return np.concatenate(out, axis=0)

    def predict(self, windows, batch_size: int = 256) -> np.ndarray:
        return self.predict_proba(windows, batch_size).argmax(axis=1)

    def loss(self, windows, labels) -> Tensor:
        probs = self.forward(windows)
        return F.cross_entropy(probs, F.one_hot(labels, self.config.classes, dtype=self.dtype))

    def state_arrays(self) -> dict[str, np.ndarray]:
        state = {name: t.data.copy() for name, t in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        load_into(self, state)


def build(config: MHNNConfig, seed: int = 0, dtype=np.float32) -> MHNN:
    return MHNN(config, seed=seed, dtype=dtype)


def model_gradient_check(model: MHNN, windows, labels, h: float = 1e-5, max_per_param=None,
                         rng=None, details: bool = False):
    """Finite-difference check of every parameter tensor, eval mode, 64-bit."""
    if model.dtype != np.float64:
        raise ValueError("gradient check needs a 64-bit model")
    was_training = model.training
    model.eval()
    try:
        return gradient_check(lambda: model.loss(windows, labels), list(model.named_parameters()),
                              h=h, max_per_param=max_per_param, rng=rng, details=details)
    finally:
        model.train(was_training)


def save_model(path, model: MHNN, meta: dict | None = None) -> None:
    header = {"format": "mhnn", "config": model.config.to_dict(), "seed": model.seed}
    header.update(meta or {})
    save_checkpoint(path, model, header)


def load_model(path, dtype=np.float32) -> tuple[MHNN, dict]:
    header, arrays = read_checkpoint(path)
    if header.get("format") != "mhnn":
        raise ValueError(f"{path}: not an MHNN checkpoint")
    model = MHNN(MHNNConfig.from_dict(header["config"]), seed=header.get("seed", 0), dtype=dtype)
    load_into(model, arrays)
    return model, header
