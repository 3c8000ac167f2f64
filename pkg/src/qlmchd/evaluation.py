"""Repeated stratified holdout, with optional noise injection and nested tuning."""
from __future__ import annotations

import dataclasses
import itertools
import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import data as ds
from .classifier import LMCHD, OAO, OAR, QLMCHD, HyperParams, TrainingError, fit_multiclass
from .kernels import gram, gram_cross

log = logging.getLogger(__name__)

LABEL = "label"
FEATURE = "feature"
NOISE_TARGETS = ("both", "train")


@dataclass(frozen=True)
class ExperimentConfig:
    params: HyperParams = field(default_factory=HyperParams)
    strategy: str = OAO
    method: str = QLMCHD
    split_ratio: float = 0.5
    repetitions: int = 10
    seed: int = 0
    label_noise: float = 0.0
    feature_noise: float = 0.0
    noise_target: str = "both"
    standardize: bool = True
    # nested tuning: every combination is scored on inner holdout splits of the training part
    B_grid: tuple = ()
    tau_grid: tuple = ()
    C_grid: tuple = ()
    inner_ratio: float = 0.7
    inner_repetitions: int = 3
    subsample: int | None = None

    def __post_init__(self):
        if not 0 < self.split_ratio < 1:
            raise ValueError(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        if not 0 < self.inner_ratio < 1:
            raise ValueError(f"inner_ratio must lie in (0, 1), got {self.inner_ratio}")
        if self.repetitions < 1 or self.inner_repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not 0 <= self.label_noise < 1:
            raise ValueError(f"label_noise must lie in [0, 1), got {self.label_noise}")
        if self.feature_noise < 0:
            raise ValueError(f"feature_noise must be >= 0, got {self.feature_noise}")
        if self.noise_target not in NOISE_TARGETS:
            raise ValueError(f"noise_target must be one of {NOISE_TARGETS}")
        if self.strategy not in (OAO, OAR):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.method not in (QLMCHD, LMCHD):
            raise ValueError(f"unknown method {self.method!r}")
        for name in ("B_grid", "tau_grid", "C_grid"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @property
    def tuned(self) -> bool:
        return bool(self.B_grid or self.tau_grid or self.C_grid)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["params"] = self.params.to_dict()
        for name in ("B_grid", "tau_grid", "C_grid"):
            d[name] = list(d[name])
        return d


@dataclass(frozen=True)
class Metrics:
    accuracy_mean: float
    accuracy_std: float
    per_repetition: tuple
    failures: int
    chosen_params: tuple = ()
    wall_time: float = field(default=0.0, compare=False)

    @property
    def completed(self) -> int:
        return len(self.per_repetition) - self.failures

    def __str__(self):
        s = f"{self.accuracy_mean:.1f}±{self.accuracy_std:.1f}"
        return s + (f" ({self.failures} failed)" if self.failures else "")


def summarize(values) -> tuple[float, float]:
    """Mean and sample std (``ddof=1``) of the finite values; one value gives std 0."""
    vals = np.asarray([v for v in values if v is not None and not math.isnan(v)], dtype=float)
    if vals.size == 0:
        return math.nan, math.nan
    if vals.size == 1:
        warnings.warn("a single repetition has no spread; reporting std 0")
        return float(vals[0]), 0.0
    return float(vals.mean()), float(vals.std(ddof=1))


def _seeds(seed, k):
    """Per-repetition (split, noise, tuning) seeds, independent of evaluation order."""
    return [tuple(int(v) for v in child.generate_state(4)) for child in np.random.SeedSequence(seed).spawn(k)]


def prepare_split(dataset: ds.Dataset, config: ExperimentConfig, seeds):
    """Split, standardize and inject noise for one repetition."""
    s_split, s_noise, _, s_sub = seeds
    if config.subsample:
        dataset = ds.stratified_subsample(dataset, config.subsample, s_sub)
    train, test = ds.holdout_split(dataset, config.split_ratio, s_split)
    if config.standardize:
        train, (test,) = ds.standardize(train, test)
    noise_rng = np.random.SeedSequence(s_noise).spawn(4)
    if config.label_noise > 0:
        train = ds.inject_label_noise(train, config.label_noise, noise_rng[0])
        if config.noise_target == "both":
            test = ds.inject_label_noise(test, config.label_noise, noise_rng[1])
    if config.feature_noise > 0:
        std = train.features.std(axis=0)
        train = ds.inject_feature_noise(train, config.feature_noise, noise_rng[2], std)
        if config.noise_target == "both":
            test = ds.inject_feature_noise(test, config.feature_noise, noise_rng[3], std)
    return train, test


def _grid(config: ExperimentConfig):
    p = config.params
    return [
        p.replace(B=B, tau=tau, C=C)
        for B, tau, C in itertools.product(
            config.B_grid or (p.B,), config.tau_grid or (p.tau,), config.C_grid or (p.C,)
        )
    ]


def select_params(train: ds.Dataset, config: ExperimentConfig, seed) -> HyperParams:
    """Pick the grid point with the best mean accuracy over inner holdout splits.

    Ties go to the earliest grid point.  LMC-HD runs ignore ``B``.
    """
    candidates = _grid(config if config.method == QLMCHD else config.replace(B_grid=()))
    if len(candidates) == 1:
        return candidates[0]
    scores = np.zeros(len(candidates))
    for s in np.random.SeedSequence(seed).spawn(config.inner_repetitions):
        inner_train, inner_val = ds.holdout_split(train, config.inner_ratio, s)
        kernel = config.params.kernel
        K = gram(kernel, inner_train.features)
        K_val = gram_cross(kernel, inner_val.features, inner_train.features)
        cache = {}
        for c, params in enumerate(candidates):
            try:
                model = fit_multiclass(
                    inner_train.features, inner_train.labels, config.strategy, params, config.method,
                    K=K, cache=cache,
                )
                scores[c] += ds.accuracy(model.predict(Kz=K_val), inner_val.labels)
            except TrainingError:
                pass
    return candidates[int(np.argmax(scores))]


def run_repetition(dataset: ds.Dataset, config: ExperimentConfig, seeds):
    """Accuracy (or ``None`` on training failure) and the parameters used."""
    train, test = prepare_split(dataset, config, seeds)
    params = select_params(train, config, seeds[2]) if config.tuned else config.params
    try:
        model = fit_multiclass(train.features, train.labels, config.strategy, params, config.method)
    except TrainingError as exc:
        log.warning("repetition failed: %s", exc)
        return None, params
    return ds.accuracy(model.predict(test.features), test.labels), params


def repeated_holdout_eval(dataset: ds.Dataset, config: ExperimentConfig) -> Metrics:
    t0 = time.perf_counter()
    accs, chosen = [], []
    for seeds in _seeds(config.seed, config.repetitions):
        acc, params = run_repetition(dataset, config, seeds)
        accs.append(acc)
        chosen.append(params)
    failures = sum(a is None for a in accs)
    with warnings.catch_warnings():
        if config.repetitions > 1:
            warnings.simplefilter("ignore")
        mean, std = summarize(accs)
    return Metrics(mean, std, tuple(accs), failures, tuple(chosen), time.perf_counter() - t0)
