"""Seeded synthetic scored datasets and the perturbations used in trend studies.

Scores are ``expit(d * x + PRIOR_WEIGHT * logit(b_g))`` with a label-conditional
normal ``x ~ N(+-d/2, 1)``.  Within a group the AUC is ``Phi(d / sqrt(2))`` for
separability ``d``; the pooled AUC is slightly higher because of the group
prior term.  The prior term stands in for a model that has partly learned the
group base rates, which is what makes equal opportunity costly at all.  Noise
mixes a score with a uniform draw: ``s' = (1 - lam) * s + lam * u``.

All random draws are made up front in a fixed order and do not depend on base
rates or noise levels, so configs that differ in one knob share their
randomness (common random numbers) and trend studies are not swamped by
sampling noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import expit, logit
from scipy.stats import norm

from .dataset import TEST, VALIDATION, ScoredDataset


class ConfigError(ValueError):
    pass


def separability_for_auc(auc: float) -> float:
    if not 0.5 <= auc < 1.0:
        raise ValueError("target AUC must lie in [0.5, 1)")
    return float(math.sqrt(2.0) * norm.ppf(auc))


def auc_for_separability(separability: float) -> float:
    return float(norm.cdf(separability / math.sqrt(2.0)))


DEFAULT_SEPARABILITY = round(separability_for_auc(0.9), 4)  # 1.8124

# weight of the group base-rate log-odds in the score logit (0 = group-blind)
PRIOR_WEIGHT = 0.25


@dataclass(frozen=True)
class SynthConfig:
    n: int = 10_000
    group_weights: dict[str, float] = field(default_factory=lambda: {"A": 0.5, "B": 0.5})
    base_rates: dict[str, float] = field(default_factory=lambda: {"A": 0.45, "B": 0.25})
    separability: float = DEFAULT_SEPARABILITY
    global_noise: float = 0.0
    subgroup_noise: dict[str, float] = field(default_factory=dict)
    seed: int = 42
    disadvantaged: str = "B"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if len(self.group_weights) < 2:
            raise ConfigError("at least two groups required")
        if set(self.base_rates) != set(self.group_weights):
            raise ConfigError("base_rates and group_weights name different groups")
        if abs(sum(self.group_weights.values()) - 1.0) > 1e-9:
            raise ConfigError("group weights must sum to 1")
        if any(w <= 0 for w in self.group_weights.values()):
            raise ConfigError("group weights must be positive")
        if any(not 0.0 < b < 1.0 for b in self.base_rates.values()):
            raise ConfigError("base rates must lie in (0, 1)")
        if not self.separability > 0:
            raise ConfigError("separability must be positive")
        if not 0.0 <= self.global_noise <= 0.5:
            raise ConfigError("global_noise must lie in [0, 0.5]")
        for g, lam in self.subgroup_noise.items():
            if g not in self.group_weights:
                raise ConfigError(f"subgroup_noise names unknown group {g!r}")
            if not 0.0 <= lam <= 0.5:
                raise ConfigError(f"subgroup_noise[{g}] must lie in [0, 0.5]")
        if self.disadvantaged not in self.group_weights:
            raise ConfigError(f"disadvantaged group {self.disadvantaged!r} not configured")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def groups(self) -> list[str]:
        return list(self.group_weights)

    @property
    def advantaged(self) -> str:
        others = [g for g in self.groups if g != self.disadvantaged]
        if len(others) != 1:
            raise ConfigError("advantaged group is only defined for two-group configs")
        return others[0]

    def mean_base_rate(self) -> float:
        return sum(self.group_weights[g] * self.base_rates[g] for g in self.groups)

    def to_text(self) -> str:
        lines = [
            f"n = {self.n}",
            f"group_weights = {_fmt_map(self.group_weights)}",
            f"base_rates = {_fmt_map(self.base_rates)}",
            f"separability = {self.separability!r}",
            f"global_noise = {self.global_noise!r}",
            f"subgroup_noise = {_fmt_map(self.subgroup_noise)}",
            f"seed = {self.seed}",
            f"disadvantaged = {self.disadvantaged}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SynthConfig":
        raw: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            raw[key] = value
        unknown = set(raw) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        try:
            if "n" in raw:
                kwargs["n"] = int(raw["n"])
            if "seed" in raw:
                kwargs["seed"] = int(raw["seed"])
            for key in ("separability", "global_noise"):
                if key in raw:
                    kwargs[key] = float(raw[key])
            for key in ("group_weights", "base_rates", "subgroup_noise"):
                if key in raw:
                    kwargs[key] = _parse_map(raw[key])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if "disadvantaged" in raw:
            kwargs["disadvantaged"] = raw["disadvantaged"]
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "SynthConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def _fmt_map(m: dict[str, float]) -> str:
    return ",".join(f"{k}:{v!r}" for k, v in m.items())


def _parse_map(text: str) -> dict[str, float]:
    out = {}
    for item in filter(None, (p.strip() for p in text.split(","))):
        if ":" not in item:
            raise ValueError(f"expected 'group:value', got {item!r}")
        k, v = item.split(":", 1)
        out[k.strip()] = float(v)
    return out


def generate(config: SynthConfig) -> ScoredDataset:
    """Draw a scored dataset; identical configs give identical datasets.

    Group membership is drawn by weight.  Each group holds exactly
    ``round(base_rate * size)`` positives, placed on a random subset of members.
    Splits alternate validation/test within each group in draw order.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    groups = config.groups
    n = config.n
    weights = np.array([config.group_weights[g] for g in groups])
    codes = rng.choice(len(groups), size=n, p=weights / weights.sum())
    label_rank = rng.permutation(n)
    eps = rng.standard_normal(n)
    u = rng.random(n)

    labels = np.zeros(n, dtype=np.int64)
    splits = np.empty(n, dtype=object)
    lam = np.zeros(n)
    prior = np.zeros(n)
    for c, g in enumerate(groups):
        members = np.flatnonzero(codes == c)
        n_pos = int(math.floor(config.base_rates[g] * len(members) + 0.5))
        by_rank = members[np.argsort(label_rank[members], kind="stable")]
        labels[by_rank[:n_pos]] = 1
        splits[members] = np.where(np.arange(len(members)) % 2 == 0, VALIDATION, TEST)
        lam[members] = config.global_noise + config.subgroup_noise.get(g, 0.0)
        prior[members] = logit(config.base_rates[g])
    lam = np.clip(lam, 0.0, 1.0)

    d = config.separability
    x = np.where(labels == 1, 0.5, -0.5) * d + eps
    scores = (1.0 - lam) * expit(d * x + PRIOR_WEIGHT * prior) + lam * u
    return ScoredDataset.from_arrays(scores, labels, [groups[c] for c in codes], splits)


def perturb_disparity(config: SynthConfig, target: float) -> SynthConfig:
    """Set advantaged minus disadvantaged base rate to ``target``.

    The weighted mean base rate is kept; with equal weights the two rates move
    symmetrically about their mean.
    """
    adv, dis = config.advantaged, config.disadvantaged
    w_adv, w_dis = config.group_weights[adv], config.group_weights[dis]
    mean = config.mean_base_rate()
    b_adv = mean + w_dis * target
    b_dis = mean - w_adv * target
    if not (0.0 < b_adv < 1.0 and 0.0 < b_dis < 1.0):
        raise ConfigError(f"disparity {target} pushes a base rate outside (0, 1)")
    return replace(config, base_rates={**config.base_rates, adv: b_adv, dis: b_dis})


def perturb_noise(config: SynthConfig, level: float) -> SynthConfig:
    if not 0.0 <= level <= 0.5:
        raise ConfigError("noise level must lie in [0, 0.5]")
    return replace(config, global_noise=float(level))


def perturb_subgroup_noise(config: SynthConfig, group: str, level: float) -> SynthConfig:
    if group not in config.group_weights:
        raise ConfigError(f"unknown group {group!r}")
    if not 0.0 <= level <= 0.5:
        raise ConfigError("noise level must lie in [0, 0.5]")
    return replace(config, subgroup_noise={**config.subgroup_noise, group: float(level)})


def subsample_group(ds: ScoredDataset, group: str, keep_fraction: float, seed: int) -> ScoredDataset:
    """Keep exactly ``round(keep_fraction * |group|)`` uniformly chosen members of ``group``."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ConfigError("keep_fraction must lie in (0, 1]")
    members = ds.per_group_index.get(group)
    if members is None:
        raise ConfigError(f"unknown group {group!r}")
    if keep_fraction == 1.0:
        return ds
    keep = int(math.floor(keep_fraction * len(members) + 0.5))
    if keep == 0:
        raise ConfigError(f"subsampling would empty group {group!r}")
    rng = np.random.default_rng(seed)
    kept = rng.choice(np.sort(members), size=keep, replace=False)
    mask = ds.group_codes != ds.groups.index(group)
    mask[kept] = True
    return ds.subset(np.flatnonzero(mask))


def with_seed(config: SynthConfig, seed: int) -> SynthConfig:
    return replace(config, seed=int(seed))


def perfect_dataset(base_rates: dict[str, float], weights: dict[str, float], n: int, seed: int = 0) -> ScoredDataset:
    """Scores equal to labels, with a small seeded jitter fixing the order.

    Positives score in [0.75, 0.95), negatives in [0.05, 0.25).
    """
    if set(base_rates) != set(weights):
        raise ConfigError("base_rates and weights name different groups")
    from .enforce import apportion

    groups = list(weights)
    sizes = apportion(n, [weights[g] for g in groups])
    labels, names = [], []
    for g, size in zip(groups, sizes):
        pos = int(math.floor(base_rates[g] * size + 0.5))
        labels += [1] * pos + [0] * (size - pos)
        names += [g] * size
    labels = np.array(labels)
    jitter = np.random.default_rng(seed).random(len(labels)) * 0.2
    scores = np.where(labels == 1, 0.75, 0.05) + jitter
    return ScoredDataset.from_arrays(scores, labels, names)
