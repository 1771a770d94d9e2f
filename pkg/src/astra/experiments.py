"""Toy-scale comparison of plain RNNT training against consistency + text branch."""

from __future__ import annotations

from dataclasses import dataclass, replace
from statistics import median
from typing import Sequence

from . import toy


@dataclass(frozen=True)
class SeedResult:
    seed: int
    baseline_ter: float
    baseline_l_c: float
    astra_ter: float
    astra_l_c: float


@dataclass(frozen=True)
class SweepSummary:
    rows: tuple[SeedResult, ...]

    @property
    def median_baseline_ter(self) -> float:
        return median(r.baseline_ter for r in self.rows)

    @property
    def median_astra_ter(self) -> float:
        return median(r.astra_ter for r in self.rows)

    @property
    def strict_wins(self) -> int:
        return sum(r.astra_ter < r.baseline_ter for r in self.rows)

    @property
    def l_c_reduction(self) -> float:
        """Relative drop of the median final mean l_c, baseline -> consistency."""
        base = median(r.baseline_l_c for r in self.rows)
        return (base - median(r.astra_l_c for r in self.rows)) / base


def baseline_config(cfg: toy.TrainConfig) -> toy.TrainConfig:
    """Plain RNNT: no consistency term and no text branch."""
    return replace(cfg, lambda_consistency=0.0, enable_consistency=False, enable_text_branch=False)


def run_seed(cfg: toy.TrainConfig) -> SeedResult:
    train_set, test_set = toy.make_splits(cfg)
    out = {}
    for name, c in (("baseline", baseline_config(cfg)), ("astra", cfg)):
        out[name] = toy.evaluate(toy.train(c, train_set), test_set, c.pointwise)
    return SeedResult(cfg.seed, *out["baseline"], *out["astra"])


def sweep(seeds: Sequence[int] = range(5), **overrides) -> SweepSummary:
    return SweepSummary(tuple(run_seed(toy.TrainConfig(seed=s, **overrides)) for s in seeds))
