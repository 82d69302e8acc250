"""Placebo false-positive-rate check for the permutation test."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contrasts import class_totals
from .permutation import PermutationPlan, run_permutations
from .simulator import SimulationParams, simulate


@dataclass
class CalibrationResult:
    statistic: str
    level: float
    replicates: int
    rejections: int
    p_values: list = field(default_factory=list)

    @property
    def rejection_rate(self) -> float:
        return self.rejections / self.replicates

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "level": self.level,
            "replicates": self.replicates,
            "rejections": self.rejections,
            "rejection_rate": self.rejection_rate,
            "p_values": list(self.p_values),
        }


def placebo_calibration(
    replicates: int = 200,
    n: int = 2000,
    lam: float = 0.02,
    p: float = 0.5,
    iterations: int = 1000,
    seed: int = 0,
    statistics=("corrected_lift",),
    mode: str = "full",
    level: float = 0.05,
    normalization: str = "realized",
    workers: int = 1,
) -> dict[str, CalibrationResult]:
    """Simulate placebo experiments and count permutation-test rejections.

    All ``statistics`` share the relabelings of each replicate.

    Replicate ``r`` uses simulation seed ``seed + r`` and permutation seed
    ``seed + r + 1_000_003`` so the two hash streams never share a seed.
    """
    statistics = list(statistics)
    p_values = {name: [] for name in statistics}
    for r in range(replicates):
        params = SimulationParams(n=n, p=p, lam=lam, seed=seed + r)
        edges, truth = simulate(params, workers=workers)
        sizes = (truth.n_treated, truth.n_control)
        class_totals(edges, sizes)  # fails early on a degenerate draw
        plan = PermutationPlan(mode=mode, iterations=iterations, seed=seed + r + 1_000_003, p=p)
        res = run_permutations(
            edges, statistics, plan, sizes, normalization=normalization, workers=workers
        )
        for name in statistics:
            p_values[name].append(res[name].p_value)
    return {
        name: CalibrationResult(
            statistic=name,
            level=level,
            replicates=replicates,
            rejections=int(np.count_nonzero(np.asarray(pv) < level)),
            p_values=pv,
        )
        for name, pv in p_values.items()
    }
