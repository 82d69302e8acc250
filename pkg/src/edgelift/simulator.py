"""Synthetic one-to-one messaging experiments with known ground truth.

Generative model, per ordered pair (i, j), i != j:

* baseline messages ~ Poisson(lam), no responses;
* a treated sender i adds Poisson(lam * q1) extra messages to each treated j
  and Poisson(lam * q2) to each control j;
* every extra message triggers a reply in the reverse direction with
  probability alpha, and so on, strictly alternating, until a reply fails
  or ``max_chain_depth`` replies have been sent.

Control members never initiate extra messages.

Independent Poisson counts over a sender's recipients are drawn as one
Poisson total spread uniformly over the recipients, which is the same
distribution and avoids touching all n^2 pairs. Randomness is derived from
``(seed, stream, sender block)`` so the output does not depend on how blocks
are scheduled.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import hashing
from .ingest import EdgeList, write_edge_file

# iteration key reserved for the simulated assignment; permutation
# iterations count up from 0 and never reach it
ASSIGNMENT_STREAM = 2**64 - 1
_BASELINE, _EXTRA_T, _EXTRA_C = 1, 2, 3
_BLOCK = 1024


@dataclass(frozen=True)
class SimulationParams:
    n: int
    p: float
    lam: float
    q1: float = 0.0
    q2: float = 0.0
    alpha: float = 0.0
    max_chain_depth: int | None = 50
    seed: int = 0
    perfect_affinity: bool = False

    def __post_init__(self):
        if self.n < 4:
            raise ValueError(f"n must be >= 4, got {self.n}")
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.q1 < 0 or self.q2 < 0:
            raise ValueError("instant lifts q1, q2 must be >= 0")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.max_chain_depth is not None and self.max_chain_depth < 1:
            raise ValueError("max_chain_depth must be positive or None")
        if self.perfect_affinity and self.q2 != 0.0:
            object.__setattr__(self, "q2", 0.0)

    @property
    def u(self) -> float:
        """Affinity parameter q1/q2 - 1; positive means treated-to-treated
        traffic is favoured (inf for perfect affinity, nan when both are 0)."""
        if self.q2:
            return self.q1 / self.q2 - 1.0
        return float("inf") if self.q1 else float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SimulationTruth:
    n_treated: int
    n_control: int
    expected_m_tt: float
    expected_m_tc: float
    expected_m_ct: float
    expected_m_cc: float
    true_corrected_lift: float
    true_alpha: float
    true_q1: float
    true_q2: float
    counterfactual_total_at_0: float
    counterfactual_total_at_1: float
    baseline_scale: float

    def to_dict(self) -> dict:
        return asdict(self)


def expected_totals(params: SimulationParams, sizes) -> SimulationTruth:
    """Closed-form class expectations given realized group sizes."""
    nt, nc = int(sizes[0]), int(sizes[1])
    lam, q1, q2, a = params.lam, params.q1, params.q2, params.alpha
    lift = q1 / (1.0 - a)
    e_cc = nc * (nc - 1) * lam
    n = nt + nc
    return SimulationTruth(
        n_treated=nt,
        n_control=nc,
        expected_m_tt=nt * (nt - 1) * lam * (1.0 + lift),
        expected_m_tc=nt * nc * lam * (1.0 + q2 / (1.0 - a * a)),
        expected_m_ct=nt * nc * lam * (1.0 + q2 * a / (1.0 - a * a)),
        expected_m_cc=e_cc,
        true_corrected_lift=lift,
        true_alpha=a,
        true_q1=q1,
        true_q2=q2,
        counterfactual_total_at_0=n * (n - 1) * lam,
        counterfactual_total_at_1=n * (n - 1) * lam * (1.0 + lift),
        baseline_scale=e_cc / (1.0 - params.p) ** 2,
    )


def simulated_assignment(params: SimulationParams) -> tuple[np.ndarray, np.ndarray]:
    ids = np.arange(1, params.n + 1, dtype=np.int64)
    return ids, hashing.assign_many(ids, ASSIGNMENT_STREAM, params.seed, params.p)


def _rng(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed & (2**64 - 1), spawn_key=(stream, block))
    return np.random.Generator(np.random.PCG64(ss))


def _draw_targets(rng, senders, counts, pool, exclude_self):
    """Uniform recipients from ``pool`` (sorted indices) for each message.

    With ``exclude_self`` the sender's own position in ``pool`` is skipped.
    """
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    src = np.repeat(senders, counts)
    size = len(pool) - 1 if exclude_self else len(pool)
    r = rng.integers(0, size, size=total)
    if exclude_self:
        own = np.searchsorted(pool, src)
        r = r + (r >= own)
    return src, pool[r]


def _chain_lengths(rng, k: int, alpha: float, depth: int | None) -> np.ndarray:
    """Number of replies following each of ``k`` initial extra messages."""
    if k == 0 or alpha == 0.0:
        return np.zeros(k, dtype=np.int64)
    r = rng.geometric(1.0 - alpha, size=k) - 1
    if depth is not None:
        np.minimum(r, depth, out=r)
    return r


def _simulate_block(params, block, senders, treated_idx, control_idx, treated):
    n = params.n
    everyone = np.arange(n, dtype=np.int64)
    srcs, dsts = [], []

    rng = _rng(params.seed, _BASELINE, block)
    counts = rng.poisson(params.lam * (n - 1), size=len(senders))
    s, d = _draw_targets(rng, senders, counts, everyone, exclude_self=True)
    srcs.append(s)
    dsts.append(d)

    t_senders = senders[treated[senders]]
    for stream, rate, pool, excl in (
        (_EXTRA_T, params.q1 * params.lam * (len(treated_idx) - 1), treated_idx, True),
        (_EXTRA_C, params.q2 * params.lam * len(control_idx), control_idx, False),
    ):
        if rate <= 0 or len(t_senders) == 0 or len(pool) - int(excl) <= 0:
            continue
        rng = _rng(params.seed, stream, block)
        counts = rng.poisson(rate, size=len(t_senders))
        s, d = _draw_targets(rng, t_senders, counts, pool, exclude_self=excl)
        replies = _chain_lengths(rng, len(s), params.alpha, params.max_chain_depth)
        forward = 1 + replies // 2
        backward = (replies + 1) // 2
        srcs += [np.repeat(s, forward), np.repeat(d, backward)]
        dsts += [np.repeat(d, forward), np.repeat(s, backward)]
    return np.concatenate(srcs), np.concatenate(dsts)


def simulate(params: SimulationParams, workers: int = 1) -> tuple[EdgeList, SimulationTruth]:
    """Draw one experiment; returns the edge list and its ground truth."""
    ids, treated = simulated_assignment(params)
    treated_idx = np.flatnonzero(treated)
    control_idx = np.flatnonzero(~treated)
    blocks = [
        (b, np.arange(lo, min(lo + _BLOCK, params.n), dtype=np.int64))
        for b, lo in enumerate(range(0, params.n, _BLOCK))
    ]

    def run(item):
        b, senders = item
        return _simulate_block(params, b, senders, treated_idx, control_idx, treated)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, blocks))
    else:
        parts = [run(item) for item in blocks]

    src = np.concatenate([p[0] for p in parts])
    dst = np.concatenate([p[1] for p in parts])
    keys, msg = np.unique(src * params.n + dst, return_counts=True)
    s_idx, d_idx = np.divmod(keys, params.n)
    edges = EdgeList(
        ids[s_idx], ids[d_idx], msg, treated[s_idx], treated[d_idx], canonical=True
    )
    nt = int(treated.sum())
    return edges, expected_totals(params, (nt, params.n - nt))


def class_total_sd(truth: SimulationTruth, params: SimulationParams) -> dict[str, float]:
    """Standard deviations of the realized class totals.

    Baseline counts are Poisson. Extra traffic is a compound Poisson sum
    over chains, whose variance is ``rate * E[X^2]`` for the per-chain
    message count X landing in the class.
    """
    a = params.alpha
    lam = params.lam
    nt, nc = truth.n_treated, truth.n_control
    # per-chain counts: forward F = 1 + floor(R/2), backward B = ceil(R/2)
    # E[F^2], E[B^2], E[(F+B)^2] for untruncated geometric R
    a2 = a * a
    # per chain: forward F = 1 + floor(R/2), backward B = ceil(R/2), both
    # geometric-type; TT keeps all 1 + R messages of a chain
    ef2 = (1.0 + a2) / (1.0 - a2) ** 2
    eb2 = a * (1.0 + a2) / (1.0 - a2) ** 2
    etot2 = (1.0 + a) / (1.0 - a) ** 2
    pairs_tt = nt * (nt - 1)
    var_tt = pairs_tt * lam * (1.0 + params.q1 * etot2)
    var_tc = nt * nc * lam * (1.0 + params.q2 * ef2)
    var_ct = nt * nc * lam * (1.0 + params.q2 * eb2)
    var_cc = nc * (nc - 1) * lam
    return {k: math.sqrt(v) for k, v in
            zip(("tt", "tc", "ct", "cc"), (var_tt, var_tc, var_ct, var_cc))}


def write_simulation(
    edges: EdgeList, truth: SimulationTruth, params: SimulationParams, path
) -> tuple[str, str]:
    """Write the edge file and a ``<stem>.truth.json`` sidecar next to it."""
    path = os.fspath(path)
    write_edge_file(edges, path)
    stem, _ = os.path.splitext(path)
    truth_path = stem + ".truth.json"
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump({"params": params.to_dict(), "truth": truth.to_dict()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path, truth_path


def with_seed(params: SimulationParams, seed: int) -> SimulationParams:
    return replace(params, seed=seed)
