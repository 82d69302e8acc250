"""Network-consistent permutation testing.

Each iteration relabels members with hash-derived Bernoulli(p) labels that
are a pure function of ``(seed, member, iteration)``, so a member carries one
label on every edge where it plays the permuted role. Three schemes:

- ``full``: sender and recipient labels are both redrawn;
- ``sender``: sender labels redrawn, recipient labels kept;
- ``recipient``: recipient labels redrawn, sender labels kept.

Per iteration the edge list reduces to integer class totals; any statistic
over :class:`ClassTotals` / :class:`SendReceiveTotals` is then evaluated on
those totals. Output does not depend on chunking or thread count.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import sparse

from . import hashing
from .contrasts import ClassTotals, class_values, normalized_contrasts
from .errors import DegenerateError, UndefinedEstimate
from .estimators import (
    SendReceiveTotals,
    alpha_terms,
    approx_alpha,
    approx_total_effect,
    effective_p,
    instant_lift,
    standard_lifts,
    total_treatment_effect,
)
from .ingest import PERMUTATION_MODES, EdgeList

logger = logging.getLogger(__name__)

# salt separating the silent-member stream from per-member hashes
_SILENT_SALT = 0x51E475EED
MAX_UNDEFINED_FRACTION = 0.10
_CHUNK_CELLS = 2_000_000


@dataclass(frozen=True)
class PermutationPlan:
    mode: str = "full"
    iterations: int = 1000
    seed: int = 0
    p: float = 0.5
    ci_level: float = 0.90

    def __post_init__(self):
        if self.mode not in PERMUTATION_MODES:
            raise ValueError(f"unknown permutation mode {self.mode!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError(f"ci_level must lie in (0, 1), got {self.ci_level}")


@dataclass
class PermutationResult:
    statistic: str
    observed: float
    null_values: np.ndarray
    p_value: float
    ci_low: float
    ci_high: float
    mode: str
    iterations: int
    ci_level: float
    undefined: int = 0

    @property
    def significant(self) -> bool:
        return self.p_value < 1.0 - self.ci_level

    def to_dict(self, include_null: bool = False) -> dict:
        d = {
            "statistic": self.statistic,
            "observed": self.observed,
            "p_value": self.p_value,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "mode": self.mode,
            "iterations": self.iterations,
            "ci_level": self.ci_level,
            "undefined": self.undefined,
        }
        if include_null:
            d["null_values"] = [float(x) for x in self.null_values]
        return d


# --------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class Sample:
    """Class totals of one labeling plus the send/receive view of it."""

    totals: ClassTotals
    srt: SendReceiveTotals


Statistic = Callable[[Sample, float, str], float]


def _nan(x) -> float:
    return float("nan") if x is None else float(x)


def _corrected(s: Sample, p: float, norm: str):
    return total_treatment_effect(s.totals, effective_p(s.totals, p, norm))


def _alpha(s: Sample, p: float, norm: str) -> float:
    num, den = alpha_terms(s.totals, effective_p(s.totals, p, norm))
    return num / den if den != 0.0 else float("nan")


def _q1(s: Sample, p: float, norm: str) -> float:
    lift = _corrected(s, p, norm).lift
    a = _alpha(s, p, norm)
    if lift is None or math.isnan(a) or a == 1.0:
        return float("nan")
    return instant_lift(lift, a)


def _lifts(s: Sample):
    return standard_lifts(s.srt)


def _approx_lift(s: Sample, p: float, norm: str) -> float:
    send, recv = _lifts(s)
    return float("nan") if send is None or recv is None else approx_total_effect(send, recv)


def _approx_alpha(s: Sample, p: float, norm: str) -> float:
    send, recv = _lifts(s)
    if send is None or recv is None or send == 0.0:
        return float("nan")
    return approx_alpha(send, recv)


def _contrast(attr: str) -> Statistic:
    def f(s: Sample, p: float, norm: str) -> float:
        return getattr(normalized_contrasts(s.totals, p, norm), attr)

    f.__name__ = attr
    return f


def _vs_cc(idx: int) -> Statistic:
    def f(s: Sample, p: float, norm: str) -> float:
        vals = class_values(s.totals, p, norm)
        return vals[idx] - vals[3]

    return f


def _tt_vs_tc(s: Sample, p: float, norm: str) -> float:
    vals = class_values(s.totals, p, norm)
    return vals[0] - vals[1]


STATISTICS: dict[str, Statistic] = {
    "corrected_lift": lambda s, p, n: _nan(_corrected(s, p, n).lift),
    "corrected_effect_abs": lambda s, p, n: _corrected(s, p, n).absolute,
    "alpha": _alpha,
    "alpha_numerator": lambda s, p, n: alpha_terms(s.totals, effective_p(s.totals, p, n))[0],
    "alpha_denominator": lambda s, p, n: alpha_terms(s.totals, effective_p(s.totals, p, n))[1],
    "q1": _q1,
    "send_lift": lambda s, p, n: _nan(_lifts(s)[0]),
    "receive_lift": lambda s, p, n: _nan(_lifts(s)[1]),
    "approx_lift": _approx_lift,
    "approx_alpha": _approx_alpha,
    "placebo_spread": _contrast("placebo_spread"),
    "response_contrast": _contrast("response_contrast"),
    "affinity_contrast": _contrast("affinity_contrast"),
    "affinity_balance": _contrast("affinity_balance"),
    "perfect_affinity_gap": _tt_vs_tc,
    "tt_vs_cc": _vs_cc(0),
    "tc_vs_cc": _vs_cc(1),
    "ct_vs_cc": _vs_cc(2),
    "total_messages": lambda s, p, n: float(s.totals.total_messages),
}


def evaluate(stat: str | Statistic, sample: Sample, p: float, normalization: str) -> float:
    fn = STATISTICS[stat] if isinstance(stat, str) else stat
    try:
        v = float(fn(sample, p, normalization))
    except (UndefinedEstimate, DegenerateError, ZeroDivisionError, ValueError):
        # degenerate relabelings, e.g. a realized share of 0 or 1
        return float("nan")
    return v if math.isfinite(v) else float("nan")


# --------------------------------------------------------------------------
# relabeling


@dataclass
class _Layout:
    """Edge list re-indexed by member position, plus silent-member counts."""

    members: np.ndarray
    flags: np.ndarray
    silent_t: int
    silent_c: int
    weights: sparse.csr_matrix
    out_msgs: np.ndarray
    in_msgs: np.ndarray
    total: float

    @classmethod
    def build(cls, edges: EdgeList, sizes) -> "_Layout":
        members, flags = edges.members()
        obs_t = int(flags.sum())
        obs_c = len(flags) - obs_t
        silent_t = int(sizes[0]) - obs_t
        silent_c = int(sizes[1]) - obs_c
        if silent_t < 0 or silent_c < 0:
            raise ValueError("group sizes smaller than observed member counts")
        src_idx = np.searchsorted(members, edges.src)
        dst_idx = np.searchsorted(members, edges.dest)
        msg = edges.msg.astype(np.float64)
        n = len(members)
        weights = sparse.csr_matrix((msg, (src_idx, dst_idx)), shape=(n, n))
        return cls(
            members=members,
            flags=flags,
            silent_t=silent_t,
            silent_c=silent_c,
            weights=weights,
            out_msgs=np.bincount(src_idx, weights=msg, minlength=n),
            in_msgs=np.bincount(dst_idx, weights=msg, minlength=n),
            total=float(msg.sum()),
        )


def relabel(edges: EdgeList, plan: PermutationPlan, iteration: int) -> EdgeList:
    """Edge list with the permuted role(s) relabeled for one iteration."""
    if not 0 <= iteration < plan.iterations:
        raise ValueError(f"iteration {iteration} outside [0, {plan.iterations})")
    st, dt = edges.src_treated, edges.dest_treated
    if plan.mode in ("full", "sender"):
        st = hashing.assign_many(edges.src, iteration, plan.seed, plan.p)
    if plan.mode in ("full", "recipient"):
        dt = hashing.assign_many(edges.dest, iteration, plan.seed, plan.p)
    return EdgeList(edges.src, edges.dest, edges.msg, st, dt, canonical=True)


def _silent_split(layout: _Layout, iterations: np.ndarray, plan: PermutationPlan):
    """Relabeled-treated counts among silent members (orig T, orig C).

    Silent members appear in no edge, so only their counts matter; the draw
    is a binomial seeded from the same hash family per iteration.
    """
    a = np.zeros(len(iterations), dtype=np.int64)
    b = np.zeros(len(iterations), dtype=np.int64)
    if layout.silent_t == 0 and layout.silent_c == 0:
        return a, b
    keys = hashing.murmur3_words(plan.seed ^ _SILENT_SALT, 0, iterations.astype(np.uint64))
    for i, k in enumerate(keys.tolist()):
        rng = np.random.Generator(np.random.Philox(key=k))
        a[i] = rng.binomial(layout.silent_t, plan.p) if layout.silent_t else 0
        b[i] = rng.binomial(layout.silent_c, plan.p) if layout.silent_c else 0
    return a, b


@dataclass
class TotalsBatch:
    """Per-iteration integer totals, one row per iteration."""

    messages: np.ndarray  # (B, 4)
    pairs: np.ndarray  # (B, 4)
    send_sizes: np.ndarray  # (B, 2)
    recv_sizes: np.ndarray  # (B, 2)
    class_sizes: np.ndarray  # (B, 2)

    def sample(self, i: int) -> Sample:
        totals = ClassTotals(
            *(int(x) for x in self.messages[i]),
            *(int(x) for x in self.pairs[i]),
            n_treated=int(self.class_sizes[i, 0]),
            n_control=int(self.class_sizes[i, 1]),
        )
        m = totals
        srt = SendReceiveTotals(
            ms_t=m.m_tt + m.m_tc,
            ms_c=m.m_ct + m.m_cc,
            mr_t=m.m_tt + m.m_ct,
            mr_c=m.m_tc + m.m_cc,
            n_treated=int(self.send_sizes[i, 0]),
            n_control=int(self.send_sizes[i, 1]),
            n_treated_recv=int(self.recv_sizes[i, 0]),
            n_control_recv=int(self.recv_sizes[i, 1]),
        )
        return Sample(totals, srt)

    def __len__(self) -> int:
        return len(self.messages)


def _pair_counts(send_t, send_c, recv_t, recv_c, self_counts):
    """Ordered pairs by class with self-pairs removed.

    ``self_counts`` columns: members labeled (T,T), (T,C), (C,T), (C,C)
    as (sender role, recipient role).
    """
    return np.stack(
        [
            send_t * recv_t - self_counts[:, 0],
            send_t * recv_c - self_counts[:, 1],
            send_c * recv_t - self_counts[:, 2],
            send_c * recv_c - self_counts[:, 3],
        ],
        axis=1,
    )


def _chunk_totals(layout: _Layout, plan: PermutationPlan, iterations: np.ndarray) -> TotalsBatch:
    b = len(iterations)
    orig = layout.flags
    new = hashing.assign_many(layout.members[None, :], iterations[:, None], plan.seed, plan.p)
    orig_b = np.broadcast_to(orig, new.shape)
    if plan.mode == "full":
        s_lab, r_lab = new, new
    elif plan.mode == "sender":
        s_lab, r_lab = new, orig_b
    else:
        s_lab, r_lab = orig_b, new

    # m_tt = s' W r; the other classes follow from row and column sums.
    # float64 sums of integer counts are exact below 2**53.
    s_f = s_lab.astype(np.float64)
    r_f = r_lab.astype(np.float64)
    to_treated = np.asarray(layout.weights @ r_f.T)  # (members, b)
    m_tt = np.einsum("bi,ib->b", s_f, to_treated)
    ms_t = s_f @ layout.out_msgs
    mr_t = r_f @ layout.in_msgs
    m_tc = ms_t - m_tt
    m_ct = mr_t - m_tt
    m_cc = layout.total - m_tt - m_tc - m_ct
    messages = np.rint(np.stack([m_tt, m_tc, m_ct, m_cc], axis=1)).astype(np.int64)

    a, bb = _silent_split(layout, iterations, plan)
    st, sc = layout.silent_t, layout.silent_c
    silent_orig_t = np.full(b, st)
    silent_new_t = a + bb
    silent_new_c = st + sc - silent_new_t

    def joint(x, y):
        return (x & y).sum(axis=1)

    # (sender, recipient) label combinations per member
    self_counts = np.stack(
        [
            joint(s_lab, r_lab),
            joint(s_lab, ~r_lab),
            joint(~s_lab, r_lab),
            joint(~s_lab, ~r_lab),
        ],
        axis=1,
    ).astype(np.int64)
    if plan.mode == "full":
        self_counts[:, 0] += silent_new_t
        self_counts[:, 3] += silent_new_c
        send_t = recv_t = s_lab.sum(axis=1) + silent_new_t
    else:
        # permuted side uses the new silent split, kept side the original one
        if plan.mode == "sender":
            # rows: (new label, orig label)
            self_counts += np.stack([a, bb, st - a, sc - bb], axis=1)
            send_t = s_lab.sum(axis=1) + silent_new_t
            recv_t = r_lab.sum(axis=1) + silent_orig_t
        else:
            self_counts += np.stack([a, st - a, bb, sc - bb], axis=1)
            send_t = s_lab.sum(axis=1) + silent_orig_t
            recv_t = r_lab.sum(axis=1) + silent_new_t
    n_total = len(orig) + st + sc
    send_c = n_total - send_t
    recv_c = n_total - recv_t
    pairs = _pair_counts(send_t, send_c, recv_t, recv_c, self_counts)
    send_sizes = np.stack([send_t, send_c], axis=1)
    recv_sizes = np.stack([recv_t, recv_c], axis=1)
    class_sizes = recv_sizes if plan.mode == "recipient" else send_sizes
    return TotalsBatch(messages, pairs, send_sizes, recv_sizes, class_sizes)


def permuted_totals(
    edges: EdgeList, plan: PermutationPlan, sizes, workers: int = 1
) -> TotalsBatch:
    """Integer class totals for every iteration of ``plan``."""
    layout = _Layout.build(edges, sizes)
    iters = np.arange(plan.iterations, dtype=np.int64)
    per_iter_cells = max(len(layout.members), 1)
    chunk = max(1, _CHUNK_CELLS // per_iter_cells)
    chunks = [iters[i : i + chunk] for i in range(0, len(iters), chunk)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda c: _chunk_totals(layout, plan, c), chunks))
    else:
        parts = [_chunk_totals(layout, plan, c) for c in chunks]
    return TotalsBatch(
        *(np.concatenate([getattr(pt, f) for pt in parts]) for f in
          ("messages", "pairs", "send_sizes", "recv_sizes", "class_sizes"))
    )


def observed_sample(edges: EdgeList, sizes) -> Sample:
    from .contrasts import message_totals

    totals = ClassTotals.from_sizes(message_totals(edges), sizes[0], sizes[1])
    return Sample(totals, SendReceiveTotals.from_class_totals(totals))


# --------------------------------------------------------------------------
# inference


def summarize_null(
    name: str,
    observed: float,
    null_values: np.ndarray,
    plan: PermutationPlan,
) -> PermutationResult:
    """Two-sided add-one p-value and shift-method CI from a null sample."""
    null_values = np.asarray(null_values, dtype=np.float64)
    finite = null_values[np.isfinite(null_values)]
    undefined = len(null_values) - len(finite)
    if undefined > MAX_UNDEFINED_FRACTION * len(null_values):
        raise DegenerateError(
            f"statistic {name!r} undefined on {undefined}/{len(null_values)} "
            f"iterations ({undefined / len(null_values):.1%})"
        )
    if not math.isfinite(observed):
        raise UndefinedEstimate(f"statistic {name!r} undefined on the observed data")
    center = float(finite.mean())
    dev = np.abs(finite - center)
    obs_dev = abs(observed - center)
    tol = 1e-12 * max(1.0, abs(center), abs(observed))
    extreme = int(np.count_nonzero(dev >= obs_dev - tol))
    p_value = (1 + extreme) / (len(finite) + 1)
    lo_q, hi_q = np.quantile(
        finite - center, [(1.0 - plan.ci_level) / 2.0, (1.0 + plan.ci_level) / 2.0]
    )
    return PermutationResult(
        statistic=name,
        observed=float(observed),
        null_values=null_values,
        p_value=float(p_value),
        ci_low=float(observed - hi_q),
        ci_high=float(observed - lo_q),
        mode=plan.mode,
        iterations=plan.iterations,
        ci_level=plan.ci_level,
        undefined=undefined,
    )


def run_permutations(
    edges: EdgeList,
    statistics: Sequence[str] | Mapping[str, Statistic],
    plan: PermutationPlan,
    sizes,
    normalization: str = "realized",
    p: float | None = None,
    workers: int = 1,
    batch: TotalsBatch | None = None,
) -> dict[str, PermutationResult]:
    """Null distributions for several statistics sharing one set of relabelings.

    ``p`` is the design probability handed to the statistics (defaults to
    ``plan.p``).
    """
    p = plan.p if p is None else p
    if isinstance(statistics, Mapping):
        stats = dict(statistics)
    else:
        stats = {name: STATISTICS[name] for name in statistics}
    obs = observed_sample(edges, sizes)
    if batch is None:
        batch = permuted_totals(edges, plan, sizes, workers=workers)
    null = {name: np.empty(len(batch)) for name in stats}
    for i in range(len(batch)):
        s = batch.sample(i)
        for name, fn in stats.items():
            null[name][i] = evaluate(fn, s, p, normalization)
    out = {}
    for name, fn in stats.items():
        observed = evaluate(fn, obs, p, normalization)
        out[name] = summarize_null(name, observed, null[name], plan)
    return out


def null_distribution(
    edges: EdgeList,
    statistic: str | Statistic,
    plan: PermutationPlan,
    sizes,
    normalization: str = "realized",
    p: float | None = None,
    workers: int = 1,
) -> PermutationResult:
    name = statistic if isinstance(statistic, str) else getattr(statistic, "__name__", "statistic")
    fn = STATISTICS[statistic] if isinstance(statistic, str) else statistic
    return run_permutations(
        edges, {name: fn}, plan, sizes, normalization=normalization, p=p, workers=workers
    )[name]


def write_null_csv(results: Mapping[str, PermutationResult], path) -> None:
    """One column per statistic, one row per iteration, header row."""
    names = list(results)
    columns = [results[n].null_values for n in names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", *names])
        for i in range(len(columns[0]) if columns else 0):
            w.writerow([i, *(repr(float(c[i])) for c in columns)])

