"""Network-corrected effect estimators.

All estimators consume :class:`ClassTotals` or :class:`SendReceiveTotals`
rather than raw edges so that they can be re-evaluated cheaply on every
permutation iteration. Percentages are fractions (0.1 == 10%).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

from .contrasts import ClassTotals
from .errors import UndefinedEstimate
from .ingest import EdgeList


@dataclass(frozen=True)
class SendReceiveTotals:
    ms_t: int
    ms_c: int
    mr_t: int
    mr_c: int
    n_treated: int
    n_control: int
    # recipient-side group sizes when they differ from the sender side
    # (only under one-sided permutation)
    n_treated_recv: int | None = None
    n_control_recv: int | None = None

    @classmethod
    def from_class_totals(cls, totals: ClassTotals, recv_sizes=None) -> "SendReceiveTotals":
        nt_r, nc_r = recv_sizes if recv_sizes is not None else (None, None)
        return cls(
            ms_t=totals.m_tt + totals.m_tc,
            ms_c=totals.m_ct + totals.m_cc,
            mr_t=totals.m_tt + totals.m_ct,
            mr_c=totals.m_tc + totals.m_cc,
            n_treated=totals.n_treated,
            n_control=totals.n_control,
            n_treated_recv=nt_r,
            n_control_recv=nc_r,
        )

    @property
    def recv_sizes(self) -> tuple[int, int]:
        if self.n_treated_recv is None:
            return self.n_treated, self.n_control
        return self.n_treated_recv, self.n_control_recv


def send_receive_totals(edges: EdgeList, sizes) -> SendReceiveTotals:
    msg = edges.msg
    st, dt = edges.src_treated, edges.dest_treated
    return SendReceiveTotals(
        ms_t=int(msg[st].sum()),
        ms_c=int(msg[~st].sum()),
        mr_t=int(msg[dt].sum()),
        mr_c=int(msg[~dt].sum()),
        n_treated=int(sizes[0]),
        n_control=int(sizes[1]),
    )


def effective_p(totals: ClassTotals, p: float, normalization: str) -> float:
    """Treatment share used by the p-weighted estimators.

    ``expected`` uses the design probability; ``realized`` substitutes the
    realized treated share, which removes the noise of Bernoulli group-size
    fluctuations from the estimates.
    """
    if normalization == "expected":
        return p
    if normalization == "realized":
        return totals.treated_share
    raise ValueError(f"unknown normalization {normalization!r}")


class TotalEffect(NamedTuple):
    absolute: float
    lift: float | None


def total_treatment_effect(totals: ClassTotals, p: float) -> TotalEffect:
    """Counterfactual change in total messages between 100% and 0% rollout.

    ``absolute = m_tt/p^2 - m_cc/(1-p)^2``; ``lift`` divides by the
    counterfactual baseline ``m_cc/(1-p)^2`` and is None when ``m_cc == 0``.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    treated_all = totals.m_tt / (p * p)
    baseline = totals.m_cc / ((1.0 - p) ** 2)
    absolute = treated_all - baseline
    if totals.m_cc == 0:
        return TotalEffect(absolute, None)
    return TotalEffect(absolute, absolute / baseline)


def alpha_terms(totals: ClassTotals, p: float) -> tuple[float, float]:
    """Numerator (extra CT responses) and denominator (extra TC messages).

    A term that cancels to within rounding of its parts is returned as 0.0.
    """
    r = p / (1.0 - p)
    base = r * totals.m_cc
    return _diff(totals.m_ct, base), _diff(totals.m_tc, base)


def _diff(a: float, b: float) -> float:
    d = a - b
    return 0.0 if abs(d) <= 1e-12 * max(abs(a), abs(b)) else d


def classify_alpha(
    alpha: float,
    reply_rate: float = 0.3,
    margin: float = 0.15,
    outlier: float = 1.0,
) -> str:
    if not math.isfinite(alpha) or alpha >= outlier or alpha < 0.0:
        return "outlier"
    if alpha <= reply_rate + margin:
        return "one-off conversation"
    return "long conversation"


@dataclass(frozen=True)
class AlphaEstimate:
    value: float
    numerator: float
    denominator: float
    valid: bool | None
    kind: str

    @property
    def in_unit_interval(self) -> bool:
        return 0.0 <= self.value <= 1.0


def estimate_alpha(
    totals: ClassTotals,
    p: float,
    denominator_ci: tuple[float, float] | None = None,
    **classify_kw,
) -> AlphaEstimate:
    """Response rate to treatment-created messages.

    ``valid`` is False when the permutation CI of the denominator covers 0
    (the ratio then has an expected denominator of zero), True when it
    excludes 0, and None when no CI was supplied.
    """
    num, den = alpha_terms(totals, p)
    if den == 0.0:
        raise UndefinedEstimate("alpha undefined: TC and CC contrasts are identical")
    value = num / den
    valid = None
    if denominator_ci is not None:
        lo, hi = denominator_ci
        valid = not (lo <= 0.0 <= hi)
    return AlphaEstimate(value, num, den, valid, classify_alpha(value, **classify_kw))


def instant_lift(corrected_lift: float, alpha: float) -> float:
    """Lift net of the response cascade: ``lift * (1 - alpha)``."""
    if alpha == 1.0:
        raise UndefinedEstimate("alpha == 1: response cascade never terminates")
    return corrected_lift * (1.0 - alpha)


def _lift(t: int, nt: int, c: int, nc: int) -> float | None:
    if c == 0 or nt == 0 or nc == 0:
        return None
    return (t / nt) / (c / nc) - 1.0


def standard_lifts(srt: SendReceiveTotals) -> tuple[float | None, float | None]:
    """Per-member send and receive lifts; None where the control total is 0."""
    send = _lift(srt.ms_t, srt.n_treated, srt.ms_c, srt.n_control)
    nt_r, nc_r = srt.recv_sizes
    receive = _lift(srt.mr_t, nt_r, srt.mr_c, nc_r)
    return send, receive


def approx_total_effect(send_lift: float, receive_lift: float) -> float:
    """Sum of send and receive lifts.

    Approximates ``q1/(1-alpha) * (1+2pu)/(1+u)``, exact in expectation to
    first order when p = 1/2 or there is no affinity (u = 0).
    """
    return send_lift + receive_lift


def approx_alpha(send_lift: float, receive_lift: float) -> float:
    """Receive/send lift ratio, approximately ``(alpha + pu*alpha)/(1 + pu*alpha)``."""
    if send_lift == 0.0:
        raise UndefinedEstimate("send lift is zero")
    return receive_lift / send_lift


@dataclass(frozen=True)
class EffectEstimates:
    corrected_total_effect_abs: float
    corrected_lift_pct: float | None
    alpha_hat: float | None
    q1_hat: float | None
    standard_send_lift_pct: float | None
    standard_receive_lift_pct: float | None
    approx_lift_pct: float | None
    approx_alpha: float | None
    p_used: float
    alpha_kind: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_effects(
    totals: ClassTotals,
    p: float,
    normalization: str = "realized",
    srt: SendReceiveTotals | None = None,
) -> EffectEstimates:
    """Point estimates of every effect; undefined quantities become None."""
    pe = effective_p(totals, p, normalization)
    effect = total_treatment_effect(totals, pe)
    try:
        alpha = estimate_alpha(totals, pe)
    except UndefinedEstimate:
        alpha = None
    q1 = None
    if effect.lift is not None and alpha is not None and alpha.value != 1.0:
        q1 = instant_lift(effect.lift, alpha.value)
    if srt is None:
        srt = SendReceiveTotals.from_class_totals(totals)
    send, receive = standard_lifts(srt)
    approx = approx_a = None
    if send is not None and receive is not None:
        approx = approx_total_effect(send, receive)
        if send != 0.0:
            approx_a = approx_alpha(send, receive)
    return EffectEstimates(
        corrected_total_effect_abs=effect.absolute,
        corrected_lift_pct=effect.lift,
        alpha_hat=None if alpha is None else alpha.value,
        q1_hat=q1,
        standard_send_lift_pct=send,
        standard_receive_lift_pct=receive,
        approx_lift_pct=approx,
        approx_alpha=approx_a,
        p_used=pe,
        alpha_kind=None if alpha is None else alpha.kind,
    )


def nan_if_none(x) -> float:
    return float("nan") if x is None else float(x)

