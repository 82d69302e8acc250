"""Edge-class totals and normalized class contrasts.

Every directed message falls into one of four classes by the treatment
status of its sender and recipient: TT, TC, CT, CC. Totals are exact integer
sums; pair counts come from group sizes, not from observed edges, and
exclude self-pairs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateError
from .ingest import EdgeList

CLASSES = ("tt", "tc", "ct", "cc")


@dataclass(frozen=True)
class ClassTotals:
    m_tt: int
    m_tc: int
    m_ct: int
    m_cc: int
    n_tt: int
    n_tc: int
    n_ct: int
    n_cc: int
    n_treated: int
    n_control: int

    @classmethod
    def from_sizes(cls, m, n_treated: int, n_control: int) -> "ClassTotals":
        """Build from message totals ``(m_tt, m_tc, m_ct, m_cc)`` and group sizes."""
        nt, nc = int(n_treated), int(n_control)
        return cls(
            *(int(x) for x in m),
            n_tt=nt * (nt - 1),
            n_tc=nt * nc,
            n_ct=nc * nt,
            n_cc=nc * (nc - 1),
            n_treated=nt,
            n_control=nc,
        )

    @property
    def messages(self) -> tuple[int, int, int, int]:
        return (self.m_tt, self.m_tc, self.m_ct, self.m_cc)

    @property
    def pairs(self) -> tuple[int, int, int, int]:
        return (self.n_tt, self.n_tc, self.n_ct, self.n_cc)

    @property
    def total_messages(self) -> int:
        return self.m_tt + self.m_tc + self.m_ct + self.m_cc

    @property
    def treated_share(self) -> float:
        return self.n_treated / (self.n_treated + self.n_control)

    def swapped(self) -> "ClassTotals":
        """Same data with treatment and control labels exchanged."""
        return ClassTotals(
            self.m_cc, self.m_ct, self.m_tc, self.m_tt,
            self.n_cc, self.n_ct, self.n_tc, self.n_tt,
            self.n_control, self.n_treated,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def class_codes(src_treated: np.ndarray, dest_treated: np.ndarray) -> np.ndarray:
    """0=TT, 1=TC, 2=CT, 3=CC."""
    return 2 * (~src_treated).astype(np.int64) + (~dest_treated).astype(np.int64)


def message_totals(edges: EdgeList) -> tuple[int, int, int, int]:
    codes = class_codes(edges.src_treated, edges.dest_treated)
    # int64 weights keep the sums exact
    sums = np.zeros(4, dtype=np.int64)
    np.add.at(sums, codes, edges.msg)
    return tuple(int(x) for x in sums)


def class_totals(edges: EdgeList, sizes) -> ClassTotals:
    n_treated, n_control = int(sizes[0]), int(sizes[1])
    if n_treated < 2 or n_control < 2:
        raise DegenerateError(
            f"need at least 2 members per group, got n_treated={n_treated}, "
            f"n_control={n_control}"
        )
    return ClassTotals.from_sizes(message_totals(edges), n_treated, n_control)


@dataclass(frozen=True)
class NormalizedContrasts:
    """Normalized class values and the contrasts built from them.

    Under ``realized`` normalization the ``per_pair_*`` fields are messages
    per ordered pair. Under ``expected`` normalization they are the class
    totals reweighted to CC-class units: ``(1-p)^2/p^2 * m_tt``,
    ``(1-p)/p * m_tc``, ``(1-p)/p * m_ct`` and ``m_cc``.
    """

    per_pair_tt: float
    per_pair_tc: float
    per_pair_ct: float
    per_pair_cc: float
    placebo_spread: float
    response_contrast: float
    affinity_contrast: float
    perfect_affinity_gap: float
    affinity_balance: float
    mode: str

    @property
    def values(self) -> tuple[float, float, float, float]:
        return (self.per_pair_tt, self.per_pair_tc, self.per_pair_ct, self.per_pair_cc)

    def to_dict(self) -> dict:
        return asdict(self)


def class_values(totals: ClassTotals, p: float, mode: str = "realized"):
    """The four normalized class values, TT, TC, CT, CC."""
    if mode == "realized":
        for name, n in zip(CLASSES, totals.pairs):
            if n <= 0:
                raise DegenerateError(f"class {name.upper()} has no pairs")
        return tuple(m / n for m, n in zip(totals.messages, totals.pairs))
    if mode == "expected":
        if not 0.0 < p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {p}")
        r = (1.0 - p) / p
        return (r * r * totals.m_tt, r * totals.m_tc, r * totals.m_ct, float(totals.m_cc))
    raise ValueError(f"unknown normalization {mode!r}")


def normalized_contrasts(totals: ClassTotals, p: float, mode: str = "realized") -> NormalizedContrasts:
    tt, tc, ct, cc = class_values(totals, p, mode)
    if mode == "expected":
        # literal p-weighted form of the affinity contrast
        r = (1.0 - p) / p
        affinity = r * r * totals.m_tt - (r / 2.0) * (totals.m_tc + totals.m_ct)
    else:
        affinity = tt - 0.5 * (tc + ct)
    return NormalizedContrasts(
        per_pair_tt=tt,
        per_pair_tc=tc,
        per_pair_ct=ct,
        per_pair_cc=cc,
        placebo_spread=max(tt, tc, ct, cc) - min(tt, tc, ct, cc),
        response_contrast=ct - cc,
        affinity_contrast=affinity,
        perfect_affinity_gap=tt - tc,
        affinity_balance=(tt - cc) - (tc - cc) - (ct - cc),
        mode=mode,
    )
