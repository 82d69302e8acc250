"""Parsing and validation of edge-level experiment files.

An edge file holds one directed sender -> recipient aggregate per line::

    src,dest,msg,srcT,destT
    17,42,3,1,0

Comma or tab separated, optional header row, ``#`` comments ignored.
Duplicate (src, dest) rows are merged by summing ``msg``.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import IngestError

logger = logging.getLogger(__name__)

COLUMNS = ("src", "dest", "msg", "srcT", "destT")
PERMUTATION_MODES = ("full", "sender", "recipient")
NORMALIZATIONS = ("expected", "realized")


@dataclass(frozen=True)
class EdgeRecord:
    src: int
    dest: int
    msg: int
    src_treated: bool
    dest_treated: bool


@dataclass
class ExperimentConfig:
    p: float
    n_treated: int | None = None
    n_control: int | None = None
    seed: int = 0
    iterations: int = 1000
    ci_level: float = 0.90
    permutation_mode: str = "full"
    normalization: str = "realized"
    window_days: float | None = None
    reply_rate: float = 0.3
    reply_rate_margin: float = 0.15
    outlier_alpha: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError(f"ci_level must lie in (0, 1), got {self.ci_level}")
        if self.permutation_mode not in PERMUTATION_MODES:
            raise ValueError(f"unknown permutation mode {self.permutation_mode!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if (self.n_treated is None) != (self.n_control is None):
            raise ValueError("n_treated and n_control must be given together")


class EdgeList:
    """Canonical, immutable columnar edge list.

    Records are sorted by (src, dest) with at most one row per pair.
    Iterating yields :class:`EdgeRecord` objects; analysis code works on the
    numpy columns directly.
    """

    __slots__ = ("src", "dest", "msg", "src_treated", "dest_treated")

    def __init__(self, src, dest, msg, src_treated, dest_treated, *, canonical=False):
        src = np.asarray(src, dtype=np.int64).reshape(-1)
        dest = np.asarray(dest, dtype=np.int64).reshape(-1)
        msg = np.asarray(msg, dtype=np.int64).reshape(-1)
        st = np.asarray(src_treated, dtype=bool).reshape(-1)
        dt = np.asarray(dest_treated, dtype=bool).reshape(-1)
        if not (len(src) == len(dest) == len(msg) == len(st) == len(dt)):
            raise ValueError("edge columns must have equal length")
        if not canonical:
            src, dest, msg, st, dt = _canonicalize(src, dest, msg, st, dt)
        for a in (src, dest, msg, st, dt):
            a.setflags(write=False)
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dest", dest)
        object.__setattr__(self, "msg", msg)
        object.__setattr__(self, "src_treated", st)
        object.__setattr__(self, "dest_treated", dt)

    def __setattr__(self, name, value):
        raise AttributeError("EdgeList is immutable")

    @classmethod
    def from_records(cls, records: Iterable[EdgeRecord]) -> "EdgeList":
        records = list(records)
        return cls(
            [r.src for r in records],
            [r.dest for r in records],
            [r.msg for r in records],
            [r.src_treated for r in records],
            [r.dest_treated for r in records],
        )

    @classmethod
    def empty(cls) -> "EdgeList":
        return cls([], [], [], [], [], canonical=True)

    def __len__(self) -> int:
        return len(self.src)

    def __iter__(self) -> Iterator[EdgeRecord]:
        for i in range(len(self.src)):
            yield self[i]

    def __getitem__(self, i: int) -> EdgeRecord:
        return EdgeRecord(
            int(self.src[i]),
            int(self.dest[i]),
            int(self.msg[i]),
            bool(self.src_treated[i]),
            bool(self.dest_treated[i]),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, EdgeList):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in self.__slots__
        )

    def __repr__(self) -> str:
        return f"EdgeList({len(self)} edges, {self.total_messages} messages)"

    @property
    def total_messages(self) -> int:
        return int(self.msg.sum())

    def members(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct member ids (sorted) and their treatment flags."""
        ids = np.concatenate([self.src, self.dest])
        flags = np.concatenate([self.src_treated, self.dest_treated])
        uniq, idx = np.unique(ids, return_index=True)
        return uniq, flags[idx]

    def scaled(self, k: int) -> "EdgeList":
        return EdgeList(
            self.src, self.dest, self.msg * k, self.src_treated, self.dest_treated,
            canonical=True,
        )


def _canonicalize(src, dest, msg, st, dt):
    if len(src) == 0:
        return src, dest, msg, st, dt
    if np.any(src == dest):
        raise IngestError("self-loop in edge list")
    if np.any(msg < 0):
        raise IngestError("negative message count in edge list")
    _check_consistent_flags(src, dest, st, dt)
    order = np.lexsort((dest, src))
    src, dest, msg, st, dt = src[order], dest[order], msg[order], st[order], dt[order]
    new_pair = np.ones(len(src), dtype=bool)
    new_pair[1:] = (src[1:] != src[:-1]) | (dest[1:] != dest[:-1])
    starts = np.flatnonzero(new_pair)
    msg = np.add.reduceat(msg, starts)
    return src[starts], dest[starts], msg, st[starts], dt[starts]


def _check_consistent_flags(src, dest, st, dt):
    ids = np.concatenate([src, dest])
    flags = np.concatenate([st, dt])
    order = np.argsort(ids, kind="stable")
    ids, flags = ids[order], flags[order]
    same = ids[1:] == ids[:-1]
    bad = same & (flags[1:] != flags[:-1])
    if bad.any():
        member = int(ids[1:][bad][0])
        raise IngestError(f"inconsistent treatment flag for member {member}", member=member)


@dataclass
class IngestSummary:
    lines: int = 0
    records: int = 0
    distinct_members: int = 0
    distinct_senders: int = 0
    distinct_recipients: int = 0
    dropped_lines: int = 0
    dropped_messages: int = 0
    total_messages: int = 0
    warnings: list[str] = field(default_factory=list)


def _detect_delimiter(line: str) -> str:
    return "\t" if "\t" in line else ","


def _looks_like_header(fields: Sequence[str]) -> bool:
    try:
        int(fields[0].strip())
    except ValueError:
        return True
    return False


def _parse_flag(value: str, lineno: int, name: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true"):
        return True
    if v in ("0", "false"):
        return False
    raise IngestError(f"line {lineno}: bad {name} value {value!r}", line=lineno, field=name)


def _parse_int(value: str, lineno: int, name: str) -> int:
    try:
        return int(value.strip())
    except ValueError:
        raise IngestError(
            f"line {lineno}: bad {name} value {value!r}", line=lineno, field=name
        ) from None


def parse_edge_lines(
    lines: Iterable[str],
    delimiter: str | None = None,
    header: bool | None = None,
    drop_self_loops: bool = False,
) -> tuple[EdgeList, IngestSummary]:
    """Parse edge lines into a canonical :class:`EdgeList`.

    Parameters
    ----------
    delimiter : ``","``, ``"\\t"`` or None to auto-detect from the first
        data line.
    header : True/False to force, None to treat a first row whose leading
        field is not an integer as a header.
    drop_self_loops : when True, self-loops are dropped and counted
        instead of raising.
    """
    summary = IngestSummary()
    cols = list(range(5))
    src, dest, msg, st, dt = [], [], [], [], []
    first = True
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if delimiter is None:
            delimiter = _detect_delimiter(line)
        fields = next(csv.reader([line], delimiter=delimiter))
        if first:
            first = False
            is_header = _looks_like_header(fields) if header is None else header
            if is_header:
                names = [f.strip() for f in fields]
                missing = [c for c in COLUMNS if c not in names]
                if missing:
                    raise IngestError(
                        f"line {lineno}: header missing columns {missing}", line=lineno
                    )
                cols = [names.index(c) for c in COLUMNS]
                continue
        summary.lines += 1
        if len(fields) < max(cols) + 1:
            raise IngestError(
                f"line {lineno}: expected {max(cols) + 1} fields, got {len(fields)}",
                line=lineno,
            )
        s = _parse_int(fields[cols[0]], lineno, "src")
        d = _parse_int(fields[cols[1]], lineno, "dest")
        m = _parse_int(fields[cols[2]], lineno, "msg")
        sf = _parse_flag(fields[cols[3]], lineno, "srcT")
        df = _parse_flag(fields[cols[4]], lineno, "destT")
        if m < 0:
            raise IngestError(f"line {lineno}: negative msg {m}", line=lineno, field="msg")
        if s == d:
            if not drop_self_loops:
                raise IngestError(
                    f"line {lineno}: self-loop on member {s}", line=lineno, field="dest"
                )
            summary.dropped_lines += 1
            summary.dropped_messages += m
            continue
        src.append(s)
        dest.append(d)
        msg.append(m)
        st.append(sf)
        dt.append(df)

    edges = EdgeList(src, dest, msg, st, dt)
    summary.records = len(edges)
    summary.total_messages = edges.total_messages
    summary.distinct_members = len(edges.members()[0])
    summary.distinct_senders = len(np.unique(edges.src))
    summary.distinct_recipients = len(np.unique(edges.dest))
    if summary.dropped_lines:
        summary.warnings.append(f"dropped {summary.dropped_lines} self-loop lines")
    return edges, summary


def parse_edge_file(
    path: str | os.PathLike,
    delimiter: str | None = None,
    header: bool | None = None,
    drop_self_loops: bool = False,
) -> tuple[EdgeList, IngestSummary]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_edge_lines(fh, delimiter, header, drop_self_loops)


def format_edges(edges: EdgeList, delimiter: str = ",", header: bool = True) -> str:
    buf = io.StringIO()
    if header:
        buf.write(delimiter.join(COLUMNS) + "\n")
    for s, d, m, a, b in zip(
        edges.src.tolist(),
        edges.dest.tolist(),
        edges.msg.tolist(),
        edges.src_treated.tolist(),
        edges.dest_treated.tolist(),
    ):
        buf.write(f"{s}{delimiter}{d}{delimiter}{m}{delimiter}{int(a)}{delimiter}{int(b)}\n")
    return buf.getvalue()


def write_edge_file(edges: EdgeList, path: str | os.PathLike, delimiter: str = ",") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_edges(edges, delimiter))


class GroupSizes(NamedTuple):
    n_treated: int
    n_control: int
    observed_only: bool = False


def observed_group_counts(edges: EdgeList) -> tuple[int, int]:
    _, flags = edges.members()
    n_t = int(flags.sum())
    return n_t, len(flags) - n_t


def resolve_group_sizes(edges: EdgeList, config: ExperimentConfig) -> GroupSizes:
    """Group sizes for normalization.

    Silent members never show up in an edge file, so sizes supplied in the
    config take precedence; they must cover every member actually observed.
    Without them the observed counts are returned with ``observed_only`` set.
    """
    obs_t, obs_c = observed_group_counts(edges)
    if config.n_treated is None:
        logger.warning("group sizes not supplied; silent members are uncounted")
        return GroupSizes(obs_t, obs_c, observed_only=True)
    if config.n_treated < obs_t:
        raise IngestError(
            f"n_treated={config.n_treated} is smaller than the {obs_t} treated members observed"
        )
    if config.n_control < obs_c:
        raise IngestError(
            f"n_control={config.n_control} is smaller than the {obs_c} control members observed"
        )
    return GroupSizes(config.n_treated, config.n_control)
