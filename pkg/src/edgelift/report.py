"""Analysis orchestration and report rendering.

:func:`run_analysis` chains ingest -> class totals -> estimators ->
permutation inference and collects everything in a :class:`Report`, a plain
JSON-compatible structure. Commentary lines are produced by fixed threshold
rules so the same inputs always give the same text.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from . import __version__, hashing
from .contrasts import class_totals, normalized_contrasts
from .errors import DegenerateError, UndefinedEstimate
from .estimators import classify_alpha, estimate_effects
from .ingest import EdgeList, ExperimentConfig, IngestSummary, parse_edge_file, resolve_group_sizes
from .permutation import PermutationPlan, permuted_totals, run_permutations

# statistic name -> report section
ESTIMATE_STATS = {
    "corrected_lift": "corrected_lift_pct",
    "corrected_effect_abs": "corrected_total_effect_abs",
    "alpha": "alpha_hat",
    "q1": "q1_hat",
    "send_lift": "standard_send_lift_pct",
    "receive_lift": "standard_receive_lift_pct",
    "approx_lift": "approx_lift_pct",
    "approx_alpha": "approx_alpha",
}
CONTRAST_STATS = (
    "placebo_spread",
    "response_contrast",
    "affinity_contrast",
    "affinity_balance",
    "perfect_affinity_gap",
    "tt_vs_cc",
    "tc_vs_cc",
    "ct_vs_cc",
)
AUX_STATS = ("alpha_denominator", "alpha_numerator")
MIN_WINDOW_DAYS = 7
EVEN_RAMP = (0.25, 0.75)


def _clean(x):
    """Map non-finite floats to None so reports compare and serialize cleanly."""
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


@dataclass
class Report:
    config: dict
    ingest: dict
    class_totals: dict
    contrasts: dict
    estimates: dict
    significance: dict
    alpha: dict
    commentary: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _significance_entry(stats: list[str], plan: PermutationPlan, edges, sizes, config, batch):
    out = {}
    problems = []
    try:
        results = run_permutations(
            edges, stats, plan, sizes, normalization=config.normalization, p=config.p,
            batch=batch,
        )
        for name, r in results.items():
            out[name] = r.to_dict()
        return out, problems
    except (DegenerateError, UndefinedEstimate):
        pass
    # fall back to one statistic at a time so one degenerate statistic does
    # not hide the rest
    for name in stats:
        try:
            r = run_permutations(
                edges, [name], plan, sizes, normalization=config.normalization, p=config.p,
                batch=batch,
            )[name]
            out[name] = r.to_dict()
        except (DegenerateError, UndefinedEstimate) as exc:
            out[name] = {
                "statistic": name, "observed": None, "p_value": None, "ci_low": None,
                "ci_high": None, "mode": plan.mode, "iterations": plan.iterations,
                "ci_level": plan.ci_level, "undefined": None, "error": str(exc),
            }
            problems.append(f"no permutation inference for {name}: {exc}")
    return out, problems


def run_analysis(
    config: ExperimentConfig,
    source,
    workers: int = 1,
    ingest_summary: IngestSummary | None = None,
) -> Report:
    """Full analysis of an edge file (path) or an in-memory :class:`EdgeList`."""
    if isinstance(source, EdgeList):
        edges = source
        summary = ingest_summary or IngestSummary(
            records=len(edges), total_messages=edges.total_messages
        )
    else:
        edges, summary = parse_edge_file(source)
    sizes = resolve_group_sizes(edges, config)
    warnings = list(summary.warnings)
    if sizes.observed_only:
        warnings.append(
            "group sizes taken from members seen in the edge list; silent members are uncounted"
        )
    totals = class_totals(edges, sizes[:2])
    contrasts = normalized_contrasts(totals, config.p, config.normalization)
    point = estimate_effects(totals, config.p, config.normalization)

    plan = PermutationPlan(
        mode=config.permutation_mode,
        iterations=config.iterations,
        seed=config.seed,
        p=config.p,
        ci_level=config.ci_level,
    )
    batch = permuted_totals(edges, plan, sizes[:2], workers=workers)
    stats = list(ESTIMATE_STATS) + list(CONTRAST_STATS) + list(AUX_STATS)
    significance, problems = _significance_entry(stats, plan, edges, sizes[:2], config, batch)
    warnings += problems
    if plan.mode == "full":
        recv_plan = PermutationPlan("recipient", plan.iterations, plan.seed, plan.p, plan.ci_level)
        recv_batch = permuted_totals(edges, recv_plan, sizes[:2], workers=workers)
        extra, problems = _significance_entry(
            ["receive_lift"], recv_plan, edges, sizes[:2], config, recv_batch
        )
        significance["receive_lift@recipient"] = extra["receive_lift"]
        warnings += problems

    point_d = point.to_dict()
    estimates = {}
    for stat, key in ESTIMATE_STATS.items():
        sig = significance.get(stat, {})
        estimates[key] = {
            "value": point_d[key],
            "ci_low": sig.get("ci_low"),
            "ci_high": sig.get("ci_high"),
            "p_value": sig.get("p_value"),
            "mode": plan.mode,
            "iterations": plan.iterations,
        }

    contrast_d = contrasts.to_dict()
    contrast_out = {"mode": contrast_d.pop("mode"), "values": contrast_d, "tests": {}}
    for stat in CONTRAST_STATS:
        contrast_out["tests"][stat] = significance.get(stat)

    den = significance.get("alpha_denominator", {})
    alpha_valid = None
    if den.get("ci_low") is not None:
        alpha_valid = not (den["ci_low"] <= 0.0 <= den["ci_high"])
    alpha_kind = None
    if point.alpha_hat is not None:
        alpha_kind = classify_alpha(
            point.alpha_hat, config.reply_rate, config.reply_rate_margin, config.outlier_alpha
        )
    alpha_info = {
        "value": point.alpha_hat,
        "valid": alpha_valid,
        "kind": alpha_kind,
        "denominator_ci": [den.get("ci_low"), den.get("ci_high")],
        "p_used": point.p_used,
    }

    if config.window_days is not None and config.window_days < MIN_WINDOW_DAYS:
        warnings.append(
            f"data window of {config.window_days:g} days is shorter than {MIN_WINDOW_DAYS}; "
            "estimates may be unstable"
        )
    if not EVEN_RAMP[0] <= config.p <= EVEN_RAMP[1]:
        warnings.append(
            f"very uneven ramp (p={config.p:g} outside [{EVEN_RAMP[0]}, {EVEN_RAMP[1]}]); "
            "standard lifts are biased by ramp size and corrected estimates are noisier"
        )
    if alpha_valid is False:
        warnings.append("alpha is not valid: TC-vs-CC contrast is not distinguishable from 0")

    cfg = asdict(config)
    cfg["hash"] = hashing.HASH_NAME
    cfg["version"] = __version__
    report = Report(
        config=cfg,
        ingest={**asdict(summary), "n_treated": sizes[0], "n_control": sizes[1],
                "observed_only": sizes.observed_only},
        class_totals=totals.to_dict(),
        contrasts=contrast_out,
        estimates=estimates,
        significance=significance,
        alpha=alpha_info,
        warnings=warnings,
    )
    report.commentary = commentary(report)
    # normalize (NaN -> None, tuples -> lists) so the object equals its JSON form
    return Report.from_dict(report.to_dict())


def _pct(x) -> str:
    return "n/a" if x is None else f"{100.0 * x:+.2f}%"


def _sig(entry, level) -> bool:
    return bool(entry) and entry.get("p_value") is not None and entry["p_value"] < 1.0 - level


def commentary(report: Report) -> list[str]:
    """Findings from fixed thresholds on the report's tests."""
    level = report.config["ci_level"]
    sig = report.significance
    est = report.estimates
    out = []

    lift = est["corrected_lift_pct"]
    ci = f"{round(100 * level)}% CI [{_pct(lift['ci_low'])}, {_pct(lift['ci_high'])}]"
    if (sig.get("corrected_lift") or {}).get("p_value") is None:
        out.append(
            f"Corrected lift {_pct(lift['value'])} has no permutation inference; "
            "too many relabelings leave the statistic undefined."
        )
    elif _sig(sig.get("corrected_lift"), level):
        out.append(f"Corrected lift {_pct(lift['value'])} is significant ({ci}).")
    else:
        out.append(
            f"No detectable treatment effect: corrected lift {_pct(lift['value'])} ({ci})."
        )

    send = est["standard_send_lift_pct"]["value"]
    if send is not None and lift["value"] is not None:
        gap = lift["value"] - send
        word = "underestimates" if gap > 0 else "overestimates"
        out.append(
            f"Standard send lift {_pct(send)} {word} the corrected lift by "
            f"{abs(100 * gap):.2f} points."
        )

    a = report.alpha
    if a["value"] is not None:
        if a["valid"]:
            out.append(f"Response rate alpha = {a['value']:.3f} ({a['kind']}).")
        else:
            out.append(
                f"Alpha = {a['value']:.3f} is not interpretable: the TC-vs-CC contrast "
                "is not significantly different from 0."
            )

    gap = sig.get("perfect_affinity_gap")
    if _sig(gap, level) and gap["observed"] > 0:
        if not _sig(sig.get("tc_vs_cc"), level) and not _sig(sig.get("ct_vs_cc"), level):
            out.append(
                "Perfect affinity: the TT contrast exceeds the TC contrast significantly "
                "while TC and CT do not differ from CC; treated members direct extra "
                "messages at other treated members only."
            )
    bal = sig.get("affinity_balance")
    if not any(c.startswith("Perfect affinity") for c in out) and _sig(bal, level):
        side = "treated" if bal["observed"] > 0 else "control"
        out.append(
            f"Affinity: treated senders direct extra messages preferentially at {side} "
            "recipients (TT excess differs from the TC plus CT excess)."
        )

    resp = sig.get("ct_vs_cc")
    if _sig(resp, level) and resp["observed"] > 0:
        out.append(
            "Control members respond to treated senders: the CT contrast exceeds CC."
        )

    if _sig(sig.get("placebo_spread"), level):
        out.append("Per-pair class rates differ; a placebo treatment is rejected.")
    else:
        out.append("Per-pair class rates are consistent with a placebo treatment.")
    return out


def render_text(report: Report) -> str:
    lines = []
    cfg = report.config
    lines.append("== Experiment ==")
    lines.append(
        f"p={cfg['p']}  normalization={cfg['normalization']}  mode={cfg['permutation_mode']}  "
        f"iterations={cfg['iterations']}  seed={cfg['seed']}  ci_level={cfg['ci_level']}"
    )
    lines.append(
        f"members: {report.ingest['n_treated']} treated / {report.ingest['n_control']} control"
    )
    lines.append("")
    lines.append("== Class totals ==")
    t = report.class_totals
    for c in ("tt", "tc", "ct", "cc"):
        lines.append(f"{c.upper()}: messages={t['m_' + c]}  pairs={t['n_' + c]}")
    lines.append("")
    lines.append(f"== Contrasts ({report.contrasts['mode']}) ==")
    v = report.contrasts["values"]
    for c in ("tt", "tc", "ct", "cc"):
        lines.append(f"{c.upper()} rate: {v['per_pair_' + c]:.6g}")
    for name in CONTRAST_STATS:
        test = report.contrasts["tests"].get(name) or {}
        lines.append(f"{name}: {_fmt(v.get(name, test.get('observed')))}{_ci_text(test)}")
    lines.append("")
    lines.append("== Estimates ==")
    for key, e in report.estimates.items():
        pct = key.endswith("_pct")
        val = _pct(e["value"]) if pct else _fmt(e["value"])
        lines.append(f"{key}: {val}{_ci_text(e, pct)}")
    lines.append(
        "note: approx_lift_pct approximates q1/(1-alpha)*(1+2pu)/(1+u); "
        "approx_alpha approximates (alpha+pu*alpha)/(1+pu*alpha)"
    )
    a = report.alpha
    if a["valid"] is False:
        lines.append("CAVEAT: alpha is not valid (TC-vs-CC denominator CI covers 0).")
    elif a["kind"] is not None:
        lines.append(f"alpha type: {a['kind']}")
    lines.append("")
    lines.append("== Significance ==")
    for name, s in report.significance.items():
        if s.get("p_value") is None:
            lines.append(f"{name}: unavailable ({s.get('error', 'undefined')})")
        else:
            lines.append(f"{name}: p={s['p_value']:.4f} [{s['mode']}, {s['iterations']} it]")
    lines.append("")
    lines.append("== Commentary ==")
    lines += [f"- {c}" for c in report.commentary]
    if report.warnings:
        lines.append("")
        lines.append("== Warnings ==")
        lines += [f"! {w}" for w in report.warnings]
    return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.6g}"


def _ci_text(e: dict, pct: bool = False) -> str:
    if not e or e.get("ci_low") is None:
        return ""
    f = _pct if pct else _fmt
    return (
        f"  CI [{f(e['ci_low'])}, {f(e['ci_high'])}]  p={e['p_value']:.4f}"
        f"  ({e['mode']}, {e['iterations']} it)"
    )


def render_report(report: Report, fmt: str = "json") -> str:
    if fmt == "json":
        return report.to_json()
    if fmt == "text":
        return render_text(report)
    raise ValueError(f"unknown format {fmt!r}")
