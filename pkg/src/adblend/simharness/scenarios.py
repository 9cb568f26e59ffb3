"""Experiment scenarios and report assembly.

Each scenario evaluates every arm counterfactually over the same epoch, so
deterministic comparisons (expected metrics, diversity) are paired and the
organic side is exactly identical across arms. Stochastic components
(click realization, shuffles) draw from per-arm, per-impression streams.
Lifts are reported against the scenario's control with unpaired two-sample
z markers (* at 1%, ** at 0.1%), matching the house reporting convention.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Optional, Sequence

from ..allocator import VirtualBid
from ..core import lift
from ..ctr import ListwisePredictor
from ..errors import ValidationError
from ..payments import GSP
from ..tuner import TuneResult, distance_to_utopia, frontier_point, tune_virtual_bid
from .config import SimConfig
from .generate import Epoch, generate_epoch
from .metrics import DiversityRow, significance_marker, two_sample_z
from .treatments import METRICS, ArmStats, Treatment, run_treatment

SCENARIOS = ("externality", "vb_grid", "vb_constant", "diversity", "dist_shift")

_DIVERSITY_FIELDS = ("multi_subcat_rate", "mean_subcat_count", "herfindahl")


@dataclass(frozen=True)
class LiftCell:
    lift_pct: float
    z: float
    p: float
    marker: str


@dataclass
class ArmReport:
    name: str
    epoch: str  # "T1" or "T2" (only dist_shift uses T2)
    sample_size: int
    metrics: dict[str, float]
    lifts: dict[str, LiftCell]
    lift_reference: Optional[str]
    diversity: DiversityRow
    diversity_lifts: dict[str, float]
    subcat_revenue: dict[str, tuple[float, float, int]]


@dataclass
class ExperimentReport:
    scenario: str
    config: SimConfig
    control_name: Optional[str]
    arms: list[ArmReport]
    tuned: Optional[dict]
    extras: dict


def _lift_cells(arm: ArmStats, control: ArmStats) -> dict[str, LiftCell]:
    cells = {}
    for m in METRICS:
        t, c = arm.stats[m], control.stats[m]
        z, p = two_sample_z(t, c)
        cells[m] = LiftCell(
            lift_pct=lift(t.mean, c.mean), z=z, p=p, marker=significance_marker(p)
        )
    return cells


def _diversity_lifts(arm: ArmStats, control: ArmStats) -> dict[str, float]:
    out = {}
    for group in ("ads", "organics", "overall"):
        for f in _DIVERSITY_FIELDS:
            t = getattr(getattr(arm.diversity, group), f)
            c = getattr(getattr(control.diversity, group), f)
            out[f"{group}.{f}"] = lift(t, c) if c != 0 else 0.0
    return out


def _arm_report(
    arm: ArmStats,
    control: Optional[ArmStats],
    epoch_tag: str = "T1",
    reference_name: Optional[str] = None,
) -> ArmReport:
    return ArmReport(
        name=arm.name,
        epoch=epoch_tag,
        sample_size=arm.sample_size,
        metrics={m: arm.stats[m].mean for m in METRICS},
        lifts=_lift_cells(arm, control) if control is not None else {},
        lift_reference=reference_name if control is not None else None,
        diversity=arm.diversity,
        diversity_lifts=_diversity_lifts(arm, control) if control is not None else {},
        subcat_revenue=dict(arm.subcat_revenue),
    )


def _tune(epoch: Epoch, *, tol: float = 1e-3, max_iter: int = 80) -> TuneResult:
    config = epoch.config
    tune_log = epoch.impressions[: min(config.n_tune, len(epoch.impressions))]
    predictor = ListwisePredictor(epoch.truth)
    return tune_virtual_bid(
        tune_log, predictor, config.n_prime, method="golden", tol=tol, max_iter=max_iter
    )


def _tuned_dict(result: TuneResult) -> dict:
    return {
        "v_a": result.v.v_a,
        "distance": result.distance,
        "utopia": {"u_ctr": result.utopia.u_ctr, "u_rev": result.utopia.u_rev},
        "evaluations": len(result.trace),
    }


def _run_arms(
    epoch: Epoch,
    treatments: Sequence[Treatment],
    *,
    threads: int,
    scheme: str,
    arm_offset: int = 0,
) -> list[ArmStats]:
    return [
        run_treatment(
            epoch.impressions,
            t,
            epoch.truth,
            epoch.config,
            arm_index=arm_offset + i,
            scheme=scheme,
            threads=threads,
        )
        for i, t in enumerate(treatments)
    ]


def run_experiment_suite(
    config: SimConfig,
    scenario: str,
    *,
    threads: int = 1,
    scheme: str = GSP,
    epoch: Optional[Epoch] = None,
    tuned: Optional[TuneResult] = None,
) -> ExperimentReport:
    """Run one named scenario and assemble its report.

    An existing epoch (and tuning result) may be passed in so a pipeline
    can share them across scenarios.
    """
    if scenario not in SCENARIOS:
        raise ValidationError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    if epoch is None:
        epoch = generate_epoch(config)

    if scenario == "externality":
        k = config.k_ads
        arms = [
            Treatment.baseline(),
            Treatment.shuffle(),
            Treatment.random_top_x(k + 1),
            Treatment.random_top_x(k + 2),
        ]
        stats = _run_arms(epoch, arms, threads=threads, scheme=scheme)
        control, rest = stats[0], stats[1:]
        reports = [_arm_report(control, None)] + [
            _arm_report(s, control, reference_name=control.name) for s in rest
        ]
        return ExperimentReport(
            scenario=scenario, config=config, control_name=control.name,
            arms=reports, tuned=None, extras={},
        )

    if scenario in ("vb_grid", "vb_constant", "diversity"):
        if tuned is None:
            tuned = _tune(epoch)
        v_star = tuned.v.v_a
        if scenario == "vb_grid":
            arms = [
                Treatment.baseline(),
                Treatment.listwise(v_star, name="vb_tuned"),
                Treatment.listwise(v_star - 1.0, name="vb_minus_1"),
                Treatment.listwise(v_star + 1.0, name="vb_plus_1"),
            ]
        elif scenario == "vb_constant":
            arms = [
                Treatment.baseline(),
                Treatment.listwise(v_star, name="vb_tuned"),
                Treatment.listwise(1.0, name="vb_one"),
            ]
        else:  # diversity
            arms = [Treatment.baseline(), Treatment.listwise(v_star, name="vb_tuned")]
        stats = _run_arms(epoch, arms, threads=threads, scheme=scheme)
        control, rest = stats[0], stats[1:]
        reports = [_arm_report(control, None)] + [
            _arm_report(s, control, reference_name=control.name) for s in rest
        ]
        return ExperimentReport(
            scenario=scenario, config=config, control_name=control.name,
            arms=reports, tuned=_tuned_dict(tuned), extras={"v_star": v_star},
        )

    # dist_shift: rerun the two-treatment design on a shifted epoch, keeping
    # the stale tuned bid, and compare each treatment to its own T1 run.
    if tuned is None:
        tuned = _tune(epoch)
    v1 = tuned.v.v_a
    t1_arms = [
        Treatment.listwise(v1, name="vb_tuned"),
        Treatment.listwise(1.0, name="vb_one"),
    ]
    t1_stats = _run_arms(epoch, t1_arms, threads=threads, scheme=scheme)

    config2 = config.shifted(
        bid_scale=config.shift_bid_scale,
        ctr_scale=config.shift_ctr_scale,
        seed_offset=config.shift_seed_offset,
    )
    epoch2 = generate_epoch(config2)
    tuned2 = _tune(epoch2)
    predictor2 = ListwisePredictor(epoch2.truth)
    tune_log2 = epoch2.impressions[: min(config2.n_tune, len(epoch2.impressions))]
    stale_frontier = frontier_point(tune_log2, predictor2, config2.n_prime, VirtualBid(v1))
    distance_stale = distance_to_utopia(stale_frontier, tuned2.utopia)

    t2_arms = [
        Treatment.listwise(v1, name="vb_stale"),
        Treatment.listwise(1.0, name="vb_one"),
    ]
    t2_stats = _run_arms(epoch2, t2_arms, threads=threads, scheme=scheme, arm_offset=len(t1_arms))

    reports = [_arm_report(s, None, epoch_tag="T1") for s in t1_stats]
    for s2, s1 in zip(t2_stats, t1_stats):
        reports.append(_arm_report(s2, s1, epoch_tag="T2", reference_name=f"{s1.name}@T1"))
    return ExperimentReport(
        scenario=scenario,
        config=config,
        control_name=None,
        arms=reports,
        tuned=_tuned_dict(tuned),
        extras={
            "v_t1": v1,
            "v_t2_retuned": tuned2.v.v_a,
            "distance_t2_stale": distance_stale,
            "distance_t2_retuned": tuned2.distance,
            "bid_scale_t2": config.shift_bid_scale,
            "ctr_scale_t2": config.shift_ctr_scale,
        },
    )


# ---------------------------------------------------------------------------
# Serialization and rendering
# ---------------------------------------------------------------------------


def _diversity_dict(row: DiversityRow) -> dict:
    return {
        group: {f: getattr(getattr(row, group), f) for f in _DIVERSITY_FIELDS}
        for group in ("ads", "organics", "overall")
    }


def report_to_dict(report: ExperimentReport) -> dict:
    config_doc = dataclasses.asdict(report.config)
    for key in ("ad_positions", "organic_positions", "position_multipliers"):
        config_doc[key] = list(config_doc[key])
    return {
        "scenario": report.scenario,
        "config": config_doc,
        "control": report.control_name,
        "tuned": report.tuned,
        "extras": report.extras,
        "arms": [
            {
                "name": a.name,
                "epoch": a.epoch,
                "sample_size": a.sample_size,
                "metrics": a.metrics,
                "lift_reference": a.lift_reference,
                "lifts": {
                    m: {"lift_pct": c.lift_pct, "z": c.z, "p": c.p, "marker": c.marker}
                    for m, c in a.lifts.items()
                },
                "diversity": _diversity_dict(a.diversity),
                "diversity_lifts": a.diversity_lifts,
                "subcat_revenue": {
                    s: {"expected_sum": v[0], "realized_sum": v[1], "n": v[2]}
                    for s, v in a.subcat_revenue.items()
                },
            }
            for a in report.arms
        ],
    }


def report_to_json(report: ExperimentReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"


def _fmt_lift(cell: Optional[LiftCell]) -> str:
    if cell is None:
        return "--"
    return f"{cell.lift_pct:+.2f}%{cell.marker}"


def render_report_text(report: ExperimentReport) -> str:
    lines = []
    lines.append(f"scenario: {report.scenario}")
    if report.tuned:
        lines.append(
            "tuned virtual bid: v_a={v_a:.4f} distance={distance:.6f} "
            "(utopia ctr={u_ctr:.5f}, rev={u_rev:.5f})".format(
                v_a=report.tuned["v_a"],
                distance=report.tuned["distance"],
                u_ctr=report.tuned["utopia"]["u_ctr"],
                u_rev=report.tuned["utopia"]["u_rev"],
            )
        )
    for key, value in sorted(report.extras.items()):
        lines.append(f"{key}: {value:.6f}" if isinstance(value, float) else f"{key}: {value}")
    if report.control_name:
        lines.append(f"lifts are vs control arm '{report.control_name}'")

    header = (
        f"{'arm':<16}{'ep':<4}{'n':>8} "
        f"{'adCTR(exp)':>11} {'lift':>10} {'adRev(exp)':>11} {'lift':>10} "
        f"{'orgCTR(exp)':>11} {'lift':>10}"
    )
    lines.append("")
    lines.append(header)
    lines.append("-" * len(header))
    for a in report.arms:
        lines.append(
            f"{a.name:<16}{a.epoch:<4}{a.sample_size:>8} "
            f"{a.metrics['ad_ctr_expected']:>11.5f} {_fmt_lift(a.lifts.get('ad_ctr_expected')):>10} "
            f"{a.metrics['ad_revenue_expected']:>11.5f} {_fmt_lift(a.lifts.get('ad_revenue_expected')):>10} "
            f"{a.metrics['org_ctr_expected']:>11.5f} {_fmt_lift(a.lifts.get('org_ctr_expected')):>10}"
        )
    lines.append("")
    header2 = (
        f"{'arm':<16}{'ep':<4}{'n':>8} "
        f"{'adCTR(real)':>11} {'lift':>10} {'adRev(real)':>11} {'lift':>10} "
        f"{'orgCTR(real)':>12} {'lift':>10}"
    )
    lines.append(header2)
    lines.append("-" * len(header2))
    for a in report.arms:
        lines.append(
            f"{a.name:<16}{a.epoch:<4}{a.sample_size:>8} "
            f"{a.metrics['ad_ctr_realized']:>11.5f} {_fmt_lift(a.lifts.get('ad_ctr_realized')):>10} "
            f"{a.metrics['ad_revenue_realized']:>11.5f} {_fmt_lift(a.lifts.get('ad_revenue_realized')):>10} "
            f"{a.metrics['org_ctr_realized']:>12.5f} {_fmt_lift(a.lifts.get('org_ctr_realized')):>10}"
        )
    lines.append("")
    header3 = (
        f"{'arm':<16}{'group':<10}{'multiSubcat':>12} {'nSubcat':>9} {'herfindahl':>11}"
    )
    lines.append(header3)
    lines.append("-" * len(header3))
    for a in report.arms:
        for group in ("ads", "organics", "overall"):
            g = getattr(a.diversity, group)
            lines.append(
                f"{a.name:<16}{group:<10}{g.multi_subcat_rate:>12.5f} "
                f"{g.mean_subcat_count:>9.5f} {g.herfindahl:>11.6f}"
            )
    lines.append("")
    lines.append("* p<0.01, ** p<0.001 (two-sample z)")
    return "\n".join(lines) + "\n"


def subcat_revenue_csv(report: ExperimentReport) -> str:
    """Per-page-subcategory revenue breakdown of a report as CSV text."""
    rows = ["scenario,arm,epoch,page_subcat,n,expected_revenue_mean,realized_revenue_mean"]
    for arm in report.arms:
        for subcat, (exp_sum, real_sum, n) in arm.subcat_revenue.items():
            rows.append(
                f"{report.scenario},{arm.name},{arm.epoch},{subcat},{n},"
                f"{exp_sum / n!r},{real_sum / n!r}"
            )
    return "\n".join(rows) + "\n"
