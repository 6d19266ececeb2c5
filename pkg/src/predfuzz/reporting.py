"""Campaign reports: per-cycle metric rows, persistence, and comparison.

campaign.csv carries one row per completed cycle with a fixed column
order and repr-formatted floats, so two identical campaigns produce
byte-identical files on any locale. summary.json is the full
round-trippable report; summary.txt is for humans. Comparison between
two report sets uses executions-to-reach with a timeout substitution of
1.25x the budget, the Vargha-Delaney A12 effect size, and the
Mann-Whitney U test.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

from scipy.stats import mannwhitneyu

REPORT_VERSION = 1
TIMEOUT_FACTOR = 1.25
TIMEOUT_SENTINEL = "T.O."


@dataclass
class CycleReport:
    """Metrics for one fuzzing cycle."""

    cycle: int
    execs: int                  # cumulative executions at cycle end
    transitions: int            # recorded this cycle
    new_paths: int
    queue_size: int
    rseed: int                  # seeds on some path to the target
    prseed: float               # proportion of such seeds in the queue
    ar: float                   # mean reward of this cycle's transitions
    global_eff: float
    dyn_loss: float             # mean final per-member NLL (nan if untrained)
    policy_v_loss: float
    policy_q_loss: float
    policy_objective: float
    aapp: float
    aapr: float
    target_reached: bool
    warnings: list[str] = field(default_factory=list)


@dataclass
class CampaignReport:
    """Whole-campaign outcome plus the per-cycle series."""

    version: int
    rng_seed: int
    config: dict
    reached: bool
    ttr_execs: Optional[int]
    ttr_wall: Optional[float]
    total_execs: int
    total_wall: float
    queue_size: int
    favored_count: int
    cycles: list[CycleReport] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignReport":
        cycles = [CycleReport(**c) for c in data.pop("cycles")]
        return cls(cycles=cycles, **data)

    def series(self, name: str) -> list:
        return [getattr(c, name) for c in self.cycles]


CSV_COLUMNS = (
    "cycle", "execs", "transitions", "new_paths", "queue_size",
    "rseed", "prseed", "ar", "global_eff", "dyn_loss",
    "policy_v_loss", "policy_q_loss", "policy_objective", "aapp", "aapr",
    "target_reached",
)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(report: CampaignReport, out_dir: str) -> None:
    """Write campaign.csv, summary.json, and summary.txt into out_dir."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "campaign.csv")
        with open(csv_path, "w", newline="\n") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for c in report.cycles:
                fh.write(",".join(_fmt(getattr(c, col)) for col in CSV_COLUMNS) + "\n")
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
        with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
            fh.write(_summary_text(report))
    except OSError as exc:
        raise OSError(f"failed to write report under {out_dir}: {exc}") from exc


def _summary_text(report: CampaignReport) -> str:
    ttr_e = report.ttr_execs if report.reached else TIMEOUT_SENTINEL
    ttr_w = (f"{report.ttr_wall:.3f}s" if report.reached else TIMEOUT_SENTINEL)
    lines = [
        "fuzzing campaign summary",
        f"  version:        {report.version}",
        f"  rng seed:       {report.rng_seed}",
        f"  target reached: {'yes' if report.reached else 'no'}",
        f"  TTR (execs):    {ttr_e}",
        f"  TTR (wall):     {ttr_w}",
        f"  total execs:    {report.total_execs}",
        f"  cycles:         {len(report.cycles)}",
        f"  queue size:     {report.queue_size}",
        f"  favored seeds:  {report.favored_count}",
    ]
    return "\n".join(lines) + "\n"


def load_report(out_dir: str) -> CampaignReport:
    with open(os.path.join(out_dir, "summary.json")) as fh:
        return CampaignReport.from_dict(json.load(fh))


def executions_to_reach(report: CampaignReport) -> float:
    """TTR in executions; unreached campaigns substitute 1.25x budget."""
    if report.reached and report.ttr_execs is not None:
        return float(report.ttr_execs)
    return float(report.config["budget_execs"]) * TIMEOUT_FACTOR


def vargha_delaney_a12(a: Sequence[float], b: Sequence[float]) -> float:
    """P(a beats b) where smaller is better; ties count one half."""
    if not a or not b:
        raise ValueError("both samples must be non-empty")
    wins = 0.0
    for x in a:
        for y in b:
            if x < y:
                wins += 1.0
            elif x == y:
                wins += 0.5
    return wins / (len(a) * len(b))


@dataclass(frozen=True)
class Comparison:
    speedup: float      # mean(b) / mean(a): >1 means a is faster
    a12: float          # P(a reaches target in fewer executions)
    u_statistic: float
    p_value: float
    n_a: int
    n_b: int


def compare_campaigns(a: Sequence[CampaignReport],
                      b: Sequence[CampaignReport]) -> Comparison:
    """Compare two repeat sets on executions-to-reach."""
    if len(a) < 3 or len(b) < 3:
        raise ValueError("need at least 3 repeats per side")
    va = [executions_to_reach(r) for r in a]
    vb = [executions_to_reach(r) for r in b]
    mean_a = sum(va) / len(va)
    mean_b = sum(vb) / len(vb)
    speedup = mean_b / mean_a if mean_a > 0 else math.inf
    res = mannwhitneyu(va, vb, alternative="two-sided", method="auto")
    return Comparison(
        speedup=speedup,
        a12=vargha_delaney_a12(va, vb),
        u_statistic=float(res.statistic),
        p_value=float(res.pvalue),
        n_a=len(va),
        n_b=len(vb),
    )


def gather_reports(root: str) -> list[CampaignReport]:
    """Load every summary.json under root (root itself or run subdirs)."""
    reports = []
    if os.path.exists(os.path.join(root, "summary.json")):
        reports.append(load_report(root))
    for name in sorted(os.listdir(root)):
        sub = os.path.join(root, name)
        if os.path.isdir(sub) and os.path.exists(os.path.join(sub, "summary.json")):
            reports.append(load_report(sub))
    if not reports:
        raise ValueError(f"no campaign summaries found under {root}")
    return reports
