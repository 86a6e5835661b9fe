"""Stage 1: cooperative global support identification.

Each device scores every column by the number of zero-valued measurements in
that column's rows; the server fuses the scores with a group-wise counting
rule: a column is declared active when some group's summed score falls below
the threshold eta. The module also evaluates, from simulator-side ground
truth, the sufficient conditions under which this rule is provably exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .disjunct import GroupPartition, effective_t
from .scenario import DeviceView, Scenario


@dataclass(frozen=True)
class ScoreVector:
    """Per-device inactivity scores: u[n] zero measurements among column n's rows."""

    device_id: int
    u: np.ndarray  # length n, nonnegative ints


@dataclass(frozen=True)
class ConditionReport:
    """Ground-truth check of the exact-recovery conditions for one scenario.

    satisfied requires all of: k_o < t_eff/2, alpha <= b_count-1,
    k_o < eta < t_eff + 1 - k_o.
    """

    k_o: int        # max group-wise outlier count
    alpha: int      # max number of devices blocked on any one support column
    t_eff: int      # effective disjunctness level for the realized support
    eta: float
    b_count: int
    satisfied: bool
    reasons: tuple  # names of violated clauses, empty when satisfied


def local_scores(view: DeviceView, eps_zero: float = 0.0) -> ScoreVector:
    """Count zero measurements per column; eps_zero=0 keeps the test exact."""
    zero = np.abs(view.measurements) <= eps_zero
    u = (view.phi != 0)[zero].sum(axis=0).astype(np.intp)
    return ScoreVector(device_id=view.device_id, u=u)


def fuse_support(scores: Sequence[ScoreVector], partition: GroupPartition,
                 eta: float) -> tuple[np.ndarray, dict]:
    """Group-wise counting rule.

    Returns the estimated support (columns where some group's summed score is
    below eta) plus, for each such column, the tuple of eligible group
    indices — the groups the server will task with ratio reports.
    """
    if eta <= 0.0:
        raise ValueError(f"eta must be positive, got {eta}")
    by_id = {s.device_id: s for s in scores}
    expected = {dev for g in partition.groups for dev in g}
    if set(by_id) != expected:
        raise ValueError("need exactly one score vector per device in the partition")
    n = len(next(iter(by_id.values())).u)
    group_sums = np.zeros((partition.b_count, n), dtype=np.intp)
    for b, group in enumerate(partition.groups):
        for dev in group:
            group_sums[b] += by_id[dev].u
    below = group_sums < eta
    khat = np.flatnonzero(below.any(axis=0))
    eligible = {int(c): tuple(int(b) for b in np.flatnonzero(below[:, c]))
                for c in khat}
    return khat, eligible


def default_eta(t_eff: int, k_o_assumed: int = 0) -> float:
    """Midpoint of the admissible threshold interval (k_o, t_eff+1-k_o).

    The midpoint is (t_eff+1)/2 for any admissible outlier count, so
    k_o_assumed only documents the caller's working assumption.
    """
    return (t_eff + 1) / 2.0


def check_recovery_conditions(scenario: Scenario, partition: GroupPartition,
                              eta: float) -> ConditionReport:
    """Evaluate the exact-recovery clause set from simulator-side ground truth.

    This is an oracle over the synthesized scenario (it reads outliers and
    masks); the recovery path never consumes it.
    """
    views = scenario.views
    k_o = 0
    for group in partition.groups:
        group_outliers = sum(int(np.count_nonzero(views[dev - 1].outliers))
                             for dev in group)
        k_o = max(k_o, group_outliers)
    support = scenario.signal.support
    if len(support):
        blocked = np.zeros(len(support), dtype=np.intp)
        for v in views:
            blocked += 1 - v.mask[support]
        alpha = int(blocked.max())
    else:
        alpha = 0
    t_eff = effective_t(views, partition, support)
    reasons = []
    if not k_o < t_eff / 2.0:
        reasons.append("outliers")
    if not alpha <= partition.b_count - 1:
        reasons.append("blockage")
    if not k_o < eta:
        reasons.append("eta_low")
    if not eta < t_eff + 1 - k_o:
        reasons.append("eta_high")
    return ConditionReport(k_o=k_o, alpha=alpha, t_eff=t_eff, eta=float(eta),
                           b_count=partition.b_count,
                           satisfied=not reasons, reasons=tuple(reasons))


def condition_report_to_dict(report: ConditionReport) -> dict:
    return {
        "k_o": report.k_o,
        "alpha": report.alpha,
        "t_eff": report.t_eff,
        "eta": report.eta,
        "b_count": report.b_count,
        "satisfied": report.satisfied,
        "reasons": list(report.reasons),
    }
