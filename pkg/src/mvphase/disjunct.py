"""Combinatorial structure checks on group-wise stacked sensing matrices.

A matrix is K^t-disjunct when every column keeps at least t+1 support rows
outside the union of any K other columns' supports. The recovery guarantees
only ever consume the support-conditional form of that property (private
rows relative to the realized signal support), so both an exhaustive checker
for small instances and the conditional counts used at experiment scale live
here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import InfeasibleSizeError, InvalidConfigError

# Exhaustive Definition-style checking explodes combinatorially; beyond these
# bounds callers must use the support-conditional counts instead.
EXACT_MAX_N = 25
EXACT_MAX_SUBSETS = 10 ** 6


@dataclass(frozen=True)
class GroupPartition:
    """Disjoint device groups covering {1..I}; group index is 0-based."""

    groups: tuple  # tuple of tuples of device ids

    def __post_init__(self):
        seen = set()
        for g in self.groups:
            if len(g) == 0:
                raise InvalidConfigError("every group must be non-empty")
            if seen & set(g):
                raise InvalidConfigError("groups must be pairwise disjoint")
            seen |= set(g)
        if seen != set(range(1, len(seen) + 1)):
            raise InvalidConfigError("groups must cover device ids 1..I exactly")

    @property
    def b_count(self) -> int:
        return len(self.groups)

    @property
    def i_count(self) -> int:
        return sum(len(g) for g in self.groups)


@dataclass(frozen=True)
class DisjunctReport:
    """Per-group disjunctness summary for one realized scenario."""

    is_disjunct: tuple       # per group: True/False at the requested t, None if not computed
    t_exact: tuple           # per group: max exact t, None when exhaustive mode infeasible
    t_conditional: tuple     # per group: per-column private-row counts (np.ndarray)
    t_eff: int               # min over groups and columns of (count - 1)
    checked_t: int | None = None


def partition_devices(i_count: int, b_count: int,
                      policy: str = "contiguous") -> GroupPartition:
    """Contiguous equal split; remainder devices go one-per-group to low group ids."""
    if b_count > i_count:
        raise InvalidConfigError(
            f"cannot split {i_count} devices into {b_count} groups")
    if b_count < 1:
        raise InvalidConfigError("need at least one group")
    if policy != "contiguous":
        raise InvalidConfigError(f"unknown partition policy {policy!r}")
    base, rem = divmod(i_count, b_count)
    groups, start = [], 1
    for b in range(b_count):
        size = base + (1 if b < rem else 0)
        groups.append(tuple(range(start, start + size)))
        start += size
    return GroupPartition(groups=tuple(groups))


def stack_group(devices: Sequence, group: Sequence[int]) -> tuple[np.ndarray, list]:
    """Stack the sensing matrices of a device group, rows in device-id order.

    Returns the stacked matrix plus a provenance list mapping each stacked
    row to its (device_id, local_row) origin.
    """
    ids = sorted(group)
    if not ids:
        raise ValueError("group must be non-empty")
    by_id = {v.device_id: v for v in devices}
    blocks, provenance = [], []
    for dev in ids:
        if dev not in by_id:
            raise ValueError(f"unknown device id {dev}")
        phi = by_id[dev].phi
        blocks.append(phi)
        provenance.extend((dev, m) for m in range(phi.shape[0]))
    return np.concatenate(blocks, axis=0), provenance


def verify_disjunct_exact(phi_b: np.ndarray, k: int, t: int) -> bool:
    """Exhaustively check the K^t-disjunct property of a (small) matrix.

    True iff every column keeps at least t+1 private support rows against the
    union of any k other columns. Raises InfeasibleSizeError instead of
    silently approximating when the subset count is too large.
    """
    m, n = phi_b.shape
    if n > EXACT_MAX_N or math.comb(max(n - 1, 0), k) > EXACT_MAX_SUBSETS:
        raise InfeasibleSizeError(
            f"exhaustive disjunct check infeasible for n={n}, k={k}; "
            "use support_conditional_t for the realized support instead")
    nz = phi_b != 0
    for col in range(n):
        others = [c for c in range(n) if c != col]
        mine = nz[:, col]
        for subset in combinations(others, k):
            covered = nz[:, subset].any(axis=1)
            if int(np.count_nonzero(mine & ~covered)) < t + 1:
                return False
    return True


def exhaustive_min_private(phi_b: np.ndarray, k: int) -> int:
    """Min over columns and k-subsets of private support rows (small instances)."""
    m, n = phi_b.shape
    if n > EXACT_MAX_N or math.comb(max(n - 1, 0), k) > EXACT_MAX_SUBSETS:
        raise InfeasibleSizeError(
            f"exhaustive disjunct scan infeasible for n={n}, k={k}")
    nz = phi_b != 0
    best = int(nz.sum(axis=0).min()) if n else 0
    for col in range(n):
        others = [c for c in range(n) if c != col]
        mine = nz[:, col]
        for subset in combinations(others, k):
            covered = nz[:, subset].any(axis=1)
            best = min(best, int(np.count_nonzero(mine & ~covered)))
    return best


def support_conditional_t(phi_b: np.ndarray, support: Sequence[int], n: int) -> int:
    """Rows hitting column n and no support column other than n itself.

    For n outside the support these rows are guaranteed zero-valued in the
    noiseless model; for n inside they are the rows where the measurement
    collapses to a single signal component.
    """
    nz = phi_b != 0
    mine = nz[:, n].copy()
    for other in support:
        if other != n:
            mine &= ~nz[:, other]
    return int(np.count_nonzero(mine))


def conditional_private_counts(phi_b: np.ndarray, support: Sequence[int]) -> np.ndarray:
    """support_conditional_t for every column at once."""
    nz = phi_b != 0
    support = np.asarray(sorted(support), dtype=np.intp)
    sub = nz[:, support]
    hits = sub.sum(axis=1)
    counts = nz[hits == 0].sum(axis=0).astype(np.intp)
    single = hits == 1
    for j, col in enumerate(support):
        counts[col] = int(np.count_nonzero(sub[:, j] & single))
    return counts


def effective_t(views: Sequence, partition: GroupPartition,
                support: Sequence[int]) -> int:
    """Largest t such that every (group, column) pair keeps >= t+1 private rows."""
    worst = None
    for group in partition.groups:
        phi_b, _ = stack_group(views, group)
        low = int(conditional_private_counts(phi_b, support).min())
        worst = low if worst is None else min(worst, low)
    return (worst if worst is not None else 0) - 1


def build_disjunct_report(views: Sequence, partition: GroupPartition,
                          support: Sequence[int], k: int,
                          t: int | None = None) -> DisjunctReport:
    """Assemble the per-group report; exhaustive fields only when feasible."""
    is_disjunct, t_exact, conditionals = [], [], []
    for group in partition.groups:
        phi_b, _ = stack_group(views, group)
        conditionals.append(conditional_private_counts(phi_b, support))
        try:
            exact = exhaustive_min_private(phi_b, k) - 1
        except InfeasibleSizeError:
            t_exact.append(None)
            is_disjunct.append(None)
        else:
            t_exact.append(exact)
            is_disjunct.append(None if t is None else bool(exact >= t))
    t_eff = min(int(c.min()) for c in conditionals) - 1
    return DisjunctReport(is_disjunct=tuple(is_disjunct), t_exact=tuple(t_exact),
                          t_conditional=tuple(conditionals), t_eff=t_eff,
                          checked_t=t)
