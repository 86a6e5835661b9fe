"""Stage 2: global amplitude recovery by a majority vote over ratio reports.

For an estimated-active column n, a device's private rows (rows hitting n
and no other estimated-support column) reduce the measurement to a single
component, so sqrt(y)/|phi| reproduces the component amplitude exactly
whenever the row is uncorrupted and the component is visible. The server
pools these ratios from the eligible groups and keeps the most repeated
value. Only the ratios travel; raw measurements and matrix entries stay
on-device.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .disjunct import GroupPartition
from .errors import NoEvidenceError
from .scenario import DeviceView

DEFAULT_REL_TOL = 1e-9
_TOL_FLOOR = 1e-300


@dataclass(frozen=True)
class RatioBundle:
    """One device's ratio evidence for one column; may be empty."""

    device_id: int
    column: int
    ratios: np.ndarray        # nonnegative floats
    skipped_negative: int = 0  # rows dropped because an outlier drove y below 0


@dataclass(frozen=True)
class AmplitudeEstimate:
    amplitudes: dict   # column -> estimated |s_n|
    vote_counts: dict  # column -> winning cluster multiplicity
    no_evidence: tuple  # columns where every bundle was empty (amplitude forced to 0)


def device_ratios(view: DeviceView, khat: Sequence[int], n: int) -> RatioBundle:
    """Ratios sqrt(y)/|phi| over the device's private rows for column n.

    Private rows are computed against the full estimated support: rows also
    hit by another estimated-active column are contaminated and excluded.
    Rows with negative y (outlier-driven) are skipped and counted.
    """
    khat = np.asarray(khat, dtype=np.intp)
    if n not in khat:
        raise ValueError(f"column {n} is not in the estimated support")
    nz = view.phi != 0
    private = nz[:, n].copy()
    for other in khat:
        if other != n:
            private &= ~nz[:, other]
    rows = np.flatnonzero(private)
    y = view.measurements[rows]
    keep = y >= 0.0
    ratios = np.sqrt(y[keep]) / np.abs(view.phi[rows[keep], n])
    return RatioBundle(device_id=view.device_id, column=int(n), ratios=ratios,
                       skipped_negative=int(np.count_nonzero(~keep)))


def cluster_ratios(values: np.ndarray, rel_tol: float = DEFAULT_REL_TOL) -> list:
    """Greedy clustering of sorted ratios under a relative tolerance.

    Two ratios match when |a-b| <= rel_tol * max(a, b, tiny-floor); each
    cluster is anchored at its smallest member, which also serves as the
    representative. Returns (representative, count) pairs.
    """
    values = np.sort(np.asarray(values, dtype=np.float64))
    clusters: list[tuple[float, int]] = []
    rep, count = None, 0
    for v in values:
        v = float(v)
        if rep is not None and v - rep <= rel_tol * max(v, rep, _TOL_FLOOR):
            count += 1
        else:
            if rep is not None:
                clusters.append((rep, count))
            rep, count = v, 1
    if rep is not None:
        clusters.append((rep, count))
    return clusters


def majority_amplitude(bundles: Sequence[RatioBundle],
                       rel_tol: float = DEFAULT_REL_TOL) -> tuple[float, int]:
    """Mode of the pooled ratios; ties broken toward the smallest value."""
    pools = [b.ratios for b in bundles if len(b.ratios)]
    if not pools:
        raise NoEvidenceError("all ratio bundles are empty")
    clusters = cluster_ratios(np.concatenate(pools), rel_tol)
    best = max(clusters, key=lambda rc: (rc[1], -rc[0]))
    return best[0], best[1]


def pool_ratio_bundles(views: Sequence[DeviceView], khat: Sequence[int],
                       eligible: Mapping[int, Sequence[int]],
                       partition: GroupPartition) -> dict:
    """Device-side pass: bundles per column from devices in eligible groups."""
    by_id = {v.device_id: v for v in views}
    pooled: dict[int, list[RatioBundle]] = {}
    for n in khat:
        n = int(n)
        devices = sorted({dev for b in eligible[n] for dev in partition.groups[b]})
        pooled[n] = [device_ratios(by_id[dev], khat, n) for dev in devices]
    return pooled


def vote_amplitudes(pooled: Mapping[int, Sequence[RatioBundle]],
                    rel_tol: float = DEFAULT_REL_TOL) -> AmplitudeEstimate:
    """Server-side pass: consumes only ratio bundles, never raw device data."""
    amplitudes, counts, missing = {}, {}, []
    for n in sorted(pooled):
        try:
            amp, votes = majority_amplitude(pooled[n], rel_tol)
        except NoEvidenceError:
            amplitudes[n], counts[n] = 0.0, 0
            missing.append(n)
        else:
            amplitudes[n], counts[n] = amp, votes
    return AmplitudeEstimate(amplitudes=amplitudes, vote_counts=counts,
                             no_evidence=tuple(missing))


def recover_amplitudes(views: Sequence[DeviceView], khat: Sequence[int],
                       eligible: Mapping[int, Sequence[int]],
                       partition: GroupPartition,
                       rel_tol: float = DEFAULT_REL_TOL) -> AmplitudeEstimate:
    """Full stage-2 pass: pool ratios from eligible groups, then vote per column.

    Columns with no evidence at all get amplitude 0 and are flagged rather
    than invented; other columns are unaffected.
    """
    return vote_amplitudes(pool_ratio_bundles(views, khat, eligible, partition),
                           rel_tol)
