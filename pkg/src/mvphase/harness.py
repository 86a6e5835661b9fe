"""Monte Carlo experiment driver: trials, sweeps, success rates, CSV output.

A device-trial succeeds when the sign-invariant relative error of its local
signal estimate is below 1e-3. The cooperative pipeline is compared against
a no-collaboration ablation in which every device runs the same stages on
its own data only.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .amplitude import DEFAULT_REL_TOL, device_ratios, vote_amplitudes
from .disjunct import (GroupPartition, conditional_private_counts,
                       effective_t, partition_devices)
from .errors import InvalidConfigError
from .netsim import NetworkTrace, ProtocolOptions, audit_trace, comm_cost, run_protocol
from .localsolve import (SolveOptions, assemble_local_signal, build_weighted_matrix,
                         solve_l0_exhaustive, solve_l1_projected)
from .scenario import (Scenario, ScenarioConfig, sigma_from_nsr_db,
                       split_measurements, synthesize_scenario, with_seed)
from .support import (ConditionReport, check_recovery_conditions, default_eta,
                      fuse_support, local_scores)
from .util import derive_seed

SUCCESS_REL_ERR = 1e-3
MODES = ("proposed", "no_collab")
SWEEP_AXES = ("theta", "nsr_db", "m_total", "k")


@dataclass(frozen=True)
class TrialResult:
    seed: int
    mode: str
    errors: tuple              # per device, sign-invariant relative error
    success: tuple             # per device bool
    support_exact: bool
    amplitude_max_rel_err: float
    condition: ConditionReport
    comm: dict
    audit_problems: tuple
    resamples: int = 0

    @property
    def all_success(self) -> bool:
        return all(self.success)


@dataclass(frozen=True)
class SweepRow:
    value: float
    mode: str
    trials: int
    success_rate: float
    mean_rel_err: float


@dataclass(frozen=True)
class SweepTable:
    axis: str
    rows: tuple
    master_seed: int | None = None
    resamples: int = 0
    audit_ok: bool = True


def relative_error_up_to_sign(est: np.ndarray, truth: np.ndarray) -> float:
    """min(||est - truth||, ||est + truth||) / ||truth||; 0-vs-0 counts as exact."""
    est = np.asarray(est, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if est.shape != truth.shape:
        raise ValueError("estimate and truth must have the same length")
    denom = float(np.linalg.norm(truth))
    if denom == 0.0:
        return 0.0 if float(np.linalg.norm(est)) == 0.0 else float("inf")
    err = min(float(np.linalg.norm(est - truth)), float(np.linalg.norm(est + truth)))
    return err / denom


def desk_config(seed: int = 0, theta: float = 0.1) -> ScenarioConfig:
    """Desk-scale defaults sized so the effective disjunctness level is >= 3."""
    return ScenarioConfig(n=200, k=5, i_count=30, b_count=10, m_per_device=90,
                          q=0.2, theta=theta, p_outlier=0.05,
                          sigma_w=sigma_from_nsr_db(5.0), seed=seed)


def _amplitude_error(amplitudes: dict, signal_values: np.ndarray,
                     support: np.ndarray) -> float:
    worst = 0.0
    for n in support:
        truth = abs(float(signal_values[n]))
        if int(n) not in amplitudes:
            return float("inf")
        worst = max(worst, abs(amplitudes[int(n)] - truth) / truth)
    return worst


def run_trial_on(scenario: Scenario, mode: str = "proposed", *,
                 eta: float | None = None, rel_tol: float = DEFAULT_REL_TOL,
                 solve: SolveOptions | None = None,
                 success_tol: float = SUCCESS_REL_ERR,
                 resamples: int = 0) -> TrialResult:
    """Run one recovery trial on an already synthesized scenario."""
    if mode not in MODES:
        raise InvalidConfigError(f"mode must be one of {MODES}, got {mode!r}")
    cfg = scenario.config
    truths = [v.mask * scenario.signal.values for v in scenario.views]
    solve = solve or SolveOptions()
    if mode == "proposed":
        partition = partition_devices(cfg.i_count, cfg.b_count)
        if eta is None:
            t_eff = effective_t(scenario.views, partition, scenario.signal.support)
            eta = default_eta(max(t_eff, 0))
        result = run_protocol(scenario, partition,
                              ProtocolOptions(eta=eta, rel_tol=rel_tol, solve=solve))
        errors = tuple(relative_error_up_to_sign(est, truth)
                       for est, truth in zip(result.estimates, truths))
        support_exact = (len(result.khat) == len(scenario.signal.support)
                         and bool(np.all(result.khat == scenario.signal.support)))
        amp_err = _amplitude_error(result.amplitude.amplitudes,
                                   scenario.signal.values, scenario.signal.support)
        comm = comm_cost(result.trace)
        problems = audit_trace(result.trace, cfg.n, cfg.i_count)
        condition = result.condition
    else:
        errors_list, support_flags, amp_errs = [], [], []
        singles = partition_devices(cfg.i_count, cfg.i_count)
        t_nc = effective_t(scenario.views, singles, scenario.signal.support)
        eta_nc = eta if eta is not None else default_eta(max(t_nc, 0))
        condition = check_recovery_conditions(scenario, singles, eta_nc)
        for view, truth in zip(scenario.views, truths):
            est, khat_i, amps = _run_single_device(view, scenario, eta_nc,
                                                   rel_tol, solve)
            errors_list.append(relative_error_up_to_sign(est, truth))
            observable = scenario.signal.support[
                view.mask[scenario.signal.support] == 1]
            support_flags.append(len(khat_i) == len(observable)
                                 and bool(np.all(khat_i == observable)))
            amp_errs.append(_amplitude_error(amps, scenario.signal.values,
                                             observable))
        errors = tuple(errors_list)
        support_exact = all(support_flags)
        amp_err = max(amp_errs) if amp_errs else 0.0
        comm = comm_cost(NetworkTrace())
        problems = []
    return TrialResult(seed=cfg.seed, mode=mode, errors=errors,
                       success=tuple(e < success_tol for e in errors),
                       support_exact=support_exact,
                       amplitude_max_rel_err=amp_err, condition=condition,
                       comm=comm, audit_problems=tuple(problems),
                       resamples=resamples)


def _run_single_device(view, scenario, eta, rel_tol, solve):
    """No-collaboration pipeline: one device, its own scores, ratios and solve."""
    n = scenario.signal.n
    u = local_scores(view).u
    khat_i = np.flatnonzero(u < eta)
    if len(khat_i) == 0:
        return np.zeros(n), khat_i, {}
    bundles = {int(c): [device_ratios(view, khat_i, int(c))] for c in khat_i}
    amps = vote_amplitudes(bundles, rel_tol).amplitudes
    order = tuple(int(c) for c in khat_i)
    wmat = build_weighted_matrix(view.phi, order, amps)
    if len(order) <= solve.k_max_exhaustive:
        sol = solve_l0_exhaustive(view.measurements, wmat, eps_zero=solve.eps_zero)
    else:
        sol = solve_l1_projected(view.measurements, wmat,
                                 replace(solve, seed=derive_seed(
                                     scenario.config.seed, view.device_id, 5)))
    return assemble_local_signal(amps, sol, order, n), khat_i, amps


def run_trial(cfg: ScenarioConfig, recovery_mode: str = "proposed",
              seed: int | None = None, **kwargs) -> TrialResult:
    """Synthesize a scenario for (cfg, seed) and run one trial on it."""
    cfg = with_seed(cfg, seed) if seed is not None else cfg
    cfg.validate()
    return run_trial_on(synthesize_scenario(cfg), recovery_mode, **kwargs)


def _apply_axis(cfg: ScenarioConfig, axis: str, value: float):
    """Config (and optional per-device sizes) for one sweep point."""
    if axis == "theta":
        return replace(cfg, theta=float(value)), None
    if axis == "nsr_db":
        return replace(cfg, sigma_w=sigma_from_nsr_db(float(value))), None
    if axis == "m_total":
        sizes = split_measurements(int(value), cfg.i_count)
        return replace(cfg, m_per_device=max(sizes)), sizes
    if axis == "k":
        return replace(cfg, k=int(value)), None
    raise InvalidConfigError(f"unknown sweep axis {axis!r}; valid: {SWEEP_AXES}")


def draw_scenario(cfg: ScenarioConfig, master_seed: int, point: int, trial: int,
                  min_t_eff: int | None = None, max_resamples: int = 100,
                  m_sizes: Sequence[int] | None = None) -> tuple[Scenario, int]:
    """Draw a scenario for one sweep cell, resampling until it meets min_t_eff.

    Returns the accepted scenario and the number of rejected draws.
    """
    partition = partition_devices(cfg.i_count, cfg.b_count)
    for attempt in range(max_resamples + 1):
        seed = derive_seed(master_seed, point, trial, attempt)
        scenario = synthesize_scenario(with_seed(cfg, seed), m_sizes)
        if min_t_eff is None:
            return scenario, attempt
        t_eff = effective_t(scenario.views, partition, scenario.signal.support)
        if t_eff >= min_t_eff:
            return scenario, attempt
    raise InvalidConfigError(
        f"could not reach effective t >= {min_t_eff} in {max_resamples} resamples; "
        "raise m_per_device or adjust q")


def sweep(cfg: ScenarioConfig, axis: str, values: Sequence[float],
          trials_per_point: int, modes: Sequence[str] = MODES,
          master_seed: int = 0, min_t_eff: int | None = 3,
          solve: SolveOptions | None = None,
          success_tol: float = SUCCESS_REL_ERR) -> SweepTable:
    """Monte Carlo sweep along one axis; both modes see identical scenarios.

    Unless solver options are supplied, sweeps cap exhaustive enumeration at
    k=10 so an occasional oversized per-device support estimate falls through
    to the heuristic instead of stalling a cell with a 3^k scan.
    """
    if solve is None:
        solve = SolveOptions(k_max_exhaustive=10)
    if trials_per_point < 1:
        raise InvalidConfigError("trials_per_point must be at least 1")
    for mode in modes:
        if mode not in MODES:
            raise InvalidConfigError(f"unknown mode {mode!r}")
    rows = []
    total_resamples = 0
    audit_ok = True
    for point, value in enumerate(values):
        cfg_point, m_sizes = _apply_axis(cfg, axis, value)
        cfg_point.validate()
        stats = {mode: {"errors": [], "successes": 0, "count": 0} for mode in modes}
        for trial in range(trials_per_point):
            scenario, resamples = draw_scenario(cfg_point, master_seed, point,
                                                trial, min_t_eff,
                                                m_sizes=m_sizes)
            total_resamples += resamples
            for mode in modes:
                result = run_trial_on(scenario, mode, solve=solve,
                                      success_tol=success_tol,
                                      resamples=resamples)
                audit_ok &= not result.audit_problems
                st = stats[mode]
                st["errors"].extend(result.errors)
                st["successes"] += sum(result.success)
                st["count"] += len(result.success)
        for mode in modes:
            st = stats[mode]
            rate = st["successes"] / st["count"] if st["count"] else 0.0
            mean_err = float(np.mean(st["errors"])) if st["errors"] else 0.0
            rows.append(SweepRow(value=float(value), mode=mode,
                                 trials=trials_per_point,
                                 success_rate=rate, mean_rel_err=mean_err))
    return SweepTable(axis=axis, rows=tuple(rows), master_seed=master_seed,
                      resamples=total_resamples, audit_ok=audit_ok)


CSV_HEADER = "axis,value,mode,trials,success_rate,mean_rel_err"


def emit_csv(table: SweepTable, path) -> None:
    """Write the sweep table; byte-identical output for identical inputs."""
    lines = []
    if table.master_seed is not None:
        lines.append(f"# master_seed={table.master_seed}")
    lines.append(CSV_HEADER)
    for row in table.rows:
        lines.append(f"{table.axis},{row.value!r},{row.mode},{row.trials},"
                     f"{row.success_rate!r},{row.mean_rel_err!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
