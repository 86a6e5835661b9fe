"""Simulated device-server message exchange for the full recovery protocol.

The server is node 0, devices are nodes 1..I, and every cross-node data flow
is materialized as a Message in the trace. Payloads carry only derived
quantities (integer scores, column assignments, ratios, amplitudes) — never
raw measurements or sensing-matrix entries — and an audit re-checks that
structurally. Rounds are synchronous; an optional drop probability exists
for robustness experiments and defaults to off.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import IO, Mapping, Sequence

import numpy as np

from .amplitude import (DEFAULT_REL_TOL, AmplitudeEstimate, RatioBundle,
                        device_ratios, vote_amplitudes)
from .disjunct import GroupPartition
from .localsolve import (SolveOptions, TernarySolution, assemble_local_signal,
                         build_weighted_matrix, solve_l0_exhaustive,
                         solve_l1_projected)
from .scenario import Scenario
from .support import (ConditionReport, check_recovery_conditions, fuse_support,
                      local_scores)
from .util import derive_seed

SERVER = 0
KIND_SCORES = "scores"
KIND_SUPPORT_ASSIGN = "support_assign"
KIND_RATIOS = "ratios"
KIND_AMPLITUDES = "amplitudes"
KINDS = (KIND_SCORES, KIND_SUPPORT_ASSIGN, KIND_RATIOS, KIND_AMPLITUDES)


@dataclass(frozen=True)
class Message:
    kind: str
    sender: int
    receiver: int
    payload: tuple
    scalar_count: int


@dataclass
class NetworkTrace:
    messages: list = field(default_factory=list)

    def append(self, message: Message) -> None:
        self.messages.append(message)

    def totals(self) -> dict:
        out = {kind: {"messages": 0, "scalars": 0} for kind in KINDS}
        for msg in self.messages:
            out[msg.kind]["messages"] += 1
            out[msg.kind]["scalars"] += msg.scalar_count
        return out


@dataclass(frozen=True)
class ProtocolOptions:
    """Server/device knobs for one protocol run; eta has no safe default."""

    eta: float
    rel_tol: float = DEFAULT_REL_TOL
    score_eps_zero: float = 0.0
    solver: str = "auto"  # auto | l0 | l1
    solve: SolveOptions = SolveOptions()
    drop_prob: float = 0.0
    drop_seed: int = 0


@dataclass(frozen=True)
class ProtocolResult:
    estimates: tuple            # per device, length-n signal estimate
    solutions: tuple            # per device TernarySolution (None when support empty)
    khat: np.ndarray
    eligible: dict
    amplitude: AmplitudeEstimate
    trace: NetworkTrace
    condition: ConditionReport


def _solve_device(view, khat, amplitudes, options: ProtocolOptions,
                  scenario_seed: int) -> tuple[np.ndarray, TernarySolution | None]:
    n = view.phi.shape[1]
    order = tuple(int(c) for c in khat)
    if not order:
        return np.zeros(n), None
    wmat = build_weighted_matrix(view.phi, order, amplitudes)
    k = len(order)
    if options.solver == "l0" or (options.solver == "auto"
                                  and k <= options.solve.k_max_exhaustive):
        sol = solve_l0_exhaustive(view.measurements, wmat,
                                  eps_zero=options.solve.eps_zero,
                                  k_max=options.solve.k_max_exhaustive)
    else:
        opts = replace(options.solve,
                       seed=derive_seed(scenario_seed, view.device_id, 3))
        sol = solve_l1_projected(view.measurements, wmat, opts)
    return assemble_local_signal(amplitudes, sol, order, n), sol


def run_protocol(scenario: Scenario, partition: GroupPartition,
                 options: ProtocolOptions) -> ProtocolResult:
    """Execute the full three-stage exchange and return everything it produced.

    Order of rounds: devices score columns -> server fuses the support ->
    server assigns ratio duty to eligible groups only -> assigned devices
    report ratios over their private rows -> server votes amplitudes and
    broadcasts them -> every device solves its local ternary problem.
    Deterministic for a fixed scenario and options.
    """
    views = scenario.views
    n = scenario.signal.n
    trace = NetworkTrace()
    drop_rng = (np.random.default_rng(options.drop_seed)
                if options.drop_prob > 0.0 else None)

    def delivered() -> bool:
        return drop_rng is None or drop_rng.random() >= options.drop_prob

    condition = check_recovery_conditions(scenario, partition, options.eta)

    # Round 1: per-device inactivity scores.
    received_scores = []
    for view in views:
        sv = local_scores(view, options.score_eps_zero)
        msg = Message(kind=KIND_SCORES, sender=view.device_id, receiver=SERVER,
                      payload=tuple(int(u) for u in sv.u), scalar_count=n)
        if delivered():
            trace.append(msg)
            received_scores.append(sv)
        else:
            # Lost score reports count as all-zero: no inactivity evidence.
            received_scores.append(replace(sv, u=np.zeros(n, dtype=np.intp)))

    khat, eligible = fuse_support(received_scores, partition, options.eta)
    khat_tuple = tuple(int(c) for c in khat)

    # Round 2: ratio duty goes only to devices in eligible groups; the full
    # estimated support rides along as context so devices can exclude rows
    # shared with other active columns.
    assignments = {}
    for c in khat_tuple:
        for b in eligible[c]:
            for dev in partition.groups[b]:
                assignments.setdefault(dev, []).append(c)
    pooled = {c: [] for c in khat_tuple}
    for dev in sorted(assignments):
        assigned = tuple(sorted(assignments[dev]))
        msg = Message(kind=KIND_SUPPORT_ASSIGN, sender=SERVER, receiver=dev,
                      payload=(assigned, khat_tuple),
                      scalar_count=len(assigned) + len(khat_tuple))
        if not delivered():
            continue
        trace.append(msg)
        view = views[dev - 1]
        bundles = [device_ratios(view, khat, c) for c in assigned]
        reply = Message(
            kind=KIND_RATIOS, sender=dev, receiver=SERVER,
            payload=tuple((b.column, tuple(float(r) for r in b.ratios))
                          for b in bundles),
            scalar_count=sum(1 + len(b.ratios) for b in bundles))
        if delivered():
            trace.append(reply)
            for b in bundles:
                pooled[b.column].append(b)

    amplitude = vote_amplitudes(pooled, options.rel_tol)

    # Round 3: amplitudes are broadcast to every device (empty support included,
    # so devices know to emit the zero estimate).
    amp_payload = tuple((c, float(amplitude.amplitudes[c])) for c in khat_tuple)
    estimates, solutions = [], []
    for view in views:
        msg = Message(kind=KIND_AMPLITUDES, sender=SERVER, receiver=view.device_id,
                      payload=amp_payload, scalar_count=2 * len(amp_payload))
        if delivered():
            trace.append(msg)
            est, sol = _solve_device(view, khat, amplitude.amplitudes, options,
                                     scenario.config.seed)
        else:
            est, sol = np.zeros(n), None
        estimates.append(est)
        solutions.append(sol)

    return ProtocolResult(estimates=tuple(estimates), solutions=tuple(solutions),
                          khat=khat, eligible=eligible, amplitude=amplitude,
                          trace=trace, condition=condition)


def comm_cost(trace: NetworkTrace) -> dict:
    """Message and scalar tallies per message kind plus grand totals."""
    totals = trace.totals()
    totals["total"] = {
        "messages": sum(v["messages"] for v in totals.values()),
        "scalars": sum(v["scalars"] for v in totals.values()),
    }
    return totals


def _int_columns_ok(values, n: int) -> bool:
    arr = np.asarray(values)
    if arr.size == 0:
        return True
    return arr.dtype.kind == "i" and bool(((arr >= 0) & (arr < n)).all())


def _ratio_values_ok(values) -> bool:
    arr = np.asarray(values)
    if arr.size == 0:
        return True
    return arr.dtype.kind == "f" and bool((np.isfinite(arr) & (arr >= 0.0)).all())


def audit_trace(trace: NetworkTrace, n: int, i_count: int) -> list:
    """Structural audit: payload schemas per kind, node ids, scalar counts.

    Returns a list of problems; an empty list means the trace carries no raw
    measurement vectors or sensing-matrix entries anywhere.
    """
    problems = []
    for pos, msg in enumerate(trace.messages):
        where = f"message {pos} ({msg.kind})"
        if msg.kind not in KINDS:
            problems.append(f"{where}: unknown kind")
            continue
        if msg.kind == KIND_SCORES:
            if not (1 <= msg.sender <= i_count and msg.receiver == SERVER):
                problems.append(f"{where}: bad routing")
            scores = np.asarray(msg.payload)
            if (len(msg.payload) != n or scores.dtype.kind != "i"
                    or not bool((scores >= 0).all())):
                problems.append(f"{where}: scores must be {n} nonnegative ints")
            if msg.scalar_count != n:
                problems.append(f"{where}: scalar count mismatch")
        elif msg.kind == KIND_SUPPORT_ASSIGN:
            if not (msg.sender == SERVER and 1 <= msg.receiver <= i_count):
                problems.append(f"{where}: bad routing")
            assigned, context = msg.payload
            ok = (_int_columns_ok(assigned, n) and _int_columns_ok(context, n)
                  and set(assigned) <= set(context))
            if not ok:
                problems.append(f"{where}: assignment must be column ids within context")
            if msg.scalar_count != len(assigned) + len(context):
                problems.append(f"{where}: scalar count mismatch")
        elif msg.kind == KIND_RATIOS:
            if not (1 <= msg.sender <= i_count and msg.receiver == SERVER):
                problems.append(f"{where}: bad routing")
            scalars = 0
            for col, ratios in msg.payload:
                if not _int_columns_ok([col], n):
                    problems.append(f"{where}: bad column id")
                if not _ratio_values_ok(ratios):
                    problems.append(f"{where}: ratios must be finite nonnegative floats")
                scalars += 1 + len(ratios)
            if msg.scalar_count != scalars:
                problems.append(f"{where}: scalar count mismatch")
        elif msg.kind == KIND_AMPLITUDES:
            if not (msg.sender == SERVER and 1 <= msg.receiver <= i_count):
                problems.append(f"{where}: bad routing")
            for col, amp in msg.payload:
                if not _int_columns_ok([col], n):
                    problems.append(f"{where}: bad column id")
                if not (isinstance(amp, (float, np.floating)) and amp >= 0.0):
                    problems.append(f"{where}: amplitudes must be nonnegative floats")
            if msg.scalar_count != 2 * len(msg.payload):
                problems.append(f"{where}: scalar count mismatch")
    # Totals must agree with the log.
    recount = {kind: {"messages": 0, "scalars": 0} for kind in KINDS}
    for msg in trace.messages:
        if msg.kind in recount:
            recount[msg.kind]["messages"] += 1
            recount[msg.kind]["scalars"] += msg.scalar_count
    if recount != trace.totals():
        problems.append("trace totals disagree with the message log")
    return problems


def _payload_summary(msg: Message):
    if msg.kind == KIND_SCORES:
        return {"length": len(msg.payload)}
    if msg.kind == KIND_SUPPORT_ASSIGN:
        return {"assigned": len(msg.payload[0]), "context": len(msg.payload[1])}
    if msg.kind == KIND_RATIOS:
        return {"bundles": len(msg.payload),
                "ratios": sum(len(r) for _, r in msg.payload)}
    return {"pairs": len(msg.payload)}


def trace_to_jsonl(trace: NetworkTrace, stream: IO[str],
                   full_payload: bool = False) -> None:
    """One JSON object per message; payload bodies elided unless requested."""
    for msg in trace.messages:
        doc = {"kind": msg.kind, "sender": msg.sender, "receiver": msg.receiver,
               "scalar_count": msg.scalar_count}
        if full_payload:
            doc["payload"] = json.loads(json.dumps(msg.payload))
        else:
            doc["payload"] = _payload_summary(msg)
        stream.write(json.dumps(doc) + "\n")
