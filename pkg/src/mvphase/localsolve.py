"""Stage 3: per-device reconstruction over the ternary alphabet {-1, 0, +1}.

With the global amplitudes known, a device's signal is pinned down by a
ternary vector combining its mask bits with the component signs. The exact
solver enumerates all 3^K candidates against a zero-counting objective; the
relaxed solver minimizes the L1 residual, either by the same enumeration
when K is small or by subgradient descent plus rounding when it is not.
Solutions are only ever determined up to a global sign flip.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import InfeasibleSizeError

K_MAX_EXHAUSTIVE = 14
_ENUM_CHUNK = 1 << 16


@dataclass(frozen=True)
class WeightedMatrix:
    """Support columns of a sensing matrix scaled by the recovered amplitudes."""

    matrix: np.ndarray      # m_i x k
    support_order: tuple    # column ids, ascending


@dataclass(frozen=True)
class TernarySolution:
    x: np.ndarray                    # entries in {-1, 0, +1}
    objective_l0: int | None = None
    objective_l1: float | None = None
    exact: bool = True

    def to_dict(self) -> dict:
        return {"x": self.x.astype(int).tolist(), "objective_l0": self.objective_l0,
                "objective_l1": self.objective_l1, "exact": self.exact}


@dataclass(frozen=True)
class SolveOptions:
    restarts: int = 24
    max_iters: int = 300
    step0: float = 0.8
    k_max_exhaustive: int = K_MAX_EXHAUSTIVE
    eps_zero: float | None = None
    seed: int = 0


def build_weighted_matrix(phi: np.ndarray, support_order: Sequence[int],
                          amplitudes: Mapping[int, float]) -> WeightedMatrix:
    """Select the support columns of phi and scale each by its amplitude."""
    order = tuple(int(n) for n in support_order)
    for n in order:
        if n not in amplitudes:
            raise KeyError(f"no amplitude for column {n}")
    scale = np.array([amplitudes[n] for n in order], dtype=np.float64)
    return WeightedMatrix(matrix=phi[:, list(order)] * scale, support_order=order)


def default_eps_zero(y: np.ndarray) -> float:
    """Zero-test tolerance for the counting objective, scaled to the data."""
    peak = float(np.max(np.abs(y))) if len(y) else 0.0
    return 1e-9 * (1.0 + peak)


def ternary_candidates(k: int) -> np.ndarray:
    """All 3^k ternary vectors in lexicographic order with -1 < 0 < +1."""
    return _candidate_block(0, 3 ** k, k)


def _candidate_block(start: int, stop: int, k: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    if k == 0:
        return np.zeros((len(idx), 0))
    powers = 3 ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] // powers) % 3 - 1).astype(np.float64)


def ternary_l1_objective(y: np.ndarray, matrix: np.ndarray, x: np.ndarray) -> float:
    """Canonical L1 residual; exact and heuristic paths share this evaluation."""
    z = matrix @ x
    return float(np.abs(y - z * z).sum())


def solve_l0_exhaustive(y: np.ndarray, wmat: WeightedMatrix,
                        eps_zero: float | None = None,
                        k_max: int = K_MAX_EXHAUSTIVE) -> TernarySolution:
    """Enumerate all ternary vectors and minimize the count of mismatched rows.

    A row counts as mismatched when |y - (Wx)^2| exceeds eps_zero. Ties go to
    the fewest nonzeros, then the lexicographically smallest vector; x and -x
    always tie, so the returned sign is a convention, not information.
    """
    k = wmat.matrix.shape[1]
    if k > k_max:
        raise InfeasibleSizeError(
            f"3^{k} enumeration exceeds the k<={k_max} bound; use solve_l1_projected")
    if eps_zero is None:
        eps_zero = default_eps_zero(y)
    total = 3 ** k
    best = None  # (objective, nnz, global_index, x)
    for start in range(0, total, _ENUM_CHUNK):
        block = _candidate_block(start, min(start + _ENUM_CHUNK, total), k)
        z = wmat.matrix @ block.T
        objs = (np.abs(y[:, None] - z * z) > eps_zero).sum(axis=0)
        nnz = np.count_nonzero(block, axis=1)
        pick = np.lexsort((np.arange(len(block)), nnz, objs))[0]
        key = (int(objs[pick]), int(nnz[pick]), start + int(pick))
        if best is None or key < best[:3]:
            best = key + (block[pick],)
    x = best[3].astype(np.int8)
    return TernarySolution(x=x, objective_l0=best[0], objective_l1=None, exact=True)


def solve_l1_projected(y: np.ndarray, wmat: WeightedMatrix,
                       opts: SolveOptions | None = None,
                       force_heuristic: bool = False) -> TernarySolution:
    """Minimize the L1 residual over ternary vectors.

    Small problems (k <= opts.k_max_exhaustive) are solved exactly by
    enumeration with the same tie-break as the counting solver. Larger ones
    run the two-stage heuristic: unconstrained subgradient descent on the L1
    residual from random restarts, then rounding each entry to the nearest of
    {-1, 0, +1} and keeping the best rounded candidate.
    """
    opts = opts or SolveOptions()
    k = wmat.matrix.shape[1]
    if k <= opts.k_max_exhaustive and not force_heuristic:
        return _solve_l1_exact(y, wmat)
    return _solve_l1_heuristic(y, wmat, opts)


def _solve_l1_exact(y: np.ndarray, wmat: WeightedMatrix) -> TernarySolution:
    k = wmat.matrix.shape[1]
    best = None  # (objective, nnz, index, x)
    for idx, x in enumerate(ternary_candidates(k)):
        obj = ternary_l1_objective(y, wmat.matrix, x)
        key = (obj, int(np.count_nonzero(x)), idx)
        if best is None or key < best[:3]:
            best = key + (x,)
    return TernarySolution(x=best[3].astype(np.int8), objective_l0=None,
                           objective_l1=best[0], exact=True)


def _round_ternary(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.5, 1.0, np.where(x < -0.5, -1.0, 0.0))


def _descend_l1(y: np.ndarray, matrix: np.ndarray, x0: np.ndarray,
                max_iters: int, step0: float) -> np.ndarray:
    x = x0.copy()
    for it in range(max_iters):
        z = matrix @ x
        r = y - z * z
        g = -2.0 * (matrix.T @ (np.sign(r) * z))
        norm = float(np.linalg.norm(g))
        if norm == 0.0:
            break
        x -= (step0 / math.sqrt(it + 1.0)) * (g / norm)
    return x


def _solve_l1_heuristic(y: np.ndarray, wmat: WeightedMatrix,
                        opts: SolveOptions) -> TernarySolution:
    k = wmat.matrix.shape[1]
    rng = np.random.default_rng(opts.seed)
    best = None  # (objective, nnz, x)
    for _ in range(max(opts.restarts, 1)):
        x0 = rng.uniform(-1.0, 1.0, size=k)
        x = _descend_l1(y, wmat.matrix, x0, opts.max_iters, opts.step0)
        cand = _round_ternary(x)
        obj = ternary_l1_objective(y, wmat.matrix, cand)
        key = (obj, int(np.count_nonzero(cand)))
        if best is None or key < best[:2]:
            best = key + (cand,)
    return TernarySolution(x=best[2].astype(np.int8), objective_l0=None,
                           objective_l1=best[0], exact=False)


def is_connected(phi: np.ndarray, support: Sequence[int]) -> bool:
    """Connectivity of the bipartite graph restricted to the support columns.

    Left nodes are the support columns, right nodes the rows hitting any of
    them; edges follow the nonzero pattern. A support column with no rows at
    all leaves the solver unconstrained, so it counts as disconnected.
    """
    cols = sorted(int(n) for n in support)
    if not cols:
        return True
    nz = phi != 0
    parent = {}

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(a, b):
        for node in (a, b):
            parent.setdefault(node, node)
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for j, n in enumerate(cols):
        rows = np.flatnonzero(nz[:, n])
        if rows.size == 0:
            return False
        for m in rows:
            union(("col", j), ("row", int(m)))
    roots = {find(("col", j)) for j in range(len(cols))}
    return len(roots) == 1


def assemble_local_signal(amplitudes: Mapping[int, float], ternary: TernarySolution,
                          support_order: Sequence[int], n: int) -> np.ndarray:
    """Expand a ternary solution back to a length-n signal estimate."""
    order = tuple(int(c) for c in support_order)
    if len(order) != len(ternary.x):
        raise ValueError("support order and solution length differ")
    out = np.zeros(n)
    for j, col in enumerate(order):
        out[col] = amplitudes[col] * float(ternary.x[j])
    return out


def canonical_sign(x: np.ndarray) -> np.ndarray:
    """Flip the global sign so the first nonzero entry is positive."""
    x = np.asarray(x)
    for v in x:
        if v != 0:
            return x if v > 0 else -x
    return x
