"""Scenario synthesis for a multi-view phaseless sensing network.

Builds reproducible random scenarios: a sparse global signal, per-device
binary view masks, sparse Bernoulli sensing matrices, sparse outliers, and
the magnitude-squared measurements. Everything is driven by an explicit
numpy Generator so identical (config, seed) pairs give bit-identical data.

Column indices are 0-based throughout; device ids are 1-based (node id 0 is
reserved for the server in the network layer).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidConfigError

CONFIG_FIELDS = (
    "n", "k", "i_count", "b_count", "m_per_device",
    "q", "theta", "p_outlier", "sigma_w", "seed",
)


def sigma_from_nsr_db(nsr_db: float) -> float:
    """Outlier standard deviation for a noise-to-signal ratio in dB (unit signal power)."""
    return float(np.sqrt(10.0 ** (nsr_db / 10.0)))


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs for one synthesized sensor-network scenario."""

    n: int
    k: int
    i_count: int
    b_count: int
    m_per_device: int
    q: float
    theta: float
    p_outlier: float
    sigma_w: float
    seed: int

    def validate(self) -> None:
        if self.n <= 0:
            raise InvalidConfigError(f"ambient dimension must be positive, got n={self.n}")
        if not 2 <= self.k < self.n:
            raise InvalidConfigError(f"need 2 <= k < n, got k={self.k}, n={self.n}")
        if self.i_count <= 0:
            raise InvalidConfigError(f"device count must be positive, got {self.i_count}")
        if not 1 <= self.b_count <= self.i_count:
            raise InvalidConfigError(
                f"need 1 <= b_count <= i_count, got b_count={self.b_count}, i_count={self.i_count}")
        if self.m_per_device <= 0:
            raise InvalidConfigError(f"m_per_device must be positive, got {self.m_per_device}")
        if not 0.0 < self.q < 1.0:
            raise InvalidConfigError(f"q must be in (0,1), got {self.q}")
        for name in ("theta", "p_outlier"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidConfigError(f"{name} must be in [0,1], got {v}")
        if self.sigma_w < 0.0:
            raise InvalidConfigError(f"sigma_w must be nonnegative, got {self.sigma_w}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise InvalidConfigError(f"seed must be a nonnegative integer, got {self.seed!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @staticmethod
    def from_dict(doc: Mapping) -> "ScenarioConfig":
        missing = [f for f in CONFIG_FIELDS if f not in doc]
        extra = [f for f in doc if f not in CONFIG_FIELDS]
        if missing or extra:
            raise InvalidConfigError(
                f"config must carry exactly the fields {CONFIG_FIELDS}; "
                f"missing={missing}, unknown={extra}")
        cfg = ScenarioConfig(
            n=int(doc["n"]), k=int(doc["k"]), i_count=int(doc["i_count"]),
            b_count=int(doc["b_count"]), m_per_device=int(doc["m_per_device"]),
            q=float(doc["q"]), theta=float(doc["theta"]),
            p_outlier=float(doc["p_outlier"]), sigma_w=float(doc["sigma_w"]),
            seed=int(doc["seed"]),
        )
        cfg.validate()
        return cfg

    @staticmethod
    def from_json(text: str) -> "ScenarioConfig":
        return ScenarioConfig.from_dict(json.loads(text))


@dataclass(frozen=True)
class GlobalSignal:
    """A sparse global vector together with its support set."""

    n: int
    support: np.ndarray  # sorted 0-based column indices, length k
    values: np.ndarray   # length n, zero off support

    def __post_init__(self):
        object.__setattr__(self, "support", np.asarray(self.support, dtype=np.intp))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))


@dataclass(frozen=True)
class DeviceView:
    """One device's private view: mask, sensing matrix, outliers and measurements."""

    device_id: int
    mask: np.ndarray           # length n, entries in {0,1}
    phi: np.ndarray            # m_i x n sensing matrix
    outliers: np.ndarray       # length m_i, exact zeros where uncorrupted
    measurements: np.ndarray   # length m_i

    @cached_property
    def column_supports(self) -> tuple:
        """Per column: row indices with a nonzero entry (built on first use)."""
        return column_supports(self.phi)


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    signal: GlobalSignal
    views: tuple


def gen_global_signal(cfg: ScenarioConfig, rng: np.random.Generator) -> GlobalSignal:
    """Draw a k-sparse signal: uniform random support, standard normal nonzeros."""
    if cfg.k >= cfg.n:
        raise InvalidConfigError(f"need k < n, got k={cfg.k}, n={cfg.n}")
    if cfg.k < 0:
        raise InvalidConfigError(f"k must be nonnegative, got {cfg.k}")
    support = np.sort(rng.choice(cfg.n, size=cfg.k, replace=False))
    values = np.zeros(cfg.n)
    values[support] = rng.standard_normal(cfg.k)
    return GlobalSignal(n=cfg.n, support=support, values=values)


def gen_mask(signal: GlobalSignal, theta: float, rng: np.random.Generator) -> np.ndarray:
    """Draw one device's view mask.

    With probability 1-theta the device sees everything. Otherwise a blockage
    level is drawn uniformly from {1, ..., k-1} and that many support
    positions are zeroed; off-support mask bits stay 1 (they are unobservable
    either way, so masking them would change nothing).
    """
    k = len(signal.support)
    if theta > 0.0 and k < 2:
        raise ValueError(f"partial views need k >= 2 support entries, got k={k}")
    mask = np.ones(signal.n, dtype=np.int8)
    if rng.random() < theta:
        blocked = int(rng.integers(1, k))
        hit = rng.choice(signal.support, size=blocked, replace=False)
        mask[hit] = 0
    return mask


def _draw_bernoulli_matrix(m_i: int, n: int, q: float,
                           rng: np.random.Generator) -> np.ndarray:
    if m_i < 1:
        raise ValueError(f"need at least one row, got m_i={m_i}")
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0,1), got {q}")
    keep = rng.random((m_i, n)) < q
    values = rng.standard_normal((m_i, n))
    return np.where(keep, values, 0.0)


def gen_sensing_matrix(m_i: int, n: int, q: float,
                       rng: np.random.Generator) -> tuple[np.ndarray, tuple]:
    """Bernoulli sparse matrix: each entry nonzero w.p. q, nonzeros standard normal.

    Returns the matrix together with its per-column row supports.
    """
    phi = _draw_bernoulli_matrix(m_i, n, q, rng)
    return phi, column_supports(phi)


def column_supports(phi: np.ndarray) -> tuple:
    """Row-index support of every column of phi."""
    m, n = phi.shape
    rows, cols = np.nonzero(phi)
    order = np.argsort(cols, kind="stable")
    counts = np.bincount(cols, minlength=n)
    return tuple(np.split(rows[order], np.cumsum(counts)[:-1]))


def gen_outliers(m_i: int, p_outlier: float, sigma_w: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Sparse outlier vector: each entry corrupted independently w.p. p_outlier.

    Uncorrupted entries are stored as exact zeros so downstream zero tests
    stay exact in floating point.
    """
    if sigma_w < 0.0:
        raise ValueError(f"sigma_w must be nonnegative, got {sigma_w}")
    corrupted = rng.random(m_i) < p_outlier
    w = np.zeros(m_i)
    w[corrupted] = sigma_w * rng.standard_normal(int(corrupted.sum()))
    return w


def measure(signal: GlobalSignal, mask: np.ndarray, phi: np.ndarray,
            outliers: np.ndarray) -> np.ndarray:
    """Evaluate the phaseless measurement model y = |phi (mask . s)|^2 + w.

    Rows whose support misses the masked signal support come out as exactly
    w_m: all contributing products are exact zeros.
    """
    if phi.ndim != 2 or phi.shape[1] != signal.n or len(mask) != signal.n:
        raise ValueError("phi/mask dimensions inconsistent with the signal")
    if len(outliers) != phi.shape[0]:
        raise ValueError("outlier vector length must match the number of rows")
    masked = np.asarray(mask, dtype=np.float64) * signal.values
    z = phi @ masked
    return z * z + outliers


def make_device_view(device_id: int, signal: GlobalSignal, mask: np.ndarray,
                     phi: np.ndarray, outliers: np.ndarray) -> DeviceView:
    y = measure(signal, mask, phi, outliers)
    return DeviceView(device_id=device_id, mask=np.asarray(mask, dtype=np.int8),
                      phi=phi, outliers=outliers, measurements=y)


def split_measurements(m_total: int, i_count: int) -> list[int]:
    """Split a network-total measurement budget evenly, remainder to low device ids."""
    if m_total < i_count:
        raise InvalidConfigError(
            f"total measurement count {m_total} below device count {i_count}")
    base, rem = divmod(m_total, i_count)
    return [base + 1 if i < rem else base for i in range(i_count)]


def synthesize_scenario(cfg: ScenarioConfig,
                        m_sizes: Sequence[int] | None = None) -> Scenario:
    """Synthesize a full scenario from a validated config.

    m_sizes optionally overrides the per-device measurement counts (used when
    a network-total budget is split unevenly); defaults to cfg.m_per_device
    for every device.
    """
    cfg.validate()
    if m_sizes is None:
        m_sizes = [cfg.m_per_device] * cfg.i_count
    elif len(m_sizes) != cfg.i_count:
        raise InvalidConfigError("m_sizes must list one measurement count per device")
    rng = np.random.default_rng(cfg.seed)
    signal = gen_global_signal(cfg, rng)
    views = []
    for i in range(cfg.i_count):
        mask = gen_mask(signal, cfg.theta, rng)
        phi = _draw_bernoulli_matrix(int(m_sizes[i]), cfg.n, cfg.q, rng)
        w = gen_outliers(int(m_sizes[i]), cfg.p_outlier, cfg.sigma_w, rng)
        views.append(make_device_view(i + 1, signal, mask, phi, w))
    return Scenario(config=cfg, signal=signal, views=tuple(views))


def scenario_to_dict(scenario: Scenario) -> dict:
    """JSON-ready dict; sensing matrices stored as coordinate triplets."""
    views = []
    for v in scenario.views:
        rows, cols = np.nonzero(v.phi)
        views.append({
            "device_id": v.device_id,
            "mask": v.mask.tolist(),
            "phi": {
                "shape": list(v.phi.shape),
                "rows": rows.tolist(),
                "cols": cols.tolist(),
                "values": v.phi[rows, cols].tolist(),
            },
            "outliers": v.outliers.tolist(),
            "measurements": v.measurements.tolist(),
        })
    return {
        "config": scenario.config.to_dict(),
        "signal": {
            "n": scenario.signal.n,
            "support": scenario.signal.support.tolist(),
            "values": scenario.signal.values.tolist(),
        },
        "views": views,
    }


def scenario_from_dict(doc: Mapping) -> Scenario:
    cfg = ScenarioConfig.from_dict(doc["config"])
    sig = doc["signal"]
    signal = GlobalSignal(n=int(sig["n"]),
                          support=np.asarray(sig["support"], dtype=np.intp),
                          values=np.asarray(sig["values"], dtype=np.float64))
    views = []
    for v in doc["views"]:
        shape = tuple(v["phi"]["shape"])
        phi = np.zeros(shape)
        phi[v["phi"]["rows"], v["phi"]["cols"]] = v["phi"]["values"]
        views.append(DeviceView(
            device_id=int(v["device_id"]),
            mask=np.asarray(v["mask"], dtype=np.int8),
            phi=phi,
            outliers=np.asarray(v["outliers"], dtype=np.float64),
            measurements=np.asarray(v["measurements"], dtype=np.float64),
        ))
    return Scenario(config=cfg, signal=signal, views=tuple(views))


def with_seed(cfg: ScenarioConfig, seed: int) -> ScenarioConfig:
    return replace(cfg, seed=int(seed))
