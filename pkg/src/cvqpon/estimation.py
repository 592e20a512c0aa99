"""Prepare-and-measure Monte Carlo, parameter estimation and correlation analysis."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from statistics import NormalDist

import numpy as np

from . import keyrate as kr
from . import network as nw
from .network import NetworkParams

DEFAULT_Z = 6.5
DEFAULT_DELTA = 1e-10
MIN_SAMPLES = 1000


class EstimationError(ValueError):
    pass


def z_from_delta(delta: float) -> float:
    """Two-sided Gaussian quantile for failure probability ``delta``."""
    return NormalDist().inv_cdf(1 - delta / 2)


@dataclass
class SampleBatch:
    """Alice's symbols and every user's heterodyne outcomes (SNU), one row per round.

    ``meas_x`` and ``meas_p`` have shape (n_users, M).
    """

    alice_x: np.ndarray
    alice_p: np.ndarray
    meas_x: np.ndarray
    meas_p: np.ndarray
    rng_seed: int
    ground_truth: NetworkParams | None = None

    def __post_init__(self):
        m = len(self.alice_x)
        self.meas_x = np.atleast_2d(self.meas_x)
        self.meas_p = np.atleast_2d(self.meas_p)
        if len(self.alice_p) != m or self.meas_x.shape[1] != m or self.meas_p.shape != self.meas_x.shape:
            raise EstimationError("all sample arrays must have the same length")
        for a in (self.alice_x, self.alice_p, self.meas_x, self.meas_p):
            if not np.all(np.isfinite(a)):
                raise EstimationError("samples contain non-finite values")

    @property
    def n_rounds(self) -> int:
        return len(self.alice_x)

    @property
    def n_users(self) -> int:
        return self.meas_x.shape[0]

    def columns(self) -> np.ndarray:
        """(M, 2 + 2N) array: alice_x, alice_p, then (meas_x, meas_p) per user."""
        cols = [self.alice_x, self.alice_p]
        for l in range(self.n_users):
            cols += [self.meas_x[l], self.meas_p[l]]
        return np.column_stack(cols)

    def header(self) -> list[str]:
        h = ["alice_x[SNU]", "alice_p[SNU]"]
        for l in range(self.n_users):
            h += [f"bob{l + 1}_x[SNU]", f"bob{l + 1}_p[SNU]"]
        return h

    def to_csv(self, path) -> None:
        np.savetxt(path, self.columns(), delimiter=",", header=f"seed={self.rng_seed}\n" + ",".join(self.header()),
                   comments="# ", fmt="%.17g")

    def to_binary(self, path) -> None:
        """Raw little-endian float64, row-major, same column order as the CSV."""
        self.columns().astype("<f8").tofile(path)

    @classmethod
    def from_columns(cls, data: np.ndarray, rng_seed: int = 0) -> "SampleBatch":
        if data.ndim != 2 or data.shape[1] < 4 or data.shape[1] % 2:
            raise EstimationError(f"expected 2 + 2N columns, got shape {data.shape}")
        return cls(data[:, 0].copy(), data[:, 1].copy(), data[:, 2::2].T.copy(), data[:, 3::2].T.copy(), rng_seed)

    @classmethod
    def from_csv(cls, path) -> "SampleBatch":
        first = Path(path).open().readline()
        seed = int(first.split("seed=")[1]) if "seed=" in first else 0
        return cls.from_columns(np.loadtxt(path, delimiter=",", ndmin=2), seed)

    @classmethod
    def from_binary(cls, path, n_users: int, rng_seed: int = 0) -> "SampleBatch":
        raw = np.fromfile(path, dtype="<f8")
        return cls.from_columns(raw.reshape(-1, 2 + 2 * n_users), rng_seed)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def simulate_channel(params: NetworkParams, m: int, seed: int) -> SampleBatch:
    """Draw M rounds of the broadcast protocol.

    Alice's stream is (seed, 0); user l's noise stream is (seed, l + 1).
    """
    if m < 1:
        raise EstimationError("need at least one round")
    a = _rng(seed, 0)
    sd = math.sqrt(params.v_mod)
    alice_x = sd * a.standard_normal(m)
    alice_p = sd * a.standard_normal(m)
    signs = nw.splitter_signs(params)
    n = params.n_users
    meas_x = np.empty((n, m))
    meas_p = np.empty((n, m))
    for l in range(n):
        tau, nu = params.tau[l], params.nu[l]
        gain = signs[l] * math.sqrt(params.eta[l] * tau / 2)
        noise_sd = math.sqrt(1 + nu + tau / 2 * params.eps[l])
        r = _rng(seed, l + 1)
        meas_x[l] = gain * alice_x + noise_sd * r.standard_normal(m)
        meas_p[l] = gain * alice_p + noise_sd * r.standard_normal(m)
    return SampleBatch(alice_x, alice_p, meas_x, meas_p, seed, params)


@dataclass(frozen=True)
class EstimateWithCI:
    point: float
    lower: float
    upper: float
    z: float = DEFAULT_Z
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        for name in ("point", "lower", "upper", "z", "delta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.lower <= self.point <= self.upper:
            raise EstimationError(f"interval [{self.lower}, {self.upper}] does not contain {self.point}")

    def contains(self, value: float) -> bool:
        return bool(self.lower <= value <= self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class ChannelEstimate:
    eta: EstimateWithCI
    eps: EstimateWithCI
    gain: float
    residual_variance: float


def _pooled(alice, meas):
    a = np.concatenate([np.ravel(x) for x in alice]) if isinstance(alice, (tuple, list)) else np.ravel(alice)
    b = np.concatenate([np.ravel(x) for x in meas]) if isinstance(meas, (tuple, list)) else np.ravel(meas)
    if a.shape != b.shape:
        raise EstimationError("alice and measurement arrays differ in length")
    return a, b


def estimate_parameters(alice, meas, tau: float, nu: float, z: float = DEFAULT_Z,
                        delta: float | None = None) -> ChannelEstimate:
    """Method-of-moments estimates of total transmittance and output excess noise.

    ``alice`` and ``meas`` may be single arrays or (x, p) pairs which are pooled.
    The interval half-widths are ``z`` standard errors; passing ``delta`` sets
    ``z`` from the two-sided Gaussian quantile instead.
    """
    a, b = _pooled(alice, meas)
    m = len(a)
    if m < MIN_SAMPLES:
        raise EstimationError(f"need at least {MIN_SAMPLES} samples for the confidence interval, got {m}")
    if delta is not None:
        z = z_from_delta(delta)
    var_a = float(np.mean(a * a))
    if var_a <= 0:
        raise EstimationError("Alice's symbols have zero variance")
    g = float(np.mean(a * b)) / var_a
    resid = b - g * a
    s2 = float(np.mean(resid * resid))
    se_g = math.sqrt(s2 / (m * var_a))
    se_s2 = s2 * math.sqrt(2.0 / m)

    eta = 2 * g * g / tau
    g_lo = max(0.0, abs(g) - z * se_g)
    g_hi = abs(g) + z * se_g
    eta_ci = EstimateWithCI(eta, 2 * g_lo**2 / tau, 2 * g_hi**2 / tau, z, delta or DEFAULT_DELTA)

    eps = (s2 - 1 - nu) * 2 / tau
    half = z * se_s2 * 2 / tau
    eps_ci = EstimateWithCI(eps, eps - half, eps + half, z, delta or DEFAULT_DELTA)
    return ChannelEstimate(eta_ci, eps_ci, g, s2)


def scaling_factor(meas, alice) -> float:
    a, b = _pooled(alice, meas)
    a = a - a.mean()
    va = float(np.dot(a, a))
    if va <= 0:
        raise EstimationError("Alice's symbols have zero variance")
    return float(np.dot(a, b - b.mean()) / va)


def infer_noise(meas, alice) -> np.ndarray:
    """Residual noise xi = meas - g * alice with g = Cov(meas, alice) / Var(alice)."""
    meas = np.asarray(meas, dtype=float)
    alice = np.asarray(alice, dtype=float)
    if meas.shape != alice.shape:
        raise EstimationError("alice and measurement arrays differ in length")
    return meas - scaling_factor(meas, alice) * alice


def empirical_mi(x, y) -> float:
    """Gaussian MI estimate -1/2 log2(1 - rho^2); ``inf`` when the samples are collinear."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise EstimationError("arrays differ in length")
    if len(x) < MIN_SAMPLES:
        raise EstimationError(f"need at least {MIN_SAMPLES} samples, got {len(x)}")
    x = x - x.mean()
    y = y - y.mean()
    sx, sy = float(np.dot(x, x)), float(np.dot(y, y))
    if sx <= 0 or sy <= 0:
        raise EstimationError("degenerate variance")
    rho2 = float(np.dot(x, y)) ** 2 / (sx * sy)
    if rho2 >= 1 - 1e-14:
        return math.inf
    return -0.5 * math.log2(1 - rho2)


def correlation(x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    x = x - x.mean()
    y = y - y.mean()
    return float(np.dot(x, y) / math.sqrt(np.dot(x, x) * np.dot(y, y)))


@dataclass(frozen=True)
class KeyInterval:
    key_low: float
    key_point: float
    key_high: float


def worst_case_key(
    params: NetworkParams,
    estimate: ChannelEstimate,
    user: int,
    beta: float,
    partition: kr.TrustPartition | None = None,
) -> KeyInterval:
    """Key of ``user`` at the pessimistic, point and optimistic ends of its CIs.

    Excess-noise bounds below zero are clamped to zero, and transmittance
    bounds to just below the splitter's share for this user (the largest value
    a passive network allows).
    """
    partition = partition or kr.TrustPartition(user)
    eta_max = params.link.eta_a * params.link.fractions[user] * (1 - 1e-9)

    def at(eta, eps):
        if eta <= 0:
            return 0.0
        p = params.with_user(user, eta=min(eta, eta_max), eps=max(eps, 0.0))
        return kr.key_rate(p, user, partition, beta)

    e, x = estimate.eta, estimate.eps
    return KeyInterval(at(e.lower, x.upper), at(e.point, x.point), at(e.upper, x.lower))


@dataclass
class CorrelationAnalysis:
    """MI of reference user's data with Alice, with other users and between inferred noises."""

    reference_user: int
    mi_alice: float
    mi_users: np.ndarray
    mi_noises: np.ndarray


def correlation_analysis(batch: SampleBatch, reference_user: int = 0) -> CorrelationAnalysis:
    r = reference_user
    ref = np.concatenate([batch.meas_x[r], batch.meas_p[r]])
    alice = np.concatenate([batch.alice_x, batch.alice_p])
    xi = [np.concatenate([infer_noise(batch.meas_x[l], batch.alice_x),
                          infer_noise(batch.meas_p[l], batch.alice_p)]) for l in range(batch.n_users)]
    mi_users = np.full(batch.n_users, np.nan)
    mi_noise = np.full(batch.n_users, np.nan)
    for l in range(batch.n_users):
        if l == r:
            continue
        other = np.concatenate([batch.meas_x[l], batch.meas_p[l]])
        mi_users[l] = empirical_mi(ref, other)
        mi_noise[l] = empirical_mi(xi[r], xi[l])
    return CorrelationAnalysis(r, empirical_mi(ref, alice), mi_users, mi_noise)
