"""Covariance matrix of the entanglement-based 1:N broadcast network.

The assembly is operational: every stage is a beamsplitter acting on labelled
modes. Closed forms for the same matrices are provided separately so the two
routes can be checked against each other.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import gaussian as gs
from .gaussian import CovarianceMatrix, ModeLabel, Owner

TAU_CAP = 1.0 - 1e-9


class NetworkParamsError(ValueError):
    pass


def _as_tuple(values, n: int, name: str) -> tuple[float, ...]:
    if np.ndim(values) == 0:
        return (float(values),) * n
    out = tuple(float(v) for v in values)
    if len(out) != n:
        raise NetworkParamsError(f"{name} has {len(out)} entries, expected {n}")
    return out


@dataclass(frozen=True)
class SourceParams:
    """Alice's Gaussian modulation; ``v_mod`` is the per-quadrature variance in SNU."""

    v_mod: float

    def __post_init__(self):
        if not (np.isfinite(self.v_mod) and self.v_mod >= 0):
            raise NetworkParamsError(f"modulation variance must be >= 0, got {self.v_mod}")

    @property
    def variance(self) -> float:
        return self.v_mod + 1.0


@dataclass(frozen=True)
class LinkParams:
    """Feeder segment (eta_a, eps_a), the splitter and per-user drop segments.

    ``split`` holds the splitter's power fractions (equal split when omitted).
    Excess noises are referenced at the output of their own segment.
    """

    eta_a: float
    eps_a: float
    eta_b: tuple[float, ...]
    eps_b: tuple[float, ...]
    split: tuple[float, ...] | None = None

    def __post_init__(self):
        n = len(self.eta_b)
        object.__setattr__(self, "eta_b", _as_tuple(self.eta_b, n, "eta_b"))
        object.__setattr__(self, "eps_b", _as_tuple(self.eps_b, n, "eps_b"))
        if n < 1:
            raise NetworkParamsError("at least one user is required")
        if not 0 < self.eta_a <= 1:
            raise NetworkParamsError(f"eta_a must be in (0, 1], got {self.eta_a}")
        if self.eps_a < 0:
            raise NetworkParamsError(f"eps_a must be >= 0, got {self.eps_a}")
        if self.eps_a > 0 and self.eta_a >= 1:
            raise NetworkParamsError("excess noise on a lossless feeder cannot be injected (eta_a = 1)")
        for l, (e, x) in enumerate(zip(self.eta_b, self.eps_b)):
            if not 0 < e <= 1:
                raise NetworkParamsError(f"eta_b[{l}] must be in (0, 1], got {e}")
            if x < 0:
                raise NetworkParamsError(f"eps_b[{l}] must be >= 0, got {x}")
            if x > 0 and e >= 1:
                raise NetworkParamsError(f"eps_b[{l}] > 0 on a lossless drop link (eta_b = 1)")
        if self.split is not None:
            w = _as_tuple(self.split, n, "split")
            if any(v <= 0 for v in w) or abs(sum(w) - 1) > 1e-12:
                raise NetworkParamsError("split fractions must be positive and sum to 1")
            object.__setattr__(self, "split", w)

    @property
    def n_users(self) -> int:
        return len(self.eta_b)

    @property
    def fractions(self) -> np.ndarray:
        if self.split is None:
            return np.full(self.n_users, 1.0 / self.n_users)
        return np.array(self.split)

    @property
    def equal_split(self) -> bool:
        return self.split is None or np.allclose(self.split, 1.0 / self.n_users, rtol=0, atol=1e-15)

    def total_transmittance(self) -> np.ndarray:
        return self.eta_a * np.array(self.eta_b) * self.fractions

    def total_excess_noise(self) -> np.ndarray:
        return self.eps_a * np.array(self.eta_b) * self.fractions + np.array(self.eps_b)


@dataclass(frozen=True)
class DetectorParams:
    """Trusted detector: efficiency tau and electronic noise nu (SNU) per user."""

    tau: tuple[float, ...]
    nu: tuple[float, ...]

    def __post_init__(self):
        n = len(self.tau)
        object.__setattr__(self, "tau", _as_tuple(self.tau, n, "tau"))
        object.__setattr__(self, "nu", _as_tuple(self.nu, n, "nu"))
        for l, (t, v) in enumerate(zip(self.tau, self.nu)):
            if not 0 < t <= 1:
                raise NetworkParamsError(f"tau[{l}] must be in (0, 1], got {t}")
            if v < 0:
                raise NetworkParamsError(f"nu[{l}] must be >= 0, got {v}")

    @property
    def effective_tau(self) -> np.ndarray:
        return np.minimum(np.array(self.tau), TAU_CAP)

    @property
    def purifier_variance(self) -> np.ndarray:
        t = self.effective_tau
        return 1.0 + np.array(self.nu) / (1.0 - t)


@dataclass(frozen=True)
class NetworkParams:
    source: SourceParams
    link: LinkParams
    detectors: DetectorParams
    topology: str = "auto"

    def __post_init__(self):
        if len(self.detectors.tau) != self.link.n_users:
            raise NetworkParamsError(
                f"{len(self.detectors.tau)} detectors for {self.link.n_users} users"
            )
        if self.topology not in ("auto", "tree", "sequential"):
            raise NetworkParamsError(f"unknown splitter topology {self.topology!r}")
        if self.topology == "tree" and not self.link.equal_split:
            raise NetworkParamsError("tree splitter supports equal splitting only")
        if self.link.eps_a > 0:
            warnings.warn(
                "eps_a > 0: noise before the splitter is correlated across users; "
                "this regime is outside the independent-channel analysis",
                stacklevel=3,
            )

    @property
    def n_users(self) -> int:
        return self.link.n_users

    @property
    def v_mod(self) -> float:
        return self.source.v_mod

    @cached_property
    def eta(self) -> np.ndarray:
        """Total transmittance eta_l = eta_a * eta_b[l] * w_l."""
        return self.link.total_transmittance()

    @cached_property
    def eps(self) -> np.ndarray:
        """Total excess noise at user l's channel output."""
        return self.link.total_excess_noise()

    @property
    def tau(self) -> np.ndarray:
        return self.detectors.effective_tau

    @property
    def nu(self) -> np.ndarray:
        return np.array(self.detectors.nu)

    @property
    def resolved_topology(self) -> str:
        if self.topology != "auto":
            return self.topology
        n = self.n_users
        return "tree" if self.link.equal_split and n & (n - 1) == 0 else "sequential"

    def is_symmetric(self) -> bool:
        return all(
            np.allclose(a, a[0], rtol=1e-12, atol=0)
            for a in (np.array(self.link.eta_b), np.array(self.link.eps_b), self.tau, self.nu)
        ) and self.link.equal_split

    @classmethod
    def symmetric(
        cls,
        n_users: int,
        v_mod: float,
        eta_ab: float,
        eps: float,
        tau: float,
        nu: float,
        topology: str = "auto",
    ) -> "NetworkParams":
        """Identical drop links; ``eta_ab`` is the feeder x drop transmittance before 1/N."""
        if n_users < 1:
            raise NetworkParamsError("at least one user is required")
        return cls(
            SourceParams(v_mod),
            LinkParams(1.0, 0.0, (eta_ab,) * n_users, (eps,) * n_users),
            DetectorParams((tau,) * n_users, (nu,) * n_users),
            topology,
        )

    @classmethod
    def from_user_totals(cls, n_users, v_mod, eta, eps, tau, nu, topology="auto") -> "NetworkParams":
        """Build from total per-user transmittances (splitter included) and output noises."""
        eta = _as_tuple(eta, n_users, "eta")
        eta_b = tuple(e * n_users for e in eta)
        return cls(
            SourceParams(v_mod),
            LinkParams(1.0, 0.0, eta_b, _as_tuple(eps, n_users, "eps")),
            DetectorParams(_as_tuple(tau, n_users, "tau"), _as_tuple(nu, n_users, "nu")),
            topology,
        )

    def with_source(self, v_mod: float) -> "NetworkParams":
        return replace(self, source=SourceParams(v_mod))

    def with_user(self, l: int, eta: float | None = None, eps: float | None = None) -> "NetworkParams":
        """Copy with user ``l``'s total transmittance and/or output noise replaced."""
        eta_b = list(self.link.eta_b)
        eps_b = list(self.link.eps_b)
        if eta is not None:
            eta_b[l] = eta / (self.link.eta_a * self.link.fractions[l])
        if eps is not None:
            eps_b[l] = eps - self.link.eps_a * eta_b[l] * self.link.fractions[l]
        return replace(self, link=replace(self.link, eta_b=tuple(eta_b), eps_b=tuple(eps_b)))


# --- splitter -------------------------------------------------------------------


def _splitter_plan(params: NetworkParams):
    """Yield (kept_users, branched_users, transmittance) for each beamsplitter."""
    w = params.link.fractions
    n = params.n_users
    if params.resolved_topology == "sequential":
        remaining = list(range(n))
        while len(remaining) > 1:
            head, rest = remaining[:1], remaining[1:]
            yield head, rest, float(w[head].sum() / w[remaining].sum())
            remaining = rest
    else:
        stack = [list(range(n))]
        while stack:
            group = stack.pop(0)
            if len(group) == 1:
                continue
            half = len(group) // 2
            first, second = group[:half], group[half:]
            yield first, second, float(w[first].sum() / w[group].sum())
            stack.extend([first, second])


def splitter_signs(params: NetworkParams) -> np.ndarray:
    """Sign of the signal amplitude reaching each user through the splitter."""
    amp = {tuple(range(params.n_users)): 1.0}
    owner = {u: tuple(range(params.n_users)) for u in range(params.n_users)}
    for kept, branched, t in _splitter_plan(params):
        parent = owner[kept[0]]
        a = amp.pop(parent)
        amp[tuple(kept)] = math.sqrt(t) * a
        amp[tuple(branched)] = -math.sqrt(1 - t) * a
        for u in kept:
            owner[u] = tuple(kept)
        for u in branched:
            owner[u] = tuple(branched)
    return np.array([np.sign(amp[owner[u]]) for u in range(params.n_users)])


# --- operational assembly -----------------------------------------------------------


def build_signal_stage(source: SourceParams) -> CovarianceMatrix:
    """Alice's TMSV with her heterodyne arms (A_x, A_p) kept unmeasured, plus the signal mode."""
    a0 = gs.vacuum_label(0)
    vac = gs.vacuum_label(1)
    state = gs.tensor(gs.vacuum(vac), gs.tmsv(source.variance, (a0, gs.SIGNAL)))
    state = gs.beamsplitter(state, vac, a0, 0.5)
    state = gs.relabel(state, {vac: gs.alice("x"), a0: gs.alice("p")})
    return gs.reorder(state, [gs.alice("x"), gs.alice("p"), gs.SIGNAL])


class _EveCounter:
    def __init__(self):
        self.k = 0

    def take(self) -> ModeLabel:
        lab = gs.eve(self.k)
        self.k += 1
        return lab


def _lossy_channel(state, mode, eta, eps, counter: _EveCounter):
    """Thermal-loss channel adding ``eps`` SNU at its output."""
    if eta >= 1.0:
        return state
    e1 = counter.take()
    if eps > 0:
        e2 = counter.take()
        state = gs.tensor(state, gs.tmsv(1.0 + eps / (1.0 - eta), (e1, e2)))
    else:
        state = gs.tensor(state, gs.vacuum(e1))
    return gs.beamsplitter(state, mode, e1, eta)


def build_broadcast_state(params: NetworkParams, keep_eve: bool = False) -> CovarianceMatrix:
    """State of Alice's arms and the N channel outputs B_1..B_N (gamma_AB').

    With ``keep_eve`` the channel ancillas are kept and the whole state is pure.
    """
    counter = _EveCounter()
    state = build_signal_stage(params.source)
    state = _lossy_channel(state, gs.SIGNAL, params.link.eta_a, params.link.eps_a, counter)

    holder = {tuple(range(params.n_users)): gs.SIGNAL}
    vac_k = 0
    for kept, branched, t in _splitter_plan(params):
        src = holder.pop(tuple(kept + branched))
        port = gs.vacuum_label(100 + vac_k)
        vac_k += 1
        state = gs.beamsplitter(gs.tensor(state, gs.vacuum(port)), src, port, t)
        holder[tuple(kept)] = src
        holder[tuple(branched)] = port
    state = gs.relabel(state, {mode: gs.user(users[0]) for users, mode in holder.items()})

    for l in range(params.n_users):
        state = _lossy_channel(state, gs.user(l), params.link.eta_b[l], params.link.eps_b[l], counter)

    order = [gs.alice("x"), gs.alice("p")] + [gs.user(l) for l in range(params.n_users)]
    if keep_eve:
        order += [lab for lab in state.labels if lab.owner is Owner.EVE]
    return gs.restrict(state, order)


def _user_block_labels(l: int) -> list[ModeLabel]:
    return [
        gs.user(l, "x"), gs.detector(l, "x"), gs.purifier(l, "x"),
        gs.user(l, "p"), gs.detector(l, "p"), gs.purifier(l, "p"),
    ]


def attach_trusted_detectors(state: CovarianceMatrix, detectors: DetectorParams) -> CovarianceMatrix:
    """Heterodyne front-end of every user mode B_l present in ``state`` (gamma_AB'').

    B_l is split into arms B_l^x, B_l^p; each arm passes a beamsplitter of
    transmittance tau coupled to one mode of a TMSV(V_D) whose partner is F.
    """
    users = [lab.user for lab in state.labels if lab.owner is Owner.USER and lab.arm is None]
    if users and max(users) >= len(detectors.tau):
        raise NetworkParamsError(
            f"state has user {max(users) + 1} but only {len(detectors.tau)} detectors given"
        )
    taus = detectors.effective_tau
    vds = detectors.purifier_variance
    others = [lab for lab in state.labels if not (lab.owner is Owner.USER and lab.arm is None)]
    for l in users:
        bx, bp = gs.user(l, "x"), gs.user(l, "p")
        state = gs.relabel(state, {gs.user(l): bx})
        state = gs.tensor(
            state,
            gs.vacuum(bp),
            gs.tmsv(vds[l], (gs.detector(l, "x"), gs.purifier(l, "x"))),
            gs.tmsv(vds[l], (gs.detector(l, "p"), gs.purifier(l, "p"))),
        )
        state = gs.beamsplitter(state, bx, bp, 0.5)
        state = gs.beamsplitter(state, bx, gs.detector(l, "x"), taus[l])
        state = gs.beamsplitter(state, bp, gs.detector(l, "p"), taus[l])
    order = others + [lab for l in users for lab in _user_block_labels(l)]
    return gs.restrict(state, order)


def assemble(params: NetworkParams, keep_eve: bool = False) -> CovarianceMatrix:
    """Full gamma_AB'' with 2 + 6N modes (plus channel ancillas with ``keep_eve``)."""
    return attach_trusted_detectors(build_broadcast_state(params, keep_eve), params.detectors)


# --- closed forms -------------------------------------------------------------------


def user_arm_variance(params: NetworkParams, l: int) -> float:
    """V_{B_l^x}: quadrature variance seen by user l's homodyne arm."""
    v = params.source.variance
    return 1.0 + ((v - 1) * params.eta[l] + params.eps[l]) * params.tau[l] / 2 + params.nu[l]


def _pre_splitter_noise_cov(params: NetworkParams, i: int, j: int) -> float:
    lk = params.link
    w = lk.fractions
    return lk.eps_a * math.sqrt(lk.eta_b[i] * w[i] * lk.eta_b[j] * w[j])


def cross_user_correlation(params: NetworkParams, i: int, j: int) -> float:
    """C^x_{i,j}: covariance of the x arms of users i and j (signed by the splitter)."""
    n = params.n_users
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"user index out of range for {n} users")
    if i == j:
        raise ValueError("cross correlation needs two distinct users")
    s = splitter_signs(params)
    v = params.source.variance
    tau_ij = math.sqrt(params.tau[i] * params.tau[j])
    mag = (v - 1) * math.sqrt(params.eta[i] * params.eta[j]) + _pre_splitter_noise_cov(params, i, j)
    return float(s[i] * s[j] * tau_ij / 2 * mag)


def closed_form_broadcast(params: NetworkParams) -> np.ndarray:
    """gamma_AB' over (A_x, A_p, B_1..B_N) written out entry by entry."""
    n = params.n_users
    v = params.source.variance
    s = splitter_signs(params)
    eta, eps = params.eta, params.eps
    eye = np.eye(2)
    sz = np.diag([1.0, -1.0])
    g = np.zeros((2 * (n + 2), 2 * (n + 2)))
    g[0:4, 0:4] = 0.5 * np.block([[(v + 1) * eye, (v - 1) * eye], [(v - 1) * eye, (v + 1) * eye]])
    for l in range(n):
        k = 4 + 2 * l
        ab = s[l] * math.sqrt(eta[l] * (v * v - 1) / 2) * sz
        for a in (0, 2):
            g[a : a + 2, k : k + 2] = ab
            g[k : k + 2, a : a + 2] = ab.T
        g[k : k + 2, k : k + 2] = (1 + (v - 1) * eta[l] + eps[l]) * eye
        for m in range(n):
            if m != l:
                km = 4 + 2 * m
                c = (v - 1) * math.sqrt(eta[l] * eta[m]) + _pre_splitter_noise_cov(params, l, m)
                g[k : k + 2, km : km + 2] = s[l] * s[m] * c * eye
    return g


def closed_form_user_block(params: NetworkParams, l: int) -> np.ndarray:
    """3-mode block (B_l^x, D_l^x, F_l^x) after the trusted detector stage."""
    v = params.source.variance
    tau, nu = params.tau[l], params.nu[l]
    eta, eps = params.eta[l], params.eps[l]
    vd = 1 + nu / (1 - tau)
    eye = np.eye(2)
    sz = np.diag([1.0, -1.0])
    vb = user_arm_variance(params, l)
    bd = tau * (2 * nu - (1 - tau) * (eps + (v - 1) * eta)) / (2 * math.sqrt(tau * (1 - tau)))
    bf = math.sqrt((nu**2 + 2 * nu * (1 - tau)) / (1 - tau))
    dd = (1 - tau) / 2 * (2 + eps + (v - 1) * eta) + tau * vd
    df = math.sqrt(tau * nu * (nu + 2 * (1 - tau)) / (1 - tau) ** 2)
    return np.block(
        [
            [vb * eye, bd * eye, bf * sz],
            [bd * eye, dd * eye, df * sz],
            [bf * sz, df * sz, vd * eye],
        ]
    )
