"""Time-sharing, untrusted broadcast and hierarchical-trust broadcast protocols."""

from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import keyrate as kr
from . import network as nw
from .network import NetworkParams


class Protocol(enum.Enum):
    TIME_SHARING = "time_sharing"
    UNTRUSTED = "untrusted"
    TRUSTED = "trusted"
    PLOB = "plob"


class Strategy(enum.Enum):
    ASCENDING = "ascending"
    DESCENDING = "descending"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class TrustOrdering:
    strategy: Strategy = Strategy.ASCENDING
    explicit: tuple[int, ...] | None = None

    def realize(self, untrusted_keys) -> tuple[int, ...]:
        keys = np.asarray(untrusted_keys, dtype=float)
        n = len(keys)
        if self.strategy is Strategy.EXPLICIT:
            order = tuple(int(u) for u in (self.explicit or ()))
            if sorted(order) != list(range(n)):
                raise ValueError(f"explicit order {order} is not a permutation of 0..{n - 1}")
            return order
        # Stable sort: ties keep index order in both directions.
        if self.strategy is Strategy.ASCENDING:
            return tuple(int(u) for u in np.argsort(keys, kind="stable"))
        return tuple(int(u) for u in np.argsort(-keys, kind="stable"))


@dataclass
class ProtocolResult:
    protocol: Protocol
    per_user: np.ndarray
    total: float
    betas: np.ndarray
    ordering: tuple[int, ...] | None = None
    holevo: np.ndarray | None = None
    i_ab: np.ndarray | None = None

    @property
    def n_positive(self) -> int:
        return int(np.sum(self.per_user > 0))


def _betas(params: NetworkParams, beta) -> np.ndarray:
    b = np.broadcast_to(np.asarray(beta, dtype=float), (params.n_users,)).copy()
    if np.any((b < 0) | (b > 1)):
        raise ValueError("reconciliation efficiencies must lie in [0, 1]")
    return b


def _run(params, partitions, betas, state) -> kr.KeyRateReport:
    return kr.evaluate(params, partitions, betas, state=state)


def untrusted_total(params: NetworkParams, beta=1.0, state=None) -> ProtocolResult:
    """Every user treats all other users as part of Eve."""
    b = _betas(params, beta)
    state = state if state is not None else nw.assemble(params)
    rep = _run(params, [kr.TrustPartition(l) for l in range(params.n_users)], b, state)
    keys = np.array([u.key_per_symbol for u in rep.users])
    return ProtocolResult(
        Protocol.UNTRUSTED, keys, float(keys.sum()), b,
        holevo=np.array([u.holevo for u in rep.users]),
        i_ab=np.array([u.i_ab for u in rep.users]),
    )


def trusted_total(
    params: NetworkParams,
    beta=1.0,
    ordering: TrustOrdering = TrustOrdering(),
    state=None,
    untrusted: ProtocolResult | None = None,
) -> ProtocolResult:
    """Hierarchical trust: each user trusts every user placed before it in the order."""
    b = _betas(params, beta)
    state = state if state is not None else nw.assemble(params)
    if ordering.strategy is Strategy.EXPLICIT:
        order = ordering.realize(np.zeros(params.n_users))
    else:
        if untrusted is None:
            untrusted = untrusted_total(params, b, state)
        order = ordering.realize(untrusted.per_user)
    parts = [kr.TrustPartition(u, frozenset(order[:k])) for k, u in enumerate(order)]
    rep = _run(params, parts, b, state)
    keys = np.zeros(params.n_users)
    chis = np.zeros(params.n_users)
    i_ab = np.zeros(params.n_users)
    for rec in rep.users:
        keys[rec.user] = rec.key_per_symbol
        chis[rec.user] = rec.holevo
        i_ab[rec.user] = rec.i_ab
    return ProtocolResult(Protocol.TRUSTED, keys, float(keys.sum()), b, order, chis, i_ab)


def time_sharing_total(params: NetworkParams, beta=1.0, reference_user: int | None = None) -> ProtocolResult:
    """Rounds are divided among users; the network total equals one user's untrusted key."""
    if reference_user is None:
        if not params.is_symmetric():
            raise ValueError("time sharing needs symmetric links or an explicit reference_user")
        reference_user = 0
    b = _betas(params, beta)
    single = _single_user(params, reference_user)
    key = kr.key_rate(single, 0, kr.TrustPartition(0), float(b[reference_user]))
    per_user = np.full(params.n_users, key / params.n_users)
    return ProtocolResult(Protocol.TIME_SHARING, per_user, key, b)


def _single_user(params: NetworkParams, l: int) -> NetworkParams:
    """Point-to-point link with user ``l``'s total transmittance and noise."""
    return NetworkParams.from_user_totals(
        1, params.v_mod, params.eta[l], params.eps[l], params.detectors.tau[l], params.detectors.nu[l]
    )


def plob_bound(eta_total: float) -> float:
    """Repeaterless capacity -log2(1 - eta) in bits per channel use."""
    if not 0 < eta_total <= 1:
        raise ValueError(f"transmittance must be in (0, 1], got {eta_total}")
    if eta_total == 1:
        return math.inf
    return -math.log2(1 - eta_total)


def throughput(key_per_symbol, symbol_rate: float, fer=0.0):
    """Secret bits per second after discarding failed frames."""
    fer = np.asarray(fer, dtype=float)
    if np.any((fer < 0) | (fer > 1)):
        raise ValueError("frame error rate must lie in [0, 1]")
    out = np.asarray(key_per_symbol, dtype=float) * symbol_rate * (1 - fer)
    return float(out) if out.ndim == 0 else out


def db_to_transmittance(loss_db: float) -> float:
    """Loss given as a positive number of dB (a -2 dB channel is ``loss_db=2``)."""
    return 10 ** (-abs(loss_db) / 10)


# --- sweeps ------------------------------------------------------------------------

AXES = ("channel_loss_db", "users_n", "modulation_variance")

SWEEP_COLUMNS = (
    "axis",
    "axis_value",
    "n_users",
    "channel_loss_db[dB]",
    "modulation_variance[SNU]",
    "mean_excess_noise[SNU]",
    "time_sharing_total[bits/symbol]",
    "untrusted_total[bits/symbol]",
    "trusted_total[bits/symbol]",
    "untrusted_positive_users",
    "trusted_positive_users",
    "plob_ptp[bits/symbol]",
    "n_times_plob_user[bits/symbol]",
)


@dataclass
class SweepRow:
    axis: str
    axis_value: float
    params: NetworkParams
    channel_loss_db: float | None
    results: dict[Protocol, ProtocolResult]
    plob_ptp: float
    n_plob_user: float

    def as_dict(self) -> dict:
        r = self.results
        get = lambda p: r[p].total if p in r else float("nan")
        pos = lambda p: r[p].n_positive if p in r else ""
        return {
            "axis": self.axis,
            "axis_value": self.axis_value,
            "n_users": self.params.n_users,
            "channel_loss_db[dB]": self.channel_loss_db if self.channel_loss_db is not None else "",
            "modulation_variance[SNU]": self.params.v_mod,
            "mean_excess_noise[SNU]": float(np.mean(self.params.eps)),
            "time_sharing_total[bits/symbol]": get(Protocol.TIME_SHARING),
            "untrusted_total[bits/symbol]": get(Protocol.UNTRUSTED),
            "trusted_total[bits/symbol]": get(Protocol.TRUSTED),
            "untrusted_positive_users": pos(Protocol.UNTRUSTED),
            "trusted_positive_users": pos(Protocol.TRUSTED),
            "plob_ptp[bits/symbol]": self.plob_ptp,
            "n_times_plob_user[bits/symbol]": self.n_plob_user,
        }


def _grid_point(template: NetworkParams, axis: str, value: float, noise_slope) -> NetworkParams:
    if axis == "channel_loss_db":
        eta_ab = db_to_transmittance(value)
        n = template.n_users
        link = replace(template.link, eta_a=1.0, eps_a=0.0, eta_b=(eta_ab,) * n, split=None)
        return replace(template, link=link)
    if axis == "users_n":
        n = int(value)
        if n != value or n < 1:
            raise ValueError(f"users_n grid values must be positive integers, got {value}")
        if not template.is_symmetric():
            raise ValueError("users_n sweeps need a symmetric template")
        lk, det = template.link, template.detectors
        return replace(
            template,
            link=replace(lk, eta_b=(lk.eta_b[0],) * n, eps_b=(lk.eps_b[0],) * n, split=None),
            detectors=nw.DetectorParams((det.tau[0],) * n, (det.nu[0],) * n),
        )
    if axis == "modulation_variance":
        p = template.with_source(value)
        if noise_slope is not None:
            slope = np.broadcast_to(np.asarray(noise_slope, dtype=float), (template.n_users,))
            eps_b = tuple(
                max(0.0, e + s * (value - template.v_mod)) for e, s in zip(template.link.eps_b, slope)
            )
            p = replace(p, link=replace(p.link, eps_b=eps_b))
        return p
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")


def evaluate_protocols(
    params: NetworkParams,
    beta=1.0,
    protocols=(Protocol.TIME_SHARING, Protocol.UNTRUSTED, Protocol.TRUSTED),
    ordering: TrustOrdering = TrustOrdering(),
) -> dict[Protocol, ProtocolResult]:
    out: dict[Protocol, ProtocolResult] = {}
    state = nw.assemble(params)
    protocols = tuple(protocols)
    if Protocol.UNTRUSTED in protocols or Protocol.TRUSTED in protocols:
        unt = untrusted_total(params, beta, state)
        if Protocol.UNTRUSTED in protocols:
            out[Protocol.UNTRUSTED] = unt
        if Protocol.TRUSTED in protocols:
            out[Protocol.TRUSTED] = trusted_total(params, beta, ordering, state, unt)
    if Protocol.TIME_SHARING in protocols and params.is_symmetric():
        out[Protocol.TIME_SHARING] = time_sharing_total(params, beta)
    return out


def sweep(
    template: NetworkParams,
    axis: str,
    values,
    beta=1.0,
    protocols=(Protocol.TIME_SHARING, Protocol.UNTRUSTED, Protocol.TRUSTED),
    noise_slope=None,
    ordering: TrustOrdering = TrustOrdering(),
    threads: int = 1,
) -> list[SweepRow]:
    """Evaluate ``protocols`` at every grid value of ``axis``; rows follow grid order.

    For ``modulation_variance``, ``noise_slope`` (SNU/SNU, scalar or per user)
    makes each drop-link noise linear in V_mod through the template point.
    """
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    vals = [float(v) for v in np.atleast_1d(values)]
    if not vals:
        raise ValueError("empty sweep range")
    d = np.diff(vals)
    if len(vals) > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("sweep range must be strictly monotone")

    def point(v: float) -> SweepRow:
        p = _grid_point(template, axis, v, noise_slope)
        res = evaluate_protocols(p, beta, protocols, ordering)
        eta_ab = float(p.link.eta_a * p.link.eta_b[0]) if p.is_symmetric() else float(np.max(p.eta) * p.n_users)
        loss = -10 * math.log10(eta_ab) if p.is_symmetric() else None
        return SweepRow(
            axis, v, p, loss, res,
            plob_ptp=plob_bound(min(eta_ab, 1.0)),
            n_plob_user=float(sum(plob_bound(e) for e in p.eta)),
        )

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(point, vals))
    return [point(v) for v in vals]


def rows_to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.as_dict().items()})
    return buf.getvalue()
