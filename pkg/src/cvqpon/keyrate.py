"""Mutual information, Holevo bounds under trust partitions, and key rates.

Counting convention: both quadratures are modulated and both heterodyne arms
are measured, so ``I_AB`` and ``chi_EB`` are per symbol, i.e. summed over the
two arms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import gaussian as gs
from . import network as nw
from .gaussian import CovarianceMatrix, Owner
from .network import NetworkParams


@dataclass(frozen=True)
class TrustPartition:
    """Reference user plus the users whose modes are withheld from Eve."""

    reference_user: int
    trusted_users: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "trusted_users", frozenset(int(u) for u in self.trusted_users))
        if self.reference_user in self.trusted_users:
            raise ValueError("reference user cannot be in its own trusted set")

    def validate(self, n_users: int) -> None:
        bad = [u for u in (self.reference_user, *self.trusted_users) if not 0 <= u < n_users]
        if bad:
            raise ValueError(f"user indices {bad} out of range for {n_users} users")

    def is_all_trusted(self, n_users: int) -> bool:
        return len(self.trusted_users) == n_users - 1

    @classmethod
    def untrusted(cls, l: int) -> "TrustPartition":
        return cls(l)


def snr(params: NetworkParams, l: int) -> float:
    """Signal-to-noise ratio of one heterodyne arm of user ``l``."""
    tau, nu = params.tau[l], params.nu[l]
    return float(params.eta[l] * tau / 2 * params.v_mod / (1 + nu + params.eps[l] * tau / 2))


def mutual_information_ab(params: NetworkParams, l: int, per_quadrature: bool = False) -> float:
    """Alice-user information in bits per symbol (or per arm with ``per_quadrature``)."""
    per_arm = 0.5 * math.log2(1 + snr(params, l))
    return per_arm if per_quadrature else 2 * per_arm


def mutual_information_users(params: NetworkParams, i: int, j: int) -> float:
    """Information between the x arms of users i and j (bits per quadrature)."""
    vi = nw.user_arm_variance(params, i)
    vj = nw.user_arm_variance(params, j)
    c = nw.cross_user_correlation(params, i, j)
    cond = vi - c * c / vj
    if cond <= 0:
        raise ArithmeticError(f"non-positive conditional variance {cond} for users {i}, {j}")
    return 0.5 * math.log2(vi / cond)


def trusted_state(state: CovarianceMatrix, partition: TrustPartition) -> CovarianceMatrix:
    """Alice's arms plus the 6-mode blocks of the reference and trusted users."""
    keep = {partition.reference_user, *partition.trusted_users}
    labels = [
        lab
        for lab in state.labels
        if lab.owner in (Owner.ALICE_X, Owner.ALICE_P)
        or (lab.owner in (Owner.USER, Owner.DETECTOR, Owner.PURIFIER) and lab.user in keep)
    ]
    return gs.restrict(state, labels)


def holevo_bound(state: CovarianceMatrix, partition: TrustPartition) -> float:
    """chi_EB = S(trusted) - S(trusted | reference user's heterodyne), in bits per symbol."""
    sub = trusted_state(state, partition)
    ref = partition.reference_user
    cond = gs.condition_on_homodyne(sub, gs.user(ref, "x"), "x")
    cond = gs.condition_on_homodyne(cond, gs.user(ref, "p"), "p")
    chi = gs.von_neumann_entropy(sub) - gs.von_neumann_entropy(cond)
    return max(chi, 0.0)


def key_rate(
    params: NetworkParams,
    l: int,
    partition: TrustPartition | None = None,
    beta: float = 1.0,
    state: CovarianceMatrix | None = None,
) -> float:
    """max(0, beta * I_AB - chi_EB) in bits per symbol.

    ``state`` may carry a precomputed :func:`network.assemble` result.
    """
    if not 0 <= beta <= 1:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    partition = partition or TrustPartition(l)
    if partition.reference_user != l:
        raise ValueError("partition reference user does not match l")
    partition.validate(params.n_users)
    if beta == 0:
        return 0.0
    state = state if state is not None else nw.assemble(params)
    return max(0.0, beta * mutual_information_ab(params, l) - holevo_bound(state, partition))


@dataclass
class UserKey:
    user: int
    trusted_users: tuple[int, ...]
    i_ab: float
    holevo: float
    beta: float
    key_per_symbol: float
    throughput: float | None = None
    unsafe: bool = False

    @property
    def raw_key(self) -> float:
        return self.beta * self.i_ab - self.holevo


@dataclass
class KeyRateReport:
    users: list[UserKey]
    i_users: np.ndarray | None = None

    @property
    def total_per_symbol(self) -> float:
        return float(sum(u.key_per_symbol for u in self.users))

    @property
    def total_throughput(self) -> float | None:
        if any(u.throughput is None for u in self.users):
            return None
        return float(sum(u.throughput for u in self.users))


def evaluate(
    params: NetworkParams,
    partitions: list[TrustPartition],
    betas,
    state: CovarianceMatrix | None = None,
    with_user_information: bool = False,
) -> KeyRateReport:
    """Per-user keys for the given partitions (one per reference user)."""
    betas = np.broadcast_to(np.asarray(betas, dtype=float), (params.n_users,))
    state = state if state is not None else nw.assemble(params)
    records = []
    for part in partitions:
        part.validate(params.n_users)
        l = part.reference_user
        i_ab = mutual_information_ab(params, l)
        chi = holevo_bound(state, part)
        b = float(betas[l])
        records.append(
            UserKey(
                user=l,
                trusted_users=tuple(sorted(part.trusted_users)),
                i_ab=i_ab,
                holevo=chi,
                beta=b,
                key_per_symbol=max(0.0, b * i_ab - chi),
                unsafe=params.n_users > 1 and part.is_all_trusted(params.n_users),
            )
        )
    i_users = None
    if with_user_information and params.n_users > 1:
        n = params.n_users
        i_users = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if i != j:
                    i_users[i, j] = mutual_information_users(params, i, j)
    return KeyRateReport(records, i_users)
