"""Mode-labelled Gaussian-state algebra.

All states are zero-mean; only the covariance matrix is tracked. Quadrature
ordering is ``(x_1, p_1, x_2, p_2, ...)`` and variances are in shot-noise
units (vacuum variance = 1).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

SYMMETRY_RTOL = 1e-12
CLAMP_TOL = 1e-9
PAIRING_TOL = 1e-9
PINV_RCOND = 1e-12


class GaussianStateError(ValueError):
    """Invalid Gaussian state or operation."""


class Owner(enum.Enum):
    ALICE_X = "Ax"
    ALICE_P = "Ap"
    SIGNAL = "S"
    USER = "B"
    DETECTOR = "D"
    PURIFIER = "F"
    EVE = "E"
    VACUUM = "V"


@dataclass(frozen=True)
class ModeLabel:
    owner: Owner
    user: int | None = None
    arm: str | None = None
    index: int | None = None

    def __post_init__(self):
        if self.arm not in (None, "x", "p"):
            raise GaussianStateError(f"arm must be 'x', 'p' or None, got {self.arm!r}")

    def __str__(self) -> str:
        s = self.owner.value
        if self.user is not None:
            s += str(self.user + 1)
        if self.arm is not None:
            s += self.arm
        if self.index is not None:
            s += f"#{self.index}"
        return s

    __repr__ = __str__


# Shorthand constructors used throughout the package.
def alice(arm: str) -> ModeLabel:
    return ModeLabel(Owner.ALICE_X if arm == "x" else Owner.ALICE_P)


SIGNAL = ModeLabel(Owner.SIGNAL)


def user(l: int, arm: str | None = None) -> ModeLabel:
    return ModeLabel(Owner.USER, user=l, arm=arm)


def detector(l: int, arm: str) -> ModeLabel:
    return ModeLabel(Owner.DETECTOR, user=l, arm=arm)


def purifier(l: int, arm: str) -> ModeLabel:
    return ModeLabel(Owner.PURIFIER, user=l, arm=arm)


def eve(k: int) -> ModeLabel:
    return ModeLabel(Owner.EVE, index=k)


def vacuum_label(k: int) -> ModeLabel:
    return ModeLabel(Owner.VACUUM, index=k)


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Covariance matrix of an n-mode Gaussian state with one label per mode."""

    matrix: np.ndarray
    labels: tuple[ModeLabel, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        labels = tuple(self.labels)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
            raise GaussianStateError(f"covariance must be 2n x 2n, got shape {m.shape}")
        if m.shape[0] != 2 * len(labels):
            raise GaussianStateError(
                f"{len(labels)} labels for a {m.shape[0]}x{m.shape[0]} matrix"
            )
        if not np.all(np.isfinite(m)):
            raise GaussianStateError("covariance has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
        if m.size and np.max(np.abs(m - m.T)) > SYMMETRY_RTOL * scale:
            raise GaussianStateError("covariance is not symmetric")
        if len(set(labels)) != len(labels):
            raise GaussianStateError(f"duplicate mode labels in {labels}")
        m = 0.5 * (m + m.T)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(labels)})

    @property
    def n_modes(self) -> int:
        return len(self.labels)

    def index(self, label: ModeLabel) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise GaussianStateError(f"mode {label} not in state {self.labels}") from None

    def __contains__(self, label) -> bool:
        return label in self._index

    def block(self, a: ModeLabel, b: ModeLabel | None = None) -> np.ndarray:
        """2x2 block between modes ``a`` and ``b`` (``b`` defaults to ``a``)."""
        i = self.index(a)
        j = i if b is None else self.index(b)
        return self.matrix[2 * i : 2 * i + 2, 2 * j : 2 * j + 2]

    def is_bona_fide(self, tol: float = CLAMP_TOL) -> bool:
        if self.n_modes == 0:
            return True
        try:
            nu = _raw_symplectic_spectrum(self.matrix)
        except np.linalg.LinAlgError:
            return False
        return bool(np.all(nu >= 1.0 - tol))

    def __repr__(self) -> str:
        return f"CovarianceMatrix({self.n_modes} modes: {', '.join(map(str, self.labels))})"


def omega(n: int) -> np.ndarray:
    """Symplectic form for n modes in (x, p) interleaved ordering."""
    return np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def _mode_indices(i: int) -> list[int]:
    return [2 * i, 2 * i + 1]


# --- construction -----------------------------------------------------------


def vacuum(label: ModeLabel) -> CovarianceMatrix:
    return CovarianceMatrix(np.eye(2), (label,))


def thermal(v: float, label: ModeLabel) -> CovarianceMatrix:
    if v < 1:
        raise GaussianStateError(f"thermal variance must be >= 1, got {v}")
    return CovarianceMatrix(v * np.eye(2), (label,))


def tmsv(v: float, labels: Sequence[ModeLabel] = (vacuum_label(0), vacuum_label(1))) -> CovarianceMatrix:
    """Two-mode squeezed vacuum with quadrature variance ``v`` on each mode."""
    if not np.isfinite(v) or v < 1:
        raise GaussianStateError(f"TMSV variance must be >= 1, got {v}")
    c = np.sqrt(v * v - 1.0)
    z = np.diag([1.0, -1.0])
    m = np.block([[v * np.eye(2), c * z], [c * z, v * np.eye(2)]])
    return CovarianceMatrix(m, tuple(labels))


def tensor(*states: CovarianceMatrix) -> CovarianceMatrix:
    labels: list[ModeLabel] = []
    for s in states:
        labels.extend(s.labels)
    if len(set(labels)) != len(labels):
        raise GaussianStateError("label collision in tensor product")
    dim = 2 * len(labels)
    m = np.zeros((dim, dim))
    k = 0
    for s in states:
        d = 2 * s.n_modes
        m[k : k + d, k : k + d] = s.matrix
        k += d
    return CovarianceMatrix(m, tuple(labels))


def restrict(state: CovarianceMatrix, labels: Iterable[ModeLabel]) -> CovarianceMatrix:
    """Partial trace: keep ``labels`` in the given order."""
    labels = tuple(labels)
    idx = [q for lab in labels for q in _mode_indices(state.index(lab))]
    return CovarianceMatrix(state.matrix[np.ix_(idx, idx)], labels)


def discard(state: CovarianceMatrix, labels: Iterable[ModeLabel]) -> CovarianceMatrix:
    drop = set(labels)
    for lab in drop:
        state.index(lab)
    return restrict(state, [lab for lab in state.labels if lab not in drop])


def relabel(state: CovarianceMatrix, mapping: Mapping[ModeLabel, ModeLabel]) -> CovarianceMatrix:
    for lab in mapping:
        state.index(lab)
    return CovarianceMatrix(state.matrix, tuple(mapping.get(lab, lab) for lab in state.labels))


def reorder(state: CovarianceMatrix, labels: Sequence[ModeLabel]) -> CovarianceMatrix:
    if set(labels) != set(state.labels) or len(labels) != state.n_modes:
        raise GaussianStateError("reorder requires a permutation of the state's labels")
    return restrict(state, labels)


# --- symplectic operations ----------------------------------------------------


def beamsplitter(
    state: CovarianceMatrix, mode_a: ModeLabel, mode_b: ModeLabel, transmittance: float
) -> CovarianceMatrix:
    """Mix two modes on a beamsplitter.

    a' = sqrt(T) a + sqrt(1-T) b,   b' = -sqrt(1-T) a + sqrt(T) b
    """
    if not 0.0 <= transmittance <= 1.0:
        raise GaussianStateError(f"transmittance must be in [0, 1], got {transmittance}")
    ia, ib = state.index(mode_a), state.index(mode_b)
    if ia == ib:
        raise GaussianStateError("beamsplitter needs two distinct modes")
    t = np.sqrt(transmittance)
    r = np.sqrt(1.0 - transmittance)
    m = np.array(state.matrix)
    ra, rb = _mode_indices(ia), _mode_indices(ib)
    # Act on rows then on columns; only four rows/columns change.
    top, bot = m[ra, :].copy(), m[rb, :].copy()
    m[ra, :] = t * top + r * bot
    m[rb, :] = -r * top + t * bot
    left, right = m[:, ra].copy(), m[:, rb].copy()
    m[:, ra] = t * left + r * right
    m[:, rb] = -r * left + t * right
    return CovarianceMatrix(m, state.labels)


def symplectic_transform(state: CovarianceMatrix, s: np.ndarray) -> CovarianceMatrix:
    """Congruence ``S gamma S^T`` by an arbitrary full-size matrix."""
    return CovarianceMatrix(s @ state.matrix @ s.T, state.labels)


# --- spectra and entropy --------------------------------------------------------


def _raw_symplectic_spectrum(m: np.ndarray) -> np.ndarray:
    n = m.shape[0] // 2
    w, u = np.linalg.eigh(m)
    if w[0] <= 0:
        # Not positive definite: fall back to the (non-normal) Omega*gamma eigenproblem.
        ev = np.abs(np.linalg.eigvals(omega(n) @ m).imag)
        return np.sort(ev)[::-1][::2][:n]
    root = (u * np.sqrt(w)) @ u.T
    k = root @ omega(n) @ root  # real antisymmetric, eigenvalues +-i nu
    nu2 = np.linalg.eigvalsh(k.T @ k)
    nu2 = np.clip(nu2, 0.0, None)
    pairs = np.sqrt(nu2).reshape(n, 2)
    spread = np.abs(pairs[:, 1] - pairs[:, 0])
    if np.any(spread > PAIRING_TOL * np.maximum(1.0, pairs[:, 1]) * max(1.0, float(w[-1]))):
        raise np.linalg.LinAlgError("symplectic eigenvalues failed to pair")
    return pairs.mean(axis=1)[::-1]


def symplectic_eigenvalues(state: CovarianceMatrix) -> np.ndarray:
    """Williamson spectrum, descending, values within 1e-9 below 1 clamped to 1."""
    if state.n_modes == 0:
        return np.zeros(0)
    nu = _raw_symplectic_spectrum(state.matrix)
    if np.any(nu < 1.0 - CLAMP_TOL):
        raise GaussianStateError(f"state is not bona fide: min symplectic eigenvalue {nu.min():.3g}")
    return np.maximum(nu, 1.0)


def entropy_g(x) -> np.ndarray:
    """Entropy (bits) of a thermal mode with symplectic eigenvalue x."""
    x = np.asarray(x, dtype=float)
    b = np.maximum((x - 1.0) / 2.0, 0.0)
    # a ln a - b ln b with a = b + 1, written without cancellation at large b.
    with np.errstate(divide="ignore"):
        tail = np.where(b > 0, b * np.log1p(1.0 / np.where(b > 0, b, 1.0)), 0.0)
    return (np.log1p(b) + tail) / np.log(2.0)


def von_neumann_entropy(state: CovarianceMatrix) -> float:
    return float(np.sum(entropy_g(symplectic_eigenvalues(state))))


# --- measurements ---------------------------------------------------------------


def _split(state: CovarianceMatrix, mode: ModeLabel):
    i = state.index(mode)
    keep = [lab for lab in state.labels if lab != mode]
    rest = [q for j, lab in enumerate(state.labels) if lab != mode for q in _mode_indices(j)]
    own = _mode_indices(i)
    m = state.matrix
    return keep, m[np.ix_(rest, rest)], m[np.ix_(rest, own)], m[np.ix_(own, own)]


def condition_on_homodyne(state: CovarianceMatrix, mode: ModeLabel, quadrature: str) -> CovarianceMatrix:
    """State of the remaining modes after homodyning ``quadrature`` of ``mode``."""
    if quadrature not in ("x", "p"):
        raise GaussianStateError(f"quadrature must be 'x' or 'p', got {quadrature!r}")
    keep, a, c, b = _split(state, mode)
    proj = np.diag([1.0, 0.0]) if quadrature == "x" else np.diag([0.0, 1.0])
    inv = np.linalg.pinv(proj @ b @ proj, rcond=PINV_RCOND)
    return CovarianceMatrix(a - c @ inv @ c.T, tuple(keep))


def condition_on_heterodyne(state: CovarianceMatrix, mode: ModeLabel) -> CovarianceMatrix:
    keep, a, c, b = _split(state, mode)
    return CovarianceMatrix(a - c @ np.linalg.solve(b + np.eye(2), c.T), tuple(keep))


def heterodyne_by_beamsplitter(state: CovarianceMatrix, mode: ModeLabel) -> CovarianceMatrix:
    """Heterodyne realised as a balanced split against vacuum plus two homodynes."""
    aux = ModeLabel(Owner.VACUUM, index=-1)
    while aux in state:
        aux = ModeLabel(Owner.VACUUM, index=aux.index - 1)
    s = beamsplitter(tensor(state, vacuum(aux)), mode, aux, 0.5)
    s = condition_on_homodyne(s, mode, "x")
    return condition_on_homodyne(s, aux, "p")
