"""Rate-adaptive reconciliation arithmetic (puncturing / shortening); no decoding."""

from __future__ import annotations

import math
from dataclasses import dataclass


class CodeSpecError(ValueError):
    pass


@dataclass(frozen=True)
class CodeSpec:
    """Mother code (k information bits, length n) with p punctured or s shortened symbols."""

    k: int
    n: int
    p: int = 0
    s: int = 0

    def __post_init__(self):
        if not 0 < self.k < self.n:
            raise CodeSpecError(f"need 0 < k < n, got k={self.k}, n={self.n}")
        if not 0 <= self.p < self.n:
            raise CodeSpecError(f"punctured length must satisfy 0 <= p < n, got p={self.p}")
        if not 0 <= self.s <= self.k:
            raise CodeSpecError(f"shortened length must satisfy 0 <= s <= k, got s={self.s}")
        if self.p and self.s:
            raise CodeSpecError("a spec either punctures or shortens, not both")

    @property
    def base_rate(self) -> float:
        return self.k / self.n

    @property
    def mode(self) -> str:
        return "puncture" if self.p else "shorten" if self.s else "none"

    @property
    def effective_rate(self) -> float:
        if self.p:
            return punctured_rate(self)
        if self.s:
            return shortened_rate(self)
        return self.base_rate


def punctured_rate(spec: CodeSpec) -> float:
    if spec.s:
        raise CodeSpecError("punctured_rate needs s = 0")
    return spec.k / (spec.n - spec.p)


def shortened_rate(spec: CodeSpec) -> float:
    if spec.p:
        raise CodeSpecError("shortened_rate needs p = 0")
    return (spec.k - spec.s) / (spec.n - spec.s)


def truncate(x: float, decimals: int = 4) -> float:
    """Drop digits beyond ``decimals`` (printed code rates are truncated, not rounded)."""
    q = 10**decimals
    return math.floor(x * q + 1e-9) / q


def awgn_capacity(snr: float) -> float:
    """Real-AWGN capacity 1/2 log2(1 + snr) in bits per use."""
    if snr < 0:
        raise ValueError(f"snr must be >= 0, got {snr}")
    return 0.5 * math.log2(1 + snr)


@dataclass(frozen=True)
class ReconRecord:
    snr: float
    beta: float
    fer: float
    effective_rate: float

    def __post_init__(self):
        if not 0 <= self.beta < 1:
            raise ValueError(f"beta must be in [0, 1), got {self.beta}")
        if not 0 <= self.fer <= 1:
            raise ValueError(f"fer must be in [0, 1], got {self.fer}")


@dataclass(frozen=True)
class AdaptationDiagnostics:
    mode: str
    base_rate: float
    effective_rate: float
    capacity: float
    base_exceeds_capacity: bool
    effective_exceeds_capacity: bool
    shortening_required: bool
    recorded_rate_matches: bool
    fer_trend: str
    rate_to_capacity: float


def validate_adaptation(record: ReconRecord, spec: CodeSpec, dims: int = 1,
                        rate_decimals: int = 4) -> AdaptationDiagnostics:
    """Check a reconciliation record against its code spec.

    ``dims`` multiplies the real-AWGN capacity (``dims=2`` gives the capacity
    per complex symbol). ``fer_trend`` states the direction the adaptation
    moves the frame error rate relative to the mother code.
    """
    cap = dims * awgn_capacity(record.snr)
    eff = spec.effective_rate
    base_over = spec.base_rate >= cap
    return AdaptationDiagnostics(
        mode=spec.mode,
        base_rate=spec.base_rate,
        effective_rate=eff,
        capacity=cap,
        base_exceeds_capacity=base_over,
        effective_exceeds_capacity=eff >= cap,
        shortening_required=base_over,
        recorded_rate_matches=truncate(eff, rate_decimals) == round(record.effective_rate, rate_decimals),
        fer_trend={"puncture": "increase", "shorten": "decrease", "none": "unchanged"}[spec.mode],
        rate_to_capacity=eff / cap if cap > 0 else math.inf,
    )
