"""Reference experimental parameters of the 8-user field demonstration.

Units as printed: transmittance linear, electronic and excess noise in mSNU,
beta and FER in percent, key rates in kbit/s. The excess noise column is
referenced after the detector efficiency (divide by ``TAU`` for the
channel-output value).
"""

from __future__ import annotations

from dataclasses import dataclass

from .reconciliation import CodeSpec, ReconRecord

TAU = 0.685
V_MOD = 1.26
SYMBOL_RATE = 100e6
MOTHER_K = 8192
MOTHER_N = 819200


@dataclass(frozen=True)
class UserRow:
    name: str
    eta: float
    nu_msnu: float
    eps_msnu: float
    beta_pct: float
    fer_pct: float
    key_untrusted_kbps: float
    key_trusted_kbps: float


TABLE1 = (
    UserRow("Bob1", 0.0369, 51.24, 0.794, 90.79, 4.5, 242.8, 322.6),
    UserRow("Bob2", 0.0424, 52.76, 1.558, 93.23, 43.0, 40.4, 53.1),
    UserRow("Bob3", 0.0439, 55.42, 1.23, 91.37, 22.3, 154.3, 208.9),
    UserRow("Bob4", 0.0397, 49.74, 0.912, 91.5, 15.3, 227.1, 323.5),
    UserRow("Bob5", 0.0461, 60.14, 0.814, 91.44, 13.6, 375.4, 549.2),
    UserRow("Bob6", 0.0337, 53.14, 1.002, 91.9, 21.5, 92.01, 121.2),
    UserRow("Bob7", 0.0398, 75.18, 1.578, 94.8, 55.4, 20.73, 20.73),
    UserRow("Bob8", 0.0463, 52.66, 0.866, 90.78, 9.5, 360.5, 509.6),
)

TOTAL_UNTRUSTED_MBPS = 1.5
TOTAL_TRUSTED_MBPS = 2.1


def _spec(p=0, s=0):
    return CodeSpec(MOTHER_K, MOTHER_N, p, s)


# (snr, code spec, printed adapted rate, beta %, FER %)
TABLE_S1 = (
    ("Bob1", ReconRecord(0.0077, 0.9079, 0.045, 0.0101), _spec(p=10000)),
    ("Bob2", ReconRecord(0.0088, 0.9323, 0.43, 0.0118), _spec(p=130000)),
    ("Bob3", ReconRecord(0.0091, 0.9137, 0.223, 0.0120), _spec(p=140000)),
    ("Bob4", ReconRecord(0.0083, 0.915, 0.153, 0.0109), _spec(p=70000)),
    ("Bob5", ReconRecord(0.0096, 0.9144, 0.136, 0.0126), _spec(p=170000)),
    ("Bob6", ReconRecord(0.00708, 0.919, 0.215, 0.0093), _spec(s=550)),
    ("Bob7", ReconRecord(0.0082, 0.948, 0.554, 0.0112), _spec(p=90000)),
    ("Bob8", ReconRecord(0.0097, 0.9078, 0.095, 0.0126), _spec(p=170000)),
)
