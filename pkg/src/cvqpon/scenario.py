"""Scenario files: YAML with unit-suffixed keys, converted to linear units on parse.

Unit suffixes accepted per quantity:

* noise variances: ``_snu`` or ``_msnu``
* efficiencies, frame error rates: bare fraction or ``_percent``
* transmittance: ``transmittance`` (linear) or ``loss_db`` (positive dB)
* symbol rate: ``symbol_rate_hz`` or ``symbol_rate_mbaud``

Writing always uses the canonical unit (SNU, fractions, linear, Hz), so a
written scenario re-parses to an identical structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .network import NetworkParams
from .protocols import AXES, Protocol, Strategy, TrustOrdering

SCHEMA_VERSION = 1
NOISE_REFERENCES = ("channel_output", "detector")


class ScenarioError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


# --- dataclasses ---------------------------------------------------------------------


@dataclass(frozen=True)
class UserSpec:
    name: str
    transmittance: float
    excess_noise: float
    electronic_noise: float
    detector_efficiency: float
    beta: float | None = None
    fer: float = 0.0


@dataclass(frozen=True)
class SymmetricSpec:
    users: int
    transmittance: float  # feeder x drop, before the 1/N split
    excess_noise: float
    electronic_noise: float
    detector_efficiency: float
    fer: float = 0.0


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple[float, ...]
    series_users: tuple[int, ...] | None = None
    noise_model: str = "constant"  # constant | proportional | linear
    noise_slope: float = 0.0


@dataclass(frozen=True)
class MonteCarloSpec:
    rounds: int
    seeds: int = 1
    seed: int = 0
    reference_user: int = 0
    z: float = 6.5


@dataclass(frozen=True)
class Scenario:
    name: str
    modulation_variance: float
    beta: float
    users: tuple[UserSpec, ...] | None = None
    symmetric: SymmetricSpec | None = None
    noise_reference: str = "channel_output"
    topology: str = "auto"
    symbol_rate: float | None = None
    protocols: tuple[str, ...] = ("untrusted", "trusted")
    ordering: str | tuple[int, ...] = "ascending"
    sweep: SweepSpec | None = None
    montecarlo: MonteCarloSpec | None = None
    output_dir: str | None = None

    @property
    def n_users(self) -> int:
        return len(self.users) if self.users is not None else self.symmetric.users

    @property
    def user_names(self) -> list[str]:
        if self.users is not None:
            return [u.name for u in self.users]
        return [f"Bob{l + 1}" for l in range(self.symmetric.users)]

    def betas(self) -> np.ndarray:
        if self.users is None:
            return np.full(self.n_users, self.beta)
        return np.array([self.beta if u.beta is None else u.beta for u in self.users])

    def fers(self) -> np.ndarray:
        if self.users is None:
            return np.full(self.n_users, self.symmetric.fer)
        return np.array([u.fer for u in self.users])

    def network(self) -> NetworkParams:
        if self.users is not None:
            tau = [u.detector_efficiency for u in self.users]
            eps = [u.excess_noise for u in self.users]
            if self.noise_reference == "detector":
                eps = [e / t for e, t in zip(eps, tau)]
            return NetworkParams.from_user_totals(
                len(self.users), self.modulation_variance,
                [u.transmittance for u in self.users], eps, tau,
                [u.electronic_noise for u in self.users], self.topology,
            )
        s = self.symmetric
        eps = s.excess_noise / s.detector_efficiency if self.noise_reference == "detector" else s.excess_noise
        return NetworkParams.symmetric(
            s.users, self.modulation_variance, s.transmittance, eps,
            s.detector_efficiency, s.electronic_noise, self.topology,
        )

    def trust_ordering(self) -> TrustOrdering:
        if isinstance(self.ordering, tuple):
            return TrustOrdering(Strategy.EXPLICIT, self.ordering)
        return TrustOrdering(Strategy(self.ordering))

    def protocol_set(self) -> tuple[Protocol, ...]:
        return tuple(Protocol(p) for p in self.protocols)


# --- parsing ----------------------------------------------------------------------------


class _Reader:
    """Pulls keys out of a mapping, recording problems with their field paths."""

    def __init__(self, data: Any, path: str, problems: list[str]):
        self.path = path
        self.problems = problems
        if not isinstance(data, dict):
            self.err("", f"expected a mapping, got {type(data).__name__}")
            data = {}
        self.data = dict(data)

    def err(self, key: str, msg: str):
        p = f"{self.path}.{key}" if key else self.path
        self.problems.append(f"{p or '<root>'}: {msg}")

    def _pick(self, variants: dict[str, Any], required: bool, base: str):
        present = [k for k in variants if k in self.data]
        if len(present) > 1:
            self.err(base, f"give only one of {present}")
            return None, None
        if not present:
            if required:
                self.err(base, f"missing (one of {list(variants)})")
            return None, None
        k = present[0]
        return k, self.data.pop(k)

    def number(self, key: str, v, lo=None, hi=None, integer=False):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.err(key, f"expected a number, got {v!r}")
            return None
        if integer and int(v) != v:
            self.err(key, f"expected an integer, got {v!r}")
            return None
        if not math.isfinite(v):
            self.err(key, "must be finite")
            return None
        if lo is not None and v < lo or hi is not None and v > hi:
            self.err(key, f"{v} outside [{lo}, {hi}]")
            return None
        return int(v) if integer else float(v)

    def quantity(self, base: str, units: dict[str, float], required=True, default=None, lo=None, hi=None):
        """Read ``base`` given under any of its unit-suffixed keys; return canonical value."""
        variants = {base + suffix: scale for suffix, scale in units.items()}
        k, v = self._pick(variants, required, base)
        if k is None:
            return default
        v = self.number(k, v)
        if v is None:
            return None
        out = v * variants[k]
        if lo is not None and out < lo or hi is not None and out > hi:
            self.err(k, f"{v} is outside the allowed range")
            return None
        return out

    def transmittance(self, required=True):
        k, v = self._pick({"transmittance": 1, "loss_db": 1}, required, "transmittance")
        if k is None:
            return None
        v = self.number(k, v)
        if v is None:
            return None
        if k == "loss_db":
            if v < 0:
                self.err(k, "give losses as positive dB")
                return None
            return 10 ** (-v / 10)
        if not 0 < v <= 1:
            self.err(k, f"transmittance {v} outside (0, 1]")
            return None
        return v

    def get(self, key, default=None, required=False):
        if key in self.data:
            return self.data.pop(key)
        if required:
            self.err(key, "missing")
        return default

    def sub(self, key, required=False):
        if key not in self.data:
            if required:
                self.err(key, "missing")
            return None
        return _Reader(self.data.pop(key), f"{self.path}.{key}" if self.path else key, self.problems)

    def finish(self):
        for k in self.data:
            self.err(k, "unknown field")


NOISE = {"_snu": 1.0, "_msnu": 1e-3}
FRACTION = {"": 1.0, "_percent": 0.01}


def _user(r: _Reader, idx: int) -> UserSpec | None:
    name = r.get("name", f"Bob{idx + 1}")
    spec = UserSpec(
        name=str(name),
        transmittance=r.transmittance(),
        excess_noise=r.quantity("excess_noise", NOISE, lo=0),
        electronic_noise=r.quantity("electronic_noise", NOISE, lo=0),
        detector_efficiency=r.quantity("detector_efficiency", FRACTION, lo=1e-12, hi=1),
        beta=r.quantity("reconciliation_efficiency", FRACTION, required=False, lo=0, hi=1),
        fer=r.quantity("frame_error_rate", FRACTION, required=False, default=0.0, lo=0, hi=1),
    )
    r.finish()
    return spec


def _symmetric(r: _Reader) -> SymmetricSpec:
    users = r.get("users", required=True)
    users = r.number("users", users, lo=1, integer=True) if users is not None else None
    spec = SymmetricSpec(
        users=users,
        transmittance=r.transmittance(),
        excess_noise=r.quantity("excess_noise", NOISE, lo=0),
        electronic_noise=r.quantity("electronic_noise", NOISE, lo=0),
        detector_efficiency=r.quantity("detector_efficiency", FRACTION, lo=1e-12, hi=1),
        fer=r.quantity("frame_error_rate", FRACTION, required=False, default=0.0, lo=0, hi=1),
    )
    r.finish()
    return spec


def _grid(r: _Reader, key: str):
    v = r.get(key)
    if v is None:
        r.err(key, "missing")
        return None
    if isinstance(v, list):
        vals = [r.number(key, x) for x in v]
        return None if any(x is None for x in vals) else tuple(vals)
    g = _Reader(v, f"{r.path}.{key}", r.problems)
    start = g.number("start", g.get("start", required=True))
    stop = g.number("stop", g.get("stop", required=True))
    num = g.get("num")
    step = g.get("step")
    g.finish()
    if start is None or stop is None:
        return None
    if (num is None) == (step is None):
        r.err(key, "give exactly one of num or step")
        return None
    if num is not None:
        num = r.number(f"{key}.num", num, lo=1, integer=True)
        return None if num is None else tuple(float(x) for x in np.linspace(start, stop, num))
    step = r.number(f"{key}.step", step)
    if not step or (stop - start) / step < 0:
        r.err(f"{key}.step", "step must be nonzero and point from start to stop")
        return None
    n = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 12) for i in range(n))


def _sweep(r: _Reader) -> SweepSpec | None:
    axis = r.get("axis", required=True)
    if axis not in AXES:
        r.err("axis", f"must be one of {AXES}, got {axis!r}")
    values = _grid(r, "values")
    series = r.get("series_users")
    if series is not None:
        if not isinstance(series, list) or not all(isinstance(x, int) and x >= 1 for x in series):
            r.err("series_users", "expected a list of positive integers")
            series = None
        else:
            series = tuple(series)
    model = r.get("excess_noise_model", "constant")
    if model not in ("constant", "proportional", "linear"):
        r.err("excess_noise_model", f"unknown model {model!r}")
    slope = r.quantity("noise_slope", {"_snu_per_snu": 1.0}, required=model == "linear", default=0.0)
    r.finish()
    if values is None or axis not in AXES:
        return None
    if len(values) > 1:
        d = np.diff(values)
        if not (np.all(d > 0) or np.all(d < 0)):
            r.err("values", "grid must be strictly monotone")
    return SweepSpec(axis, values, series, model, slope or 0.0)


def _montecarlo(r: _Reader) -> MonteCarloSpec:
    def integer(key, default=None, required=False, lo=0):
        v = r.get(key, default, required)
        return None if v is None else r.number(key, v, lo=lo, integer=True)

    spec = MonteCarloSpec(
        rounds=integer("rounds", required=True, lo=1),
        seeds=integer("seeds", 1, lo=1),
        seed=integer("seed", 0),
        reference_user=integer("reference_user", 0),
        z=r.number("z", r.get("z", 6.5), lo=0),
    )
    r.finish()
    return spec


def parse(data: Any, source: str = "<scenario>") -> Scenario:
    problems: list[str] = []
    r = _Reader(data, "", problems)
    version = r.get("schema_version", required=True)
    if version is not None and version != SCHEMA_VERSION:
        r.err("schema_version", f"unsupported version {version!r} (expected {SCHEMA_VERSION})")
    name = str(r.get("name", Path(source).stem))

    net = r.sub("network", required=True) or _Reader({}, "network", problems)
    v_mod = net.quantity("modulation_variance", NOISE, lo=0)
    ref = net.get("excess_noise_reference", "channel_output")
    if ref not in NOISE_REFERENCES:
        net.err("excess_noise_reference", f"must be one of {NOISE_REFERENCES}")
    topology = net.get("topology", "auto")
    if topology not in ("auto", "tree", "sequential"):
        net.err("topology", f"unknown splitter topology {topology!r}")
    users = None
    sym = None
    if "users" in net.data and "symmetric" in net.data:
        net.err("", "give either users or symmetric, not both")
    if "users" in net.data:
        raw = net.get("users")
        if not isinstance(raw, list) or not raw:
            net.err("users", "user list must be a non-empty list")
        else:
            users = tuple(_user(_Reader(u, f"network.users[{i}]", problems), i) for i, u in enumerate(raw))
            names = [u.name for u in users]
            if len(set(names)) != len(names):
                net.err("users", "user names must be unique")
    elif "symmetric" in net.data:
        sym = _symmetric(net.sub("symmetric"))
    else:
        net.err("users", "missing (give users or symmetric)")
    net.finish()

    beta = r.quantity("reconciliation_efficiency", FRACTION, required=True, lo=0, hi=1)
    rate = r.quantity("symbol_rate", {"_hz": 1.0, "_mbaud": 1e6}, required=False, lo=0)
    protocols = r.get("protocols", ["untrusted", "trusted"])
    valid = {p.value for p in Protocol} - {"plob"}
    if not isinstance(protocols, list) or not protocols or any(p not in valid for p in protocols):
        r.err("protocols", f"expected a non-empty list drawn from {sorted(valid)}")
        protocols = ["untrusted"]
    ordering = r.get("trust_ordering", "ascending")
    if isinstance(ordering, list):
        ordering = tuple(ordering)
    elif ordering not in ("ascending", "descending"):
        r.err("trust_ordering", "expected ascending, descending or an explicit list of user indices")
    sweep = _sweep(r.sub("sweep")) if "sweep" in r.data else None
    mc = _montecarlo(r.sub("montecarlo")) if "montecarlo" in r.data else None
    out = r.sub("output")
    out_dir = None
    if out is not None:
        out_dir = out.get("dir")
        out.finish()
    r.finish()

    n = len(users) if users else (sym.users if sym and sym.users else 0)
    if isinstance(ordering, tuple) and n and sorted(ordering) != list(range(n)):
        r.err("trust_ordering", f"explicit order must be a permutation of 0..{n - 1}")
    if "time_sharing" in protocols and users is not None:
        r.err("protocols", "time_sharing needs a symmetric network")
    if mc is not None and n and mc.reference_user is not None and mc.reference_user >= n:
        r.err("montecarlo.reference_user", f"index out of range for {n} users")
    if sweep is not None and sweep.axis == "users_n" and users is not None:
        r.err("sweep.axis", "users_n sweeps need a symmetric network")
    if problems:
        raise ScenarioError(problems)

    scen = Scenario(
        name=name, modulation_variance=v_mod, beta=beta, users=users, symmetric=sym,
        noise_reference=ref, topology=topology, symbol_rate=rate, protocols=tuple(protocols),
        ordering=ordering, sweep=sweep, montecarlo=mc, output_dir=out_dir,
    )
    try:
        scen.network()
    except ValueError as exc:
        raise ScenarioError([f"network: {exc}"]) from exc
    return scen


def load(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        bundled = bundled_path(path.name)
        if bundled is None:
            raise ScenarioError([f"{path}: no such scenario file"])
        path = bundled
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError([f"{path}: {exc}"]) from exc
    return parse(data, str(path))


def bundled_path(name: str) -> Path | None:
    stem = name[: -len(".scenario")] if name.endswith(".scenario") else name
    p = resources.files("cvqpon") / "scenarios" / f"{stem}.scenario"
    return Path(str(p)) if p.is_file() else None


def bundled_names() -> list[str]:
    d = resources.files("cvqpon") / "scenarios"
    return sorted(p.name[: -len(".scenario")] for p in d.iterdir() if p.name.endswith(".scenario"))


# --- writing ----------------------------------------------------------------------------


def to_dict(s: Scenario) -> dict:
    net: dict[str, Any] = {
        "modulation_variance_snu": s.modulation_variance,
        "excess_noise_reference": s.noise_reference,
        "topology": s.topology,
    }
    if s.users is not None:
        users = []
        for u in s.users:
            d = {
                "name": u.name,
                "transmittance": u.transmittance,
                "excess_noise_snu": u.excess_noise,
                "electronic_noise_snu": u.electronic_noise,
                "detector_efficiency": u.detector_efficiency,
                "frame_error_rate": u.fer,
            }
            if u.beta is not None:
                d["reconciliation_efficiency"] = u.beta
            users.append(d)
        net["users"] = users
    else:
        y = s.symmetric
        net["symmetric"] = {
            "users": y.users,
            "transmittance": y.transmittance,
            "excess_noise_snu": y.excess_noise,
            "electronic_noise_snu": y.electronic_noise,
            "detector_efficiency": y.detector_efficiency,
            "frame_error_rate": y.fer,
        }
    out: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "name": s.name,
        "network": net,
        "reconciliation_efficiency": s.beta,
        "protocols": list(s.protocols),
        "trust_ordering": list(s.ordering) if isinstance(s.ordering, tuple) else s.ordering,
    }
    if s.symbol_rate is not None:
        out["symbol_rate_hz"] = s.symbol_rate
    if s.sweep is not None:
        w = s.sweep
        sw: dict[str, Any] = {"axis": w.axis, "values": list(w.values), "excess_noise_model": w.noise_model}
        if w.series_users is not None:
            sw["series_users"] = list(w.series_users)
        if w.noise_model == "linear":
            sw["noise_slope_snu_per_snu"] = w.noise_slope
        out["sweep"] = sw
    if s.montecarlo is not None:
        m = s.montecarlo
        out["montecarlo"] = {"rounds": m.rounds, "seeds": m.seeds, "seed": m.seed,
                             "reference_user": m.reference_user, "z": m.z}
    if s.output_dir is not None:
        out["output"] = {"dir": s.output_dir}
    return out


def dumps(s: Scenario) -> str:
    return yaml.safe_dump(to_dict(s), sort_keys=False)
