"""Command-line front end: scenario file in, JSON report and CSV tables out.

    cvqpon keyrate|sweep|montecarlo <scenario-file> [--out DIR] [--seed U64] [--threads K]

A scenario name without a path resolves to the bundled scenario of that name.
Exit codes: 0 success, 2 scenario or usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import estimation as est
from . import keyrate as kr
from . import protocols as pr
from .network import NetworkParams
from .scenario import Scenario, ScenarioError, load

REPORT_SCHEMA_VERSION = 1

KEYRATE_COLUMNS = (
    "user",
    "transmittance",
    "excess_noise[SNU]",
    "electronic_noise[SNU]",
    "detector_efficiency",
    "beta",
    "frame_error_rate",
    "snr",
    "i_ab[bits/symbol]",
    "holevo_untrusted[bits/symbol]",
    "key_untrusted[bits/symbol]",
    "throughput_untrusted[bits/s]",
    "trusted_users",
    "holevo_trusted[bits/symbol]",
    "key_trusted[bits/symbol]",
    "throughput_trusted[bits/s]",
    "plob[bits/symbol]",
)

MONTECARLO_COLUMNS = (
    "seed",
    "user",
    "eta_true",
    "eta_hat",
    "eta_lower",
    "eta_upper",
    "eps_true[SNU]",
    "eps_hat[SNU]",
    "eps_lower[SNU]",
    "eps_upper[SNU]",
    "key_low[bits/symbol]",
    "key_point[bits/symbol]",
    "key_high[bits/symbol]",
)


# --- output helpers -------------------------------------------------------------------


def atomic_write(path: Path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _num(x):
    """JSON-safe float (non-finite values become null)."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


# --- keyrate --------------------------------------------------------------------------


def keyrate_report(scen: Scenario) -> tuple[dict, list[dict]]:
    params = scen.network()
    betas = scen.betas()
    fers = scen.fers()
    names = scen.user_names
    res = pr.evaluate_protocols(params, betas, scen.protocol_set(), scen.trust_ordering())
    unt = res.get(pr.Protocol.UNTRUSTED)
    tru = res.get(pr.Protocol.TRUSTED)
    rate = scen.symbol_rate

    def bps(key, l):
        return None if rate is None else pr.throughput(key, rate, fers[l])

    users, rows = [], []
    for l in range(params.n_users):
        trusted_set = []
        if tru is not None:
            pos = tru.ordering.index(l)
            trusted_set = [names[u] for u in tru.ordering[:pos]]
        entry = {
            "name": names[l],
            "transmittance": float(params.eta[l]),
            "excess_noise_snu": float(params.eps[l]),
            "electronic_noise_snu": float(params.nu[l]),
            "detector_efficiency": float(params.tau[l]),
            "beta": float(betas[l]),
            "frame_error_rate": float(fers[l]),
            "snr": kr.snr(params, l),
            "i_ab_bits_per_symbol": kr.mutual_information_ab(params, l),
            "plob_bits_per_symbol": _num(pr.plob_bound(float(params.eta[l]))),
        }
        if unt is not None:
            entry["untrusted"] = {
                "holevo_bits_per_symbol": float(unt.holevo[l]),
                "key_bits_per_symbol": float(unt.per_user[l]),
                "throughput_bits_per_s": _num(bps(unt.per_user[l], l)),
            }
        if tru is not None:
            entry["trusted"] = {
                "trusted_users": trusted_set,
                "holevo_bits_per_symbol": float(tru.holevo[l]),
                "key_bits_per_symbol": float(tru.per_user[l]),
                "throughput_bits_per_s": _num(bps(tru.per_user[l], l)),
            }
        users.append(entry)
        rows.append({
            "user": names[l],
            "transmittance": entry["transmittance"],
            "excess_noise[SNU]": entry["excess_noise_snu"],
            "electronic_noise[SNU]": entry["electronic_noise_snu"],
            "detector_efficiency": entry["detector_efficiency"],
            "beta": entry["beta"],
            "frame_error_rate": entry["frame_error_rate"],
            "snr": entry["snr"],
            "i_ab[bits/symbol]": entry["i_ab_bits_per_symbol"],
            "holevo_untrusted[bits/symbol]": float(unt.holevo[l]) if unt else "",
            "key_untrusted[bits/symbol]": float(unt.per_user[l]) if unt else "",
            "throughput_untrusted[bits/s]": bps(unt.per_user[l], l) if unt and rate else "",
            "trusted_users": " ".join(trusted_set),
            "holevo_trusted[bits/symbol]": float(tru.holevo[l]) if tru else "",
            "key_trusted[bits/symbol]": float(tru.per_user[l]) if tru else "",
            "throughput_trusted[bits/s]": bps(tru.per_user[l], l) if tru and rate else "",
            "plob[bits/symbol]": entry["plob_bits_per_symbol"] if entry["plob_bits_per_symbol"] is not None else "",
        })

    totals = {}
    for proto, r in res.items():
        t = {"key_bits_per_symbol": r.total, "positive_users": r.n_positive}
        if rate is not None:
            t["throughput_bits_per_s"] = float(np.sum(pr.throughput(r.per_user, rate, fers)))
        totals[proto.value] = t
    i_users = [[0.0 if i == j else kr.mutual_information_users(params, i, j) for j in range(params.n_users)]
               for i in range(params.n_users)] if params.n_users > 1 else None
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool_version": __version__,
        "command": "keyrate",
        "scenario": scen.name,
        "modulation_variance_snu": params.v_mod,
        "symbol_rate_hz": rate,
        "topology": params.resolved_topology,
        "trust_order": [names[u] for u in tru.ordering] if tru is not None else None,
        "users": users,
        "totals": totals,
        "user_mutual_information_bits": i_users,
    }
    return report, rows


# --- sweep ----------------------------------------------------------------------------


def _noise_slope(scen: Scenario, template: NetworkParams):
    model = scen.sweep.noise_model
    if model == "proportional":
        return np.asarray(template.link.eps_b) / template.v_mod
    if model == "linear":
        return scen.sweep.noise_slope
    return None


def _series_template(scen: Scenario, n: int | None) -> NetworkParams:
    if n is None or scen.symmetric is None:
        return scen.network()
    return replace(scen, symmetric=replace(scen.symmetric, users=n)).network()


def sweep_rows(scen: Scenario, threads: int = 1) -> list[pr.SweepRow]:
    sw = scen.sweep
    series = sw.series_users if sw.series_users and sw.axis != "users_n" else (None,)
    protocols = tuple(p for p in scen.protocol_set() if p is not pr.Protocol.PLOB)
    rows: list[pr.SweepRow] = []
    for n in series:
        template = _series_template(scen, n)
        beta = scen.beta if scen.users is None else scen.betas()
        rows += pr.sweep(template, sw.axis, sw.values, beta, protocols,
                         _noise_slope(scen, template), scen.trust_ordering(), threads)
    return rows


# --- montecarlo -----------------------------------------------------------------------


def _ci(e: est.EstimateWithCI, truth: float) -> dict:
    return {"point": e.point, "lower": e.lower, "upper": e.upper, "contains_truth": e.contains(truth)}


def _mc_run(params: NetworkParams, scen: Scenario, seed: int, with_mi: bool):
    mc = scen.montecarlo
    batch = est.simulate_channel(params, mc.rounds, seed)
    betas = scen.betas()
    users = []
    for l in range(params.n_users):
        ce = est.estimate_parameters((batch.alice_x, batch.alice_p), (batch.meas_x[l], batch.meas_p[l]),
                                     params.tau[l], params.nu[l], z=mc.z)
        ki = est.worst_case_key(params, ce, l, float(betas[l]))
        users.append({
            "eta": _ci(ce.eta, params.eta[l]),
            "excess_noise_snu": _ci(ce.eps, params.eps[l]),
            "key_interval_bits_per_symbol": {"low": ki.key_low, "point": ki.key_point, "high": ki.key_high},
        })
    out = {"seed": seed, "users": users}
    if with_mi:
        data = [np.concatenate([batch.alice_x, batch.alice_p])]
        data += [np.concatenate([batch.meas_x[l], batch.meas_p[l]]) for l in range(params.n_users)]
        xi = [np.concatenate([est.infer_noise(batch.meas_x[l], batch.alice_x),
                              est.infer_noise(batch.meas_p[l], batch.alice_p)]) for l in range(params.n_users)]
        out["mi_matrix_bits"] = _mi_matrix(data)
        out["noise_mi_matrix_bits"] = _mi_matrix(xi)
    return out


def _mi_matrix(series) -> list[list]:
    n = len(series)
    m = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            m[i][j] = m[j][i] = _num(est.empirical_mi(series[i], series[j]))
    return m


def montecarlo_report(scen: Scenario, seed: int | None = None, threads: int = 1) -> tuple[dict, list[dict]]:
    mc = scen.montecarlo
    if mc is None:
        raise ScenarioError(["montecarlo: missing (needed by the montecarlo command)"])
    if mc.rounds < est.MIN_SAMPLES:
        raise ScenarioError([f"montecarlo.rounds: {mc.rounds} rounds is too few for the confidence "
                             f"intervals (need at least {est.MIN_SAMPLES})"])
    params = scen.network()
    base = mc.seed if seed is None else seed
    seeds = [base + k for k in range(mc.seeds)]
    job = lambda k: _mc_run(params, scen, seeds[k], with_mi=k == 0)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            runs = list(ex.map(job, range(len(seeds))))
    else:
        runs = [job(k) for k in range(len(seeds))]

    names = scen.user_names
    cover = {"eta": [], "excess_noise_snu": []}
    rows = []
    for run in runs:
        for l, u in enumerate(run["users"]):
            for k in cover:
                cover[k].append(u[k]["contains_truth"])
            ki = u["key_interval_bits_per_symbol"]
            rows.append({
                "seed": run["seed"], "user": names[l],
                "eta_true": float(params.eta[l]), "eta_hat": u["eta"]["point"],
                "eta_lower": u["eta"]["lower"], "eta_upper": u["eta"]["upper"],
                "eps_true[SNU]": float(params.eps[l]), "eps_hat[SNU]": u["excess_noise_snu"]["point"],
                "eps_lower[SNU]": u["excess_noise_snu"]["lower"], "eps_upper[SNU]": u["excess_noise_snu"]["upper"],
                "key_low[bits/symbol]": ki["low"], "key_point[bits/symbol]": ki["point"],
                "key_high[bits/symbol]": ki["high"],
            })
    first = runs[0]
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool_version": __version__,
        "command": "montecarlo",
        "scenario": scen.name,
        "rounds": mc.rounds,
        "seeds": seeds,
        "z": mc.z,
        "users": [{"name": names[l], "transmittance": float(params.eta[l]),
                   "excess_noise_snu": float(params.eps[l])} for l in range(params.n_users)],
        "coverage": {k: float(np.mean(v)) for k, v in cover.items()},
        "mi_labels": ["alice"] + names,
        "mi_matrix_bits": first.pop("mi_matrix_bits"),
        "noise_mi_labels": names,
        "noise_mi_matrix_bits": first.pop("noise_mi_matrix_bits"),
        "runs": runs,
    }
    return report, rows


# --- entry point ----------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cvqpon", description="CV-QPON key-rate and Monte Carlo tool")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("keyrate", "per-user key rates for the scenario's network"),
                        ("sweep", "protocol totals over the scenario's sweep grid"),
                        ("montecarlo", "simulate, estimate and bound keys from finite data")):
        c = sub.add_parser(name, help=help_)
        c.add_argument("scenario", help="scenario file, or the name of a bundled scenario")
        c.add_argument("--out", type=Path, default=None, help="output directory")
        c.add_argument("--seed", type=_u64, default=None, help="base RNG seed (Monte Carlo)")
        c.add_argument("--threads", type=int, default=1, help="worker threads")
    return p


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in an unsigned 64-bit integer, got {text}")
    return v


def run(command: str, scen: Scenario, out: Path, seed: int | None = None, threads: int = 1) -> list[Path]:
    """Execute ``command`` and write its outputs under ``out``; returns the written paths."""
    written = []

    def emit(suffix: str, text: str):
        path = out / f"{scen.name}_{suffix}"
        atomic_write(path, text)
        written.append(path)

    if command == "keyrate":
        report, rows = keyrate_report(scen)
        emit("keyrate.json", _json(report))
        emit("keyrate.csv", _csv(KEYRATE_COLUMNS, rows))
        if scen.sweep is not None:
            emit("sweep.csv", pr.rows_to_csv(sweep_rows(scen, threads)))
    elif command == "sweep":
        if scen.sweep is None:
            raise ScenarioError(["sweep: missing (needed by the sweep command)"])
        emit("sweep.csv", pr.rows_to_csv(sweep_rows(scen, threads)))
    elif command == "montecarlo":
        report, rows = montecarlo_report(scen, seed, threads)
        emit("montecarlo.json", _json(report))
        emit("montecarlo.csv", _csv(MONTECARLO_COLUMNS, rows))
    else:
        raise ValueError(f"unknown command {command!r}")
    return written


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        scen = load(args.scenario)
        out = args.out or Path(scen.output_dir or ".")
        paths = run(args.command, scen, out, args.seed, args.threads)
    except ScenarioError as exc:
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
