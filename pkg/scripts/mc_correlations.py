"""Simulate the field network, estimate each link and print the mutual-information hierarchy."""

import argparse

import numpy as np

from cvqpon import estimation as est
from cvqpon import scenario as sc


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="table1")
    ap.add_argument("--rounds", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--reference", type=int, default=0, help="reference user index")
    args = ap.parse_args()

    scen = sc.load(args.scenario)
    params = scen.network()
    batch = est.simulate_channel(params, args.rounds, args.seed)

    print(f"{'user':6}{'eta':>10}{'eta_hat':>10}{'eps [mSNU]':>12}{'eps_hat':>10}{'eps 6.5-sigma CI':>22}")
    for l, name in enumerate(scen.user_names):
        e = est.estimate_parameters((batch.alice_x, batch.alice_p), (batch.meas_x[l], batch.meas_p[l]),
                                    params.tau[l], params.nu[l])
        ci = f"[{1e3 * e.eps.lower:.2f}, {1e3 * e.eps.upper:.2f}]"
        print(f"{name:6}{params.eta[l]:10.4f}{e.eta.point:10.4f}{1e3 * params.eps[l]:12.3f}"
              f"{1e3 * e.eps.point:10.3f}{ci:>22}")

    ca = est.correlation_analysis(batch, args.reference)
    ref = scen.user_names[args.reference]
    print(f"\nMI({ref}, Alice) = {ca.mi_alice:.3e} bits")
    for l, name in enumerate(scen.user_names):
        if l != args.reference:
            print(f"MI({ref}, {name}) = {ca.mi_users[l]:.3e}   MI of inferred noises = {ca.mi_noises[l]:.3e}")
    users = np.nanmean(ca.mi_users)
    print(f"\nAlice / users = {ca.mi_alice / users:.1f}, users / noises = {users / np.nanmean(ca.mi_noises):.1f}")


if __name__ == "__main__":
    main()
