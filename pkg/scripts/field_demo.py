"""Per-user key rates of the eight-user field demonstration, side by side with the measured values."""

import argparse

from cvqpon import data
from cvqpon import protocols as pr
from cvqpon import scenario as sc


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="table1")
    args = ap.parse_args()

    scen = sc.load(args.scenario)
    params = scen.network()
    res = pr.evaluate_protocols(params, scen.betas(), (pr.Protocol.UNTRUSTED, pr.Protocol.TRUSTED))
    fers = scen.fers()
    ku = pr.throughput(res[pr.Protocol.UNTRUSTED].per_user, scen.symbol_rate, fers) / 1e3
    kt = pr.throughput(res[pr.Protocol.TRUSTED].per_user, scen.symbol_rate, fers) / 1e3
    order = res[pr.Protocol.TRUSTED].ordering

    print(f"{'user':6}{'K_U [kbit/s]':>14}{'ref':>9}{'K_T [kbit/s]':>14}{'ref':>9}  trusts")
    for l, row in enumerate(data.TABLE1):
        trusted = ",".join(scen.user_names[u] for u in order[: order.index(l)]) or "-"
        print(f"{row.name:6}{ku[l]:14.2f}{row.key_untrusted_kbps:9.2f}{kt[l]:14.2f}{row.key_trusted_kbps:9.2f}  {trusted}")
    print(f"{'total':6}{ku.sum():14.1f}{'':9}{kt.sum():14.1f}")
    print(f"trusted / untrusted = {kt.sum() / ku.sum():.3f}")


if __name__ == "__main__":
    main()
