"""Write the sweep CSVs of the bundled loss, user-count, modulation and ideal-link scenarios."""

import argparse
import time
from pathlib import Path

from cvqpon import cli
from cvqpon import scenario as sc

DEFAULT = ("fig2a", "fig2b", "fig4b", "figS2")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scenarios", nargs="*", default=DEFAULT)
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    for name in args.scenarios:
        t0 = time.perf_counter()
        for path in cli.run("sweep", sc.load(name), args.out, threads=args.threads):
            print(f"{path}  ({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
