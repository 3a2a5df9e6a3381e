"""Run the 2-D rigidity chain over random divergence-free pairs and tally the first failed step.

    python scripts/rigidity_sweep.py --count 1000 --n 32
"""
import argparse
from collections import Counter

import numpy as np

from singular_euler.grid import Field2D
from singular_euler.verifier import rigidity_2d


def stream_pair(rng, n, band, amp):
    a = np.rint(np.fft.fftfreq(n) * n)
    A1, A2 = np.meshgrid(a, a, indexing="ij")
    mask = (np.maximum(np.abs(A1), np.abs(A2)) <= band) & ((A1 != 0) | (A2 != 0))
    psi = np.fft.ifft2((rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * mask).real
    psi = Field2D(amp * psi / np.max(np.abs(psi)), 1.0)
    return Field2D(psi.partial(2), 1.0), Field2D(-psi.partial(1), 1.0)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    tally = Counter()
    for _ in range(args.count):
        f1, f2 = stream_pair(rng, args.n, int(rng.integers(1, 5)), 10.0 ** rng.uniform(-4, 2))
        tally[rigidity_2d(f1, f2).verdict] += 1
    for verdict, k in tally.most_common():
        print(f"{k:>6}  {verdict}")


if __name__ == "__main__":
    main()
