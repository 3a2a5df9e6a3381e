"""Seeded construction with a per-stage diagnostics table.

    python scripts/run_construction.py --seed random --n 16 --amplitude 1e-2
"""
import argparse
import json
import time

from singular_euler.grid import GridSpec
from singular_euler.solver import SEEDS, SolverConfig, make_seed, solve_data
from singular_euler.verifier import verify_solution


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--seed", choices=SEEDS, default="random")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--period", type=float, default=1.0)
    p.add_argument("--amplitude", type=float, default=1e-2)
    p.add_argument("--seed-id", type=int, default=0)
    p.add_argument("--n-steps", type=int, default=128)
    p.add_argument("--json", help="write the diagnostics here")
    args = p.parse_args()

    grid = GridSpec(args.n, args.period)
    f1 = make_seed(args.seed, grid, args.amplitude, args.seed_id)
    t0 = time.perf_counter()
    sol = solve_data(f1, SolverConfig(n_steps=args.n_steps))
    elapsed = time.perf_counter() - t0

    d = sol.diagnostics
    print(f"c = {sol.c_scale:.6g}, {elapsed:.1f} s")
    print(f"{'eps':>6} {'w_iters':>7} {'max_ratio':>10} {'elliptic':>10} {'v_inf_H2':>11} {'cont_dist':>10}")
    for s in d.get("stages", []):
        print(f"{s['eps']:>6g} {s['w_iterations']:>7d} {s['max_picard_ratio']:>10.2e} "
              f"{s['elliptic_residual']:>10.2e} {s['v_inf_H2'] * sol.c_scale:>11.3e} "
              f"{s.get('continuation_H2_distance', float('nan')):>10.2e}")
    if "decay_exponent_f2" in d:
        print(f"decay exponent of f2: {d['decay_exponent_f2']:.2f}")
    c = sol.c_scale
    rep = verify_solution(sol.field, c, [0.0, 0.5 / c, 0.9 / c])
    for e in rep.entries:
        t = "" if e.time is None else f" t={e.time:.3g}"
        print(f"{e.name}{t}: {e.residual:.2e} {e.verdict}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(d, fh, indent=1, default=float)


if __name__ == "__main__":
    main()
