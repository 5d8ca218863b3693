"""Compare the numba kernels with the pure-Python fallback.

Each backend runs in its own interpreter because the switch is read at
import time.  Usage::

    python3 benchmarks/bench_kernels.py [--repeat 3] [--n 20]
"""
import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from reorderdg import _jit
from reorderdg.cases import five_spot
from reorderdg.driver import initial_pressure, initial_state
from reorderdg.fluxgraph import build_graph, condense_and_sort, graph_from_edges
from reorderdg.pressure import solve_pressure
from reorderdg.transport import Discretization, transport_step

n, degree, repeat = int(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3])
case = five_spot(n=n, degree=degree)
disc = Discretization(case.mesh, degree)
state = initial_state(disc, case.sw_init)
p = initial_pressure(case)
dt = case.schedule.dt_initial
means = disc.means(state.s)
ps = solve_pressure(case.mesh, case.rock, case.fluid, case.wells, means, p, dt)
D = disc.coefficients(case.rock, case.fluid, ps, state.s, p, means, dt)
P = case.settings.params(case.fluid, dt)
graph = build_graph(case.mesh, ps, case.fluid)
order = condense_and_sort(graph)

rng = np.random.default_rng(0)
m = 20000
edges = rng.integers(0, m, size=(4 * m, 2))
big = graph_from_edges(m, map(tuple, edges.tolist()))

def best(fn):
    t0 = time.perf_counter(); out = fn(); first = time.perf_counter() - t0
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter(); fn(); times.append(time.perf_counter() - t0)
    return first, min(times), out

first_t, t_step, (new, stats) = best(lambda: transport_step(D, P, order, graph, state))
first_g, t_graph, _ = best(lambda: condense_and_sort(big))
print(json.dumps({"backend": _jit.backend(), "transport_first": first_t,
                  "transport": t_step, "scc_first": first_g, "scc": t_graph,
                  "iterations": stats.total_iterations, "checksum": float(np.sum(new.s))}))
"""


def measure(disable, n, degree, repeat):
    env = dict(os.environ)
    env.pop("REORDERDG_DISABLE_JIT", None)
    if disable:
        env["REORDERDG_DISABLE_JIT"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKER, str(n), str(degree), str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20, help="five-spot grid size")
    ap.add_argument("--degree", type=int, default=1, choices=(0, 1))
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    t0 = time.perf_counter()
    jit = measure(False, args.n, args.degree, args.repeat)
    py = measure(True, args.n, args.degree, args.repeat)
    print(f"five-spot {args.n}x{args.n}, dG({args.degree}), {jit['iterations']} cell Newton "
          f"iterations per transport step")
    print(f"{'kernel':<28}{'numba':>12}{'python':>12}{'speed-up':>10}")
    for key, label in (("transport", "transport step [s]"), ("scc", "SCC + sort, 20k nodes [s]")):
        print(f"{label:<28}{jit[key]:>12.4f}{py[key]:>12.4f}{py[key] / jit[key]:>10.1f}")
    print(f"{'first call incl. compile':<28}{jit['transport_first']:>12.2f}"
          f"{py['transport_first']:>12.2f}")
    same = abs(jit["checksum"] - py["checksum"]) <= 1e-10 * abs(py["checksum"])
    print(f"results agree: {same}  (total {time.perf_counter() - t0:.0f} s)")
    return 0 if same else 1


if __name__ == "__main__":
    raise SystemExit(main())
