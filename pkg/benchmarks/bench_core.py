"""Time Hamiltonian assembly with the compiled core and with the numpy fallback.

Usage: ``python3 benchmarks/bench_core.py [--repeat N]``.  Each backend runs
in its own interpreter because the choice is fixed at import.
"""
import argparse
import json
import os
import subprocess
import sys

SNIPPET = r"""
import json, timeit
import numpy as np
import specrg
from specrg.fock import build_basis
from specrg.grid import MomentumGrid
from specrg.kernels import assemble_hamiltonian, random_family

out = {"backend": specrg.BACKEND}
for nk, nmax in ((8, 2), (12, 3), (16, 3)):
    grid = MomentumGrid(0.5, nk)
    basis = build_basis(grid, nmax, 2.0)
    fam = random_family(grid, np.random.default_rng(0))
    t = min(timeit.repeat(lambda: assemble_hamiltonian(fam, basis), number=1, repeat=REPEAT))
    out[f"N_k={nk} n_max={nmax} dim={basis.dim}"] = t
from specrg._kernels import scatter_monomial
rng = np.random.default_rng(1)
dim, nu, ni, nj = 2000, 400, 64, 64
args = (rng.integers(-1, dim, (nu, ni)), rng.normal(size=(nu, ni)), rng.integers(-1, dim, (nu, nj)),
        rng.normal(size=(nu, nj)), rng.normal(size=(nu, ni, nj)) + 0j)
buf = np.zeros((dim, dim), complex)
t = min(timeit.repeat(lambda: scatter_monomial(buf, *args), number=1, repeat=REPEAT))
out[f"scatter only, {nu * ni * nj} terms"] = t
print(json.dumps(out))
"""


def run(pure: bool, repeat: int) -> dict:
    env = dict(os.environ, SPECRG_PURE_PYTHON="1" if pure else "0")
    res = subprocess.run([sys.executable, "-c", SNIPPET.replace("REPEAT", str(repeat))],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    fast, slow = run(False, args.repeat), run(True, args.repeat)
    if fast["backend"] != "cython":
        print("compiled core not available; both columns use the fallback")
    print(f"{'case':32s} {'cython [s]':>11s} {'python [s]':>11s} {'speed-up':>9s}")
    for key in fast:
        if key == "backend":
            continue
        print(f"{key:32s} {fast[key]:11.4f} {slow[key]:11.4f} {slow[key] / fast[key]:8.1f}x")


if __name__ == "__main__":
    main()
