"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from tvdnpl.distributions import Dataset, ModelSpec, build_empirical
from tvdnpl.kernels import get_backend
from tvdnpl.losses import LossKind, Objective
from tvdnpl.simgen import NoisyProbit, SimConfig, ZeroInfBinomial, simulate


def cases():
    rng = np.random.default_rng(0)
    pois = Dataset.from_outcomes(rng.poisson(3.0, 400))
    zib = simulate(SimConfig(ZeroInfBinomial(), 800, 0, 1))
    prob = simulate(SimConfig(NoisyProbit(), 450, 0, 2))
    return [
        ("poisson n=400", pois, ModelSpec.poisson(), np.array([1.1])),
        ("binomial n=800", zib, ModelSpec.binomial(8, 1), np.array([0.8, 0.25])),
        ("probit n=450", prob, ModelSpec.probit(2), np.array([0.5, 1.5, -1.0])),
        ("mlp h=8 n=450", prob, ModelSpec.mlp(2, 8), ModelSpec.mlp(2, 8).init_params()),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    args = ap.parse_args()
    try:
        cy = get_backend("cython")
    except ImportError:
        print("compiled backend not built; nothing to compare")
        return
    py = get_backend("python")
    print(f"{'case':<18}{'loss':<6}{'python us':>12}{'cython us':>12}{'speedup':>10}")
    for name, data, model, theta in cases():
        emp = build_empirical(data)
        for kind in (LossKind.TVD, LossKind.KLD):
            times = []
            for backend in (py, cy):
                obj = Objective(kind, emp, model, backend=backend)
                t = min(timeit.repeat(lambda: obj(theta), number=args.repeat, repeat=3))
                times.append(1e6 * t / args.repeat)
            print(f"{name:<18}{kind.value:<6}{times[0]:>12.1f}{times[1]:>12.1f}{times[0] / times[1]:>9.1f}x")


if __name__ == "__main__":
    main()
