"""Bootstrap against conditional Monte Carlo tests when the nuisance fit can go wrong.

Pairs (X, Y) ~ N(psi, sigma2) x N(psi^2, sigma2) with psi = 2: the likelihood
in psi has two maxima, near 2 and near -1.7, and Newton-Raphson lands in one
or the other depending on its start. The bootstrap reference law inherits the
fitted psi; the conditional one is free of it.

    python demos/parabola_tests.py [datasets]
"""

import sys

from condinf.families import NormalParabola
from condinf.mctest import McTestSpec, run_bootstrap_test, run_conditional_test
from condinf.streams import stream


def main(datasets=200):
    model = NormalParabola()
    data0 = model.sample(1.0, 2.0, stream(0, "demo-data"), size=100)
    print("roots of the psi score on one dataset:", model.score_roots(data0).round(3))
    print(f"\nrejection rate at level 0.05 over {datasets} datasets, H0: sigma2 = 1")
    print(f"{'sigma2':>6s} {'start':>6s} {'conditional':>12s} {'bootstrap':>10s}")
    for sigma2 in (1.0, 2.0):
        for start in (1.5, -1.5):
            spec = McTestSpec(model, 1.0, L=100, nr_start=start)
            hits = {"c": 0, "b": 0}
            for j in range(datasets):
                data = model.sample(sigma2, 2.0, stream(0, f"demo-{sigma2}", j), size=100)
                hits["c"] += run_conditional_test(spec, data, stream(0, "demo-sim", j)).rejects(0.05)
                hits["b"] += run_bootstrap_test(spec, data, stream(0, "demo-sim", j)).rejects(0.05)
            print(f"{sigma2:6.1f} {start:6.1f} {hits['c'] / datasets:12.3f} {hits['b'] / datasets:10.3f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 200)
