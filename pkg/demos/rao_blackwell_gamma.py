"""Rao-Blackwellising a scale estimator with co-sufficient runs.

The estimator mean(X_1..X_k) / a of the Gamma(a, b) scale uses only k of the
n = 100 observations. Averaging it over proxy runs given sum X brings its
variance down to that of the full-sample estimator for every k.

    python demos/rao_blackwell_gamma.py
"""

from condinf.families import Gamma
from condinf.raoblackwell import MeanEstimatorFamily, run_variance_study
from condinf.streams import stream


def main():
    rep = run_variance_study(Gamma(2.0, 1.0), MeanEstimatorFamily(2.0), 100, [2, 5, 10, 20, 40, 80],
                             outer_reps=200, inner_reps=300, streams=lambda j: stream(3, "demo-rb", j))
    print(f"{'k':>3s} {'var raw':>9s} {'var RB':>9s} {'1/(2k)':>8s}")
    for r in rep.rows:
        print(f"{r.k:3d} {r.var_raw:9.5f} {r.var_rb:9.5f} {1 / (2 * r.k):8.5f}")
    print(f"full-sample variance 1/(2n) = {1 / 200:.5f}")


if __name__ == "__main__":
    main()
