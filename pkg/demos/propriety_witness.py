"""Minimise the expected energy score over forecasts on a grid.

The minimiser should coincide with the true distribution.

    python demos/propriety_witness.py
"""

import numpy as np

from discouq import propriety as P


def main():
    grid = np.linspace(-4, 4, 101)
    cases = {
        "gaussian": P.gaussian_on_grid(grid),
        "mixture": P.mixture_on_grid(grid, [-1.5, 1.5], [0.5, 0.5]),
        "skewed clusters": P.clusters_on_grid(grid, [-2.5, 0.5, 3.0], [0.2, 0.5, 0.3]),
        "point mass": P.point_mass_on_grid(grid, 1.0),
    }
    for label, p in cases.items():
        r = P.minimize_expected_score(p, grid)
        print(f"{label:16s} TV {r.tv:.2e}  residual {r.residual:.2e}  iterations {r.iterations}")

    pts = P.grid_2d(-3, 3, 21)
    p = P.gaussian_on_grid_2d(pts, (0.5, -0.5), 0.8)
    r = P.minimize_expected_score(p, pts)
    print(f"{'2-D gaussian':16s} TV {r.tv:.2e}  residual {r.residual:.2e}  iterations {r.iterations}")


if __name__ == "__main__":
    main()
