"""Bias of the vertex Hölder fit on exact degenerate profiles (no PDE solve).

Samples c t + k z^beta on [0, 1] at increasing resolution, fits the exponent
of Du at the vertex z = 0, and prints the time exponent the fit predicts. The
true time exponent of the profile is 1 for every gamma.

    python3 scripts/holder_bias.py
"""

import numpy as np

from vispar.core import Grid, SpaceTimeField
from vispar.estimates import ExactSolution
from vispar.regularity import measure_regularity, predicted_time_exponent


def main(sizes=(1025, 4097, 16385, 65537), gammas=(1.0, 3.0)):
    print(f"{'gamma':>5} {'n':>6} {'alpha_fit':>9} {'target':>7} {'predicted':>9} {'fitted_t':>8}")
    for gamma in gammas:
        sol = ExactSolution.degenerate_profile(gamma)
        for n in sizes:
            g = Grid.box([0.0], [1.0], n, -1 / 64, 0.0, 16)
            x = g.coords()[0]
            vals = np.stack([sol.value((x,), t) for t in g.times()])
            rep = measure_regularity(SpaceTimeField(g, vals), gamma, center=(0.0,), r0=1.0, clip=True,
                                     time_point=(0.5,))
            a = rep.alpha_space.alpha
            print(f"{gamma:5g} {n:6d} {a:9.4f} {1 / (1 + gamma):7.4f} "
                  f"{predicted_time_exponent(a, gamma):9.4f} {rep.alpha_time_u.exponent:8.4f}")


if __name__ == "__main__":
    main()
