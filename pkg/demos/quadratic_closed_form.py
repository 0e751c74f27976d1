"""Integrate the damped flow on a 2-d quadratic and compare with the Bessel closed form.

Also prints the path length, which stays finite on a quadratic.

    python3 demos/quadratic_closed_form.py
"""
import numpy as np

from nesterov_lab import IntegratorConfig, PotentialSpec, integrate_nesterov
from nesterov_lab.oracles import QuadraticSpec, quadratic_arclength, quadratic_nesterov_closed_form


def main():
    lambdas, x0 = (1.0, 4.0), (1.0, 1.0)
    run = integrate_nesterov(PotentialSpec.quadratic(lambdas=lambdas), x0,
                             IntegratorConfig(t0=1e-6, t_end=200.0, abs_tol=1e-16))
    exact = QuadraticSpec.diagonal(lambdas, x0)
    X, _ = quadratic_nesterov_closed_form(exact, run.t)
    print(f"samples            {run.t.size}")
    print(f"max |X - X_exact|  {np.max(np.abs(run.X - X)):.2e}")

    ref = quadratic_arclength(exact, 200.0)
    print(f"arclength numeric  {run.arclength[-1]:.10f}")
    print(f"arclength exact    {ref.value:.10f}  (tail beyond t=200 at most {ref.tail_bound:.1e})")


if __name__ == "__main__":
    main()
