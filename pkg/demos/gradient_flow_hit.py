"""Plain gradient flow on the same potential reaches the minimizer in finite time.

Started on the boundary of the radial disk, the hit time and the path length
both have closed forms; the path is a straight ray so the length is the radius.

    python3 demos/gradient_flow_hit.py
"""
import math

from nesterov_lab import IntegratorConfig, PotentialSpec, integrate_gradient_flow
from nesterov_lab.oracles import gradient_flow_hit_time

r0 = math.exp(-2.0)


def main():
    spec = PotentialSpec.pure_radial()
    run = integrate_gradient_flow(spec, (r0, 0.0), IntegratorConfig(t0=0.0, t_end=1.0))
    hit = [m for m in run.markers if m.kind == "MinimizerReached"]
    print(f"hit time numeric   {hit[0].time:.10f}")
    print(f"hit time exact     {gradient_flow_hit_time(r0):.10f}")
    print(f"path length        {run.arclength[-1]:.10f}  (radius {r0:.10f})")


if __name__ == "__main__":
    main()
