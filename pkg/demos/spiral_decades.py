"""Short version of the canonical spiral run: decade-by-decade path length.

Hands off to the orbit-averaged leg at t=100 (the reproduction uses 1000),
so the whole script takes a few seconds.  The increments shrink only slowly,
roughly like 1/k, which is what makes the total length diverge.

    python3 demos/spiral_decades.py [t_end]
"""
import sys

from nesterov_lab import IntegratorConfig, PotentialSpec, diagnose, integrate_long_horizon


def main(t_end=1e4):
    spec = PotentialSpec.pathological(a=0.02, eps=50.0)
    cfg = IntegratorConfig(t0=1e-6, t_end=t_end, abs_tol=1e-16)
    traj = integrate_long_horizon(spec, (0.04, 0.02), cfg, polar_handoff=1e2, averaged_from=1e2)
    rep = diagnose(traj, spec, X0=(0.04, 0.02))

    for leg in traj.info["legs"]:
        print("leg", leg)
    print(f"kappa = t^3 J      {rep.kappa:.6e} +- {rep.kappa_std:.1e}")
    print(f"path length        {rep.arclength_final:.4f}")
    print("decade   increment   k * increment")
    for row in rep.decade_arclength:
        print(f"{row.k:>6}   {row.increment:.5f}     {row.scaled_k:.4f}")


if __name__ == "__main__":
    main(float(sys.argv[1]) if len(sys.argv) > 1 else 1e4)
