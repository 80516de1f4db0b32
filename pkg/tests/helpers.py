"""Random problem instances shared by the optimizer-related tests."""

import numpy as np

from corridorplan.corridor import Corridor, Sphere
from corridorplan.trajopt.optimizer import Boundary, OptimizerConfig, OptimizerState


def random_corridor(r, m):
    """Chain of ``m`` overlapping spheres along a random walk."""
    spheres = []
    c = np.zeros(3)
    rad = r.uniform(0.5, 2.0)
    for _ in range(m):
        spheres.append(Sphere(c.copy(), c + rad, rad))
        nxt = r.uniform(0.5, 2.0)
        step = r.normal(size=3)
        step *= r.uniform(0.3, 0.9) * (rad + nxt) / np.linalg.norm(step)
        c = c + step
        rad = nxt
    return Corridor(spheres)


def random_problem(r, m, s=4, active=True):
    """Corridor, state near the lens centers, boundary and config.

    With ``active`` the limits are tight so every penalty term contributes.
    """
    corridor = random_corridor(r, m)
    centers = corridor.centers
    q = 0.5 * (centers[:-1] + centers[1:]) + r.normal(0, 0.4, (m - 1, 3))
    tau = np.log(r.uniform(0.3, 1.5, m))
    start = np.vstack([centers[0], r.normal(0, 1, (s - 1, 3))])
    goal = np.vstack([centers[-1], np.zeros((s - 1, 3))])
    vmax, amax = (1.0, 2.0) if active else (100.0, 100.0)
    cfg = OptimizerConfig(v_max=vmax, a_max=amax, order=s, rho_vel=1e3, rho_acc=1e3, rho_col=1e4, rho_time=50.0)
    return OptimizerState(tau, q), corridor, Boundary(start, goal), cfg
