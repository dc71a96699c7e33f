"""LQR balancing at the upright equilibrium.

Run with ``python demos/04_balancing.py``.

The gain comes from a discrete Riccati equation on the nominal model's
linearization.  It is then applied to the true robot from a state inside the
terminal box.
"""
import numpy as np

from pendulearn import PerturbationSpec, State, lqr_design, pendubot_default, perturb, rk4_step

true = pendubot_default()
nominal = perturb(true, PerturbationSpec.percent(0.3, -0.3, friction=(0.0, 0.0)))
goal = State.of([np.pi, 0.0])
ctrl = lqr_design(nominal, goal, np.diag([10.0, 1.0, 0.1, 30.0]), [[1.0]], Ts=0.01)
print(f"gain K = {np.round(ctrl.K, 2)}")
print(f"closed-loop spectral radius on the nominal model: "
      f"{max(abs(np.linalg.eigvals(ctrl.closed_loop))):.4f}")

q, qd = goal.q + np.array([0.1, -0.1]), np.array([0.2, 0.3])
for k in range(301):
    if k % 50 == 0:
        err = np.r_[q - goal.q, qd]
        print(f"  t = {k * 0.01:.1f} s  |error| = {np.linalg.norm(err):.4f}")
    tau = ctrl.torque(q, qd)
    for _ in range(10):
        q, qd = rk4_step(true, q, qd, tau, 1e-3)
