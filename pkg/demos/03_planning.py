"""Plan a swing-up on the nominal model.

Run with ``python demos/03_planning.py`` (about 3 s).

The planner solves the optimal control problem by single shooting with an
augmented Lagrangian.  The resulting reference is exact for the model it was
planned on: re-simulating the inputs reproduces it to machine precision.
Played open loop on the real robot it misses the goal badly.
"""
import numpy as np

from pendulearn import OCPSpec, PerturbationSpec, State, pendubot_default, perturb, rk4_step, solve_ocp

true = pendubot_default()
nominal = perturb(true, PerturbationSpec.percent(0.3, -0.3, friction=(0.0, 0.0)))
spec = OCPSpec(N=160, Ts=0.01, x_start=State.of([0.0, 0.0]), x_goal=State.of([np.pi, 0.0]),
               Q=np.diag([10.0, 10.0, 1.0, 1.0]))
ref = solve_ocp(spec, nominal)
print(f"planner converged: {ref.converged}, cost {ref.cost:.1f}, "
      f"{ref.outer_iterations} outer / {ref.inner_iterations} inner iterations")
print(f"planned end state: q = {np.round(ref.q[-1], 3)}, qd = {np.round(ref.qd[-1], 3)}")
print(f"peak planned speeds: {np.round(np.abs(ref.qd).max(0), 2)} rad/s (limits 8 and 15)")

# Open-loop replay of the planned active accelerations through the true robot
# is not meaningful (the planner outputs accelerations, not torques), so replay
# the nominal PFL torques instead.
from pendulearn import pfl_torque

q, qd = np.zeros(2), np.zeros(2)
for k in range(spec.N):
    tau = pfl_torque(nominal, q, qd, ref.u[k])
    for _ in range(10):
        q, qd = rk4_step(true, q, qd, tau, 1e-3)
print(f"open-loop end state on the true robot: q = {np.round(q, 3)}")
