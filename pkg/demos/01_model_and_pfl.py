"""The Pendubot model, its energy balance, and collocated PFL.

Run with ``python demos/01_model_and_pfl.py``.

The true robot uses the shipped parameters; the controller believes a model
whose link masses are 30 % too large and whose centres of mass sit 30 %
closer to the joints.  Under the nominal PFL torque the active joint
therefore does not follow the commanded acceleration exactly, and the
passive joint is mispredicted.  Those two gaps are what the learning loop
later estimates.
"""
import numpy as np

from pendulearn import (PerturbationSpec, forward_dynamics, pendubot_default, perturb, pfl_torque,
                        residual_active, residual_passive, rk4_step)
from pendulearn.dynamics import total_energy

true = pendubot_default()
frictionless = true.replace(friction=(0.0, 0.0))
nominal = perturb(true, PerturbationSpec.percent(0.3, -0.3, friction=(0.0, 0.0)))

# Free swing without friction: RK4 at 1 ms keeps the energy constant.
q, qd = np.array([2.0, 1.0]), np.array([3.0, -4.0])
E0 = total_energy(frictionless, q, qd)
for _ in range(1000):
    q, qd = rk4_step(frictionless, q, qd, [0.0], 1e-3)
print(f"energy drift after 1 s of free swing: {total_energy(frictionless, q, qd) - E0:.2e} J")

# PFL on the exact model makes the active joint a double integrator.
q, qd, u = np.array([0.4, -1.0]), np.array([1.5, 0.3]), 7.0
qdd = forward_dynamics(frictionless, q, qd, pfl_torque(frictionless, q, qd, [u]))
print(f"exact model: commanded {u:.3f}, realized {qdd[0]:.12f} rad/s^2")

# The same command computed on the wrong model.
tau = pfl_torque(nominal, q, qd, [u])
qdd = forward_dynamics(true, q, qd, tau)
print(f"perturbed model: realized {qdd[0]:.3f} rad/s^2")
print(f"  active residual  Y_a = {residual_active([u], qdd[:1])[0]:+.3f}")
print(f"  passive residual Y_p = {residual_passive(nominal, q, qd, qdd[:1], qdd[1:])[0]:+.3f}")
