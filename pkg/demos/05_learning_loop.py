"""The full plan, execute and learn loop on a short transfer.

Run with ``python demos/05_learning_loop.py`` (about 10 s).

Each iteration plans with the current passive-joint regressor and then
tracks the plan with PD control plus the learned active-joint correction.
The data harvested along the way updates both regressors.  The shipped scenarios are run the same way from the
command line, for example ``pendulearn run configs/scenario1_swingup.cfg``.
"""
from pendulearn import parse_text, run_until_converged

CONFIG = """
[scenario]
name = short-transfer
seed = 0

[perturbation]
mass_change = 0.3
com_change = -0.3
friction_scale = 0

[ocp]
T = 0.5
N = 50
start = 3*pi/4, pi/4
goal = pi, 0
Q = 10, 10, 1, 1

[controller]
Q_b = 10, 1, 0.1, 30
R_b = 1

[run]
hold_time = 0.3
"""

cfg = parse_text(CONFIG)
session = cfg.session()
report = run_until_converged(session, 4, scenario=cfg.name)
print(f"converged: {report.converged} after {report.iterations_used} iteration(s)")
print(f"{'':18}{'q1 RMSE':>10}{'q2 RMSE':>10}")
for label, (e1, e2) in report.rmse_table():
    print(f"{label:18}{e1:10.4f}{e2:10.4f}")
print(f"training data: {session.eps_a.size} active points (budgeted), "
      f"{session.eps_p.size} passive points")
