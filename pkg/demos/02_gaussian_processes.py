"""Gaussian-process regression with a fixed data budget.

Run with ``python demos/02_gaussian_processes.py``.

A GP fits a noisy one-dimensional function, its hyperparameters are tuned by
maximizing the marginal likelihood, and then a stream of 400 points is fed
through the budgeted insert that keeps only the 40 most informative ones.
"""
import numpy as np

from pendulearn.gp import GPStack, Hyperparams, fit, log_marginal_likelihood, optimize_hyperparams

rng = np.random.default_rng(0)
X = rng.uniform(-3, 3, (60, 1))
Y = np.sin(2 * X[:, 0]) + 0.05 * rng.normal(size=60)

guess = Hyperparams(amplitude=1.0, length_scale=3.0, noise_var=1e-2)
tuned = optimize_hyperparams(X, Y, guess, optimize_noise=True)
print(f"log marginal likelihood: {log_marginal_likelihood(X, Y, guess):.1f} with the guess, "
      f"{log_marginal_likelihood(X, Y, tuned):.1f} after tuning")
print(f"tuned hyperparameters: {tuned}")

model = fit(X, Y, tuned)
grid = np.linspace(-3, 3, 7)[:, None]
mu, var = model.predict_batch(grid)
for x, m, v in zip(grid[:, 0], mu, var):
    print(f"  x = {x:+.1f}: mean {m:+.3f} (true {np.sin(2 * x):+.3f}), std {np.sqrt(v):.3f}")

stack = GPStack.empty(1, [tuned])
for x in rng.uniform(-3, 3, (400, 1)):
    stack = stack.reduced_insert(x, [np.sin(2 * x[0])], budget=40)
print(f"budgeted set after 400 offers: {stack.size} points, "
      f"spread {np.ptp(stack.X):.2f} over an input range of 6")
