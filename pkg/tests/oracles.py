"""Independent reference implementations used as test oracles.

The rigid-body oracle builds the inertia matrix from numerical Jacobians of
the link centres of mass, gravity from the gradient of the potential energy
and Coriolis terms from Christoffel symbols of the numerically differentiated
inertia matrix.  None of it shares code with the package.
"""
import numpy as np

H = 1e-6   # finite-difference oracle: trust it to about 1e-5 relative


def com_positions(p, q):
    s1, c1 = np.sin(q[0]), np.cos(q[0])
    s12, c12 = np.sin(q[0] + q[1]), np.cos(q[0] + q[1])
    a1, a2 = p.com
    l1 = p.length[0]
    return (np.array([a1 * s1, -a1 * c1]),
            np.array([l1 * s1 + a2 * s12, -l1 * c1 - a2 * c12]))


def _jac(f, q, h=H):
    q = np.asarray(q, dtype=float)
    cols = []
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        cols.append((f(q + e) - f(q - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def inertia(p, q):
    J1 = _jac(lambda x: com_positions(p, x)[0], q)
    J2 = _jac(lambda x: com_positions(p, x)[1], q)
    Jw1 = np.array([[1.0, 0.0]])
    Jw2 = np.array([[1.0, 1.0]])
    return (p.mass[0] * J1.T @ J1 + p.mass[1] * J2.T @ J2
            + p.inertia[0] * Jw1.T @ Jw1 + p.inertia[1] * Jw2.T @ Jw2)


def potential(p, q):
    def raw(x):
        y1, y2 = com_positions(p, x)
        return p.g * (p.mass[0] * y1[1] + p.mass[1] * y2[1])
    return raw(np.asarray(q, dtype=float)) - raw(np.zeros(2))


def gravity(p, q):
    return _jac(lambda x: np.atleast_1d(potential(p, x)), q)[0]


def coriolis(p, q, qd):
    dM = [_jac(lambda x, i=i, j=j: np.atleast_1d(inertia(p, x)[i, j]), q, 1e-4)[0]
          for i in range(2) for j in range(2)]
    dM = np.array(dM).reshape(2, 2, 2)       # dM[i, j, k] = d M_ij / d q_k
    c = np.zeros(2)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                c[i] += 0.5 * (dM[i, j, k] + dM[i, k, j] - dM[j, k, i]) * qd[j] * qd[k]
    return c


def bias(p, q, qd):
    return coriolis(p, q, qd) + gravity(p, q) + np.asarray(p.friction) * qd


def accel(p, q, qd, tau):
    return np.linalg.solve(inertia(p, q), np.array([tau, 0.0]) - bias(p, q, qd))


def energy(p, q, qd):
    return 0.5 * qd @ inertia(p, q) @ qd + potential(p, q)


def gp_dense(X, Y, Xq, a, l, s2):
    """GP posterior with an explicit matrix inverse, no standardization."""
    def k(A, B):
        d = A[:, None, :] - B[None, :, :]
        return a * a * np.exp(-np.sum(d * d, axis=-1) / (2 * l * l))
    Kinv = np.linalg.inv(k(X, X) + s2 * np.eye(len(X)))
    Ks = k(Xq, X)
    return Ks @ Kinv @ Y, a * a - np.einsum("ij,jk,ik->i", Ks, Kinv, Ks)


def dare_scalar(a, b, q, r):
    """Positive root of the scalar discrete Riccati equation."""
    # p = q + a^2 p - a^2 b^2 p^2 / (r + b^2 p)  ->  b^2 p^2 + (r(1-a^2) - q b^2) p - q r = 0
    A = b * b
    B = r * (1 - a * a) - q * b * b
    C = -q * r
    return (-B + np.sqrt(B * B - 4 * A * C)) / (2 * A)
