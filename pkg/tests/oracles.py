"""Independent reference implementations used to check the package.

Nothing here imports the package's numerics: gates come from scipy's matrix
exponential, states are plain vectors or matrices, channels are written as
explicit Kraus sums.
"""
from __future__ import annotations

import math
from functools import reduce

import numpy as np
from scipy.linalg import expm

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"Rx": X, "Ry": Y, "Rz": Z}


def kron(*ops):
    return reduce(np.kron, ops)


def rotation(kind, angle):
    gen = kron(X, X) if kind == "Rxx" else PAULI[kind]
    return expm(-0.5j * angle * gen)


def op_on(op, target, n):
    """Single-qubit ``op`` on qubit ``target`` (qubit 0 is the leftmost factor)."""
    return kron(*[op if q == target else I2 for q in range(n)])


def cz(a, b, n):
    d = np.ones(2**n, dtype=complex)
    for idx in range(2**n):
        bits = [(idx >> (n - 1 - q)) & 1 for q in range(n)]
        if bits[a] and bits[b]:
            d[idx] = -1
    return np.diag(d)


def plus(theta):
    return np.array([1, np.exp(1j * theta)], dtype=complex) / math.sqrt(2)


def ket(bit):
    v = np.zeros(2, dtype=complex)
    v[bit] = 1
    return v


def random_density(n, rng, rank=None):
    d = 2**n
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary(d, rng):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def depolarizing_kraus_1q(q):
    """rho -> q rho + (1-q) I/2 written with Pauli Kraus operators."""
    p = (1 - q) / 4
    return [math.sqrt(q + p) * I2, math.sqrt(p) * X, math.sqrt(p) * Y, math.sqrt(p) * Z]


def apply_kraus(rho, kraus, target, n):
    out = np.zeros_like(rho)
    for k in kraus:
        K = op_on(k, target, n)
        out += K @ rho @ K.conj().T
    return out


def linear_cluster_stabilizers(n):
    """K_i = Z_{i-1} X_i Z_{i+1} for the n-qubit line."""
    gens = []
    for i in range(n):
        ops = [I2] * n
        ops[i] = X
        if i > 0:
            ops[i - 1] = Z
        if i < n - 1:
            ops[i + 1] = Z
        gens.append(kron(*ops))
    return gens


def trap_line_outcome_prob(theta, m, r, m_left, m_right):
    """Probability that the middle trap of dummy-trap-dummy returns b = r xor m_left xor m_right.

    Plain statevector: dummies |m_left>, |m_right>, trap |+_{theta + m pi}>, CZ on both
    edges, trap measured in the |+-_delta> basis with delta = theta + m pi + r pi.
    """
    psi = kron(ket(m_left), plus(theta + m * math.pi), ket(m_right))
    psi = cz(1, 2, 3) @ cz(0, 1, 3) @ psi
    delta = theta + (m + r) * math.pi
    expected = r ^ m_left ^ m_right
    proj_vec = plus(delta) if expected == 0 else plus(delta + math.pi)
    P = kron(I2, np.outer(proj_vec, proj_vec.conj()), I2)
    return float(np.real(psi.conj() @ P @ psi))


def jones(delta, x):
    """Textbook retarder with fast axis at ``x``: R(-x) diag(1, e^{i delta}) R(x), phase-centred."""
    c, s = math.cos(x), math.sin(x)
    R = np.array([[c, s], [-s, c]])
    return np.exp(-0.5j * delta) * (R.T @ np.diag([1, np.exp(1j * delta)]) @ R)


def hoeffding(t, alpha=0.05):
    return math.sqrt(math.log(2 / alpha) / (2 * t))
