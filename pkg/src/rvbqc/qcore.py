"""Dense density-matrix engine for small registers (1 to 6 qubits).

Qubit 0 is the most significant tensor factor, so the basis index of
``|q0 q1 ... q_{n-1}>`` is ``q0 * 2**(n-1) + ... + q_{n-1}``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

MAX_QUBITS = 6

# Invariant checks after every operation; switched on by the test-suite.
CHECK_INVARIANTS = os.environ.get("RVBQC_CHECK", "") not in ("", "0")


class SizeError(ValueError):
    """Register size outside the supported 1..6 qubit range."""


class InvariantError(ValueError):
    """A matrix that is not a valid density operator within tolerance."""


def set_invariant_checks(enabled: bool) -> None:
    global CHECK_INVARIANTS
    CHECK_INVARIANTS = bool(enabled)


class DensityMatrix:
    """A 2^n x 2^n density operator. Treated as immutable by every function here."""

    __slots__ = ("num_qubits", "data")

    def __init__(self, data: np.ndarray, num_qubits: int | None = None):
        data = np.asarray(data, dtype=complex)
        dim = data.shape[0]
        n = int(round(np.log2(dim))) if num_qubits is None else num_qubits
        if not 1 <= n <= MAX_QUBITS:
            raise SizeError(f"number of qubits must be in 1..{MAX_QUBITS}, got {n}")
        if data.shape != (2**n, 2**n):
            raise SizeError(f"expected a {2**n}x{2**n} matrix, got {data.shape}")
        self.num_qubits = n
        self.data = data
        if CHECK_INVARIANTS:
            check_invariants(self)

    def __repr__(self) -> str:
        return f"DensityMatrix(num_qubits={self.num_qubits})"

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def probabilities(self) -> np.ndarray:
        """Computational-basis populations."""
        return np.real(np.diag(self.data)).copy()


def check_invariants(state: DensityMatrix, herm_tol=1e-10, trace_tol=1e-9, psd_tol=1e-9) -> None:
    rho = state.data
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise InvariantError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > trace_tol:
        raise InvariantError(f"trace {np.trace(rho).real:.12f} differs from 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -psd_tol:
        raise InvariantError("density matrix has a negative eigenvalue")


def new_state(n: int) -> DensityMatrix:
    """Return |0...0><0...0| on ``n`` qubits."""
    if not 1 <= n <= MAX_QUBITS:
        raise SizeError(f"number of qubits must be in 1..{MAX_QUBITS}, got {n}")
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[0, 0] = 1.0
    return DensityMatrix(rho, n)


def from_pure(psi: Sequence[complex]) -> DensityMatrix:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return DensityMatrix(np.outer(psi, psi.conj()))


def tensor(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    """Joint state ``a (x) b``; ``b``'s qubits are appended after ``a``'s."""
    return DensityMatrix(np.kron(a.data, b.data), a.num_qubits + b.num_qubits)


def _check_targets(targets: Sequence[int], n: int) -> tuple[int, ...]:
    targets = tuple(int(t) for t in targets)
    if len(set(targets)) != len(targets):
        raise ValueError(f"targets must be distinct, got {targets}")
    for t in targets:
        if not 0 <= t < n:
            raise IndexError(f"qubit index {t} out of range for {n} qubits")
    return targets


def _apply_operator(rho: np.ndarray, n: int, op: np.ndarray, targets: tuple[int, ...]) -> np.ndarray:
    """Return op rho op^dagger with ``op`` acting on ``targets``."""
    k = len(targets)
    t = rho.reshape((2,) * (2 * n))
    opt = op.reshape((2,) * (2 * k))
    ins = list(range(k, 2 * k))
    t = np.tensordot(opt, t, axes=(ins, list(targets)))
    t = np.moveaxis(t, list(range(k)), list(targets))
    cols = [n + q for q in targets]
    t = np.tensordot(t, opt.conj(), axes=(cols, ins))
    t = np.moveaxis(t, list(range(2 * n - k, 2 * n)), cols)
    return t.reshape(2**n, 2**n)


def apply_unitary(state: DensityMatrix, u: np.ndarray, targets: Sequence[int]) -> DensityMatrix:
    """Conjugate ``state`` by the unitary ``u`` embedded on ``targets``."""
    n = state.num_qubits
    targets = _check_targets(targets, n)
    u = np.asarray(u, dtype=complex)
    d = 2 ** len(targets)
    if u.shape != (d, d):
        raise ValueError(f"unitary of shape {u.shape} does not match {len(targets)} target(s)")
    if np.max(np.abs(u.conj().T @ u - np.eye(d))) > 1e-9:
        raise ValueError("operator is not unitary")
    return DensityMatrix(_apply_operator(state.data, n, u, targets), n)


def apply_z_phases(state: DensityMatrix, angles: Sequence[float]) -> DensityMatrix:
    """Apply exp(-i a_j Z_j) on every qubit j at once (a diagonal unitary)."""
    n = state.num_qubits
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (n,):
        raise ValueError(f"need one angle per qubit ({n}), got {angles.shape}")
    if not np.any(angles):
        return state
    phi = _z_signs(n) @ angles
    ph = np.exp(-1j * phi)
    return DensityMatrix(state.data * np.outer(ph, ph.conj()), n)


@lru_cache(maxsize=None)
def _z_signs(n: int) -> np.ndarray:
    """Row a holds the Z eigenvalue (+1 for |0>, -1 for |1>) of each qubit in basis state a."""
    idx = np.arange(2**n)
    bits = (idx[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1
    return 1.0 - 2.0 * bits


# --- native gate set -------------------------------------------------------

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_AXIS = {"Rx": PAULI_X, "Ry": PAULI_Y, "Rz": PAULI_Z}


@dataclass(frozen=True)
class GateSpec:
    kind: str
    angle: float
    targets: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in ("Rx", "Ry", "Rz", "Rxx"):
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        need = 2 if self.kind == "Rxx" else 1
        if len(self.targets) != need:
            raise ValueError(f"{self.kind} acts on {need} qubit(s), got targets {self.targets}")

    @property
    def is_entangling(self) -> bool:
        return self.kind == "Rxx"

    def on(self, *targets: int) -> "GateSpec":
        return GateSpec(self.kind, self.angle, tuple(targets))


def gate_matrix(g: GateSpec) -> np.ndarray:
    """exp(-i angle P / 2) for P in {X, Y, Z, X(x)X}."""
    c, s = np.cos(g.angle / 2), np.sin(g.angle / 2)
    if g.kind == "Rxx":
        p = np.kron(PAULI_X, PAULI_X)
        return c * np.eye(4) - 1j * s * p
    return c * np.eye(2) - 1j * s * _AXIS[g.kind]


def _build_cz() -> tuple[GateSpec, ...]:
    # What a standard transpiler emits for CZ over {Rx, Ry, Rz, Rxx}: the CNOT
    # identity Ry.Rxx(pi/2).Rx.Rx.Ry wrapped in a Hadamard-like pair on ion 1.
    h = np.pi / 2
    return (
        GateSpec("Ry", h, (0,)),
        GateSpec("Ry", h, (1,)),
        GateSpec("Rx", np.pi, (1,)),
        GateSpec("Rxx", h, (0, 1)),
        GateSpec("Rx", -h, (0,)),
        GateSpec("Ry", -h, (0,)),
        GateSpec("Ry", -h, (1,)),
        GateSpec("Rz", h, (1,)),
    )


CZ_SEQUENCE = _build_cz()
CZ_SINGLE_QUBIT_GATES = sum(1 for g in CZ_SEQUENCE if not g.is_entangling)


def cz_sequence(control: int = 0, target: int = 1) -> list[GateSpec]:
    """Native-gate compilation of CZ between ``control`` and ``target``.

    Seven individually addressed rotations around one Rxx; the rotation count is
    also exported as ``CZ_SINGLE_QUBIT_GATES`` for noise and timing accounting.
    """
    remap = {0: control, 1: target}
    return [GateSpec(g.kind, g.angle, tuple(remap[t] for t in g.targets)) for g in CZ_SEQUENCE]


def compose(gates: Sequence[GateSpec], n: int) -> np.ndarray:
    """Unitary of a gate list on ``n`` qubits (first gate applied first)."""
    total = np.eye(2**n, dtype=complex)
    for g in gates:
        total = embed(gate_matrix(g), g.targets, n) @ total
    return total


def embed(u: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Full 2^n x 2^n matrix of ``u`` acting on ``targets``."""
    targets = _check_targets(targets, n)
    k = len(targets)
    full = np.eye(2**n, dtype=complex).reshape((2,) * (2 * n))
    opt = np.asarray(u, dtype=complex).reshape((2,) * (2 * k))
    full = np.tensordot(opt, full, axes=(list(range(k, 2 * k)), list(targets)))
    full = np.moveaxis(full, list(range(k)), list(targets))
    return full.reshape(2**n, 2**n)


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, atol: float = 1e-10) -> bool:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    idx = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    if abs(a[idx]) < 1e-12:
        return False
    phase = b[idx] / a[idx]
    phase /= abs(phase)
    return bool(np.max(np.abs(a * phase - b)) <= atol)


# --- measurement and partial trace ----------------------------------------

def equatorial_vector(delta: float, sign: int = +1) -> np.ndarray:
    """|+_delta> (sign=+1) or |-_delta> (sign=-1) = (|0> +- e^{i delta}|1>)/sqrt(2)."""
    return np.array([1.0, sign * np.exp(1j * delta)], dtype=complex) / np.sqrt(2)


STANDARD = "standard"


def basis_vectors(basis) -> tuple[np.ndarray, np.ndarray]:
    """Outcome-0 and outcome-1 kets of ``basis`` (``"standard"`` or an equatorial angle)."""
    if basis == STANDARD or basis is None:
        return np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)
    delta = float(basis)
    return equatorial_vector(delta, +1), equatorial_vector(delta, -1)


def _project_out(rho: np.ndarray, n: int, target: int, ket: np.ndarray) -> np.ndarray:
    """Unnormalised <ket|_target rho |ket>_target on the remaining n-1 qubits."""
    t = rho.reshape((2,) * (2 * n))
    t = np.tensordot(ket.conj(), t, axes=([0], [target]))
    t = np.tensordot(t, ket, axes=([n - 1 + target], [0]))
    return t.reshape(2 ** (n - 1), 2 ** (n - 1))


def outcome_probabilities(state: DensityMatrix, target: int, basis=STANDARD) -> np.ndarray:
    n = state.num_qubits
    (target,) = _check_targets([target], n)
    red = reduced_qubit(state, target)
    kets = basis_vectors(basis)
    p = np.array([np.real(k.conj() @ red @ k) for k in kets])
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def measure_basis(state: DensityMatrix, target: int, basis, rng: np.random.Generator,
                  remove: bool = False) -> tuple[int, DensityMatrix | None]:
    """Projective measurement of ``target`` in ``basis``.

    ``basis`` is ``"standard"`` or an angle ``delta`` selecting |+-_delta>.
    Outcome 0 means |0> / |+_delta>. With ``remove=True`` the measured qubit is
    traced out of the returned state (``None`` if it was the last qubit).
    """
    n = state.num_qubits
    (target,) = _check_targets([target], n)
    kets = basis_vectors(basis)
    if remove and n > 1:
        # project straight onto the remaining qubits; the traces are the Born weights
        rest0 = _project_out(state.data, n, target, kets[0])
        p0 = float(np.trace(rest0).real)
        if rng.random() < p0:
            return 0, DensityMatrix(rest0 / p0, n - 1)
        rest1 = _project_out(state.data, n, target, kets[1])
        return 1, DensityMatrix(rest1 / np.trace(rest1).real, n - 1)
    p0 = outcome_probabilities(state, target, basis)[0]
    bit = 0 if rng.random() < p0 else 1
    if remove:
        return bit, None
    ket = kets[bit]
    proj = np.outer(ket, ket.conj())
    rho = _apply_operator(state.data, n, proj, (target,))
    rho = rho / np.trace(rho).real
    return bit, DensityMatrix(rho, n)


def trace_out(state: DensityMatrix, target: int) -> DensityMatrix:
    n = state.num_qubits
    if n < 2:
        raise SizeError("cannot trace out the last remaining qubit")
    (target,) = _check_targets([target], n)
    t = state.data.reshape((2,) * (2 * n))
    t = np.trace(t, axis1=target, axis2=n + target)
    return DensityMatrix(t.reshape(2 ** (n - 1), 2 ** (n - 1)), n - 1)


def reduced_qubit(state: DensityMatrix, target: int) -> np.ndarray:
    """2x2 reduced density matrix of one qubit."""
    n = state.num_qubits
    t = state.data.reshape((2,) * (2 * n))
    t = np.moveaxis(t, [target, n + target], [0, n])
    t = t.reshape(2, 2 ** (n - 1), 2, 2 ** (n - 1))
    return np.einsum("aibi->ab", t)


def fidelity_with_pure(state: DensityMatrix, psi: Sequence[complex]) -> float:
    """<psi| rho |psi> for a normalised pure target."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (state.dim,):
        raise ValueError(f"pure state of length {psi.shape[0]} does not match dimension {state.dim}")
    psi = psi / np.linalg.norm(psi)
    return float(np.real(psi.conj() @ state.data @ psi))
