"""Dense statevector simulator for small qubit registers.

Provides exactly the gate set the slimmable quantum classifier is built
from: single-qubit rotations about x, y, z and the CNOT gate, plus
Pauli-Z expectation values of individual qubits.

Conventions:
  - Qubit 0 is the most significant bit of the basis-state index, so for
    two qubits the amplitude order is |00>, |01>, |10>, |11>.
  - Rotations use the half-angle convention R(d) = exp(-i d/2 * P) for
    Pauli generator P, i.e. R(d) = cos(d/2) I - i sin(d/2) P.
  - All operations return a new StateVector; inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_QUBITS = 12

ROTATION_AXES = ("x", "y", "z")


@dataclass(frozen=True)
class StateVector:
    """Complex amplitudes of an n-qubit register, length 2**n_qubits."""

    amplitudes: np.ndarray
    n_qubits: int

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.ndim != 1 or amps.size != 2**self.n_qubits:
            raise ValueError(
                f"amplitude vector of length {amps.size} does not match "
                f"{self.n_qubits} qubits (expected {2**self.n_qubits})"
            )
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class GateOp:
    """One gate: kind is 'rx', 'ry', 'rz' (with angle) or 'cnot' (with control)."""

    kind: str
    target: int
    control: int | None = None
    angle: float | None = None

    def __post_init__(self):
        if self.kind in ("rx", "ry", "rz"):
            if self.angle is None:
                raise ValueError(f"{self.kind} gate requires an angle")
            if self.control is not None:
                raise ValueError("rotation gates take no control qubit")
        elif self.kind == "cnot":
            if self.control is None:
                raise ValueError("cnot requires a control qubit")
            if self.control == self.target:
                raise ValueError("cnot control and target must differ")
        else:
            raise ValueError(f"unknown gate kind {self.kind!r}")


def _check_qubit(qubit: int, n_qubits: int) -> None:
    if not 0 <= qubit < n_qubits:
        raise ValueError(f"qubit index {qubit} out of range for {n_qubits} qubits")


def init_zero_state(n_qubits: int) -> StateVector:
    """Prepare |0...0> on n_qubits (dense bound: 1..12)."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"n_qubits must be in 1..{MAX_QUBITS}, got {n_qubits}")
    amps = np.zeros(2**n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(amps, n_qubits)


def rotation_matrix(axis: str, angle) -> np.ndarray:
    """2x2 rotation matrix exp(-i angle/2 * Pauli_axis).

    `angle` may be a scalar or an array; an array of shape S yields a
    stacked result of shape S + (2, 2).
    """
    angle = np.asarray(angle, dtype=np.float64)
    if not np.all(np.isfinite(angle)):
        raise ValueError("rotation angle must be finite")
    c = np.cos(angle / 2)
    s = np.sin(angle / 2)
    m = np.zeros(angle.shape + (2, 2), dtype=np.complex128)
    if axis == "x":
        m[..., 0, 0] = c
        m[..., 0, 1] = -1j * s
        m[..., 1, 0] = -1j * s
        m[..., 1, 1] = c
    elif axis == "y":
        m[..., 0, 0] = c
        m[..., 0, 1] = -s
        m[..., 1, 0] = s
        m[..., 1, 1] = c
    elif axis == "z":
        m[..., 0, 0] = c - 1j * s
        m[..., 1, 1] = c + 1j * s
    else:
        raise ValueError(f"axis must be one of {ROTATION_AXES}, got {axis!r}")
    return m


def apply_rotation(state: StateVector, axis: str, qubit: int, angle: float) -> StateVector:
    """Apply R_axis(angle) to one qubit."""
    n = state.n_qubits
    _check_qubit(qubit, n)
    m = rotation_matrix(axis, float(angle))
    t = state.amplitudes.reshape((2,) * n)
    t = np.moveaxis(t, qubit, -1)
    t = t @ m.T
    t = np.moveaxis(t, -1, qubit)
    return StateVector(t.reshape(-1), n)


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    """Flip `target` on the amplitudes whose `control` bit is 1."""
    n = state.n_qubits
    _check_qubit(control, n)
    _check_qubit(target, n)
    if control == target:
        raise ValueError("cnot control and target must differ")
    t = state.amplitudes.reshape((2,) * n)
    out = t.copy()

    def idx(cv, tv):
        sel = [slice(None)] * n
        sel[control], sel[target] = cv, tv
        return tuple(sel)

    out[idx(1, 0)] = t[idx(1, 1)]
    out[idx(1, 1)] = t[idx(1, 0)]
    return StateVector(out.reshape(-1), n)


def apply_gate(state: StateVector, op: GateOp) -> StateVector:
    if op.kind == "cnot":
        return apply_cnot(state, op.control, op.target)
    return apply_rotation(state, op.kind[1], op.target, op.angle)


def expectation_z(state: StateVector, qubit: int) -> float:
    """<Z> of one qubit: P(bit=0) - P(bit=1). Always in [-1, 1]."""
    n = state.n_qubits
    _check_qubit(qubit, n)
    p = np.abs(state.amplitudes.reshape((2,) * n)) ** 2
    other_axes = tuple(i for i in range(n) if i != qubit)
    marginal = p.sum(axis=other_axes)
    return float(marginal[0] - marginal[1])
