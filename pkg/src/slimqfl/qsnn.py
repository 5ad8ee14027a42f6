"""Quantum slimmable classifier: encoder, layered circuit, pole measurement.

The model carries two separately trainable parameter groups:

  - angle parameters phi: rotation angles of the layered circuit,
    3 per qubit per layer, entangled by a CNOT ring after each layer;
  - pole parameters theta: one y-rotation per measured qubit that tilts
    the measurement axis away from the z pole.

A forward pass encodes 4 scaled pixels per qubit (rx, ry, rz, rx), runs
the circuit over phi, and reads one observable per class: <Z_k> of the
state with R_y(theta_k) applied to qubit k. Observables times the scale
`w` are softmax logits; training minimizes cross entropy. Derivatives of
observables with respect to any rotation angle use the two-point shift
rule, d obs/d a = [obs(a + pi/2) - obs(a - pi/2)] / 2, which is exact
for these gates; the softmax chain factor is applied classically.

Besides the single-sample operations, this module exposes a stacked
engine (``encode_batch``, ``stacked_*``) that evaluates whole
mini-batches, all shift points, and many independent models (one per
federated device) in a handful of array operations. Circuits are
assembled as dense per-layer unitaries, so the engine suits small
registers; it is numerically identical to composing the single-sample
operations, up to float rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import log_softmax, softmax

from .statevector import StateVector, apply_cnot, apply_rotation, expectation_z, rotation_matrix

ENCODER_AXES = ("x", "y", "z", "x")
FEATURES_PER_QUBIT = len(ENCODER_AXES)


@dataclass(frozen=True)
class QsnnConfig:
    """Model shape. Defaults give 36 angle + 4 pole = 40 trainable parameters."""

    n_qubits: int = 4
    n_layers: int = 3
    n_classes: int = 4
    w: float = 1.6

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_layers < 1:
            raise ValueError("n_qubits and n_layers must be positive")
        if not 1 <= self.n_classes <= self.n_qubits:
            raise ValueError("need one measured qubit per class (n_classes <= n_qubits)")

    @property
    def n_angle_params(self) -> int:
        return self.n_layers * self.n_qubits * 3

    @property
    def n_pole_params(self) -> int:
        return self.n_classes

    @property
    def n_features(self) -> int:
        return self.n_qubits * FEATURES_PER_QUBIT


@dataclass
class QsnnParams:
    """One model: pole angles theta (per class) and circuit angles phi."""

    pole: np.ndarray
    angle: np.ndarray

    def __post_init__(self):
        self.pole = np.asarray(self.pole, dtype=np.float64)
        self.angle = np.asarray(self.angle, dtype=np.float64)
        if self.pole.ndim != 1 or self.angle.ndim != 1:
            raise ValueError("pole and angle must be 1-d")
        if not (np.all(np.isfinite(self.pole)) and np.all(np.isfinite(self.angle))):
            raise ValueError("parameters must be finite")

    def check_shape(self, config: QsnnConfig) -> None:
        if self.pole.size != config.n_pole_params:
            raise ValueError(
                f"pole length {self.pole.size} != n_classes {config.n_pole_params}"
            )
        if self.angle.size != config.n_angle_params:
            raise ValueError(
                f"angle length {self.angle.size} != {config.n_angle_params} "
                f"(layers x qubits x 3)"
            )

    def copy(self) -> "QsnnParams":
        return QsnnParams(self.pole.copy(), self.angle.copy())


# -- single-state operations --------------------------------------------


def encode(state: StateVector, features) -> StateVector:
    """Write 4*n_qubits scaled pixels into the register.

    Qubit q receives rx, ry, rz, rx rotations by features[4q..4q+3].
    Parameter-free and deterministic.
    """
    features = np.asarray(features, dtype=np.float64)
    n = state.n_qubits
    if features.shape != (FEATURES_PER_QUBIT * n,):
        raise ValueError(
            f"expected {FEATURES_PER_QUBIT * n} features for {n} qubits, "
            f"got shape {features.shape}"
        )
    for q in range(n):
        for j, axis in enumerate(ENCODER_AXES):
            state = apply_rotation(state, axis, q, features[FEATURES_PER_QUBIT * q + j])
    return state


def apply_pqc(state: StateVector, phi) -> StateVector:
    """Run the layered circuit: per layer, rx/ry/rz on every qubit then a CNOT ring."""
    phi = np.asarray(phi, dtype=np.float64)
    n = state.n_qubits
    per_layer = 3 * n
    if phi.ndim != 1 or phi.size == 0 or phi.size % per_layer != 0:
        raise ValueError(
            f"angle vector length {phi.size} is not a positive multiple of 3*{n}"
        )
    k = 0
    for _layer in range(phi.size // per_layer):
        for q in range(n):
            state = apply_rotation(state, "x", q, phi[k])
            state = apply_rotation(state, "y", q, phi[k + 1])
            state = apply_rotation(state, "z", q, phi[k + 2])
            k += 3
        if n >= 2:
            for q in range(n):
                state = apply_cnot(state, q, (q + 1) % n)
    return state


def measure_with_pole(state: StateVector, theta) -> np.ndarray:
    """Per class k: <Z_k> after tilting qubit k's measurement axis by R_y(theta_k)."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or not 1 <= theta.size <= state.n_qubits:
        raise ValueError(
            f"pole vector length {theta.size} must be in 1..{state.n_qubits}"
        )
    obs = np.empty(theta.size)
    for k in range(theta.size):
        tilted = apply_rotation(state, "y", k, theta[k])
        obs[k] = expectation_z(tilted, k)
    return obs


# -- loss ---------------------------------------------------------------


def loss(obs, label: int, w: float) -> float:
    """Softmax cross entropy of logits w*obs against an integer label."""
    obs = np.asarray(obs, dtype=np.float64)
    if not 0 <= label < obs.size:
        raise ValueError(f"label {label} out of range for {obs.size} classes")
    return float(-log_softmax(w * obs)[label])


def _loss_and_delta(obs: np.ndarray, labels: np.ndarray, w: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-model mean cross entropy and softmax residual (p - onehot).

    obs: (..., B, K); labels: (..., B). Returns loss (...,), delta (..., B, K).
    """
    logits = w * obs
    picked = np.take_along_axis(log_softmax(logits, axis=-1), labels[..., None], axis=-1)
    losses = -picked[..., 0].mean(axis=-1)
    delta = softmax(logits, axis=-1)
    delta -= labels[..., None] == np.arange(obs.shape[-1])
    return losses, delta


# -- stacked engine ------------------------------------------------------
#
# States are flat complex rows of length 2**n_qubits; qubit 0 is the most
# significant index bit. Parameter vectors may carry arbitrary leading
# axes (device stacks, shift stacks); each layer of the circuit is built
# as one dense unitary (kron of fused per-qubit rotations with the CNOT
# ring folded in as a row permutation), layers are combined by batched
# matmul and applied to all encoded samples at once.


@lru_cache(maxsize=None)
def _ring_permutation(n_qubits: int) -> np.ndarray:
    """Gather indices of the full CNOT ring: new_amps = old_amps[perm]."""
    dim = 2**n_qubits
    perm = np.arange(dim)
    for q in range(n_qubits):
        control, target = q, (q + 1) % n_qubits
        cbit = 1 << (n_qubits - 1 - control)
        tbit = 1 << (n_qubits - 1 - target)
        idx = np.arange(dim)
        flip = np.where(idx & cbit, idx ^ tbit, idx)
        perm = perm[flip]
    return perm


@lru_cache(maxsize=None)
def _z_signs(n_qubits: int, n_classes: int) -> np.ndarray:
    """(n_classes, dim) signs: +1 where qubit k's bit is 0, else -1."""
    idx = np.arange(2**n_qubits)
    bits = (idx[None, :] >> (n_qubits - 1 - np.arange(n_classes))[:, None]) & 1
    return 1.0 - 2.0 * bits


@lru_cache(maxsize=None)
def _x_partners(n_qubits: int, n_classes: int) -> np.ndarray:
    """(n_classes, dim) indices: basis state with qubit k's bit flipped."""
    idx = np.arange(2**n_qubits)
    return idx[None, :] ^ (1 << (n_qubits - 1 - np.arange(n_classes)))[:, None]


def _kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product over the trailing two axes, broadcasting the rest."""
    lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    p, q = a.shape[-2:]
    r, s = b.shape[-2:]
    out = a[..., :, None, :, None] * b[..., None, :, None, :]
    return out.reshape(lead + (p * r, q * s))


def encode_batch(features, n_qubits: int) -> np.ndarray:
    """Encode a (B, 4*n_qubits) feature array into flat states (B, 2**n_qubits).

    Each qubit's four rotations act on |0>, so the register state is the
    kron chain of the per-qubit 2-vectors.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != FEATURES_PER_QUBIT * n_qubits:
        raise ValueError(
            f"expected {FEATURES_PER_QUBIT * n_qubits} features per sample, "
            f"got {features.shape[1]}"
        )
    # (B, n_qubits, 2, 2) rotation stack per encoder slot j, angles at column 4q+j.
    mats = [
        rotation_matrix(ENCODER_AXES[j], features[:, j::FEATURES_PER_QUBIT])
        for j in range(FEATURES_PER_QUBIT)
    ]
    v = mats[0][..., :, 0]  # first rotation applied to |0> is its left column
    for j in range(1, FEATURES_PER_QUBIT):
        v = np.einsum("bqij,bqj->bqi", mats[j], v)
    amp = v[:, 0]
    for q in range(1, n_qubits):
        amp = np.einsum("bi,bj->bij", amp, v[:, q]).reshape(len(features), -1)
    return amp


def circuit_unitaries(phi: np.ndarray, config: QsnnConfig) -> np.ndarray:
    """Dense circuit unitaries (..., dim, dim) for angle vectors (..., P)."""
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape[-1] != config.n_angle_params:
        raise ValueError(
            f"angle vector length {phi.shape[-1]} != {config.n_angle_params}"
        )
    n, n_layers = config.n_qubits, config.n_layers
    ang = phi.reshape(phi.shape[:-1] + (n_layers, n, 3))
    # Fused per-qubit rotation rz @ ry @ rx: (..., L, n, 2, 2).
    m = (
        rotation_matrix("z", ang[..., 2])
        @ rotation_matrix("y", ang[..., 1])
        @ rotation_matrix("x", ang[..., 0])
    )
    u = m[..., 0, :, :]
    for q in range(1, n):
        u = _kron(u, m[..., q, :, :])
    if n >= 2:
        u = u[..., _ring_permutation(n), :]
    total = u[..., 0, :, :]
    for layer in range(1, n_layers):
        total = np.matmul(u[..., layer, :, :], total)
    return total


def pole_basis_matrix(pole: np.ndarray, n_qubits: int) -> np.ndarray:
    """Unitary (..., dim, dim) applying R_y(theta_k) to each measured qubit."""
    pole = np.asarray(pole, dtype=np.float64)
    n_classes = pole.shape[-1]
    mats = rotation_matrix("y", pole)
    v = mats[..., 0, :, :]
    eye = np.eye(2, dtype=np.complex128)
    for q in range(1, n_qubits):
        v = _kron(v, mats[..., q, :, :]) if q < n_classes else _kron(v, eye)
    return v


def _states_through(unitaries: np.ndarray, enc: np.ndarray) -> np.ndarray:
    """Apply (..., dim, dim) unitaries to encoded rows; states as (..., dim, B)."""
    return unitaries @ np.swapaxes(enc, -1, -2)


def stacked_observables(enc: np.ndarray, pole: np.ndarray, angle: np.ndarray, config: QsnnConfig) -> np.ndarray:
    """Observables (..., B, K) for stacked models over stacked encodings.

    enc: (..., B, dim) encoded states (leading axes broadcast against the
    parameter stacks); pole: (..., K); angle: (..., P). The pole tilt is
    folded into the circuit unitary, so only Z readouts are needed.
    """
    u = circuit_unitaries(angle, config)
    v = pole_basis_matrix(pole, config.n_qubits)
    states = _states_through(v @ u, enc)
    p = states.real**2 + states.imag**2
    obs = _z_signs(config.n_qubits, config.n_classes) @ p
    return np.swapaxes(obs, -1, -2)


def stacked_zx(enc: np.ndarray, angle: np.ndarray, config: QsnnConfig) -> tuple[np.ndarray, np.ndarray]:
    """<Z_k> and <X_k> of the circuit output, each (..., B, K).

    These two readouts determine the observable for every pole value,
    obs_k(theta_k) = cos(theta_k) <Z_k> - sin(theta_k) <X_k>, and depend
    only on the angle parameters, so pole training can reuse them.
    """
    states = _states_through(circuit_unitaries(angle, config), enc)
    p = states.real**2 + states.imag**2
    z = _z_signs(config.n_qubits, config.n_classes) @ p
    partner = states[..., _x_partners(config.n_qubits, config.n_classes), :]
    x = np.einsum("...ib,...kib->...kb", states.conj(), partner).real
    return np.swapaxes(z, -1, -2), np.swapaxes(x, -1, -2)


def pole_observables(z: np.ndarray, x: np.ndarray, pole: np.ndarray) -> np.ndarray:
    """Tilted observables cos(theta)<Z> - sin(theta)<X> from fixed readouts.

    Identical to rotating qubit k by R_y(theta_k) and measuring <Z_k>,
    via the identity R_y(t)^dag Z R_y(t) = cos(t) Z - sin(t) X.
    z, x: (..., B, K); pole: (..., K).
    """
    pole = np.asarray(pole, dtype=np.float64)
    return np.cos(pole)[..., None, :] * z - np.sin(pole)[..., None, :] * x


def stacked_pole_loss_grad(
    z: np.ndarray, x: np.ndarray, labels: np.ndarray, pole: np.ndarray, w: float
) -> tuple[np.ndarray, np.ndarray]:
    """Mean loss (...,) and mean d loss/d theta (..., K) from fixed readouts.

    The derivative is the shift rule through the tilted observable,
    [obs_k(theta_k + pi/2) - obs_k(theta_k - pi/2)] / 2; theta_k only
    enters obs_k, so all classes shift in one evaluation.
    """
    obs = pole_observables(z, x, pole)
    losses, delta = _loss_and_delta(obs, labels, w)
    dobs = (pole_observables(z, x, pole + np.pi / 2) - pole_observables(z, x, pole - np.pi / 2)) / 2.0
    grad = w * np.mean(delta * dobs, axis=-2)
    return losses, grad


def stacked_angle_loss_grad(
    enc: np.ndarray, labels: np.ndarray, pole: np.ndarray, angle: np.ndarray, config: QsnnConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Mean loss (...,) and mean d loss/d phi (..., P) over stacked models.

    Evaluates the base circuit and the two shift points of every angle in
    one stacked pass: slice 0 of the shift axis is the base point, slices
    2j+1 / 2j+2 shift angle j by +pi/2 / -pi/2.
    """
    n_angles = config.n_angle_params
    n_shift = 1 + 2 * n_angles
    phi = np.repeat(angle[..., None, :], n_shift, axis=-2)
    j = np.arange(n_angles)
    phi[..., 1 + 2 * j, j] += np.pi / 2
    phi[..., 2 + 2 * j, j] -= np.pi / 2
    u = circuit_unitaries(phi, config)  # (..., S, dim, dim)
    v = pole_basis_matrix(pole, config.n_qubits)  # (..., dim, dim)
    states = _states_through(v[..., None, :, :] @ u, enc[..., None, :, :])
    p = states.real**2 + states.imag**2
    obs = _z_signs(config.n_qubits, config.n_classes) @ p
    obs = np.swapaxes(obs, -1, -2)  # (..., S, B, K)
    losses, delta = _loss_and_delta(obs[..., 0, :, :], labels, config.w)
    dobs = (obs[..., 1::2, :, :] - obs[..., 2::2, :, :]) / 2.0  # (..., P, B, K)
    grad = config.w * np.einsum("...pbk,...bk->...p", dobs, delta) / labels.shape[-1]
    return losses, grad


# -- single-model wrappers ------------------------------------------------


def batch_observables(enc: np.ndarray, params: QsnnParams, config: QsnnConfig) -> np.ndarray:
    """Observables (B, n_classes) for a batch of encoded states."""
    params.check_shape(config)
    return stacked_observables(enc, params.pole, params.angle, config)


def forward(features, params: QsnnParams, config: QsnnConfig) -> np.ndarray:
    """Observables of one sample: encode, run circuit, measure with poles."""
    enc = encode_batch(np.asarray(features, dtype=np.float64)[None, :], config.n_qubits)
    return batch_observables(enc, params, config)[0]


def _check_labels(labels: np.ndarray, n_classes: int) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")


def measured_zx(enc: np.ndarray, params: QsnnParams, config: QsnnConfig) -> tuple[np.ndarray, np.ndarray]:
    """<Z_k> and <X_k> of one model's circuit output, each (B, n_classes)."""
    params.check_shape(config)
    return stacked_zx(enc, params.angle, config)


def pole_loss_grad_from_zx(
    z: np.ndarray, x: np.ndarray, labels, pole: np.ndarray, w: float
) -> tuple[float, np.ndarray]:
    """Mean loss and mean d loss/d theta given precomputed <Z>, <X>."""
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    _check_labels(labels, z.shape[-1])
    losses, grad = stacked_pole_loss_grad(z, x, labels, pole, w)
    return float(losses), grad


def batch_loss_grad_pole(
    enc: np.ndarray, labels, params: QsnnParams, config: QsnnConfig
) -> tuple[float, np.ndarray]:
    """Mean loss and mean d loss/d theta over a batch of encoded states.

    The circuit does not depend on theta, so one circuit evaluation serves
    the base point and both shift points of every pole parameter.
    """
    z, x = measured_zx(enc, params, config)
    return pole_loss_grad_from_zx(z, x, labels, params.pole, config.w)


def batch_loss_grad_angle(
    enc: np.ndarray, labels, params: QsnnParams, config: QsnnConfig
) -> tuple[float, np.ndarray]:
    """Mean loss and mean d loss/d phi over a batch of encoded states."""
    params.check_shape(config)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    _check_labels(labels, config.n_classes)
    losses, grad = stacked_angle_loss_grad(enc, labels, params.pole, params.angle, config)
    return float(losses), grad


def grad_pole(features, label: int, params: QsnnParams, config: QsnnConfig) -> np.ndarray:
    """d loss/d theta of one sample via the shift rule."""
    enc = encode_batch(np.asarray(features, dtype=np.float64)[None, :], config.n_qubits)
    return batch_loss_grad_pole(enc, [label], params, config)[1]


def grad_angle(features, label: int, params: QsnnParams, config: QsnnConfig) -> np.ndarray:
    """d loss/d phi of one sample via the shift rule."""
    enc = encode_batch(np.asarray(features, dtype=np.float64)[None, :], config.n_qubits)
    return batch_loss_grad_angle(enc, [label], params, config)[1]
