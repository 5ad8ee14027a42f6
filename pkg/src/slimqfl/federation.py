"""Federated orchestration: local training, channel-gated uploads, averaging.

One communication round (an epoch) runs as a barrier-synchronous loop:
the server broadcasts the global model, every device trains locally per
its scheme, draws one fading-channel outcome deciding what it may
upload, the server averages each parameter group over the uploads it
received, and the new global model is scored on the shared test set.

Schemes:
  - slimqfl:      pole-then-angle local training; uploads whole model or
                  pole-only depending on the channel.
  - slimqfl_pole: trains and transmits only the pole parameters.
  - vanilla_qfl:  trains only the circuit angles (poles frozen at zero);
                  whole-or-nothing uploads.
  - classical_fl: dense linear baseline; whole-or-nothing uploads.

All randomness derives from one master seed through counter-based
substreams keyed by (purpose, device, epoch), so results are identical
regardless of device evaluation order. Devices train in lockstep: every
SGD step is one stacked engine call covering all devices, which is
arithmetically the per-device loop evaluated together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import classical, qsnn
from .channel import ChannelConfig, Decision, draw_outcome
from .classical import DenseParams
from .data import DeviceShard, MiniDataset
from .qsnn import QsnnConfig, QsnnParams

INIT_SCALE = np.pi / 10

# Substream purposes for the master-seed fan-out:
# SeedSequence(master, spawn_key=(purpose, device, epoch)).
STREAM_INIT = 0
STREAM_SHUFFLE = 1
STREAM_CHANNEL = 2


class Scheme(Enum):
    SLIMQFL = "slimqfl"
    SLIMQFL_POLE = "slimqfl_pole"
    VANILLA_QFL = "vanilla_qfl"
    CLASSICAL_FL = "classical_fl"

    @property
    def is_quantum(self) -> bool:
        return self is not Scheme.CLASSICAL_FL


@dataclass
class DeviceState:
    """A device's shard plus its current local model and cached encodings."""

    shard: DeviceShard
    params: QsnnParams | DenseParams | None = None
    features: np.ndarray | None = None
    enc: np.ndarray | None = None


@dataclass
class GlobalModel:
    params: QsnnParams | DenseParams
    epoch: int = 0


@dataclass(frozen=True)
class RoundRecord:
    """Per-epoch bookkeeping: upload indicators, accuracy, mean train loss."""

    epoch: int
    decisions: tuple[Decision, ...]
    n_pole_uploads: int
    n_whole_uploads: int
    accuracy: float
    mean_loss: float


@dataclass(frozen=True)
class EvalSet:
    features: np.ndarray
    labels: np.ndarray
    enc: np.ndarray | None = None


@dataclass(frozen=True)
class LrSchedule:
    """Learning-rate decay over communication rounds."""

    eta0: float = 0.01
    decay: float = 0.001
    kind: str = "inverse_time"

    def at(self, epoch: int) -> float:
        return lr_at(epoch, self.eta0, self.decay, self.kind)


def lr_at(epoch: int, eta0: float, decay: float, kind: str = "inverse_time") -> float:
    """Rate at round t: eta0/(1 + decay*t), or eta0*exp(-decay*t) for 'exponential'."""
    if epoch < 0:
        raise ValueError("epoch must be nonnegative")
    if kind == "inverse_time":
        return eta0 / (1.0 + decay * epoch)
    if kind == "exponential":
        return eta0 * math.exp(-decay * epoch)
    raise ValueError(f"unknown decay schedule {kind!r}")


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Counter-based substream: evaluation order never changes the draws."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


def init_params(
    scheme: Scheme, config: QsnnConfig, rng: np.random.Generator, scale: float = INIT_SCALE
) -> QsnnParams | DenseParams:
    """Draw initial parameters uniformly from [-scale, scale].

    The pole vector is drawn before the angles for every quantum scheme
    (and zeroed for vanilla), so the angle initialization matches across
    quantum schemes under the same seed.
    """
    if scheme is Scheme.CLASSICAL_FL:
        return DenseParams(rng.uniform(-scale, scale, (classical.N_INPUTS, classical.N_OUTPUTS)))
    pole = rng.uniform(-scale, scale, config.n_pole_params)
    angle = rng.uniform(-scale, scale, config.n_angle_params)
    if scheme is Scheme.VANILLA_QFL:
        pole = np.zeros(config.n_pole_params)
    return QsnnParams(pole, angle)


# -- lockstep local training ----------------------------------------------
#
# One mini-batch SGD step for D devices is a single stacked call; each
# device shuffles with its own substream, so the loop is step-for-step the
# sequential per-device computation.


def _pass_batches(n: int, batch_size: int, rngs: list[np.random.Generator]):
    """Column-index batches (D, b) of one shuffled pass; partial batch kept."""
    perms = np.stack([rng.permutation(n) for rng in rngs])
    for start in range(0, n, batch_size):
        yield perms[:, start : start + batch_size]


def _pole_phase(z, x, labels, pole, n_iters, lr, batch_size, rngs, w):
    """SGD passes on the pole group against fixed circuit readouts."""
    rows = np.arange(len(pole))[:, None]
    losses = []
    for _ in range(n_iters):
        for cols in _pass_batches(labels.shape[1], batch_size, rngs):
            batch_losses, grad = qsnn.stacked_pole_loss_grad(
                z[rows, cols], x[rows, cols], labels[rows, cols], pole, w
            )
            pole = pole - lr * grad
            losses.append(batch_losses)
    return pole, losses


def _angle_phase(enc, labels, pole, angle, n_iters, lr, batch_size, rngs, config):
    """SGD passes on the angle group with the pole group frozen."""
    rows = np.arange(len(angle))[:, None]
    losses = []
    for _ in range(n_iters):
        for cols in _pass_batches(labels.shape[1], batch_size, rngs):
            batch_losses, grad = qsnn.stacked_angle_loss_grad(
                enc[rows, cols], labels[rows, cols], pole, angle, config
            )
            angle = angle - lr * grad
            losses.append(batch_losses)
    return angle, losses


def _classical_phase(features, labels, weights, mask, n_iters, lr, batch_size, rngs):
    """SGD passes on stacked dense weight matrices."""
    rows = np.arange(len(weights))[:, None]
    losses = []
    for _ in range(n_iters):
        for cols in _pass_batches(labels.shape[1], batch_size, rngs):
            batch_losses, grad = classical.stacked_loss_grad(
                features[rows, cols], labels[rows, cols], weights, mask
            )
            weights = weights - lr * grad
            losses.append(batch_losses)
    return weights, losses


def local_train_pole_to_angle(
    dev: DeviceState,
    n_iters: int,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
    config: QsnnConfig,
) -> list[float]:
    """Sequential two-phase local training: poles first, then angles.

    Phase one runs n_iters passes of mini-batch SGD on the pole group with
    the angles frozen; because the circuit output is then fixed, its <Z>,
    <X> readouts are evaluated once and reused. Phase two runs n_iters
    passes on the angle group with the trained poles frozen. Updates
    dev.params in place and returns the batch losses in order.
    """
    if len(dev.shard.labels) == 0:
        raise ValueError("device shard is empty")
    params: QsnnParams = dev.params
    params.check_shape(config)
    labels = dev.shard.labels[None, :]
    z, x = qsnn.stacked_zx(dev.enc[None], params.angle[None], config)
    pole, losses1 = _pole_phase(
        z, x, labels, params.pole[None], n_iters, lr, batch_size, [rng], config.w
    )
    angle, losses2 = _angle_phase(
        dev.enc[None], labels, pole, params.angle[None], n_iters, lr, batch_size, [rng], config
    )
    params.pole, params.angle = pole[0], angle[0]
    return [float(v[0]) for v in losses1 + losses2]


def local_train_single_group(
    dev: DeviceState,
    n_iters: int,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
    config: QsnnConfig,
    group: str,
) -> list[float]:
    """n_iters passes of mini-batch SGD on one parameter group only.

    group is 'pole', 'angle', or 'classical'; any other group is untouched.
    Updates dev.params in place and returns the batch losses in order.
    """
    if len(dev.shard.labels) == 0:
        raise ValueError("device shard is empty")
    labels = dev.shard.labels[None, :]
    if group == "pole":
        params: QsnnParams = dev.params
        params.check_shape(config)
        z, x = qsnn.stacked_zx(dev.enc[None], params.angle[None], config)
        pole, losses = _pole_phase(
            z, x, labels, params.pole[None], n_iters, lr, batch_size, [rng], config.w
        )
        params.pole = pole[0]
    elif group == "angle":
        params = dev.params
        params.check_shape(config)
        angle, losses = _angle_phase(
            dev.enc[None], labels, params.pole[None], params.angle[None],
            n_iters, lr, batch_size, [rng], config,
        )
        params.angle = angle[0]
    elif group == "classical":
        params = dev.params
        weights, losses = _classical_phase(
            dev.features[None], labels, params.weights[None], params.feature_mask,
            n_iters, lr, batch_size, [rng],
        )
        params.weights = weights[0]
    else:
        raise ValueError(f"unknown parameter group {group!r}")
    return [float(v[0]) for v in losses]


def _train_all_devices(scheme, devices, n_iters, lr, batch_size, rngs, config):
    """Run every device's local training in lockstep; returns all batch losses."""
    sizes = {len(dev.shard.labels) for dev in devices}
    if len(sizes) != 1:
        raise ValueError("lockstep training requires equal shard sizes")
    if sizes == {0}:
        raise ValueError("device shards are empty")
    labels = np.stack([dev.shard.labels for dev in devices])
    if scheme is Scheme.CLASSICAL_FL:
        features = np.stack([dev.features for dev in devices])
        weights = np.stack([dev.params.weights for dev in devices])
        weights, losses = _classical_phase(
            features, labels, weights, devices[0].params.feature_mask,
            n_iters, lr, batch_size, rngs,
        )
        for d, dev in enumerate(devices):
            dev.params.weights = weights[d]
        return losses

    enc = np.stack([dev.enc for dev in devices])
    pole = np.stack([dev.params.pole for dev in devices])
    angle = np.stack([dev.params.angle for dev in devices])
    losses = []
    if scheme in (Scheme.SLIMQFL, Scheme.SLIMQFL_POLE):
        z, x = qsnn.stacked_zx(enc, angle, config)
        pole, pole_losses = _pole_phase(
            z, x, labels, pole, n_iters, lr, batch_size, rngs, config.w
        )
        losses.extend(pole_losses)
    if scheme in (Scheme.SLIMQFL, Scheme.VANILLA_QFL):
        angle, angle_losses = _angle_phase(
            enc, labels, pole, angle, n_iters, lr, batch_size, rngs, config
        )
        losses.extend(angle_losses)
    for d, dev in enumerate(devices):
        dev.params.pole = pole[d]
        dev.params.angle = angle[d]
    return losses


# -- aggregation -----------------------------------------------------------


def aggregate_slim(
    uploads: list[tuple[np.ndarray | None, np.ndarray | None] | None],
    prev: QsnnParams,
) -> QsnnParams:
    """Groupwise mean of the uploaded (pole, angle) payloads.

    Each upload is None (nothing received), (pole, None), or (pole, angle).
    A group with zero contributions keeps its previous global value.
    """
    poles = [u[0] for u in uploads if u is not None and u[0] is not None]
    angles = [u[1] for u in uploads if u is not None and u[1] is not None]
    for p in poles:
        if p.shape != prev.pole.shape:
            raise ValueError("uploaded pole length does not match the global model")
    for a in angles:
        if a.shape != prev.angle.shape:
            raise ValueError("uploaded angle length does not match the global model")
    pole = np.mean(np.stack(poles), axis=0) if poles else prev.pole.copy()
    angle = np.mean(np.stack(angles), axis=0) if angles else prev.angle.copy()
    return QsnnParams(pole, angle)


def aggregate_vanilla(uploads: list[np.ndarray | None], prev: np.ndarray) -> np.ndarray:
    """Mean of whole-model uploads; previous value if none arrived."""
    received = [u for u in uploads if u is not None]
    for u in received:
        if u.shape != prev.shape:
            raise ValueError("uploaded parameters do not match the global model")
    if not received:
        return prev.copy()
    return np.mean(np.stack(received), axis=0)


def evaluate(
    params: QsnnParams | DenseParams,
    test: EvalSet,
    w: float,
    config: QsnnConfig | None = None,
) -> float:
    """Top-1 accuracy on the test set; argmax ties go to the lowest class."""
    if len(test.labels) == 0:
        raise ValueError("test set is empty")
    if isinstance(params, DenseParams):
        logits = classical.batch_logits(test.features, params)
    else:
        logits = w * qsnn.batch_observables(test.enc, params, config)
    return float(np.mean(logits.argmax(axis=1) == test.labels))


# -- rounds -----------------------------------------------------------------


def run_round(
    scheme: Scheme,
    devices: list[DeviceState],
    global_model: GlobalModel,
    channel_cfg: ChannelConfig,
    schedule: LrSchedule,
    epoch: int,
    master_seed: int,
    test: EvalSet,
    config: QsnnConfig,
    n_iters: int,
    batch_size: int,
) -> tuple[GlobalModel, RoundRecord]:
    """One communication round: broadcast, train, transmit, aggregate, score."""
    lr = schedule.at(epoch)
    for dev in devices:
        dev.params = global_model.params.copy()
    rngs = [
        substream(master_seed, STREAM_SHUFFLE, dev.shard.device_id, epoch) for dev in devices
    ]
    losses = _train_all_devices(scheme, devices, n_iters, lr, batch_size, rngs, config)

    decisions = []
    uploads = []
    for dev in devices:
        outcome = draw_outcome(
            substream(master_seed, STREAM_CHANNEL, dev.shard.device_id, epoch), channel_cfg
        )
        decisions.append(outcome.decision)
        uploads.append(_payload(scheme, outcome.decision, dev.params))

    new_params = _aggregate(scheme, uploads, global_model.params)
    n_pole, n_whole = _upload_counts(scheme, decisions)
    record = RoundRecord(
        epoch=epoch,
        decisions=tuple(decisions),
        n_pole_uploads=n_pole,
        n_whole_uploads=n_whole,
        accuracy=evaluate(new_params, test, config.w, config),
        mean_loss=float(np.mean(losses)) if losses else float("nan"),
    )
    return GlobalModel(new_params, epoch + 1), record


def _payload(scheme: Scheme, decision: Decision, params):
    if scheme is Scheme.SLIMQFL:
        if decision is Decision.WHOLE:
            return (params.pole.copy(), params.angle.copy())
        if decision is Decision.POLE_ONLY:
            return (params.pole.copy(), None)
        return None
    if scheme is Scheme.SLIMQFL_POLE:
        if decision is not Decision.NONE:
            return (params.pole.copy(), None)
        return None
    # Whole-or-nothing schemes.
    if decision is Decision.WHOLE:
        return params.angle.copy() if scheme is Scheme.VANILLA_QFL else params.weights.copy()
    return None


def _aggregate(scheme: Scheme, uploads: list, prev):
    if scheme in (Scheme.SLIMQFL, Scheme.SLIMQFL_POLE):
        return aggregate_slim(uploads, prev)
    if scheme is Scheme.VANILLA_QFL:
        return QsnnParams(prev.pole.copy(), aggregate_vanilla(uploads, prev.angle))
    return DenseParams(aggregate_vanilla(uploads, prev.weights), prev.feature_mask)


def _upload_counts(scheme: Scheme, decisions: list[Decision]) -> tuple[int, int]:
    """(pole uploads, angle uploads) for the round's indicator bookkeeping.

    Whole-or-nothing schemes count a successful whole upload in both
    groups, keeping the angle-implies-pole ordering of the indicators.
    """
    n_whole = sum(d is Decision.WHOLE for d in decisions)
    n_any = sum(d is not Decision.NONE for d in decisions)
    if scheme is Scheme.SLIMQFL:
        return n_any, n_whole
    if scheme is Scheme.SLIMQFL_POLE:
        return n_any, 0
    return n_whole, n_whole


@dataclass
class RunResult:
    """Trajectory of one (scheme, seed) training run."""

    scheme: Scheme
    records: list[RoundRecord] = field(default_factory=list)
    initial: QsnnParams | DenseParams | None = None
    final: GlobalModel | None = None

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].accuracy


def run_scheme(
    scheme: Scheme,
    shards: list[DeviceShard],
    test: MiniDataset,
    channel_cfg: ChannelConfig,
    schedule: LrSchedule,
    epochs: int,
    n_iters: int,
    batch_size: int,
    master_seed: int,
    config: QsnnConfig | None = None,
    on_round=None,
) -> RunResult:
    """Train one scheme for `epochs` communication rounds from a master seed.

    on_round, when given, is called with (global_model, record) after every
    round; useful for invariant checks and streaming output.
    """
    config = config or QsnnConfig()
    devices = []
    for shard in shards:
        dev = DeviceState(shard=shard, features=shard.features())
        if scheme.is_quantum:
            dev.enc = qsnn.encode_batch(dev.features, config.n_qubits)
        devices.append(dev)
    test_features = test.images.reshape(len(test.labels), -1)
    test_set = EvalSet(
        features=test_features,
        labels=test.labels,
        enc=qsnn.encode_batch(test_features, config.n_qubits) if scheme.is_quantum else None,
    )
    params0 = init_params(scheme, config, substream(master_seed, STREAM_INIT))
    result = RunResult(scheme=scheme, initial=params0.copy())
    model = GlobalModel(params0, 0)
    for epoch in range(epochs):
        model, record = run_round(
            scheme, devices, model, channel_cfg, schedule, epoch, master_seed,
            test_set, config, n_iters, batch_size,
        )
        result.records.append(record)
        if on_round is not None:
            on_round(model, record)
    result.final = model
    return result
