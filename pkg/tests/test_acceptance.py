"""Acceptance suite: one test per exit criterion, each printing a verdict line.

Criteria 5-8 share a battery of full 200-epoch federated runs (5 schemes
x channel settings x 5 seeds) executed once per session; per-round
invariants for criterion 10 are collected while those runs execute.
Run with `pytest tests/test_acceptance.py -v -s` to see the verdict
lines and per-run progress.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from slimqfl import qsnn
from slimqfl.channel import ChannelConfig, db_to_linear, default_thresholds, sample_gain, success_probability, throughput
from slimqfl.data import build_mini_dataset, filter_and_split, synthetic_raw_dataset
from slimqfl.experiment import load_config, run_experiment
from slimqfl.federation import (
    STREAM_INIT,
    STREAM_SHUFFLE,
    DeviceState,
    LrSchedule,
    Scheme,
    aggregate_slim,
    aggregate_vanilla,
    init_params,
    local_train_pole_to_angle,
    run_scheme,
    substream,
)
from slimqfl.qsnn import QsnnConfig, QsnnParams
from slimqfl.statevector import GateOp, apply_gate, init_zero_state

CFG = QsnnConfig()
SEEDS = (0, 1, 2, 3, 4)
TABLE_DEFAULTS = dict(n_devices=10, per_device=64, test_size=512, epochs=200, n_iters=10, batch_size=32)

BATTERY_CELLS = (
    (Scheme.SLIMQFL, -40.0),
    (Scheme.VANILLA_QFL, -40.0),
    (Scheme.SLIMQFL_POLE, -40.0),
    (Scheme.SLIMQFL, -20.0),
    (Scheme.VANILLA_QFL, -20.0),
)


def report(criterion: str, passed: bool, detail: str) -> None:
    print(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
    assert passed, f"{criterion}: {detail}"


# -- shared battery of full training runs -----------------------------------


@dataclass
class BatteryRun:
    final_accuracy: float
    wall_seconds: float
    indicator_ok: bool = True
    vanilla_pole_ok: bool = True
    pole_angle_ok: bool = True
    n_records: int = 0


@dataclass
class Battery:
    runs: dict = field(default_factory=dict)

    def mean_final(self, scheme: Scheme, sigma_db: float) -> float:
        return float(np.mean([self.runs[(scheme, sigma_db, s)].final_accuracy for s in SEEDS]))

    def total_wall(self, scheme: Scheme, sigma_db: float) -> float:
        return sum(self.runs[(scheme, sigma_db, s)].wall_seconds for s in SEEDS)


@pytest.fixture(scope="module")
def battery():
    mini = build_mini_dataset(synthetic_raw_dataset())
    out = Battery()
    for scheme, sigma_db in BATTERY_CELLS:
        channel_cfg = ChannelConfig.from_db(sigma_db)
        for seed in SEEDS:
            shards, test = filter_and_split(
                mini, TABLE_DEFAULTS["n_devices"], TABLE_DEFAULTS["per_device"],
                seed=seed, test_size=TABLE_DEFAULTS["test_size"],
            )
            indicator_ok = True
            vanilla_poles = []
            pole_angles = []

            def on_round(model, rec):
                nonlocal indicator_ok
                if rec.n_whole_uploads > rec.n_pole_uploads:
                    indicator_ok = False
                if scheme is Scheme.VANILLA_QFL:
                    vanilla_poles.append(model.params.pole.copy())
                if scheme is Scheme.SLIMQFL_POLE:
                    pole_angles.append(model.params.angle.copy())

            start = time.perf_counter()
            result = run_scheme(
                scheme, shards, test, channel_cfg, LrSchedule(),
                TABLE_DEFAULTS["epochs"], TABLE_DEFAULTS["n_iters"],
                TABLE_DEFAULTS["batch_size"], seed, CFG, on_round=on_round,
            )
            wall = time.perf_counter() - start
            run = BatteryRun(
                final_accuracy=result.final_accuracy,
                wall_seconds=wall,
                indicator_ok=indicator_ok,
                vanilla_pole_ok=all(np.all(p == 0.0) for p in vanilla_poles),
                pole_angle_ok=all(
                    np.array_equal(a, result.initial.angle) for a in pole_angles
                ),
                n_records=len(result.records),
            )
            out.runs[(scheme, sigma_db, seed)] = run
            print(
                f"  battery: {scheme.value} at {sigma_db:g} dB, seed {seed}: "
                f"final accuracy {run.final_accuracy:.3f} ({wall:.0f}s)"
            )
    return out


@pytest.fixture(scope="module")
def tiny_experiment(tmp_path_factory):
    """Two identical miniature experiment invocations over all four schemes."""
    overrides = {
        "epochs": "2", "devices": "2", "per-device": "8", "test-size": "32",
        "local-iters": "1", "batch": "4", "seeds": "0", "synthetic-data": True,
    }
    roots = []
    for tag in ("first", "second"):
        out_dir = tmp_path_factory.mktemp(f"accept_{tag}")
        cfg = load_config(None, dict(overrides, **{"out-dir": str(out_dir)}))
        run_experiment(cfg)
        roots.append(out_dir)
    return roots


# -- criteria ----------------------------------------------------------------


def test_criterion_1_gradient_fidelity():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    h = 1e-5
    worst = 0.0
    for _ in range(20):
        features = rng.uniform(0, np.pi, 16)
        label = int(rng.integers(4))
        params = QsnnParams(rng.uniform(-np.pi, np.pi, 4), rng.uniform(-np.pi, np.pi, 36))
        for group in ("pole", "angle"):
            vec = params.pole if group == "pole" else params.angle
            fd = np.zeros_like(vec)
            for j in range(vec.size):
                plus, minus = params.copy(), params.copy()
                (plus.pole if group == "pole" else plus.angle)[j] += h
                (minus.pole if group == "pole" else minus.angle)[j] -= h
                lp = qsnn.loss(qsnn.forward(features, plus, CFG), label, CFG.w)
                lm = qsnn.loss(qsnn.forward(features, minus, CFG), label, CFG.w)
                fd[j] = (lp - lm) / (2 * h)
            shift = (
                qsnn.grad_pole(features, label, params, CFG)
                if group == "pole"
                else qsnn.grad_angle(features, label, params, CFG)
            )
            np.testing.assert_allclose(shift, fd, rtol=1e-5, atol=1e-8)
            scale = np.maximum(np.abs(fd), 1e-8)
            worst = max(worst, float(np.max(np.abs(shift - fd) / scale)))
    elapsed = time.perf_counter() - start
    report(
        "criterion 1 (gradient fidelity)",
        elapsed < 60.0,
        f"shift rule matches finite differences on 20 draws, worst rel err "
        f"{worst:.2e}, {elapsed:.1f}s < 60s",
    )


def test_criterion_2_quantum_core_oracle():
    i2 = np.eye(2, dtype=complex)
    pauli = {
        "x": np.array([[0, 1], [1, 0]], dtype=complex),
        "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "z": np.array([[1, 0], [0, -1]], dtype=complex),
    }
    p0 = np.diag([1, 0]).astype(complex)
    p1 = np.diag([0, 1]).astype(complex)

    def dense(op, n):
        if op.kind == "cnot":
            a = [p0 if q == op.control else i2 for q in range(n)]
            b = [p1 if q == op.control else pauli["x"] if q == op.target else i2 for q in range(n)]
            out_a, out_b = a[0], b[0]
            for x, y in zip(a[1:], b[1:]):
                out_a, out_b = np.kron(out_a, x), np.kron(out_b, y)
            return out_a + out_b
        m = np.cos(op.angle / 2) * i2 - 1j * np.sin(op.angle / 2) * pauli[op.kind[1]]
        blocks = [m if q == op.target else i2 for q in range(n)]
        out = blocks[0]
        for block in blocks[1:]:
            out = np.kron(out, block)
        return out

    def random_op(rng, n):
        if n >= 2 and rng.random() < 0.3:
            control, target = rng.choice(n, size=2, replace=False)
            return GateOp("cnot", int(target), control=int(control))
        kind = str(rng.choice(["rx", "ry", "rz"]))
        return GateOp(kind, int(rng.integers(n)), angle=float(rng.uniform(-np.pi, np.pi)))

    rng = np.random.default_rng(7)
    worst = 0.0
    for n in (1, 2, 3):
        state = init_zero_state(n)
        reference = np.zeros(2**n, dtype=complex)
        reference[0] = 1.0
        for _ in range(100):
            op = random_op(rng, n)
            state = apply_gate(state, op)
            reference = dense(op, n) @ reference
            worst = max(worst, float(np.max(np.abs(state.amplitudes - reference))))
        assert worst <= 1e-12
    norm_drift = 0.0
    for n in (2, 3, 4):
        state = init_zero_state(n)
        for _ in range(100):
            state = apply_gate(state, random_op(rng, n))
        norm_drift = max(norm_drift, abs(state.norm() - 1.0))
    ok = worst <= 1e-12 and norm_drift < 1e-10
    report(
        "criterion 2 (quantum-core oracle)",
        ok,
        f"matrix-multiplication agreement {worst:.2e} <= 1e-12, "
        f"norm drift {norm_drift:.2e} < 1e-10",
    )


def test_criterion_3_channel_oracle():
    u_pole, u_whole = default_thresholds()
    n = 10**5
    worst_ratio = 0.0
    for sigma_db in (-20.0, -30.0, -40.0):
        sigma2 = db_to_linear(sigma_db)
        rng = np.random.default_rng(1000 + int(-sigma_db))
        rates = np.array([throughput(sample_gain(rng), sigma2) for _ in range(n)])
        for u in (u_pole, u_whole):
            p = success_probability(u, sigma2)
            tolerance = 3 * np.sqrt(p * (1 - p) / n)
            error = abs(float(np.mean(rates >= u)) - p)
            worst_ratio = max(worst_ratio, error / tolerance)
            assert error <= tolerance, (sigma_db, u, error, tolerance)
    report(
        "criterion 3 (channel oracle)",
        worst_ratio <= 1.0,
        f"empirical tails within 3 binomial sd at all noise levels "
        f"(worst error/tolerance {worst_ratio:.2f})",
    )


def test_criterion_4_degenerate_channel_equivalence():
    rng = np.random.default_rng(11)
    uploads = [(rng.normal(size=4), rng.normal(size=36)) for _ in range(10)]
    prev = QsnnParams(rng.normal(size=4), rng.normal(size=36))
    slim = aggregate_slim(uploads, prev)
    pole_sep = aggregate_vanilla([u[0] for u in uploads], prev.pole)
    angle_sep = aggregate_vanilla([u[1] for u in uploads], prev.angle)
    agg_gap = max(
        float(np.max(np.abs(slim.pole - pole_sep))),
        float(np.max(np.abs(slim.angle - angle_sep))),
    )
    assert agg_gap <= 1e-12

    mini = build_mini_dataset(synthetic_raw_dataset(512, seed=3))
    shards, test = filter_and_split(mini, 1, 64, seed=0, test_size=64)
    always = ChannelConfig(sigma2=1e-4, u_pole=0.0, u_whole=0.0)
    schedule = LrSchedule()
    epochs = 5
    master_seed = 0
    federated = run_scheme(
        Scheme.SLIMQFL, shards, test, always, schedule, epochs,
        TABLE_DEFAULTS["n_iters"], TABLE_DEFAULTS["batch_size"], master_seed, CFG,
    )
    params = init_params(Scheme.SLIMQFL, CFG, substream(master_seed, STREAM_INIT))
    dev = DeviceState(shard=shards[0], features=shards[0].features())
    dev.enc = qsnn.encode_batch(dev.features, CFG.n_qubits)
    for epoch in range(epochs):
        dev.params = params.copy()
        rng_dev = substream(master_seed, STREAM_SHUFFLE, shards[0].device_id, epoch)
        local_train_pole_to_angle(
            dev, TABLE_DEFAULTS["n_iters"], schedule.at(epoch),
            TABLE_DEFAULTS["batch_size"], rng_dev, CFG,
        )
        params = dev.params
    standalone_gap = max(
        float(np.max(np.abs(federated.final.params.pole - params.pole))),
        float(np.max(np.abs(federated.final.params.angle - params.angle))),
    )
    ok = agg_gap <= 1e-12 and standalone_gap <= 1e-12
    report(
        "criterion 4 (degenerate-channel equivalence)",
        ok,
        f"groupwise aggregation gap {agg_gap:.1e}, single-device trajectory "
        f"gap {standalone_gap:.1e} (both <= 1e-12)",
    )


def test_criterion_5_learning_happens(battery):
    mean_acc = battery.mean_final(Scheme.SLIMQFL, -40.0)
    wall = battery.total_wall(Scheme.SLIMQFL, -40.0)
    ok = mean_acc >= 0.60 and wall <= 1800.0
    report(
        "criterion 5 (learning happens)",
        ok,
        f"slimqfl at -40 dB: mean final accuracy {mean_acc:.3f} >= 0.60 over "
        f"{len(SEEDS)} seeds, runtime {wall:.0f}s <= 1800s",
    )


def test_criterion_6_pole_only_trainability(battery):
    mean_acc = battery.mean_final(Scheme.SLIMQFL_POLE, -40.0)
    ok = mean_acc >= 0.25 + 0.05
    report(
        "criterion 6 (pole-only trainability)",
        ok,
        f"slimqfl_pole at -40 dB: mean final accuracy {mean_acc:.3f} >= 0.30 "
        f"(random baseline 0.25 + 0.05)",
    )


def test_criterion_7_channel_robustness_ordering(battery):
    slim = battery.mean_final(Scheme.SLIMQFL, -20.0)
    vanilla = battery.mean_final(Scheme.VANILLA_QFL, -20.0)
    ok = slim >= vanilla + 0.05
    report(
        "criterion 7 (poor-channel ordering)",
        ok,
        f"at -20 dB: slimqfl {slim:.3f} vs vanilla {vanilla:.3f} "
        f"(gap {slim - vanilla:+.3f} >= 0.05)",
    )


def test_criterion_8_good_channel_parity(battery):
    slim = battery.mean_final(Scheme.SLIMQFL, -40.0)
    vanilla = battery.mean_final(Scheme.VANILLA_QFL, -40.0)
    pole = battery.mean_final(Scheme.SLIMQFL_POLE, -40.0)
    ok = abs(slim - vanilla) <= 0.10 and slim > pole and vanilla > pole
    report(
        "criterion 8 (good-channel parity)",
        ok,
        f"at -40 dB: |slimqfl {slim:.3f} - vanilla {vanilla:.3f}| = "
        f"{abs(slim - vanilla):.3f} <= 0.10, both above pole-only {pole:.3f}",
    )


def test_criterion_9_determinism(tiny_experiment):
    first, second = tiny_experiment
    csv_a = (first / "metrics.csv").read_bytes()
    csv_b = (second / "metrics.csv").read_bytes()
    ok = csv_a == csv_b and len(csv_a) > 0
    report(
        "criterion 9 (determinism)",
        ok,
        f"repeated identical (config, seed) runs wrote byte-identical CSVs "
        f"({len(csv_a)} bytes)",
    )


def test_criterion_10_scheme_invariants(battery, tiny_experiment):
    indicator_ok = all(run.indicator_ok for run in battery.runs.values())
    vanilla_ok = all(run.vanilla_pole_ok for run in battery.runs.values())
    pole_ok = all(run.pole_angle_ok for run in battery.runs.values())
    complete = all(run.n_records == TABLE_DEFAULTS["epochs"] for run in battery.runs.values())
    with open(tiny_experiment[0] / "metrics.csv") as handle:
        rows = list(csv.DictReader(handle))
    csv_ok = all(int(r["n_whole_uploads"]) <= int(r["n_pole_uploads"]) for r in rows)
    ok = indicator_ok and vanilla_ok and pole_ok and complete and csv_ok
    report(
        "criterion 10 (scheme invariants)",
        ok,
        f"every epoch of every run: whole-uploads <= pole-uploads "
        f"({indicator_ok}), vanilla pole stayed zero ({vanilla_ok}), "
        f"pole-only angles stayed at initialization ({pole_ok})",
    )
