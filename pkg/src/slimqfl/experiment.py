"""Experiment runner: config resolution, sweeps, CSV metrics, SVG curves.

A run is a cross product of sweep values (devices x local iterations x
batch size), each cell covering every configured noise level, scheme,
and seed for the full epoch budget. Per sweep point one CSV is written
with the fixed header

    epoch,scheme,sigma_db,seed,accuracy,mean_loss,n_pole_uploads,n_whole_uploads

(one row per epoch of each (scheme, sigma, seed) run, epochs 0-based),
plus one self-contained SVG per noise level comparing the schemes'
mean-over-seeds learning curves. Identical (config, seed) inputs yield
byte-identical CSVs.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, fields
from pathlib import Path

from .channel import ChannelConfig
from .data import filter_and_split, load_mini_dataset
from .federation import LrSchedule, Scheme, run_scheme
from .qsnn import QsnnConfig

CSV_FIELDS = (
    "epoch", "scheme", "sigma_db", "seed",
    "accuracy", "mean_loss", "n_pole_uploads", "n_whole_uploads",
)

ALL_SCHEMES = (Scheme.SLIMQFL, Scheme.SLIMQFL_POLE, Scheme.VANILLA_QFL, Scheme.CLASSICAL_FL)


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment settings; defaults follow the headline setup."""

    schemes: tuple[Scheme, ...] = ALL_SCHEMES
    sigma_db: tuple[float, ...] = (-40.0,)
    devices: tuple[int, ...] = (10,)
    local_iters: tuple[int, ...] = (10,)
    batch: tuple[int, ...] = (32,)
    epochs: int = 200
    eta0: float = 0.01
    decay: float = 0.001
    decay_schedule: str = "inverse_time"
    w: float = 1.6
    u_pole: float | None = None
    u_whole: float | None = None
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    per_device: int = 64
    test_size: int = 512
    data_dir: str | None = None
    synthetic_data: bool = False
    out_dir: str = "results"

    def __post_init__(self):
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        if min(self.devices) < 1:
            raise ValueError("devices must be positive")
        if min(self.batch) < 1:
            raise ValueError("batch size must be positive")
        if min(self.local_iters) < 0:
            raise ValueError("local iterations must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.eta0 <= 0:
            raise ValueError("learning rate eta0 must be positive")
        if self.per_device < 1 or self.test_size < 1:
            raise ValueError("per_device and test_size must be positive")
        if not self.seeds:
            raise ValueError("at least one seed is required")


# -- configuration parsing -------------------------------------------------


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_schemes(text: str) -> tuple[Scheme, ...]:
    if text.strip().lower() == "all":
        return ALL_SCHEMES
    return tuple(Scheme(part.strip().lower()) for part in text.split(","))


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(","))


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(","))


# key -> (config field, parser); keys use the CLI flag spelling.
_KEY_TABLE = {
    "scheme": ("schemes", _parse_schemes),
    "sigma-db": ("sigma_db", _parse_floats),
    "devices": ("devices", _parse_ints),
    "local-iters": ("local_iters", _parse_ints),
    "batch": ("batch", _parse_ints),
    "epochs": ("epochs", int),
    "eta0": ("eta0", float),
    "decay": ("decay", float),
    "decay-schedule": ("decay_schedule", str),
    "w": ("w", float),
    "u-pole": ("u_pole", float),
    "u-whole": ("u_whole", float),
    "seeds": ("seeds", _parse_ints),
    "per-device": ("per_device", int),
    "test-size": ("test_size", int),
    "data-dir": ("data_dir", str),
    "out-dir": ("out_dir", str),
    "synthetic-data": ("synthetic_data", _parse_bool),
}


def parse_config_file(path) -> dict[str, str]:
    """Read a flat `key = value` file; '#' starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Resolve a config from an optional file plus override values.

    Overrides (typically CLI flags) win over file keys; unset overrides are
    None. The special key 'seed' pins the seed list to one seed and beats
    'seeds'. Unknown keys are rejected.
    """
    merged: dict[str, object] = dict(parse_config_file(path)) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    seed = merged.pop("seed", None)
    resolved: dict[str, object] = {}
    for key, value in merged.items():
        if key not in _KEY_TABLE:
            raise ValueError(f"unknown configuration key {key!r}")
        field_name, parser = _KEY_TABLE[key]
        try:
            resolved[field_name] = parser(value) if isinstance(value, str) else value
        except ValueError as exc:
            raise ValueError(f"bad value for {key!r}: {exc}") from exc
    if seed is not None:
        resolved["seeds"] = (int(seed),)
    return ExperimentConfig(**resolved)


def config_echo(cfg: ExperimentConfig) -> str:
    """Flat key = value rendering of a resolved config (re-loadable)."""
    reverse = {field_name: key for key, (field_name, _) in _KEY_TABLE.items()}
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if isinstance(value, tuple):
            value = ",".join(v.value if isinstance(v, Scheme) else str(v) for v in value)
        lines.append(f"{reverse[f.name]} = {value}")
    return "\n".join(lines) + "\n"


# -- running -----------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig) -> list[Path]:
    """Execute every sweep cell and write CSV metrics plus SVG curves.

    Returns the paths written (config echo, CSVs, SVGs).
    """
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    echo_path = out_dir / "config_resolved.txt"
    echo_path.write_text(config_echo(cfg))
    written.append(echo_path)

    dataset = load_mini_dataset(cfg.data_dir, cfg.synthetic_data)
    schedule = LrSchedule(cfg.eta0, cfg.decay, cfg.decay_schedule)
    qsnn_config = QsnnConfig(w=cfg.w)

    sweep = list(itertools.product(cfg.devices, cfg.local_iters, cfg.batch))
    for n_devices, n_iters, batch_size in sweep:
        suffix = (
            ""
            if len(sweep) == 1
            else f"_devices-{n_devices}_iters-{n_iters}_batch-{batch_size}"
        )
        rows = []
        curves: dict[float, dict[str, list[list[float]]]] = {}
        for sigma_db in cfg.sigma_db:
            channel_cfg = ChannelConfig.from_db(sigma_db, cfg.u_pole, cfg.u_whole)
            per_scheme = curves.setdefault(sigma_db, {})
            for scheme in cfg.schemes:
                seed_curves = per_scheme.setdefault(scheme.value, [])
                for seed in cfg.seeds:
                    shards, test = filter_and_split(
                        dataset, n_devices, cfg.per_device, seed, cfg.test_size
                    )
                    result = run_scheme(
                        scheme, shards, test, channel_cfg, schedule, cfg.epochs,
                        n_iters, batch_size, seed, qsnn_config,
                    )
                    seed_curves.append([r.accuracy for r in result.records])
                    for rec in result.records:
                        rows.append((
                            rec.epoch, scheme.value, sigma_db, seed,
                            rec.accuracy, rec.mean_loss,
                            rec.n_pole_uploads, rec.n_whole_uploads,
                        ))

        csv_path = out_dir / f"metrics{suffix}.csv"
        _write_csv(csv_path, rows)
        written.append(csv_path)

        for sigma_db, per_scheme in curves.items():
            mean_curves = {
                name: [sum(col) / len(col) for col in zip(*seed_curves)]
                for name, seed_curves in per_scheme.items()
            }
            svg_path = out_dir / f"fig_schemes_{sigma_db:g}dB{suffix}.svg"
            svg_path.write_text(render_learning_curves_svg(
                mean_curves,
                title=f"test accuracy vs epoch ({sigma_db:g} dB noise)",
            ))
            written.append(svg_path)
    return written


def _write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_FIELDS)
        for row in rows:
            writer.writerow([str(v) for v in row])


# -- SVG ---------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def render_learning_curves_svg(
    curves: dict[str, list[float]],
    title: str = "",
    width: int = 640,
    height: int = 420,
) -> str:
    """Self-contained SVG of accuracy-vs-epoch polylines, one per scheme."""
    if not curves:
        raise ValueError("no curves to plot")
    left, right, top, bottom = 60, 20, 36, 46
    plot_w, plot_h = width - left - right, height - top - bottom
    n_epochs = max(len(c) for c in curves.values())

    def sx(epoch: float) -> float:
        return left + plot_w * (epoch / max(n_epochs - 1, 1))

    def sy(acc: float) -> float:
        return top + plot_h * (1.0 - acc)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(frac)
        parts.append(
            f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">{frac:g}</text>'
        )
    x_step = max(1, (n_epochs - 1) // 5 or 1)
    for epoch in range(0, n_epochs, x_step):
        x = sx(epoch)
        parts.append(
            f'<line x1="{x:.2f}" y1="{top + plot_h}" x2="{x:.2f}" '
            f'y2="{top + plot_h + 4}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{top + plot_h + 18}" text-anchor="middle">{epoch}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 8}" text-anchor="middle">epoch</text>'
    )
    parts.append(
        f'<text x="16" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + plot_h / 2:.1f})">test accuracy</text>'
    )
    for i, (name, values) in enumerate(curves.items()):
        color = _PALETTE[i % len(_PALETTE)]
        points = " ".join(f"{sx(e):.2f},{sy(a):.2f}" for e, a in enumerate(values))
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = top + 16 + 16 * i
        parts.append(
            f'<line x1="{left + 8}" y1="{ly - 4}" x2="{left + 30}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{left + 36}" y="{ly}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
