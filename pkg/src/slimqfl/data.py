"""Digit data pipeline: IDX files, 7x area downsampling, device shards.

Produces the reduced four-class task the simulator trains on: 28x28
grayscale digits restricted to labels {0, 1, 2, 3}, shrunk to 4x4 by
averaging 7x7 blocks, pixel range mapped to [0, pi] so each value can
drive an encoder rotation injectively.

When no digit files are available, a seeded synthetic generator builds
a stand-in corpus of two-blob images whose blob placement encodes the
class, keeping the full pipeline and test suite runnable offline.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

IMAGE_SIDE = 28
MINI_SIDE = 4
BLOCK = IMAGE_SIDE // MINI_SIDE  # 7

PIXEL_SCALE = np.pi / 255.0

MINI_CLASSES = (0, 1, 2, 3)

DEFAULT_IMAGES_FILE = "train-images-idx3-ubyte"
DEFAULT_LABELS_FILE = "train-labels-idx1-ubyte"

# Fixed corpus seed: the synthetic dataset plays the role of a fixed
# on-disk dataset, independent of the experiment seed.
SYNTHETIC_SEED = 1234
SYNTHETIC_SIZE = 4096


@dataclass(frozen=True)
class RawDataset:
    """28x28 uint8 images with byte labels."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(
                f"image count {len(self.images)} != label count {len(self.labels)}"
            )


@dataclass(frozen=True)
class MiniDataset:
    """4x4 float images in [0, pi] with class labels in {0, 1, 2, 3}."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError("image count != label count")


@dataclass(frozen=True)
class DeviceShard:
    """One device's fixed local dataset."""

    device_id: int
    images: np.ndarray  # (per_device, 4, 4)
    labels: np.ndarray  # (per_device,)

    def features(self) -> np.ndarray:
        return self.images.reshape(len(self.labels), -1)


def parse_idx(data: bytes) -> np.ndarray:
    """Decode an IDX blob into a uint8 array.

    Accepts the two container layouts used here: magic 0x00000803 with
    three big-endian dimension sizes (images) and magic 0x00000801 with
    one (labels). The payload byte count must match the header exactly.
    """
    if len(data) < 4:
        raise ValueError("truncated IDX header")
    (magic,) = struct.unpack(">i", data[:4])
    if magic == IMAGE_MAGIC:
        ndim = 3
    elif magic == LABEL_MAGIC:
        ndim = 1
    else:
        raise ValueError(f"unsupported magic 0x{magic & 0xFFFFFFFF:08x}")
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise ValueError("truncated IDX header")
    dims = struct.unpack(f">{ndim}i", data[4:header_len])
    if any(d < 0 for d in dims):
        raise ValueError(f"invalid IDX dimensions {dims}")
    total = int(np.prod(dims, dtype=np.int64))
    payload = len(data) - header_len
    if payload < total:
        raise ValueError(f"truncated IDX payload: header promises {total} bytes, got {payload}")
    if payload > total:
        raise ValueError(f"oversized IDX payload: header promises {total} bytes, got {payload}")
    return np.frombuffer(data, dtype=np.uint8, offset=header_len).reshape(dims)


def load_raw(
    data_dir,
    images_file: str = DEFAULT_IMAGES_FILE,
    labels_file: str = DEFAULT_LABELS_FILE,
) -> RawDataset:
    """Read an images/labels IDX pair from a directory."""
    root = Path(data_dir)
    images = parse_idx((root / images_file).read_bytes())
    labels = parse_idx((root / labels_file).read_bytes())
    if images.ndim != 3:
        raise ValueError(f"{images_file} is not an image file")
    if labels.ndim != 1:
        raise ValueError(f"{labels_file} is not a label file")
    return RawDataset(images, labels)


def downsample_area(image: np.ndarray) -> np.ndarray:
    """Shrink a 28x28 grid to 4x4 by 7x7 block means, rescaled to [0, pi].

    Block averaging is area interpolation at an exact integer ratio.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (IMAGE_SIDE, IMAGE_SIDE):
        raise ValueError(f"expected ({IMAGE_SIDE}, {IMAGE_SIDE}) image, got {image.shape}")
    blocks = image.reshape(MINI_SIDE, BLOCK, MINI_SIDE, BLOCK)
    return blocks.mean(axis=(1, 3)) * PIXEL_SCALE


def build_mini_dataset(raw: RawDataset) -> MiniDataset:
    """Keep labels {0,1,2,3} and downsample every image to 4x4 in [0, pi]."""
    keep = np.isin(raw.labels, MINI_CLASSES)
    images = np.asarray(raw.images[keep], dtype=np.float64)
    blocks = images.reshape(-1, MINI_SIDE, BLOCK, MINI_SIDE, BLOCK)
    mini = blocks.mean(axis=(2, 4)) * PIXEL_SCALE
    return MiniDataset(mini, raw.labels[keep].astype(np.int64))


def filter_and_split(
    dataset: MiniDataset,
    n_devices: int,
    per_device: int,
    seed: int,
    test_size: int = 512,
) -> tuple[list[DeviceShard], MiniDataset]:
    """Draw disjoint IID device shards plus a label-balanced held-out test set.

    Shards are uniform random without replacement; the remainder feeds the
    test set, filled per class as evenly as availability allows, capped at
    test_size. Deterministic for a fixed seed.
    """
    keep = np.isin(dataset.labels, MINI_CLASSES)
    images, labels = dataset.images[keep], dataset.labels[keep]
    need = n_devices * per_device
    if len(labels) < need + 1:
        raise ValueError(
            f"need more than {need} eligible samples for {n_devices} devices "
            f"of {per_device}, have {len(labels)}"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(labels))
    shards = []
    for d in range(n_devices):
        take = perm[d * per_device : (d + 1) * per_device]
        shards.append(DeviceShard(d, images[take], labels[take]))

    pool = perm[need:]
    quota = test_size // len(MINI_CLASSES)
    chosen = []
    for cls in MINI_CLASSES:
        cls_pool = pool[labels[pool] == cls]
        chosen.append(cls_pool[:quota])
    chosen = np.concatenate(chosen)
    if len(chosen) < test_size:
        leftover = pool[~np.isin(pool, chosen)]
        chosen = np.concatenate([chosen, leftover[: test_size - len(chosen)]])
    chosen = np.sort(chosen)
    return shards, MiniDataset(images[chosen], labels[chosen])


def synthetic_raw_dataset(
    n_samples: int = SYNTHETIC_SIZE, seed: int = SYNTHETIC_SEED
) -> RawDataset:
    """Deterministic stand-in corpus of 28x28 two-blob digit surrogates.

    Each class lights two of the four image quadrants (main diagonal,
    anti-diagonal, left column, right column); blob centers, widths and
    amplitudes jitter per sample and uniform pixel noise is added, so the
    task is learnable but not separable from any single image row.
    """
    quadrant = {0: (7, 7), 1: (7, 21), 2: (21, 7), 3: (21, 21)}
    patterns = {
        0: (0, 3),  # top-left + bottom-right
        1: (1, 2),  # top-right + bottom-left
        2: (0, 2),  # left column
        3: (1, 3),  # right column
    }
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, len(patterns), size=n_samples).astype(np.uint8)
    yy, xx = np.mgrid[0:IMAGE_SIDE, 0:IMAGE_SIDE]
    images = np.empty((n_samples, IMAGE_SIDE, IMAGE_SIDE), dtype=np.uint8)
    for i, cls in enumerate(labels):
        canvas = rng.uniform(0.0, 40.0, size=(IMAGE_SIDE, IMAGE_SIDE))
        for quad in patterns[int(cls)]:
            cy, cx = quadrant[quad]
            cy += rng.normal(0.0, 2.0)
            cx += rng.normal(0.0, 2.0)
            width = rng.uniform(2.5, 4.5)
            amp = rng.uniform(140.0, 255.0)
            canvas += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2))
        images[i] = np.clip(canvas, 0.0, 255.0).astype(np.uint8)
    return RawDataset(images, labels)


def load_mini_dataset(
    data_dir=None,
    synthetic: bool = False,
    images_file: str = DEFAULT_IMAGES_FILE,
    labels_file: str = DEFAULT_LABELS_FILE,
) -> MiniDataset:
    """Load the reduced dataset from IDX files, or synthesize one."""
    if data_dir is not None:
        raw = load_raw(data_dir, images_file, labels_file)
    elif synthetic:
        raw = synthetic_raw_dataset()
    else:
        raise ValueError("no data directory given and synthetic fallback not enabled")
    return build_mini_dataset(raw)
