"""Dataset ingestion (IDX binary), client partitioning, synthetic data.

IDX is the standard MNIST container: big-endian u32 magic and dimension
headers followed by a raw u8 payload.  Pixels are normalized to [0, 1]
on parse (divide by 255) and datasets are immutable after construction.
"""

from __future__ import annotations

import gzip
import json
import struct
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import (
    ConfigError,
    ConsistencyError,
    DataError,
    FormatError,
    LengthError,
)
from .seeds import TAG_PARTITION, TAG_SYNTH, mix, rng_from

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

IMAGE_SIDE = 28


@dataclass(frozen=True)
class ClientDataset:
    """One client's local shard: images [n,28,28,1] in [0,1], labels 0..9."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float32)
        labels = np.asarray(self.labels, dtype=np.uint8)
        if images.ndim != 4 or images.shape[1:] != (IMAGE_SIDE, IMAGE_SIDE, 1):
            raise DataError(f"images must be [n,28,28,1], got {images.shape}")
        if labels.shape != (images.shape[0],):
            raise DataError("labels length must match image count")
        if images.shape[0] < 1:
            raise DataError("a dataset must hold at least one sample")
        if labels.max(initial=0) > 9:
            raise DataError("labels must be class indices in 0..9")
        images.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.images.shape[0]

    def subset(self, indices: np.ndarray) -> "ClientDataset":
        return ClientDataset(self.images[indices], self.labels[indices])


@dataclass(frozen=True)
class PartitionPlan:
    num_clients: int
    seed: int
    strategy: str = "iid"

    def __post_init__(self):
        if self.num_clients < 1:
            raise ConfigError(f"num_clients must be >= 1, got {self.num_clients}")
        if self.strategy not in ("iid", "label-sorted"):
            raise ConfigError(f"unknown partition strategy {self.strategy!r}")


# ---------------------------------------------------------------------------
# IDX codec


def _read_header(buf: bytes, magic: int, n_dims: int, what: str) -> tuple[int, ...]:
    header_len = 4 * (1 + n_dims)
    if len(buf) < header_len:
        raise FormatError(f"{what} file too short for an IDX header")
    got_magic = struct.unpack(">I", buf[:4])[0]
    if got_magic != magic:
        raise FormatError(
            f"{what} magic mismatch: got {got_magic:#010x}, want {magic:#010x}"
        )
    return struct.unpack(f">{n_dims}I", buf[4:header_len])


def parse_idx(images_bytes: bytes, labels_bytes: bytes) -> ClientDataset:
    """Parse a matched IDX image/label file pair into a dataset."""
    n, rows, cols = _read_header(images_bytes, IDX_IMAGES_MAGIC, 3, "images")
    if rows != IMAGE_SIDE or cols != IMAGE_SIDE:
        raise FormatError(f"expected 28x28 images, header says {rows}x{cols}")
    body = images_bytes[16:]
    if len(body) != n * rows * cols:
        raise LengthError(
            f"images payload holds {len(body)} bytes, header promises {n * rows * cols}"
        )
    (n_labels,) = _read_header(labels_bytes, IDX_LABELS_MAGIC, 1, "labels")
    label_body = labels_bytes[8:]
    if len(label_body) != n_labels:
        raise LengthError(
            f"labels payload holds {len(label_body)} bytes, header promises {n_labels}"
        )
    if n != n_labels:
        raise ConsistencyError(f"{n} images but {n_labels} labels")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(n, rows, cols, 1)
    images = pixels.astype(np.float32) / np.float32(255.0)
    labels = np.frombuffer(label_body, dtype=np.uint8)
    return ClientDataset(images, labels)


def write_idx(ds: ClientDataset) -> tuple[bytes, bytes]:
    """Dataset -> (images_bytes, labels_bytes); inverse of parse_idx."""
    n = len(ds)
    pixels = np.rint(ds.images * 255.0).astype(np.uint8)
    images_bytes = struct.pack(">IIII", IDX_IMAGES_MAGIC, n, IMAGE_SIDE, IMAGE_SIDE)
    images_bytes += pixels.tobytes()
    labels_bytes = struct.pack(">II", IDX_LABELS_MAGIC, n) + ds.labels.tobytes()
    return images_bytes, labels_bytes


def _read_maybe_gz(path: Union[str, Path]) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def load_idx_dataset(images_path, labels_path) -> ClientDataset:
    """Load an IDX pair from disk; .gz files are decompressed transparently."""
    return parse_idx(_read_maybe_gz(images_path), _read_maybe_gz(labels_path))


_IDX_PAIR_NAMES = (
    ("images-idx3-ubyte.gz", "labels-idx1-ubyte.gz"),
    ("images-idx3-ubyte", "labels-idx1-ubyte"),
    ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz"),
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
)


def load_dataset_dir(path: Union[str, Path]) -> ClientDataset:
    """Load the first recognized IDX pair found in a directory."""
    base = Path(path)
    for images_name, labels_name in _IDX_PAIR_NAMES:
        if (base / images_name).exists():
            return load_idx_dataset(base / images_name, base / labels_name)
    raise ConfigError(f"no IDX image/label pair found under {base}")


# ---------------------------------------------------------------------------
# partitioning


def shard_sizes(n: int, num_clients: int) -> list[int]:
    base, rem = divmod(n, num_clients)
    return [base + 1 if i < rem else base for i in range(num_clients)]


def partition(ds: ClientDataset, plan: PartitionPlan) -> list[ClientDataset]:
    """Split a dataset into disjoint shards covering the source."""
    n = len(ds)
    if plan.num_clients > n:
        raise ConfigError(f"cannot split {n} samples across {plan.num_clients} clients")
    if plan.strategy == "iid":
        order = rng_from(mix(plan.seed, TAG_PARTITION)).permutation(n)
    else:  # label-sorted: the standard non-IID stressor
        order = np.argsort(ds.labels, kind="stable")
    shards, off = [], 0
    for size in shard_sizes(n, plan.num_clients):
        shards.append(ds.subset(order[off : off + size]))
        off += size
    return shards


# ---------------------------------------------------------------------------
# synthetic data

# Patch layout and intensities are calibrated so the fixed CNN separates
# the classes within ~30 full-batch steps (see tests for the frozen run).
_PATCH_SIZE = 6
_PATCH_VALUE = 1.0
_NOISE_AMPLITUDE = 0.25


def _patch_origin(k: int) -> tuple[int, int]:
    return 4 + 12 * (k // 5), 1 + 5 * (k % 5)


def synth_dataset(n: int, num_classes: int = 10, seed: int = 0) -> ClientDataset:
    """Seeded noise images with one bright class-specific patch each."""
    if n < num_classes:
        raise ConfigError(f"need at least {num_classes} samples, got {n}")
    rng = rng_from(mix(seed, TAG_SYNTH))
    labels = (np.arange(n) % num_classes).astype(np.uint8)
    images = rng.random((n, IMAGE_SIDE, IMAGE_SIDE, 1)).astype(np.float32)
    images *= _NOISE_AMPLITUDE
    for i in range(n):
        r0, c0 = _patch_origin(int(labels[i]))
        images[i, r0 : r0 + _PATCH_SIZE, c0 : c0 + _PATCH_SIZE, 0] = _PATCH_VALUE
    return ClientDataset(images, labels)


# ---------------------------------------------------------------------------
# canonical MNIST download (CLI convenience; the library never fetches)

_MNIST_FILES = {
    # decompressed name -> (published decompressed byte length)
    "train-images-idx3-ubyte": 47040016,
    "train-labels-idx1-ubyte": 60008,
    "t10k-images-idx3-ubyte": 7840016,
    "t10k-labels-idx1-ubyte": 10008,
}

_MNIST_MIRRORS = (
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
)


def fetch_mnist(dest_dir: Union[str, Path], mirrors=_MNIST_MIRRORS) -> list[Path]:
    """Download the four canonical IDX files and verify their byte lengths."""
    dest = Path(dest_dir)
    dest.mkdir(parents=True, exist_ok=True)
    written = []
    for name, expected_len in _MNIST_FILES.items():
        target = dest / name
        if target.exists() and target.stat().st_size == expected_len:
            written.append(target)
            continue
        last_err = None
        for mirror in mirrors:
            url = mirror + name + ".gz"
            try:
                with urllib.request.urlopen(url, timeout=60) as resp:
                    raw = gzip.decompress(resp.read())
                break
            except Exception as exc:  # try the next mirror
                last_err = exc
        else:
            raise ConfigError(f"could not download {name}: {last_err}")
        if len(raw) != expected_len:
            raise LengthError(
                f"{name}: got {len(raw)} bytes, published length is {expected_len}"
            )
        target.write_bytes(raw)
        written.append(target)
    return written


def write_partition_manifest(
    out_dir: Union[str, Path], plan: PartitionPlan, shards: list[ClientDataset]
) -> Path:
    """Write shard IDX files plus a manifest JSON describing them."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, shard in enumerate(shards):
        images_bytes, labels_bytes = write_idx(shard)
        img_path = out / f"shard{i:03d}-images-idx3-ubyte"
        lbl_path = out / f"shard{i:03d}-labels-idx1-ubyte"
        img_path.write_bytes(images_bytes)
        lbl_path.write_bytes(labels_bytes)
        entries.append({"path": img_path.name, "n": len(shard)})
    manifest = out / "manifest.json"
    manifest.write_text(
        json.dumps(
            {"seed": plan.seed, "strategy": plan.strategy, "shards": entries},
            indent=2,
        )
    )
    return manifest
