"""Domain types, mass bookkeeping and the binary dataset format."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import MaterialParams
from .errors import (
    ChannelMismatchError,
    CorruptHeaderError,
    TruncatedPayloadError,
)

N_CHANNELS = 2  # relative height, intensity


@dataclass
class Tray:
    """Heightfield (mm) plus surface intensity; mutated in place by the simulator."""

    heights: np.ndarray
    intensity: np.ndarray
    cell_size_mm: float
    material: MaterialParams

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=np.float64)
        self.intensity = np.asarray(self.intensity, dtype=np.float64)
        if self.heights.ndim != 2 or self.heights.shape != self.intensity.shape:
            raise ValueError("heights and intensity must be matching 2-D grids")

    @property
    def shape(self) -> tuple[int, int]:
        return self.heights.shape

    def copy(self) -> "Tray":
        return Tray(self.heights.copy(), self.intensity.copy(), self.cell_size_mm, self.material)


def total_mass_g(tray: Tray) -> float:
    """density_scale [g/cm^3] * sum(heights) [mm] * cell area [mm^2], in grams."""
    volume_mm3 = float(tray.heights.sum()) * tray.cell_size_mm ** 2
    return tray.material.density_scale * volume_mm3 / 1000.0


@dataclass(frozen=True, eq=False)
class Patch:
    channels: np.ndarray  # (C, P, P)
    center_xy: tuple[int, int]

    def __eq__(self, other):
        if not isinstance(other, Patch):
            return NotImplemented
        return (
            self.center_xy == other.center_xy
            and self.channels.dtype == other.channels.dtype
            and self.channels.shape == other.channels.shape
            and self.channels.tobytes() == other.channels.tobytes()
        )

    @property
    def size(self) -> int:
        return self.channels.shape[-1]


@dataclass(frozen=True)
class GraspRecord:
    patch: Patch
    mass_g: float


@dataclass
class Dataset:
    records: list[GraspRecord]
    material_name: str
    seed: int
    meta: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.records)

    def patches(self) -> np.ndarray:
        """Stacked (n, C, P, P) float32 array."""
        return np.stack([r.patch.channels for r in self.records])

    def masses(self) -> np.ndarray:
        return np.array([r.mass_g for r in self.records], dtype=np.float64)

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.records[:n], self.material_name, self.seed, dict(self.meta))


def quantize(mass_g: float, resolution_g: float) -> float:
    """Nearest multiple of the scale resolution, ties to even."""
    return float(np.round(mass_g / resolution_g) * resolution_g)


# --- binary dataset format ------------------------------------------------
#
# header: magic(4) version(u16) C(u16) P(u16) n(u32) name_len(u16) name(utf8) seed(u64)
# body:   n*C*P*P float32 patches | n float32 masses | n*2 int32 centers (x, y)
# all little-endian.

MAGIC = b"MGDS"
VERSION = 1
_HEAD = struct.Struct("<4sHHHIH")
_SEED = struct.Struct("<Q")


def dataset_to_bytes(ds: Dataset) -> bytes:
    if not ds.records:
        raise ValueError("cannot serialize an empty dataset")
    patches = ds.patches().astype("<f4", copy=False)
    n, c, p, _ = patches.shape
    name = ds.material_name.encode()
    masses = np.array([r.mass_g for r in ds.records], dtype="<f4")
    centers = np.array([r.patch.center_xy for r in ds.records], dtype="<i4")
    return b"".join([
        _HEAD.pack(MAGIC, VERSION, c, p, n, len(name)),
        name,
        _SEED.pack(ds.seed),
        patches.tobytes(),
        masses.tobytes(),
        centers.tobytes(),
    ])


def dataset_from_bytes(buf: bytes, expect_channels: int = N_CHANNELS) -> Dataset:
    if len(buf) < _HEAD.size:
        raise CorruptHeaderError("file shorter than header")
    magic, version, c, p, n, name_len = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CorruptHeaderError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptHeaderError(f"unsupported version {version}")
    off = _HEAD.size
    if len(buf) < off + name_len + _SEED.size:
        raise CorruptHeaderError("header truncated")
    try:
        name = buf[off:off + name_len].decode()
    except UnicodeDecodeError:
        raise CorruptHeaderError("material name is not utf-8") from None
    off += name_len
    (seed,) = _SEED.unpack_from(buf, off)
    off += _SEED.size
    if c != expect_channels:
        raise ChannelMismatchError(f"expected {expect_channels} channels, file has {c}")
    if n < 1 or p < 1:
        raise CorruptHeaderError(f"invalid sizes n={n} P={p}")
    need = n * c * p * p * 4 + n * 4 + n * 8
    if len(buf) - off < need:
        raise TruncatedPayloadError(f"payload has {len(buf) - off} bytes, need {need}")
    if len(buf) - off > need:
        raise CorruptHeaderError("trailing bytes after payload")
    patches = np.frombuffer(buf, "<f4", n * c * p * p, off).reshape(n, c, p, p)
    off += patches.nbytes
    masses = np.frombuffer(buf, "<f4", n, off)
    off += masses.nbytes
    centers = np.frombuffer(buf, "<i4", 2 * n, off).reshape(n, 2)
    records = [
        GraspRecord(
            Patch(patches[i].astype(np.float32), (int(centers[i, 0]), int(centers[i, 1]))),
            float(masses[i]),
        )
        for i in range(n)
    ]
    return Dataset(records, name, int(seed))


def save_dataset(ds: Dataset, path) -> None:
    if not str(path):
        raise ValueError("invalid path: empty")
    Path(path).write_bytes(dataset_to_bytes(ds))


def load_dataset(path) -> Dataset:
    if not str(path):
        raise ValueError("invalid path: empty")
    return dataset_from_bytes(Path(path).read_bytes())
