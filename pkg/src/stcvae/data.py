"""Factor-annotated image datasets.

``generate_toy_factors`` renders a complete grid of (factor combination
-> image) pairs: a white shape on a black background whose x/y position,
scale, shape, brightness and rotation are controlled by up to six
ground-truth factors.  Rendering is a pure function of the factor values,
so slices along one factor vary exactly one visual attribute -- the
property the disentanglement metrics rely on.

``write_fvds``/``read_fvds`` define the on-disk container (all integers
little-endian):

    magic "FVDS" | u32 version=1 | u32 N, H, W, C, K
    K  x u32   factor cardinalities
    N*K x u32  factor values, row-major
    N*H*W*C u8 pixels

Round-trips are byte-exact.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FVDS_MAGIC = b"FVDS"
FVDS_VERSION = 1

FACTOR_ROLES = ("x-position", "y-position", "scale", "shape", "brightness", "rotation")
SHAPE_NAMES = ("square", "disc", "cross")


class DataError(ValueError):
    """Raised for invalid dataset construction parameters."""


class FormatError(ValueError):
    """Raised for malformed FVDS files, naming the offending field."""


@dataclass
class FactorDataset:
    """Images plus their ground-truth factor annotations.

    ``images`` is N x H x W x C uint8; ``factor_values`` is N x K with
    ``0 <= factor_values[i, k] < factor_sizes[k]``.
    """

    images: np.ndarray
    factor_values: np.ndarray
    factor_sizes: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        self.factor_values = np.asarray(self.factor_values, dtype=np.int64)
        self.factor_sizes = np.asarray(self.factor_sizes, dtype=np.int64)
        if self.images.ndim != 4:
            raise DataError(f"images must be N x H x W x C, got {self.images.shape}")
        n, k = self.factor_values.shape
        if n != self.images.shape[0] or k != self.factor_sizes.size:
            raise DataError(
                f"factor table {self.factor_values.shape} inconsistent with "
                f"{self.images.shape[0]} images and {self.factor_sizes.size} factors"
            )
        if np.any(self.factor_values < 0) or np.any(
            self.factor_values >= self.factor_sizes
        ):
            raise DataError("factor values out of range for their cardinalities")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.images.shape[1:]

    @property
    def num_factors(self) -> int:
        return int(self.factor_sizes.size)

    def float_images(self, idx=slice(None)) -> np.ndarray:
        """Images normalized to [0, 1] float32 (normalization happens at
        batch assembly, never at rest)."""
        return self.images[idx].astype(np.float32) / 255.0


def _render(size: int, cx, cy, radius, shape_kind, brightness, angle) -> np.ndarray:
    """Rasterize one white-on-black shape; all geometry in [0, 1] units."""
    coords = (np.arange(size) + 0.5) / size
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    dx, dy = xx - cx, yy - cy
    if angle != 0.0:
        c, s = np.cos(angle), np.sin(angle)
        dx, dy = c * dx + s * dy, -s * dx + c * dy
    if shape_kind == 0:  # square
        mask = (np.abs(dx) <= radius) & (np.abs(dy) <= radius)
    elif shape_kind == 1:  # disc
        mask = dx * dx + dy * dy <= radius * radius
    else:  # cross
        arm = radius / 3.0
        mask = ((np.abs(dx) <= arm) & (np.abs(dy) <= radius)) | (
            (np.abs(dy) <= arm) & (np.abs(dx) <= radius)
        )
    return (mask * brightness).astype(np.uint8)


def generate_toy_factors(
    factor_sizes, image_size: int = 32, seed: int = 0
) -> FactorDataset:
    """Render the complete factor grid as a dataset.

    Factors map onto visual attributes in ``FACTOR_ROLES`` order:
    x-position, y-position, scale, shape (square/disc/cross), brightness,
    rotation; with K < 6 the remaining attributes stay fixed.  The grid is
    complete: every combination appears exactly once, in row-major order.
    Rendering is fully deterministic; ``seed`` is recorded in the dataset
    name so downstream artifacts can carry it, but adds no randomness.
    """
    sizes = [int(s) for s in factor_sizes]
    if not 1 <= len(sizes) <= 6:
        raise DataError(f"need 1..6 factors, got {len(sizes)}")
    if any(s < 1 for s in sizes):
        raise DataError(f"factor cardinalities must be >= 1, got {sizes}")
    total = int(np.prod(sizes))
    if total > 50_000:
        raise DataError(f"factor grid of {total} combinations is too large")
    if image_size not in (32, 64):
        raise DataError(f"image_size must be 32 or 64, got {image_size}")

    def level(value: int, count: int, lo: float, hi: float) -> float:
        if count == 1:
            return 0.5 * (lo + hi)
        return lo + (hi - lo) * value / (count - 1)

    grid = np.stack(
        np.meshgrid(*[np.arange(s) for s in sizes], indexing="ij"), axis=-1
    ).reshape(total, len(sizes))
    images = np.zeros((total, image_size, image_size, 1), dtype=np.uint8)
    for i, values in enumerate(grid):
        v = list(values) + [0] * (6 - len(sizes))
        cx = level(v[0], sizes[0], 0.25, 0.75)
        cy = level(v[1], sizes[1], 0.25, 0.75) if len(sizes) > 1 else 0.5
        radius = (
            level(v[2], sizes[2], 0.08, 0.22) if len(sizes) > 2 else 0.15
        )
        shape_kind = v[3] % len(SHAPE_NAMES) if len(sizes) > 3 else 0
        brightness = (
            int(level(v[4], sizes[4], 128, 255)) if len(sizes) > 4 else 255
        )
        angle = (
            level(v[5], sizes[5], 0.0, np.pi / 4) if len(sizes) > 5 else 0.0
        )
        images[i, :, :, 0] = _render(
            image_size, cx, cy, radius, shape_kind, brightness, angle
        )
    name = f"toy-{'x'.join(str(s) for s in sizes)}-{image_size}px-seed{seed}"
    return FactorDataset(
        images=images,
        factor_values=grid,
        factor_sizes=np.asarray(sizes),
        name=name,
    )


def write_fvds(ds: FactorDataset, path):
    """Serialize ``ds`` to one FVDS container file."""
    n, h, w, c = ds.images.shape
    k = ds.num_factors
    with open(path, "wb") as fh:
        fh.write(FVDS_MAGIC)
        fh.write(struct.pack("<6I", FVDS_VERSION, n, h, w, c, k))
        fh.write(ds.factor_sizes.astype("<u4").tobytes())
        fh.write(ds.factor_values.astype("<u4").tobytes())
        fh.write(np.ascontiguousarray(ds.images).tobytes())


def read_fvds(path) -> FactorDataset:
    """Parse an FVDS container, validating every section length."""
    raw = Path(path).read_bytes()
    if raw[:4] != FVDS_MAGIC:
        raise FormatError(f"bad magic at offset 0 in {path}")
    if len(raw) < 28:
        raise FormatError("header truncated")
    version, n, h, w, c, k = struct.unpack("<6I", raw[4:28])
    if version != FVDS_VERSION:
        raise FormatError(f"unsupported version {version}")
    offset = 28
    sizes_end = offset + 4 * k
    if len(raw) < sizes_end:
        raise FormatError("factor_sizes section short")
    factor_sizes = np.frombuffer(raw[offset:sizes_end], dtype="<u4").astype(np.int64)
    values_end = sizes_end + 4 * n * k
    if len(raw) < values_end:
        raise FormatError("factor values section short")
    factor_values = (
        np.frombuffer(raw[sizes_end:values_end], dtype="<u4")
        .astype(np.int64)
        .reshape(n, k)
    )
    pixels_end = values_end + n * h * w * c
    if len(raw) < pixels_end:
        raise FormatError("pixel payload short")
    images = (
        np.frombuffer(raw[values_end:pixels_end], dtype=np.uint8)
        .reshape(n, h, w, c)
        .copy()
    )
    return FactorDataset(
        images=images,
        factor_values=factor_values,
        factor_sizes=factor_sizes,
        name=str(path),
    )


def batch_indices(
    rng: np.random.Generator, dataset_size: int, batch_size: int
) -> np.ndarray:
    """Uniform with-replacement batch sampling, deterministic per rng."""
    return rng.integers(0, dataset_size, size=batch_size)
