"""Hyperspectral cube ingestion: the HSIC container format, edge padding,
neighboring-pixel-block extraction, stratified splits, and a synthetic
dataset generator for end-to-end checks.

HSIC byte layout (all little-endian):
  magic "HSIC", version u16 = 1, H u32, W u32, B u32,
  dtype u8 (0 = float32 LE), reserved u8,
  payload H*W*B floats, pixel-major band-fastest ((y*W + x)*B + b),
  K u16, H*W labels u16 (0 = unlabeled, classes 1..K),
  K class names, each u16 length + UTF-8 bytes.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DimensionError, FormatError
from .rng import Rng, stream_for

HSIC_MAGIC = b"HSIC"
HSIC_VERSION = 1


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclass
class HsiCube:
    """H x W x B reflectance cube with per-pixel labels (0 = unlabeled)."""

    data: np.ndarray
    labels: np.ndarray
    classes: int
    class_names: list[str] | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint16)
        if self.data.ndim != 3:
            raise DimensionError(f"cube data must be H x W x B, got {self.data.shape}")
        if self.labels.shape != self.data.shape[:2]:
            raise DimensionError(
                f"labels {self.labels.shape} do not match cube {self.data.shape[:2]}"
            )
        if not np.all(np.isfinite(self.data)):
            raise DataError("cube contains non-finite samples")
        if self.labels.max(initial=0) > self.classes:
            raise DataError(
                f"label {int(self.labels.max())} exceeds declared class count {self.classes}"
            )
        if self.class_names is not None and len(self.class_names) != self.classes:
            raise DataError("class_names length must equal the class count")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]


@dataclass
class PatchSet:
    """Per-labeled-pixel neighboring blocks with their center labels.

    coords are (y, x) in the pre-padding frame of the original cube.
    """

    patches: np.ndarray  # [n, M, M, L]
    labels: np.ndarray  # [n], values 1..K
    coords: np.ndarray  # [n, 2]
    classes: int

    def __len__(self) -> int:
        return self.patches.shape[0]

    @property
    def block(self) -> int:
        return self.patches.shape[1]

    @property
    def bands(self) -> int:
        return self.patches.shape[3]


@dataclass
class SplitSpec:
    """Index partition of a PatchSet into train/val/test."""

    ratios: tuple
    seed: int
    train: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    val: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    test: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))

    def split(self, name: str) -> np.ndarray:
        try:
            return {"train": self.train, "val": self.val, "test": self.test}[name]
        except KeyError:
            raise ConfigError(f"unknown split {name!r}") from None


# ---------------------------------------------------------------------------
# HSIC reader/writer
# ---------------------------------------------------------------------------

def save_hsic(cube: HsiCube, path: str) -> None:
    h, w, b = cube.data.shape
    names = cube.class_names or [""] * cube.classes
    with open(path, "wb") as fh:
        fh.write(HSIC_MAGIC)
        fh.write(struct.pack("<H", HSIC_VERSION))
        fh.write(struct.pack("<III", h, w, b))
        fh.write(struct.pack("<BB", 0, 0))
        fh.write(np.ascontiguousarray(cube.data, dtype="<f4").tobytes())
        fh.write(struct.pack("<H", cube.classes))
        fh.write(np.ascontiguousarray(cube.labels, dtype="<u2").tobytes())
        for name in names:
            blob = name.encode("utf-8")
            fh.write(struct.pack("<H", len(blob)))
            fh.write(blob)


def load_hsic(path: str) -> HsiCube:
    with open(path, "rb") as fh:
        blob = fh.read()
    buf = io.BytesIO(blob)

    def need(n: int, what: str) -> bytes:
        start = buf.tell()
        chunk = buf.read(n)
        if len(chunk) != n:
            raise FormatError(f"truncated HSIC file: {what} at byte {start}")
        return chunk

    if need(4, "magic") != HSIC_MAGIC:
        raise FormatError("bad HSIC magic at byte 0")
    (version,) = struct.unpack("<H", need(2, "version"))
    if version != HSIC_VERSION:
        raise FormatError(f"unsupported HSIC version {version} at byte 4")
    h, w, b = struct.unpack("<III", need(12, "extents"))
    dtype_code, _reserved = struct.unpack("<BB", need(2, "dtype"))
    if dtype_code != 0:
        raise FormatError(f"unsupported HSIC dtype code {dtype_code} at byte 18")
    data = np.frombuffer(need(4 * h * w * b, "payload"), dtype="<f4").reshape(h, w, b)
    (classes,) = struct.unpack("<H", need(2, "class count"))
    labels = np.frombuffer(need(2 * h * w, "labels"), dtype="<u2").reshape(h, w)
    names = []
    for i in range(classes):
        (ln,) = struct.unpack("<H", need(2, f"name {i} length"))
        names.append(need(ln, f"name {i}").decode("utf-8"))
    class_names = None if all(n == "" for n in names) else names
    return HsiCube(data=data.copy(), labels=labels.copy(), classes=classes,
                   class_names=class_names)


# ---------------------------------------------------------------------------
# padding and patch extraction
# ---------------------------------------------------------------------------

def edge_pad(cube: HsiCube, m: int, mode: str = "edge") -> HsiCube:
    """Grow H and W by m per side; bands untouched; labels padded with 0.

    mode 'edge' replicates border values (the default); 'zero' is kept as
    an ablation.
    """
    if m < 0:
        raise ConfigError(f"pad margin must be >= 0, got {m}")
    if mode not in ("edge", "zero"):
        raise ConfigError(f"pad mode must be 'edge' or 'zero', got {mode!r}")
    if m == 0:
        return HsiCube(cube.data.copy(), cube.labels.copy(), cube.classes,
                       cube.class_names)
    spec = ((m, m), (m, m), (0, 0))
    data = (np.pad(cube.data, spec, mode="edge") if mode == "edge"
            else np.pad(cube.data, spec))
    labels = np.pad(cube.labels, ((m, m), (m, m)))
    return HsiCube(data, labels, cube.classes, cube.class_names)


def extract_patches(cube: HsiCube, block: int) -> PatchSet:
    """One block x block x bands patch per labeled pixel, centered on it.

    The cube must already be padded with (block - 1) / 2 per side; reported
    coords are translated back into the pre-padding frame.
    """
    if block % 2 == 0 or block < 1:
        raise ConfigError(f"block side must be odd, got {block}")
    m = (block - 1) // 2
    ys, xs = np.nonzero(cube.labels)
    if np.any(ys < m) or np.any(ys >= cube.height - m) or np.any(xs < m) or np.any(
        xs >= cube.width - m
    ):
        raise DataError(
            f"labeled pixel too close to the border for block {block}; "
            f"pad the cube with edge_pad(cube, {m}) first"
        )
    n = ys.shape[0]
    patches = np.empty((n, block, block, cube.bands), dtype=np.float32)
    for i in range(n):
        y, x = ys[i], xs[i]
        patches[i] = cube.data[y - m : y + m + 1, x - m : x + m + 1, :]
    labels = cube.labels[ys, xs].astype(np.int64)
    coords = np.stack([ys - m, xs - m], axis=1)
    return PatchSet(patches=patches, labels=labels, coords=coords, classes=cube.classes)


# ---------------------------------------------------------------------------
# stratified split
# ---------------------------------------------------------------------------

def stratified_split(patchset: PatchSet, ratios, seed: int) -> SplitSpec:
    """Per class: shuffle with the seed, give each split floor(n * frac)
    samples, then hand leftovers to the splits with the largest fractional
    parts (so every split lands within one sample of its ideal share).
    Splits with a nonzero ratio are topped up to at least one sample per
    class by moving one from the largest split.
    """
    ratios = tuple(int(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise ConfigError(f"ratios must be 3 non-negative integers, got {ratios}")
    total = sum(ratios)
    rng = Rng(seed, stream=stream_for("split"))
    buckets: dict[str, list] = {"train": [], "val": [], "test": []}
    names = ("train", "val", "test")
    for k in range(1, patchset.classes + 1):
        idx = np.nonzero(patchset.labels == k)[0]
        n = idx.shape[0]
        if n == 0:
            continue
        if n < 3:
            raise DataError(f"class {k} has only {n} samples; need at least 3")
        idx = idx[rng.permutation(n)]
        counts = [(n * r) // total for r in ratios]
        fracs = [(n * r) % total for r in ratios]
        for _ in range(n - sum(counts)):
            pick = int(np.argmax(fracs))
            counts[pick] += 1
            fracs[pick] -= total
        # top up empty-but-requested splits from the largest one
        for i in range(3):
            if ratios[i] > 0 and counts[i] == 0:
                donor = int(np.argmax(counts))
                counts[donor] -= 1
                counts[i] += 1
        start = 0
        for name, cnt in zip(names, counts):
            buckets[name].append(idx[start : start + cnt])
            start += cnt
    spec = SplitSpec(ratios=ratios, seed=seed)
    spec.train = np.sort(np.concatenate(buckets["train"])) if buckets["train"] else np.empty(0, np.int64)
    spec.val = np.sort(np.concatenate(buckets["val"])) if buckets["val"] else np.empty(0, np.int64)
    spec.test = np.sort(np.concatenate(buckets["test"])) if buckets["test"] else np.empty(0, np.int64)
    return spec


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def synthesize_dataset(height: int, width: int, bands: int, classes: int,
                       noise: float, seed: int) -> HsiCube:
    """Voronoi regions over Gaussian spectral prototypes plus iid noise.

    Prototype k is a Gaussian bump centered on its own band; spatial regions
    come from nearest Voronoi seed (ties to the lowest class id); labels are
    region id + 1, so every pixel is labeled.
    """
    if classes > 16:
        raise ConfigError(f"synthetic generator supports <= 16 classes, got {classes}")
    if classes < 2:
        raise ConfigError(f"need >= 2 classes, got {classes}")
    rng = Rng(seed, stream=stream_for("synth"))
    centers = (np.arange(classes) + 0.5) * bands / classes
    widths = max(bands / (3.0 * classes), 1.0)
    band_axis = np.arange(bands)
    prototypes = np.exp(
        -((band_axis[None, :] - centers[:, None]) ** 2) / (2.0 * widths**2)
    )

    seeds_y = rng.uniform((classes,), 0, height)
    seeds_x = rng.uniform((classes,), 0, width)
    yy, xx = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    d2 = (yy[..., None] - seeds_y) ** 2 + (xx[..., None] - seeds_x) ** 2
    region = np.argmin(d2, axis=-1)

    data = prototypes[region].astype(np.float64)
    if noise > 0:
        data = data + noise * rng.normal((height, width, bands))
    labels = (region + 1).astype(np.uint16)
    names = [f"region_{k + 1}" for k in range(classes)]
    return HsiCube(data=data.astype(np.float32), labels=labels, classes=classes,
                   class_names=names)


def prototype_separation(cube: HsiCube) -> float:
    """Smallest pairwise distance between per-class mean spectra."""
    means = []
    for k in range(1, cube.classes + 1):
        mask = cube.labels == k
        if mask.any():
            means.append(cube.data[mask].mean(axis=0))
    means = np.asarray(means)
    dmin = np.inf
    for i in range(len(means)):
        for j in range(i + 1, len(means)):
            dmin = min(dmin, float(np.linalg.norm(means[i] - means[j])))
    return dmin
