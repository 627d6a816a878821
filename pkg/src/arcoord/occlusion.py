"""Depth-compare occlusion compositing on metric depth maps.

Depth maps are 16-bit linear samples with an explicit meters-per-unit
scale; larger values are farther away. A virtual sample of 0 means "no
virtual content at this pixel". The mask keeps a virtual pixel when its
metric depth is at most the real depth (ties render virtual).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

DEPTH_MAGIC = b"ARDEPTH1"
IMAGE_MAGIC = b"ARIMAGE1"
_HEADER = struct.Struct("<IId")  # width, height, meters-per-unit


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class DepthMap:
    width: int
    height: int
    values: np.ndarray  # (height, width) uint16, row-major
    scale: float  # meters per unit

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.uint16).reshape(self.height, self.width)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("dimensions must be positive")
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def metric(self) -> np.ndarray:
        return self.values.astype(float) * self.scale


@dataclass(frozen=True)
class OcclusionMask:
    width: int
    height: int
    bits: np.ndarray  # (height, width) bool; True = virtual pixel visible

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool).reshape(self.height, self.width)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)


def occlusion_mask(real: DepthMap, virtual: DepthMap) -> OcclusionMask:
    """Per-pixel visibility of virtual content against the real scene."""
    if (real.width, real.height) != (virtual.width, virtual.height):
        raise DimensionMismatch(
            f"real {real.width}x{real.height} vs virtual {virtual.width}x{virtual.height}"
        )
    has_content = virtual.values != 0
    nearer = virtual.metric() <= real.metric()
    return OcclusionMask(real.width, real.height, has_content & nearer)


def composite(background: np.ndarray, virtual_color: np.ndarray, mask: OcclusionMask) -> np.ndarray:
    """Select virtual color where the mask is set, background elsewhere."""
    bg = np.asarray(background)
    fg = np.asarray(virtual_color)
    if bg.shape != fg.shape or bg.shape[:2] != (mask.height, mask.width):
        raise DimensionMismatch(
            f"background {bg.shape}, virtual {fg.shape}, mask {mask.height}x{mask.width}"
        )
    return np.where(mask.bits[..., None], fg, bg)


def write_depth(path, depth: DepthMap) -> None:
    with open(path, "wb") as fh:
        fh.write(DEPTH_MAGIC)
        fh.write(_HEADER.pack(depth.width, depth.height, depth.scale))
        fh.write(np.ascontiguousarray(depth.values, dtype="<u2").tobytes())


def read_depth(path) -> DepthMap:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != DEPTH_MAGIC:
            raise ValueError(f"{path}: not a depth map (magic {magic!r})")
        width, height, scale = _HEADER.unpack(fh.read(_HEADER.size))
        raw = fh.read(width * height * 2)
        if len(raw) != width * height * 2:
            raise ValueError(f"{path}: truncated sample data")
        values = np.frombuffer(raw, dtype="<u2").reshape(height, width)
    return DepthMap(width, height, values, scale)


def write_image(path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) uint8 image, got shape {img.shape}")
    height, width = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(IMAGE_MAGIC)
        fh.write(_HEADER.pack(width, height, 1.0))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != IMAGE_MAGIC:
            raise ValueError(f"{path}: not an image (magic {magic!r})")
        width, height, _ = _HEADER.unpack(fh.read(_HEADER.size))
        raw = fh.read(width * height * 3)
        if len(raw) != width * height * 3:
            raise ValueError(f"{path}: truncated sample data")
        return np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3).copy()
