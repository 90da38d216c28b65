"""Ground-truth depth scenes, depth-frame discretization and PSCENE files."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DepthScene",
    "DepthFrameStack",
    "SceneFormatError",
    "MAX_RANGE",
    "SCENE_KINDS",
    "generate_scene",
    "discretize",
    "save_scene",
    "load_scene",
]

#: Largest range a scene may hold, in meters.
MAX_RANGE = 10_000.0
SCENE_KINDS = ("two_plane", "bars", "random_blobs")


class SceneFormatError(ValueError):
    """Malformed PSCENE file."""


@dataclass(frozen=True, eq=False)
class DepthScene:
    """Per-pixel range (m) and albedo.  Arrays are ``(height, width)``.

    A range <= 0 means no return (empty sky); it is stored as -1.
    """

    width: int
    height: int
    ranges: np.ndarray
    albedos: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("scene dimensions must be positive")
        ranges = np.array(self.ranges, dtype=float).reshape(-1)
        albedos = np.array(self.albedos, dtype=float).reshape(-1)
        n = self.width * self.height
        if ranges.size != n or albedos.size != n:
            raise ValueError(
                f"{self.width}x{self.height} scene needs {n} ranges and albedos, "
                f"got {ranges.size} and {albedos.size}"
            )
        if not np.all(np.isfinite(ranges)) or not np.all(np.isfinite(albedos)):
            raise ValueError("scene values must be finite")
        if np.any((albedos < 0) | (albedos > 1)):
            raise ValueError("albedo must lie in [0, 1]")
        if np.any(ranges > MAX_RANGE):
            raise ValueError(f"range exceeds MAX_RANGE={MAX_RANGE} m")
        ranges[ranges <= 0] = -1.0
        ranges = ranges.reshape(self.height, self.width)
        albedos = albedos.reshape(self.height, self.width)
        ranges.setflags(write=False)
        albedos.setflags(write=False)
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "albedos", albedos)

    @property
    def n(self) -> int:
        return self.width * self.height

    @property
    def valid(self) -> np.ndarray:
        return self.ranges > 0

    def __eq__(self, other):
        if not isinstance(other, DepthScene):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.ranges, other.ranges)
            and np.array_equal(self.albedos, other.albedos)
        )

    __hash__ = None

    def depth_extent(self):
        """(min, max) valid range, or None for an empty scene."""
        if not self.valid.any():
            return None
        r = self.ranges[self.valid]
        return float(r.min()), float(r.max())


@dataclass(frozen=True)
class DepthFrameStack:
    depth_bins: np.ndarray
    frames: np.ndarray  # (n_bins, height, width)

    def nonempty(self) -> int:
        return int(np.count_nonzero(self.frames.reshape(len(self.frames), -1).any(axis=1)))


def _check_dims(width, height):
    if int(width) != width or int(height) != height or width < 2 or height < 2:
        raise ValueError(f"scene width and height must be integers >= 2, got {width}x{height}")


def _two_plane(width, height, r1=50.0, r2=55.0, albedo=1.0, split=None):
    split = width // 2 if split is None else int(split)
    if not 0 < split < width:
        raise ValueError("two_plane split must fall strictly inside the image")
    if r1 <= 0 or r2 <= 0:
        raise ValueError("two_plane ranges must be positive")
    ranges = np.empty((height, width))
    ranges[:, :split] = r1
    ranges[:, split:] = r2
    return ranges, np.full((height, width), float(albedo))


def _bars(width, height, ranges=(50.0, 55.0, 60.0), albedo=1.0, bar_width=None,
          top=None, bottom=None):
    # vertical strips on empty sky, equal gaps around them
    ranges_ = [float(r) for r in ranges]
    nb = len(ranges_)
    if nb < 1 or any(r <= 0 for r in ranges_):
        raise ValueError("bars needs at least one positive range")
    if bar_width is None:
        bar_width = max(1, width // (2 * nb + 1))
    bar_width = int(bar_width)
    gap = (width - nb * bar_width) / (nb + 1)
    if gap < 1:
        raise ValueError(f"{nb} bars of width {bar_width} do not fit in {width} columns")
    top = height // 8 if top is None else int(top)
    bottom = height if bottom is None else int(bottom)
    if not 0 <= top < bottom <= height:
        raise ValueError("bars top/bottom rows out of bounds")
    rng_img = np.full((height, width), -1.0)
    alb = np.zeros((height, width))
    albedos = np.broadcast_to(np.asarray(albedo, dtype=float), (nb,))
    for b, r in enumerate(ranges_):
        c0 = int(round(gap * (b + 1) + bar_width * b))
        rng_img[top:bottom, c0:c0 + bar_width] = r
        alb[top:bottom, c0:c0 + bar_width] = albedos[b]
    return rng_img, alb


def _random_blobs(width, height, seed=0, n_blobs=4, range_min=40.0, range_max=60.0,
                  radius_min=None, radius_max=None, albedo_min=0.5, albedo_max=1.0):
    if n_blobs < 1:
        raise ValueError("random_blobs needs n_blobs >= 1")
    if not 0 < range_min <= range_max:
        raise ValueError("random_blobs needs 0 < range_min <= range_max")
    if not 0 <= albedo_min <= albedo_max <= 1:
        raise ValueError("random_blobs albedo bounds must satisfy 0 <= min <= max <= 1")
    side = min(width, height)
    radius_min = max(1.0, side / 10) if radius_min is None else float(radius_min)
    radius_max = max(radius_min, side / 5) if radius_max is None else float(radius_max)
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    ranges = np.full((height, width), -1.0)
    alb = np.zeros((height, width))
    for _ in range(int(n_blobs)):
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        rad = rng.uniform(radius_min, radius_max)
        r = rng.uniform(range_min, range_max)
        a = rng.uniform(albedo_min, albedo_max)
        inside = (xx + 0.5 - cx) ** 2 + (yy + 0.5 - cy) ** 2 <= rad ** 2
        # nearer surface occludes
        take = inside & ((ranges <= 0) | (r < ranges))
        ranges[take] = r
        alb[take] = a
    return ranges, alb


_GENERATORS = {"two_plane": _two_plane, "bars": _bars, "random_blobs": _random_blobs}


def generate_scene(kind: str, width: int, height: int, **params) -> DepthScene:
    """Synthesize a test scene.

    Parameters
    ----------
    kind : {'two_plane', 'bars', 'random_blobs'}
        ``two_plane``: left/right half planes at ranges `r1`, `r2`.
        ``bars``: vertical strips at the given `ranges` on empty sky (a
        chimney-row analogue).  ``random_blobs``: `n_blobs` discs with
        random centers, radii, ranges and albedos drawn from `seed`.
    width, height : int
        Image size in pixels, each >= 2.
    **params
        Kind-specific options; unknown names raise ``ValueError``.
    """
    _check_dims(width, height)
    try:
        gen = _GENERATORS[kind]
    except KeyError:
        raise ValueError(f"unknown scene kind {kind!r}; choose from {SCENE_KINDS}") from None
    try:
        ranges, albedos = gen(int(width), int(height), **params)
    except TypeError as exc:
        raise ValueError(f"invalid parameters for {kind}: {exc}") from None
    return DepthScene(int(width), int(height), ranges, albedos)


def discretize(scene: DepthScene, bin_width: float) -> DepthFrameStack:
    """Split a scene into depth frames of width `bin_width` meters.

    Bin index is ``floor(range / bin_width)``; only bins that receive a
    pixel are kept.  Frame values are albedos.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    valid = scene.valid
    idx = np.floor(scene.ranges / bin_width).astype(np.int64)
    bins = np.unique(idx[valid])
    frames = np.zeros((len(bins), scene.height, scene.width))
    for k, b in enumerate(bins):
        sel = valid & (idx == b)
        frames[k][sel] = scene.albedos[sel]
    centers = (bins + 0.5) * bin_width
    return DepthFrameStack(depth_bins=centers.astype(float), frames=frames)


def save_scene(scene: DepthScene, path) -> None:
    lines = [f"PSCENE 1 {scene.width} {scene.height}"]
    for r, a in zip(scene.ranges.ravel(), scene.albedos.ravel()):
        # repr round-trips floats exactly
        lines.append(f"{float(r)!r} {float(a)!r}" if r > 0 else f"-1 {float(a)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_scene(path) -> DepthScene:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise SceneFormatError(f"{path}: line 1: missing header")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "PSCENE" or head[1] != "1":
        raise SceneFormatError(f"{path}: line 1: malformed header {lines[0]!r}")
    try:
        width, height = int(head[2]), int(head[3])
    except ValueError:
        raise SceneFormatError(f"{path}: line 1: non-integer dimensions") from None
    if width < 1 or height < 1:
        raise SceneFormatError(f"{path}: line 1: dimensions must be positive")
    body = [(k + 2, ln) for k, ln in enumerate(lines[1:]) if ln.strip()]
    n = width * height
    if len(body) != n:
        raise SceneFormatError(
            f"{path}: line {len(lines) + 1 if len(body) < n else body[n][0]}: "
            f"expected {n} pixel lines, found {len(body)}"
        )
    ranges = np.empty(n)
    albedos = np.empty(n)
    for p, (lineno, ln) in enumerate(body):
        parts = ln.split()
        try:
            if len(parts) != 2:
                raise ValueError
            r, a = float(parts[0]), float(parts[1])
        except ValueError:
            raise SceneFormatError(f"{path}: line {lineno}: expected '<range_m> <albedo>'") from None
        if not (math.isfinite(r) and math.isfinite(a)):
            raise SceneFormatError(f"{path}: line {lineno}: non-finite value")
        if not 0 <= a <= 1:
            raise SceneFormatError(f"{path}: line {lineno}: albedo {a} outside [0, 1]")
        if r > MAX_RANGE:
            raise SceneFormatError(f"{path}: line {lineno}: range {r} exceeds {MAX_RANGE}")
        ranges[p] = r if r > 0 else -1.0
        albedos[p] = a
    return DepthScene(width, height, ranges, albedos)
