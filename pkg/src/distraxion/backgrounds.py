"""Background video ingestion and a procedural fallback generator.

Videos are stored as frame directories: ``<root>/<split>/<video_name>/<NNNNN>.ppm``
with binary 8-bit RGB PPM frames (PNG is also accepted when Pillow is
installed).  Sequences are ordered lexicographically by name so "the first b
videos" is stable, and frames are resized at load time so the per-step cost of
background lookup is constant.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "FrameSequence",
    "BackgroundSet",
    "BackgroundLoadError",
    "load_background_set",
    "procedural_background",
    "default_background_set",
    "read_ppm",
    "write_ppm",
    "resize_nearest",
]

_FRAME_FILE = re.compile(r"^(\d+)\.(ppm|png)$", re.IGNORECASE)

# Seed of the procedural set used when no dataset is configured; fixed so
# that independent processes agree on the default backgrounds.
DEFAULT_PROCEDURAL_SEED = 1830273
DEFAULT_PROCEDURAL_COUNT = 60
DEFAULT_PROCEDURAL_LENGTH = 24


class BackgroundLoadError(RuntimeError):
    """A background directory tree could not be ingested."""


@dataclass(frozen=True)
class FrameSequence:
    """An ordered stack of same-sized RGB frames; shape (T, H, W, 3) uint8."""

    id: str
    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.uint8)
        if frames.ndim != 4 or frames.shape[-1] != 3 or frames.shape[0] < 1:
            raise BackgroundLoadError(
                f"video {self.id!r}: expected frames of shape (T, H, W, 3), got {frames.shape}")
        object.__setattr__(self, "frames", frames)

    @property
    def length(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class BackgroundSet:
    """Lexicographically ordered collection of frame sequences."""

    sequences: tuple[FrameSequence, ...]
    split: str = "train"

    @property
    def lengths(self) -> list[int]:
        return [seq.length for seq in self.sequences]

    def __len__(self) -> int:
        return len(self.sequences)

    def frame(self, video_index: int, frame_index: int) -> np.ndarray:
        return self.sequences[video_index].frames[frame_index]


def read_ppm(path) -> np.ndarray:
    """Read a binary (P6) 8-bit RGB PPM file into an (H, W, 3) uint8 array."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P6"):
        raise BackgroundLoadError(f"{path}: not a binary PPM (P6) file")
    # Header tokens (magic, width, height, maxval) may be separated by
    # whitespace and '#' comments.
    pos, tokens = 2, []
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise BackgroundLoadError(f"{path}: truncated PPM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise BackgroundLoadError(f"{path}: malformed PPM header") from exc
    if maxval != 255:
        raise BackgroundLoadError(f"{path}: only maxval 255 is supported, got {maxval}")
    expected = width * height * 3
    pixels = data[pos:pos + expected]
    if len(pixels) != expected:
        raise BackgroundLoadError(f"{path}: truncated pixel data")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(path, frame: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as a binary (P6) PPM file."""
    frame = np.ascontiguousarray(np.asarray(frame, dtype=np.uint8))
    if frame.ndim != 3 or frame.shape[-1] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {frame.shape}")
    height, width = frame.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(frame.tobytes())


def _read_png(path) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError as exc:
        raise BackgroundLoadError(f"{path}: PNG ingestion requires Pillow") from exc
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def resize_nearest(frame: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize to (width, height); cheap and deterministic."""
    width, height = int(size[0]), int(size[1])
    src_h, src_w = frame.shape[:2]
    if (src_w, src_h) == (width, height):
        return frame
    rows = np.minimum((np.arange(height) + 0.5) * src_h / height, src_h - 1).astype(int)
    cols = np.minimum((np.arange(width) + 0.5) * src_w / width, src_w - 1).astype(int)
    return frame[rows][:, cols]


def load_background_set(root, split: str = "train", size: tuple[int, int] | None = None) -> BackgroundSet:
    """Ingest every video directory under ``root/split``.

    Frames are sorted by their numeric filename and optionally resized to
    ``size`` (width, height).  Raises :class:`BackgroundLoadError` for a
    missing tree, unreadable frames, or mixed dimensions within a video.
    """
    base = Path(root) / split
    if not base.is_dir():
        raise BackgroundLoadError(f"background directory not found: {base}")
    sequences = []
    for video_dir in sorted(p for p in base.iterdir() if p.is_dir()):
        numbered = []
        for child in video_dir.iterdir():
            match = _FRAME_FILE.match(child.name)
            if match:
                numbered.append((int(match.group(1)), child))
        if not numbered:
            raise BackgroundLoadError(f"video directory {video_dir} contains no numbered frames")
        numbered.sort(key=lambda item: item[0])
        frames = []
        for _, child in numbered:
            if child.suffix.lower() == ".ppm":
                frame = read_ppm(child)
            else:
                frame = _read_png(child)
            if frames and frame.shape != frames[0].shape:
                raise BackgroundLoadError(
                    f"{child}: frame dimensions {frame.shape[:2]} differ from "
                    f"{frames[0].shape[:2]} within video {video_dir.name!r}")
            frames.append(frame)
        stack = np.stack(frames)
        if size is not None:
            stack = np.stack([resize_nearest(f, size) for f in stack])
        sequences.append(FrameSequence(id=video_dir.name, frames=stack))
    if not sequences:
        raise BackgroundLoadError(f"no videos found under {base}")
    return BackgroundSet(sequences=tuple(sequences), split=split)


def procedural_background(
    count: int,
    length: int,
    size: tuple[int, int],
    seed: int,
) -> BackgroundSet:
    """Deterministic animated color fields usable in place of real videos.

    Each video superimposes a few drifting sinusoidal plane waves per channel;
    consecutive frames advance the phases by a small step so playback is
    smooth.  The same seed always produces bitwise-identical pixels.
    """
    if count < 1 or length < 1 or size[0] < 1 or size[1] < 1:
        raise ValueError("count, length, and size must all be >= 1")
    width, height = int(size[0]), int(size[1])
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    ys /= max(height - 1, 1)
    xs /= max(width - 1, 1)
    sequences = []
    for v in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), v]))
        base = rng.uniform(0.25, 0.75, size=3)
        frames = np.empty((length, height, width, 3), dtype=np.uint8)
        waves = []
        for _ in range(3):
            kx, ky = rng.uniform(-3.0, 3.0, size=2) * 2 * math.pi
            phase = rng.uniform(0, 2 * math.pi)
            speed = rng.uniform(0.05, 0.12) * (1 if rng.integers(0, 2) else -1)
            amp = rng.uniform(0.06, 0.12, size=3)
            waves.append((kx, ky, phase, speed, amp))
        for t in range(length):
            field = np.tile(base, (height, width, 1))
            for kx, ky, phase, speed, amp in waves:
                field += amp * np.sin(kx * xs + ky * ys + phase + speed * t)[..., None]
            frames[t] = np.clip(np.rint(field * 255), 0, 255).astype(np.uint8)
        sequences.append(FrameSequence(id=f"procedural_{v:03d}", frames=frames))
    return BackgroundSet(sequences=tuple(sequences), split="procedural")


_DEFAULT_CACHE: dict[tuple, BackgroundSet] = {}


def default_background_set(size: tuple[int, int], count: int = DEFAULT_PROCEDURAL_COUNT) -> BackgroundSet:
    """The fixed-seed procedural set used when no dataset root is configured."""
    key = (count, DEFAULT_PROCEDURAL_LENGTH, int(size[0]), int(size[1]))
    if key not in _DEFAULT_CACHE:
        _DEFAULT_CACHE[key] = procedural_background(
            count, DEFAULT_PROCEDURAL_LENGTH, size, DEFAULT_PROCEDURAL_SEED)
    return _DEFAULT_CACHE[key]
