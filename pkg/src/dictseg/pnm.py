"""Binary PPM (P6) and PGM (P5) readers and writers, maxval 255.

Images travel as float tensors in [0,1] (channels first); label maps as
integer arrays with 255 reserved for ignore. Both formats round-trip
8-bit data exactly. Parse failures report the byte offset of the first
offending byte. Writes go to a temp file renamed into place so a crash
never leaves a half-written file behind.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .errors import DataError, FormatError
from .tensor import Tensor

_WHITESPACE = b" \t\r\n"


class _Scanner:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def fail(self, message: str, offset: int | None = None) -> None:
        raise FormatError(
            f"{self.path}: {message}", self.pos if offset is None else offset
        )

    def skip_separators(self) -> None:
        """Advance past whitespace and '#' comment lines."""
        while self.pos < len(self.data):
            byte = self.data[self.pos : self.pos + 1]
            if byte in (b"#",):
                while self.pos < len(self.data) and self.data[self.pos : self.pos + 1] != b"\n":
                    self.pos += 1
            elif byte in (b" ", b"\t", b"\r", b"\n"):
                self.pos += 1
            else:
                return

    def read_int(self, what: str) -> int:
        self.skip_separators()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos] in range(48, 58):
            self.pos += 1
        if self.pos == start:
            self.fail(f"expected {what} digits", start)
        return int(self.data[start : self.pos])


def _parse_header(data: bytes, magic: bytes, path: str) -> tuple[int, int, int]:
    scanner = _Scanner(data, path)
    if data[:2] != magic:
        scanner.fail(f"bad magic, expected {magic.decode()}", 0)
    scanner.pos = 2
    width = scanner.read_int("width")
    height = scanner.read_int("height")
    if width < 1 or height < 1:
        scanner.fail(f"non-positive size {width}x{height}", 2)
    scanner.skip_separators()
    maxval_at = scanner.pos
    maxval = scanner.read_int("maxval")
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}", maxval_at)
    if scanner.pos >= len(data) or data[scanner.pos] not in _WHITESPACE:
        scanner.fail("expected single whitespace after maxval")
    scanner.pos += 1
    return width, height, scanner.pos


def _read_payload(data: bytes, start: int, count: int, path: str) -> np.ndarray:
    if len(data) - start < count:
        raise FormatError(
            f"{path}: truncated payload, need {count} bytes, have {len(data) - start}",
            len(data),
        )
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=start)


def _atomic_write(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-pnm-")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_ppm_bytes(data: bytes, path: str = "<bytes>") -> np.ndarray:
    """Parse P6 bytes into an (H, W, 3) uint8 array."""
    width, height, start = _parse_header(data, b"P6", path)
    flat = _read_payload(data, start, width * height * 3, path)
    return flat.reshape(height, width, 3)


def read_ppm(path: str) -> Tensor:
    """Read a P6 image as a float tensor of shape (3, H, W) scaled to [0,1]."""
    with open(path, "rb") as handle:
        raw = read_ppm_bytes(handle.read(), path)
    return Tensor(raw.transpose(2, 0, 1).astype(np.float64) / 255.0)


def write_ppm(path: str, image) -> None:
    """Write a P6 image.

    Accepts a float tensor/array shaped (3, H, W) with values in [0,1]
    (rounded to 8 bits) or an (H, W, 3) uint8 array written verbatim.
    """
    if isinstance(image, Tensor):
        image = image.data
    image = np.asarray(image)
    if image.dtype == np.uint8 and image.ndim == 3 and image.shape[2] == 3:
        raw = image
    elif image.ndim == 3 and image.shape[0] == 3:
        scaled = np.rint(np.clip(image, 0.0, 1.0) * 255.0)
        raw = scaled.astype(np.uint8).transpose(1, 2, 0)
    else:
        raise DataError(f"cannot write image of shape {image.shape} as PPM")
    height, width = raw.shape[:2]
    header = f"P6\n{width} {height}\n255\n".encode()
    _atomic_write(path, header + raw.tobytes())


def read_pgm_bytes(data: bytes, path: str = "<bytes>") -> np.ndarray:
    """Parse P5 bytes into an (H, W) int64 label map (255 = ignore)."""
    width, height, start = _parse_header(data, b"P5", path)
    flat = _read_payload(data, start, width * height, path)
    return flat.reshape(height, width).astype(np.int64)


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as handle:
        return read_pgm_bytes(handle.read(), path)


def write_pgm(path: str, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise DataError(f"label map must be 2-D, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() > 255:
        raise DataError("label values must fit in one byte")
    height, width = labels.shape
    header = f"P5\n{width} {height}\n255\n".encode()
    _atomic_write(path, header + labels.astype(np.uint8).tobytes())


def default_palette(n_classes: int) -> np.ndarray:
    """A fixed set of visually distinct colors, one row per class."""
    base = np.array(
        [
            (230, 80, 60),
            (70, 170, 90),
            (70, 100, 220),
            (230, 200, 60),
            (170, 70, 190),
            (70, 200, 200),
            (240, 140, 50),
            (140, 140, 140),
        ],
        dtype=np.uint8,
    )
    if n_classes > len(base):
        raise DataError(f"palette supports at most {len(base)} classes")
    return base[:n_classes]


def colorize(pred: np.ndarray, palette: np.ndarray, ignore: int = 255) -> np.ndarray:
    """Map class indices to palette colors; ignore pixels render black.

    Returns an (H, W, 3) uint8 array ready for `write_ppm`.
    """
    pred = np.asarray(pred)
    palette = np.asarray(palette, dtype=np.uint8)
    mask = pred != ignore
    if mask.any() and pred[mask].max() >= len(palette):
        offender = int(pred[mask].max())
        raise DataError(f"class {offender} has no palette entry")
    out = np.zeros(pred.shape + (3,), dtype=np.uint8)
    out[mask] = palette[pred[mask]]
    return out
