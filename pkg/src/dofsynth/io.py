"""PNG and PFM readers/writers."""

from __future__ import annotations

import re

import cv2
import numpy as np

from .errors import DofSynthError


class ImageFormatError(DofSynthError):
    pass


def read_png_rgb(path) -> np.ndarray:
    """Read an 8- or 16-bit PNG as float RGB in [0, 1], shape ``(3, H, W)``."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise ImageFormatError(f"cannot read image {path}")
    if img.dtype == np.uint8:
        scale = 255.0
    elif img.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ImageFormatError(f"{path}: unsupported PNG dtype {img.dtype}")
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    elif img.shape[2] == 4:
        img = img[..., :3]
    rgb = img[..., ::-1].astype(np.float32) / scale
    return np.ascontiguousarray(rgb.transpose(2, 0, 1))


def write_png(path, data: np.ndarray, bits: int = 8) -> None:
    """Write ``(H, W)`` or ``(3, H, W)`` data in [0, 1] (or integer DNs for 16 bit)."""
    arr = np.asarray(data)
    if arr.ndim == 3:
        arr = arr.transpose(1, 2, 0)[..., ::-1]
    if np.issubdtype(arr.dtype, np.integer):
        out = arr.astype(np.uint16 if bits == 16 else np.uint8)
    else:
        top = 65535 if bits == 16 else 255
        out = np.rint(np.clip(arr, 0.0, 1.0) * top).astype(np.uint16 if bits == 16 else np.uint8)
    if not cv2.imwrite(str(path), np.ascontiguousarray(out)):
        raise ImageFormatError(f"cannot write {path}")


def read_pfm(path) -> np.ndarray:
    """Read a PFM file; returns ``(H, W)`` for ``Pf`` or ``(3, H, W)`` for ``PF``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    m = re.match(rb"(PF|Pf)\s+(\d+)\s+(\d+)\s+(\S+)\s", raw)
    if m is None:
        raise ImageFormatError(f"{path}: not a PFM file")
    color = m.group(1) == b"PF"
    w, h = int(m.group(2)), int(m.group(3))
    try:
        scale = float(m.group(4))
    except ValueError as exc:
        raise ImageFormatError(f"{path}: bad PFM scale") from exc
    dtype = "<f4" if scale < 0 else ">f4"
    ch = 3 if color else 1
    body = raw[m.end():]
    if len(body) != 4 * w * h * ch:
        raise ImageFormatError(f"{path}: expected {4 * w * h * ch} bytes of data, found {len(body)}")
    data = np.frombuffer(body, dtype=dtype).astype(np.float32).reshape(h, w, ch)[::-1]
    if color:
        return np.ascontiguousarray(data.transpose(2, 0, 1))
    return np.ascontiguousarray(data[..., 0])


def write_pfm(path, data: np.ndarray) -> None:
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 3:
        kind, pix = b"PF", arr.transpose(1, 2, 0)
    elif arr.ndim == 2:
        kind, pix = b"Pf", arr
    else:
        raise ImageFormatError(f"cannot write array of shape {arr.shape} as PFM")
    h, w = pix.shape[:2]
    with open(path, "wb") as fh:
        fh.write(kind + b"\n%d %d\n-1.0\n" % (w, h))
        fh.write(np.ascontiguousarray(pix[::-1], dtype="<f4").tobytes())
