"""Netpbm image I/O: PGM (P2/P5) and PPM (P3/P6), maxval 255 or 65535.

Float images in [0, 1] are quantized on write with round-half-to-even;
integer data round-trips losslessly. Binary 16-bit samples are big-endian,
as the format demands.
"""

from __future__ import annotations

import numpy as np

_WHITESPACE = b" \t\r\n\v\f"
_MAXVALS = (255, 65535)


class NetpbmError(ValueError):
    """Malformed header, truncated/overlong payload, or bad write args."""


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] != b"\n":
                pos += 1
        elif c in _WHITESPACE:
            pos += 1
        else:
            break
    if pos >= n:
        raise NetpbmError("unexpected end of header")
    start = pos
    while pos < n and data[pos:pos + 1] not in _WHITESPACE:
        pos += 1
    return data[start:pos], pos


def read_netpbm_ints(path) -> tuple[np.ndarray, int]:
    """Decode a PGM/PPM file to integer samples.

    Returns (array, maxval); the array is (H, W) for PGM and (H, W, 3) for
    PPM, dtype int64.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _next_token(data, 0)
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise NetpbmError(f"unsupported magic number {magic!r}")
    channels = 3 if magic in (b"P3", b"P6") else 1
    ascii_mode = magic in (b"P2", b"P3")
    try:
        wtok, pos = _next_token(data, pos)
        htok, pos = _next_token(data, pos)
        mtok, pos = _next_token(data, pos)
        width, height, maxval = int(wtok), int(htok), int(mtok)
    except (NetpbmError, ValueError) as exc:
        raise NetpbmError(f"malformed header: {exc}") from None
    if width < 1 or height < 1:
        raise NetpbmError(f"bad dimensions {width}x{height}")
    if maxval not in _MAXVALS:
        raise NetpbmError(f"maxval must be 255 or 65535, got {maxval}")
    count = width * height * channels
    if ascii_mode:
        values = []
        while len(values) < count:
            try:
                tok, pos = _next_token(data, pos)
            except NetpbmError:
                raise NetpbmError("truncated ASCII payload") from None
            try:
                values.append(int(tok))
            except ValueError:
                raise NetpbmError(f"bad ASCII sample {tok!r}") from None
        flat = np.array(values, dtype=np.int64)
    else:
        payload = data[pos + 1:]  # single whitespace byte after maxval
        bytes_per = 1 if maxval < 256 else 2
        if len(payload) != count * bytes_per:
            raise NetpbmError(f"payload has {len(payload)} bytes, expected "
                              f"{count * bytes_per}")
        if bytes_per == 1:
            flat = np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
        else:
            flat = np.frombuffer(payload, dtype=">u2").astype(np.int64)
    if flat.min() < 0 or flat.max() > maxval:
        raise NetpbmError("sample value out of range")
    shape = (height, width, 3) if channels == 3 else (height, width)
    return flat.reshape(shape), maxval


def read_netpbm(path) -> np.ndarray:
    """Decode to floats in [0, 1]."""
    ints, maxval = read_netpbm_ints(path)
    return ints.astype(np.float64) / maxval


def quantize(image: np.ndarray, maxval: int) -> np.ndarray:
    """Map floats in [0, 1] to integer samples, round-half-to-even."""
    return np.rint(np.clip(image, 0.0, 1.0) * maxval).astype(np.int64)


def write_netpbm(path, image: np.ndarray, maxval: int = 255,
                 binary: bool = True) -> None:
    """Encode a float image in [0, 1] (or integer samples already in
    [0, maxval]) as PGM for (H, W) input, PPM for (H, W, 3)."""
    if maxval not in _MAXVALS:
        raise NetpbmError(f"maxval must be 255 or 65535, got {maxval}")
    arr = np.asarray(image)
    if arr.ndim == 2:
        channels = 1
    elif arr.ndim == 3 and arr.shape[2] == 3:
        channels = 3
    else:
        raise NetpbmError(f"image must be (H, W) or (H, W, 3), "
                          f"got {arr.shape}")
    if np.issubdtype(arr.dtype, np.floating):
        ints = quantize(arr, maxval)
    else:
        ints = arr.astype(np.int64)
        if ints.min() < 0 or ints.max() > maxval:
            raise NetpbmError("integer samples out of range")
    height, width = ints.shape[:2]
    if binary:
        magic = b"P6" if channels == 3 else b"P5"
    else:
        magic = b"P3" if channels == 3 else b"P2"
    header = b"%s\n%d %d\n%d\n" % (magic, width, height, maxval)
    with open(path, "wb") as fh:
        fh.write(header)
        flat = ints.reshape(-1)
        if binary:
            dtype = np.uint8 if maxval < 256 else ">u2"
            fh.write(flat.astype(dtype).tobytes())
        else:
            line = []
            for i, v in enumerate(flat):
                line.append(str(int(v)))
                if (i + 1) % 12 == 0:
                    fh.write((" ".join(line) + "\n").encode("ascii"))
                    line = []
            if line:
                fh.write((" ".join(line) + "\n").encode("ascii"))
