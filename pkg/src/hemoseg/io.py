"""File ingestion and emission: NIfTI-1 volumes, raw+sidecar volumes.

Only the single-volume subset of NIfTI-1 is handled: 348-byte header,
magic ``n+1`` (payload in the same file) or ``ni1`` (payload in a sibling
``.img``), scalar datatypes uint8 / int16 / float32, either endianness
(detected from the header's dim[0]). Writing always emits little-endian
single-file ``n+1`` with the payload at byte 352.

Voxel payloads are laid out x-fastest (Fortran order), matching the
linear indexing of :mod:`hemoseg.volume`.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .volume import LabelMask, Volume3D

HEADER_SIZE = 348

# name, byte offset, struct format (endianness prefixed at use time)
_HDR_FIELDS = (
    ("sizeof_hdr", 0, "i"),
    ("dim", 40, "8h"),
    ("datatype", 70, "h"),
    ("bitpix", 72, "h"),
    ("pixdim", 76, "8f"),
    ("vox_offset", 108, "f"),
    ("scl_slope", 112, "f"),
    ("scl_inter", 116, "f"),
    ("magic", 344, "4s"),
)

# NIfTI datatype code -> (numpy dtype char, bits)
_DTYPES = {2: ("u1", 8), 4: ("i2", 16), 16: ("f4", 32)}
_DTYPE_CODES = {"u1": 2, "i2": 4, "f4": 16}
_DTYPE_NAMES = {"u1": "u8", "i2": "i16", "f4": "f32"}
_SIDECAR_DTYPES = {"u8": "u1", "i16": "i2", "f32": "f4"}


@dataclass(frozen=True)
class RescaleParams:
    """Affine intensity rescale: stored value v maps to slope*v + intercept."""

    slope: float = 1.0
    intercept: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.slope) or self.slope == 0.0:
            raise DataError(f"rescale slope must be finite and nonzero, got {self.slope!r}")
        if not math.isfinite(self.intercept):
            raise DataError(f"rescale intercept must be finite, got {self.intercept!r}")


def rescale(values: np.ndarray, params: RescaleParams) -> np.ndarray:
    """Apply the affine rescale to raw stored values, returning float32."""
    out = np.asarray(values, dtype=np.float64) * params.slope + params.intercept
    return out.astype(np.float32)


def _unpack(buf: bytes, order: str) -> dict:
    fields = {}
    for name, offset, fmt in _HDR_FIELDS:
        vals = struct.unpack_from(order + fmt, buf, offset)
        fields[name] = vals[0] if len(vals) == 1 else vals
    return fields


def _detect_order(buf: bytes) -> str:
    # dim[0] is the number of dimensions, constrained to 1..7; whichever
    # byte order makes it land there is the file's byte order.
    for order in ("<", ">"):
        (dim0,) = struct.unpack_from(order + "h", buf, 40)
        if 1 <= dim0 <= 7:
            return order
    raise DataError("header dim[0] is not in 1..7 under either byte order")


def read_nifti(path) -> tuple[np.ndarray, tuple[float, float, float], RescaleParams]:
    """Read a NIfTI-1 file without applying the intensity rescale.

    Returns ``(raw_array, spacing, params)`` where raw_array keeps the
    stored dtype (converted to native byte order) and params is the
    header's rescale (slope 0 or NaN are treated as identity).
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read: {exc}") from exc
    if len(blob) < HEADER_SIZE:
        raise DataError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")

    order = _detect_order(blob)
    hdr = _unpack(blob, order)
    if hdr["sizeof_hdr"] != HEADER_SIZE:
        raise DataError(f"{path}: sizeof_hdr is {hdr['sizeof_hdr']}, expected {HEADER_SIZE}")
    magic = hdr["magic"]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise DataError(f"{path}: unrecognized magic {magic!r}")

    dim = hdr["dim"]
    ndim = dim[0]
    if ndim < 3:
        raise DataError(f"{path}: {ndim}-dimensional image, need a 3-D volume")
    if any(dim[d] > 1 for d in range(4, ndim + 1)):
        raise DataError(f"{path}: image has more than 3 non-trivial dimensions")
    nx, ny, nz = (int(dim[d]) for d in (1, 2, 3))
    if min(nx, ny, nz) < 1:
        raise DataError(f"{path}: non-positive dims {(nx, ny, nz)}")

    code = hdr["datatype"]
    if code not in _DTYPES:
        raise DataError(f"{path}: unsupported datatype code {code} (only u8/i16/f32)")
    char, bits = _DTYPES[code]
    if hdr["bitpix"] != bits:
        raise DataError(f"{path}: bitpix {hdr['bitpix']} inconsistent with datatype {code}")

    spacing = tuple(float(p) for p in hdr["pixdim"][1:4])
    if any(not math.isfinite(s) or s <= 0 for s in spacing):
        raise DataError(f"{path}: non-positive voxel spacing {spacing}")

    slope, inter = float(hdr["scl_slope"]), float(hdr["scl_inter"])
    if slope == 0.0 or not math.isfinite(slope):
        params = RescaleParams(1.0, 0.0)
    else:
        params = RescaleParams(slope, inter)

    offset = int(hdr["vox_offset"])
    if magic == b"n+1\x00":
        if offset < HEADER_SIZE:
            raise DataError(f"{path}: vox_offset {offset} overlaps the header")
        payload = blob
    else:
        img = path.with_suffix(".img") if path.suffix == ".hdr" else Path(str(path) + ".img")
        try:
            payload = img.read_bytes()
        except OSError as exc:
            raise DataError(f"{path}: cannot read paired image file {img}: {exc}") from exc
        if offset < 0:
            raise DataError(f"{path}: negative vox_offset {offset}")

    count = nx * ny * nz
    need = offset + count * (bits // 8)
    if len(payload) < need:
        raise DataError(f"{path}: payload truncated ({len(payload)} bytes, need {need})")
    raw = np.frombuffer(payload, dtype=np.dtype(order + char), count=count, offset=offset)
    raw = raw.astype(raw.dtype.newbyteorder("="))
    return raw.reshape((nx, ny, nz), order="F"), spacing, params


def load_nifti(path) -> tuple[Volume3D, RescaleParams]:
    """Read a NIfTI-1 volume and apply its intensity rescale."""
    raw, spacing, params = read_nifti(path)
    values = rescale(raw, params)
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: non-finite intensities after rescale")
    return Volume3D(values, spacing), params


def load_mask(path) -> LabelMask:
    """Read a label mask stored as an integer-typed NIfTI-1 file."""
    raw, _spacing, _params = read_nifti(path)
    if not np.issubdtype(raw.dtype, np.integer):
        raise DataError(f"{path}: mask payload must be integer-typed, got {raw.dtype}")
    if raw.size and int(raw.min()) < 0:
        raise DataError(f"{path}: mask contains negative labels")
    return LabelMask(raw.astype(np.int32))


def write_nifti(path, array: np.ndarray, spacing=(1.0, 1.0, 1.0),
                params: RescaleParams | None = None) -> None:
    """Write a raw array as single-file NIfTI-1 (little-endian, n+1).

    The array dtype must be uint8, int16 or float32; it is stored verbatim
    with the given rescale parameters (identity when params is None).
    """
    array = np.asarray(array)
    if array.ndim != 3:
        raise DataError(f"can only write 3-D arrays, got shape {array.shape}")
    char = array.dtype.newbyteorder("=").str.lstrip("<>=|")
    if char not in _DTYPE_CODES:
        raise DataError(f"unsupported payload dtype {array.dtype} (only u8/i16/f32)")
    if params is None:
        params = RescaleParams(1.0, 0.0)

    nx, ny, nz = array.shape
    buf = bytearray(352)
    struct.pack_into("<i", buf, 0, HEADER_SIZE)
    struct.pack_into("c", buf, 38, b"r")
    struct.pack_into("<8h", buf, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", buf, 70, _DTYPE_CODES[char])
    struct.pack_into("<h", buf, 72, int(np.dtype(char).itemsize * 8))
    struct.pack_into("<8f", buf, 76, 1.0, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0)
    struct.pack_into("<f", buf, 108, 352.0)
    struct.pack_into("<f", buf, 112, params.slope)
    struct.pack_into("<f", buf, 116, params.intercept)
    struct.pack_into("B", buf, 123, 2)  # spatial units: mm
    struct.pack_into("8s", buf, 148, b"hemoseg")
    struct.pack_into("4s", buf, 344, b"n+1\x00")

    payload = array.ravel(order="F").astype(np.dtype("<" + char), copy=False)
    with open(path, "wb") as fh:
        fh.write(buf)
        fh.write(payload.tobytes())


def save_nifti(obj, path) -> None:
    """Write a Volume3D (float32) or LabelMask (uint8) with identity rescale."""
    if isinstance(obj, Volume3D):
        write_nifti(path, obj.data.astype(np.float32), obj.spacing)
    elif isinstance(obj, LabelMask):
        if obj.data.size and int(obj.data.max()) > 255:
            raise DataError("mask labels exceed 255, cannot store as uint8")
        write_nifti(path, obj.data.astype(np.uint8))
    else:
        raise DataError(f"cannot save object of type {type(obj).__name__}")


def parse_kv(text: str, source: str = "<text>", error=DataError) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' lines and blanks are skipped.

    Duplicate keys and lines without '=' raise the given error class with
    the offending line number.
    """
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise error(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise error(f"{source}:{lineno}: empty key")
        if key in out:
            raise error(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _parse_tuple(value: str, n: int, conv, what: str, source: str):
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != n:
        raise DataError(f"{source}: {what} needs {n} comma-separated values, got {value!r}")
    try:
        return tuple(conv(p) for p in parts)
    except ValueError as exc:
        raise DataError(f"{source}: bad {what} value {value!r}") from exc


_SIDECAR_KEYS = {"dims", "spacing", "dtype", "slope", "intercept"}


def load_raw(data_path, sidecar_path) -> tuple[Volume3D, RescaleParams]:
    """Read a headerless little-endian voxel file described by a sidecar.

    Sidecar keys: ``dims=nx,ny,nz`` and ``dtype=u8|i16|f32`` (required),
    ``spacing=sx,sy,sz`` (default 1,1,1), ``slope`` (default 1) and
    ``intercept`` (default 0).
    """
    sidecar_path = Path(sidecar_path)
    try:
        text = sidecar_path.read_text()
    except OSError as exc:
        raise DataError(f"{sidecar_path}: cannot read: {exc}") from exc
    kv = parse_kv(text, source=str(sidecar_path))
    unknown = set(kv) - _SIDECAR_KEYS
    if unknown:
        raise DataError(f"{sidecar_path}: unknown keys {sorted(unknown)}")
    for required in ("dims", "dtype"):
        if required not in kv:
            raise DataError(f"{sidecar_path}: missing required key {required!r}")

    src = str(sidecar_path)
    dims = _parse_tuple(kv["dims"], 3, int, "dims", src)
    if min(dims) < 1:
        raise DataError(f"{src}: non-positive dims {dims}")
    spacing = _parse_tuple(kv.get("spacing", "1,1,1"), 3, float, "spacing", src)
    if kv["dtype"] not in _SIDECAR_DTYPES:
        raise DataError(f"{src}: dtype must be one of u8/i16/f32, got {kv['dtype']!r}")
    dtype = np.dtype("<" + _SIDECAR_DTYPES[kv["dtype"]])
    try:
        params = RescaleParams(float(kv.get("slope", "1")), float(kv.get("intercept", "0")))
    except ValueError as exc:
        raise DataError(f"{src}: bad slope/intercept") from exc

    data_path = Path(data_path)
    try:
        blob = data_path.read_bytes()
    except OSError as exc:
        raise DataError(f"{data_path}: cannot read: {exc}") from exc
    expected = dims[0] * dims[1] * dims[2] * dtype.itemsize
    if len(blob) != expected:
        raise DataError(f"{data_path}: has {len(blob)} bytes, sidecar implies {expected}")
    raw = np.frombuffer(blob, dtype=dtype).astype(dtype.newbyteorder("="))
    values = rescale(raw, params)
    if not np.all(np.isfinite(values)):
        raise DataError(f"{data_path}: non-finite intensities after rescale")
    return Volume3D(values.reshape(dims, order="F"), spacing), params


def save_raw(array: np.ndarray, data_path, sidecar_path,
             spacing=(1.0, 1.0, 1.0), params: RescaleParams | None = None) -> None:
    """Write a raw little-endian voxel file plus its describing sidecar."""
    array = np.asarray(array)
    if array.ndim != 3:
        raise DataError(f"can only write 3-D arrays, got shape {array.shape}")
    char = array.dtype.newbyteorder("=").str.lstrip("<>=|")
    if char not in _DTYPE_NAMES:
        raise DataError(f"unsupported payload dtype {array.dtype} (only u8/i16/f32)")
    if params is None:
        params = RescaleParams(1.0, 0.0)
    with open(data_path, "wb") as fh:
        fh.write(array.ravel(order="F").astype(np.dtype("<" + char), copy=False).tobytes())
    nx, ny, nz = array.shape
    lines = [
        f"dims = {nx},{ny},{nz}",
        f"spacing = {spacing[0]:g},{spacing[1]:g},{spacing[2]:g}",
        f"dtype = {_DTYPE_NAMES[char]}",
        f"slope = {params.slope:g}",
        f"intercept = {params.intercept:g}",
        "",
    ]
    Path(sidecar_path).write_text("\n".join(lines))
