"""Volumetric types and a restricted NIfTI-1 reader/writer.

Only single-file (``n+1``) and header/image pair (``ni1``) layouts with the
datatypes uint8, int16, int32, float32 and float64 are handled. Orientation
fields are written as zeros and ignored on read; arrays are kept in stored
index order.
"""
from __future__ import annotations

import gzip
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ExtentMismatch,
    IndexOutOfBounds,
    MalformedHeader,
    NonFiniteData,
    TruncatedData,
    UnsupportedDatatype,
)

HEADER_SIZE = 348
DEFAULT_VOX_OFFSET = 352

# datatype code -> (numpy type char, bitpix)
DATATYPES = {
    2: ("u1", 8),
    4: ("i2", 16),
    8: ("i4", 32),
    16: ("f4", 32),
    64: ("f8", 64),
}
_CODE_FOR_DTYPE = {np.dtype(v[0]): k for k, v in DATATYPES.items()}

# Field layout of the 348-byte header, in file order.
_HEADER_FIELDS = [
    ("sizeof_hdr", "i"),
    ("data_type", "10s"),
    ("db_name", "18s"),
    ("extents", "i"),
    ("session_error", "h"),
    ("regular", "c"),
    ("dim_info", "B"),
    ("dim", "8h"),
    ("intent_p", "3f"),
    ("intent_code", "h"),
    ("datatype", "h"),
    ("bitpix", "h"),
    ("slice_start", "h"),
    ("pixdim", "8f"),
    ("vox_offset", "f"),
    ("scl_slope", "f"),
    ("scl_inter", "f"),
    ("slice_end", "h"),
    ("slice_code", "B"),
    ("xyzt_units", "B"),
    ("cal_max", "f"),
    ("cal_min", "f"),
    ("slice_duration", "f"),
    ("toffset", "f"),
    ("glmax", "i"),
    ("glmin", "i"),
    ("descrip", "80s"),
    ("aux_file", "24s"),
    ("qform_code", "h"),
    ("sform_code", "h"),
    ("quatern", "6f"),
    ("srow", "12f"),
    ("intent_name", "16s"),
    ("magic", "4s"),
]
_FORMAT = "".join(f for _, f in _HEADER_FIELDS)
assert struct.calcsize("<" + _FORMAT) == HEADER_SIZE


@dataclass(frozen=True)
class NiftiHeader:
    dim: tuple
    datatype_code: int
    bitpix: int
    pixdim: tuple
    vox_offset: float
    scl_slope: float = 0.0
    scl_inter: float = 0.0
    magic: bytes = b"n+1\x00"
    sizeof_hdr: int = HEADER_SIZE
    endian: str = "<"

    @property
    def shape(self):
        return tuple(int(d) for d in self.dim[1:self.dim[0] + 1])

    @property
    def payload_bytes(self):
        n = 1
        for d in self.shape:
            n *= d
        return n * self.bitpix // 8


@dataclass
class Volume4D:
    """BOLD intensities indexed ``data[x, y, z, t]``."""

    data: np.ndarray
    spacing_mm: tuple = (3.0, 3.0, 3.0)
    tr_seconds: float = 2.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 4:
            raise ExtentMismatch(f"Volume4D needs 4 axes, got shape {self.data.shape}")
        if self.data.shape[3] < 2:
            raise ExtentMismatch("Volume4D needs at least 2 time points")
        if min(self.data.shape) < 1:
            raise ExtentMismatch("empty extent")
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteData("Volume4D contains non-finite values")
        self.spacing_mm = tuple(float(s) for s in self.spacing_mm)

    @property
    def extents(self):
        return self.data.shape

    @property
    def spatial_shape(self):
        return self.data.shape[:3]

    @property
    def n_timepoints(self):
        return self.data.shape[3]


@dataclass
class Volume3D:
    """Multi-channel 3D volume indexed ``data[x, y, z, c]``."""

    data: np.ndarray
    spacing_mm: tuple = (3.0, 3.0, 3.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 3:
            data = data[..., np.newaxis]
        if data.ndim != 4:
            raise ExtentMismatch(f"Volume3D needs 3 or 4 axes, got shape {data.shape}")
        if min(data.shape) < 1:
            raise ExtentMismatch("empty extent")
        if not np.issubdtype(data.dtype, np.integer):
            data = data.astype(np.float64, copy=False)
            if not np.all(np.isfinite(data)):
                raise NonFiniteData("Volume3D contains non-finite values")
        self.data = data
        self.spacing_mm = tuple(float(s) for s in self.spacing_mm)

    @property
    def extents(self):
        return self.data.shape[:3]

    @property
    def channels(self):
        return self.data.shape[3]

    def channel(self, c):
        return self.data[..., c]


@dataclass
class MaskVolume:
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data).astype(bool)
        if self.data.ndim != 3:
            raise ExtentMismatch("mask must be 3D")
        if not self.data.any():
            raise ExtentMismatch("mask has no in-brain voxels")

    @property
    def extents(self):
        return self.data.shape

    @property
    def count(self):
        return int(self.data.sum())


def check_extents(volume, mask):
    shape = volume.data.shape[:3]
    if tuple(shape) != tuple(mask.data.shape):
        raise ExtentMismatch(f"volume extents {shape} != mask extents {mask.data.shape}")


def voxel_timeseries(v: Volume4D, x: int, y: int, z: int) -> np.ndarray:
    """Return the ``T`` samples stored at voxel ``(x, y, z)``."""
    for i, n in zip((x, y, z), v.spatial_shape):
        if not 0 <= i < n:
            raise IndexOutOfBounds(f"voxel index {(x, y, z)} outside extents {v.spatial_shape}")
    return v.data[x, y, z, :].copy()


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _maybe_gunzip(raw: bytes) -> bytes:
    if raw[:2] != b"\x1f\x8b":
        return raw
    try:
        return gzip.decompress(raw)
    except EOFError as exc:
        raise TruncatedData(f"gzip stream ended early: {exc}") from None
    except (OSError, zlib.error) as exc:
        raise MalformedHeader(f"corrupt gzip envelope: {exc}") from None


def _detect_endian(raw: bytes) -> str:
    if struct.unpack("<i", raw[:4])[0] == HEADER_SIZE:
        return "<"
    if struct.unpack(">i", raw[:4])[0] == HEADER_SIZE:
        return ">"
    raise MalformedHeader(f"sizeof_hdr is not {HEADER_SIZE} in either byte order")


def parse_header(raw: bytes) -> NiftiHeader:
    if len(raw) < HEADER_SIZE:
        raise TruncatedData(f"{len(raw)} bytes is shorter than the {HEADER_SIZE}-byte header")
    endian = _detect_endian(raw)
    values = struct.unpack(endian + _FORMAT, raw[:HEADER_SIZE])
    fields, i = {}, 0
    for name, fmt in _HEADER_FIELDS:
        count = int(fmt[:-1]) if fmt[:-1].isdigit() and fmt[-1] not in "s" else 1
        if count == 1:
            fields[name] = values[i]
        else:
            fields[name] = tuple(values[i:i + count])
        i += count

    magic = fields["magic"]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise MalformedHeader(f"bad magic {magic!r}")
    dim = fields["dim"]
    if not 3 <= dim[0] <= 4:
        raise MalformedHeader(f"dim[0] = {dim[0]}; only 3D and 4D volumes are supported")
    if any(d < 1 for d in dim[1:dim[0] + 1]):
        raise MalformedHeader(f"non-positive extent in dim {dim}")
    if dim[0] == 4 and any(d > 1 for d in dim[5:]):
        raise MalformedHeader(f"dimensions beyond the 4th are not supported: {dim}")
    code = fields["datatype"]
    if code not in DATATYPES:
        raise UnsupportedDatatype(f"datatype code {code}")
    if fields["bitpix"] != DATATYPES[code][1]:
        raise MalformedHeader(f"bitpix {fields['bitpix']} inconsistent with datatype {code}")
    vox_offset = fields["vox_offset"]
    if not np.isfinite(vox_offset) or vox_offset != int(vox_offset) or vox_offset < 0:
        raise MalformedHeader(f"invalid vox_offset {vox_offset}")
    if magic == b"n+1\x00" and vox_offset < DEFAULT_VOX_OFFSET:
        raise MalformedHeader(f"vox_offset {vox_offset} < {DEFAULT_VOX_OFFSET} for single-file layout")
    slope, inter = fields["scl_slope"], fields["scl_inter"]
    if not (np.isfinite(slope) and np.isfinite(inter)):
        raise MalformedHeader("non-finite scaling fields")
    return NiftiHeader(
        dim=tuple(int(d) for d in dim),
        datatype_code=int(code),
        bitpix=int(fields["bitpix"]),
        pixdim=tuple(float(p) for p in fields["pixdim"]),
        vox_offset=float(vox_offset),
        scl_slope=float(slope),
        scl_inter=float(inter),
        magic=magic,
        endian=endian,
    )


def _decode(header: NiftiHeader, payload: bytes) -> np.ndarray:
    need = header.payload_bytes
    if len(payload) < need:
        raise TruncatedData(f"payload has {len(payload)} bytes, header promises {need}")
    dtype = np.dtype(header.endian + DATATYPES[header.datatype_code][0])
    flat = np.frombuffer(payload, dtype=dtype, count=need // dtype.itemsize)
    arr = flat.reshape(header.shape, order="F")
    # corrupt payloads may hold NaN bit patterns; they are rejected just below
    with np.errstate(invalid="ignore", over="ignore"):
        if header.scl_slope != 0 and not (header.scl_slope == 1 and header.scl_inter == 0):
            arr = arr.astype(np.float64) * header.scl_slope + header.scl_inter
        elif arr.dtype.kind == "f":
            arr = arr.astype(np.float64)
        else:
            arr = arr.astype(arr.dtype.newbyteorder("="))
    if arr.dtype.kind == "f" and not np.all(np.isfinite(arr)):
        raise NonFiniteData("decoded payload contains non-finite values")
    return arr


def _to_volume(header: NiftiHeader, arr: np.ndarray):
    spacing = tuple(abs(p) if p else 1.0 for p in header.pixdim[1:4])
    if arr.ndim == 4 and arr.shape[3] >= 2 and header.pixdim[4] > 0:
        return Volume4D(arr, spacing_mm=spacing, tr_seconds=header.pixdim[4])
    return Volume3D(arr, spacing_mm=spacing)


def parse_nifti(raw: bytes, image: bytes | None = None):
    """Decode a NIfTI-1 byte string into ``(NiftiHeader, volume)``.

    4D data with positive ``pixdim[4]`` and at least two frames becomes a
    :class:`Volume4D`; anything else is a :class:`Volume3D` whose 4th axis
    holds channels. For the two-file ``ni1`` layout pass the image bytes as
    ``image``.
    """
    raw = _maybe_gunzip(bytes(raw))
    header = parse_header(raw)
    if header.magic == b"ni1\x00":
        if image is None:
            raise MalformedHeader("ni1 header needs a separate image payload")
        payload = _maybe_gunzip(bytes(image))[int(header.vox_offset):]
    else:
        payload = raw[int(header.vox_offset):]
    return header, _to_volume(header, _decode(header, payload))


# ---------------------------------------------------------------------------
# writing
# ---------------------------------------------------------------------------

def write_nifti(volume, dtype="float64", endian="<") -> bytes:
    """Encode a volume as a single-file NIfTI-1 byte string.

    ``dtype`` may be any supported type; integer types are meant for label
    volumes and masks. A multi-channel :class:`Volume3D` is stored with its
    channels on the 4th axis and ``pixdim[4] = 0``.
    """
    if isinstance(volume, MaskVolume):
        arr, spacing, tr = volume.data.astype(np.uint8), (1.0, 1.0, 1.0), 0.0
        dtype = "uint8"
    elif isinstance(volume, Volume4D):
        arr, spacing, tr = volume.data, volume.spacing_mm, volume.tr_seconds
    elif isinstance(volume, Volume3D):
        arr, spacing, tr = volume.data, volume.spacing_mm, 0.0
        if arr.shape[3] == 1:
            arr = arr[..., 0]
    else:
        raise TypeError(f"cannot write {type(volume).__name__}")

    np_dtype = np.dtype(dtype)
    if np_dtype not in _CODE_FOR_DTYPE:
        raise UnsupportedDatatype(f"cannot write dtype {dtype}")
    code = _CODE_FOR_DTYPE[np_dtype]
    bitpix = DATATYPES[code][1]
    if np_dtype.kind in "iu":
        info = np.iinfo(np_dtype)
        if arr.size and (arr.min() < info.min or arr.max() > info.max or np.any(arr != np.round(arr))):
            raise UnsupportedDatatype(f"values do not fit losslessly in {dtype}")

    dim = [arr.ndim] + list(arr.shape) + [1] * (7 - arr.ndim)
    pixdim = [1.0, *spacing, float(tr), 1.0, 1.0, 1.0]
    values = {
        "sizeof_hdr": HEADER_SIZE,
        "data_type": b"",
        "db_name": b"",
        "extents": 0,
        "session_error": 0,
        "regular": b"r",
        "dim_info": 0,
        "dim": dim,
        "intent_p": (0.0, 0.0, 0.0),
        "intent_code": 0,
        "datatype": code,
        "bitpix": bitpix,
        "slice_start": 0,
        "pixdim": pixdim,
        "vox_offset": float(DEFAULT_VOX_OFFSET),
        "scl_slope": 1.0,
        "scl_inter": 0.0,
        "slice_end": 0,
        "slice_code": 0,
        "xyzt_units": 2 | 8,  # mm, seconds
        "cal_max": 0.0,
        "cal_min": 0.0,
        "slice_duration": 0.0,
        "toffset": 0.0,
        "glmax": 0,
        "glmin": 0,
        "descrip": b"stomics",
        "aux_file": b"",
        "qform_code": 0,
        "sform_code": 0,
        "quatern": (0.0,) * 6,
        "srow": (0.0,) * 12,
        "intent_name": b"",
        "magic": b"n+1\x00",
    }
    flat = []
    for name, _ in _HEADER_FIELDS:
        v = values[name]
        flat.extend(v if isinstance(v, (list, tuple)) else [v])
    header = struct.pack(endian + _FORMAT, *flat)
    payload = np.asarray(arr).astype(np.dtype(endian + np_dtype.str[1:])).tobytes(order="F")
    return header + b"\x00" * (DEFAULT_VOX_OFFSET - HEADER_SIZE) + payload


def load_nifti(path):
    path = Path(path)
    raw = path.read_bytes()
    image = None
    if path.suffix == ".hdr":
        image = path.with_suffix(".img").read_bytes()
    return parse_nifti(raw, image)


def save_nifti(volume, path, dtype="float64"):
    path = Path(path)
    data = write_nifti(volume, dtype=dtype)
    if path.name.endswith(".gz"):
        # mtime=0 keeps the output byte-identical across runs
        data = gzip.compress(data, mtime=0)
    path.write_bytes(data)
    return path
