"""
NRRD volume reading and writing.

Written files are NRRD0004 with raw little-endian payload and a fixed field
order. Reading accepts NRRD0001-0005 headers with raw or gzip payloads.
"""
import gzip
import logging
import zlib
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from models.exceptions import BadHeader, IoFailure, NonFiniteVoxels, SizeMismatch
from models.imaging_models import Mask, Volume, VolumeGeometry
from storage.atomic_writer import atomic_write

logger = logging.getLogger(__name__)

SPACE = "left-posterior-superior"

_NUMPY_TO_NRRD: Dict[str, str] = {
    "int8": "signed char",
    "uint8": "uchar",
    "int16": "short",
    "uint16": "ushort",
    "int32": "int",
    "uint32": "uint",
    "float32": "float",
    "float64": "double",
}

_NRRD_TO_NUMPY: Dict[str, str] = {
    "signed char": "i1", "int8": "i1", "int8_t": "i1",
    "uchar": "u1", "unsigned char": "u1", "uint8": "u1", "uint8_t": "u1",
    "short": "i2", "short int": "i2", "signed short": "i2", "signed short int": "i2", "int16": "i2", "int16_t": "i2",
    "ushort": "u2", "unsigned short": "u2", "unsigned short int": "u2", "uint16": "u2", "uint16_t": "u2",
    "int": "i4", "signed int": "i4", "int32": "i4", "int32_t": "i4",
    "uint": "u4", "unsigned int": "u4", "uint32": "u4", "uint32_t": "u4",
    "float": "f4", "double": "f8",
}


def _format_number(value: float) -> str:
    """Shortest text that round-trips the float exactly."""
    return repr(float(value))


def _format_vector(values: np.ndarray) -> str:
    return "(" + ",".join(_format_number(v) for v in values) + ")"


def encode_nrrd(volume: Volume) -> bytes:
    """Serialize a volume or mask to NRRD0004 bytes."""
    voxels = np.asarray(volume.voxels)
    if voxels.dtype.kind == "f" and not np.isfinite(voxels).all():
        raise NonFiniteVoxels("Volume contains NaN or infinite voxels")
    if isinstance(volume, Mask):
        voxels = voxels.astype(np.uint8)
    type_name = _NUMPY_TO_NRRD.get(voxels.dtype.name)
    if type_name is None:
        voxels = voxels.astype(np.float64)
        type_name = "double"
    geometry = volume.geometry
    # Space directions are axis vectors: direction column times spacing
    axes = geometry.affine.T
    lines = [
        "NRRD0004",
        f"type: {type_name}",
        "dimension: 3",
        "sizes: " + " ".join(str(int(n)) for n in geometry.dims),
        f"space: {SPACE}",
        "space directions: " + " ".join(_format_vector(axis) for axis in axes),
        "space origin: " + _format_vector(np.asarray(geometry.origin)),
        "endian: little",
        "encoding: raw",
    ]
    header = ("\n".join(lines) + "\n\n").encode("ascii")
    payload = np.ascontiguousarray(voxels).astype(voxels.dtype.newbyteorder("<"), copy=False).tobytes()
    return header + payload


def write_nrrd(volume: Volume, path: Union[str, Path]) -> Path:
    """Write atomically; masks are stored as uchar."""
    target = atomic_write(path, encode_nrrd(volume))
    logger.debug("Wrote %s (%s)", target, "x".join(map(str, volume.dims)))
    return target


def _parse_vector(text: str) -> List[float]:
    text = text.strip()
    if not (text.startswith("(") and text.endswith(")")):
        raise BadHeader(f"Vector should be enclosed in parentheses: {text!r}")
    try:
        return [float(part) for part in text[1:-1].split(",")]
    except ValueError as exc:
        raise BadHeader(f"Invalid vector {text!r}") from exc


def _split_header(data: bytes) -> Tuple[Dict[str, str], bytes]:
    separator = data.find(b"\n\n")
    if separator < 0:
        raise BadHeader("Header is not terminated by a blank line")
    try:
        text = data[:separator].decode("ascii")
    except UnicodeDecodeError as exc:
        raise BadHeader("Header is not ASCII") from exc
    lines = text.split("\n")
    magic = lines[0].rstrip()
    if not magic.startswith("NRRD") or magic[4:] not in {"0001", "0002", "0003", "0004", "0005"}:
        raise BadHeader(f"Invalid magic line {magic!r}")
    fields: Dict[str, str] = {}
    for line in lines[1:]:
        line = line.rstrip()
        if not line or line.startswith("#") or ":=" in line:
            continue
        name, sep, value = line.partition(": ")
        if not sep:
            raise BadHeader(f"Invalid header line {line!r}")
        name = name.strip()
        if name in fields:
            raise BadHeader(f"Duplicate header field {name!r}")
        fields[name] = value.strip()
    return fields, data[separator + 2:]


def _geometry(fields: Dict[str, str], sizes: List[int]) -> VolumeGeometry:
    origin = _parse_vector(fields["space origin"]) if "space origin" in fields else [0.0, 0.0, 0.0]
    if "space directions" in fields:
        axes = np.array([_parse_vector(part) for part in fields["space directions"].split()])
        if axes.shape != (3, 3):
            raise BadHeader("Expected three space direction vectors of length 3")
        spacing = np.linalg.norm(axes, axis=1)
        if np.any(spacing <= 0):
            raise BadHeader("Space directions must be non-zero")
        columns = (axes / spacing[:, None]).T
    elif "spacings" in fields:
        spacing = np.array([float(s) for s in fields["spacings"].split()])
        columns = np.eye(3)
    else:
        spacing = np.ones(3)
        columns = np.eye(3)
    if len(origin) != 3:
        raise BadHeader("Space origin must have three components")
    return VolumeGeometry.from_affine_columns(tuple(sizes), tuple(spacing), tuple(origin), columns)  # type: ignore[arg-type]


def decode_nrrd(data: bytes, source: str = "<bytes>") -> Volume:
    """Parse NRRD bytes into a Volume."""
    fields, payload = _split_header(data)
    for required in ("type", "dimension", "sizes", "encoding"):
        if required not in fields:
            raise BadHeader(f"{source}: missing required field {required!r}")
    if fields["dimension"] != "3":
        raise BadHeader(f"{source}: only 3-D volumes are supported, got dimension {fields['dimension']}")
    try:
        sizes = [int(s) for s in fields["sizes"].split()]
    except ValueError as exc:
        raise BadHeader(f"{source}: invalid sizes {fields['sizes']!r}") from exc
    if len(sizes) != 3 or min(sizes) < 1:
        raise BadHeader(f"{source}: invalid sizes {fields['sizes']!r}")
    code = _NRRD_TO_NUMPY.get(fields["type"])
    if code is None:
        raise BadHeader(f"{source}: unsupported type {fields['type']!r}")
    dtype = np.dtype(code)
    if dtype.itemsize > 1:
        endian = fields.get("endian")
        if endian is None:
            raise BadHeader(f"{source}: missing endian field")
        if endian != "little":
            raise BadHeader(f"{source}: only little-endian payloads are supported")
        dtype = dtype.newbyteorder("<")
    encoding = fields["encoding"]
    if encoding in {"gzip", "gz"}:
        try:
            payload = gzip.decompress(payload)
        except (OSError, EOFError, zlib.error) as exc:
            raise BadHeader(f"{source}: corrupt gzip payload") from exc
    elif encoding != "raw":
        raise BadHeader(f"{source}: unsupported encoding {encoding!r}")
    expected = int(np.prod(sizes)) * dtype.itemsize
    if len(payload) != expected:
        raise SizeMismatch(f"{source}: payload has {len(payload)} bytes, expected {expected}")
    nx, ny, nz = sizes
    voxels = np.frombuffer(payload, dtype=dtype).reshape(nz, ny, nx).astype(dtype.newbyteorder("="))
    return Volume(_geometry(fields, sizes), voxels, fields.get("content", ""))


def read_nrrd(path: Union[str, Path]) -> Volume:
    """Read an NRRD file with an attached payload."""
    source = Path(path)
    try:
        data = source.read_bytes()
    except OSError as exc:
        raise IoFailure(f"Cannot read {source}: {exc}") from exc
    return decode_nrrd(data, str(source))


def read_mask(path: Union[str, Path]) -> Mask:
    """Read an NRRD file and interpret non-zero voxels as ROI."""
    return Mask.from_volume(read_nrrd(path))
