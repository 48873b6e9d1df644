"""
The binary code file shared by every component, and its JSON sidecar.

Layout: 8-byte magic ``HAMSPC01``, little-endian u32 width ``B``, u64 count ``N``,
then ``N`` codes of ``ceil(B/8)`` bytes each (bit 0 of byte 0 is code bit 0).
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .bitcode import CodeArray, check_width, num_bytes
from .errors import ContractViolation, FormatError, UsageError
from .hashing import fingerprint
from .serializable import Serializable, Deserializable, uint_bytes, uint_from_exact_bytes


SCHEMA_VERSION = 1

ROLES = ('documents', 'users', 'items', 'index')

PathLike = Union[str, 'os.PathLike[str]']


class CodeFileHeader(Serializable, Deserializable):

    MAGIC = b"HAMSPC01"

    _SIZES = (8, 4, 8)

    def __init__(self, width: int, count: int):
        self.width = width
        self.count = count

    @classmethod
    def serialized_size(cls):
        return sum(cls._SIZES)

    @classmethod
    def _from_exact_bytes(cls, data: bytes):
        magic, width, count = cls._split(data, *cls._SIZES)
        if magic != cls.MAGIC:
            raise FormatError(f"Bad magic: expected {cls.MAGIC!r}, got {magic!r}")
        width_value = uint_from_exact_bytes(width)
        try:
            check_width(width_value)
        except ValueError as e:
            raise FormatError(f"Unsupported code width in header: {width_value}") from e
        return cls(width_value, uint_from_exact_bytes(count))

    def __bytes__(self):
        return self.MAGIC + uint_bytes(self.width, 4) + uint_bytes(self.count, 8)

    def __eq__(self, other):
        return self.width == other.width and self.count == other.count


def codes_to_bytes(codes: CodeArray) -> bytes:
    return bytes(CodeFileHeader(codes.width, len(codes))) + bytes(codes)


def codes_from_bytes(data: bytes) -> CodeArray:
    header_size = CodeFileHeader.serialized_size()
    if len(data) < header_size:
        raise FormatError(f"Code file too short for its header: {len(data)} bytes")
    header = CodeFileHeader.from_bytes(data[:header_size])
    body = data[header_size:]
    expected = header.count * num_bytes(header.width)
    if len(body) != expected:
        raise FormatError(f"Expected {expected} bytes of codes, got {len(body)}")
    packed = np.frombuffer(body, dtype=np.uint8).reshape(header.count, num_bytes(header.width))
    return CodeArray(packed, header.width)


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + '.json')


def check_writable(path: PathLike, force: bool) -> None:
    if Path(path).exists() and not force:
        raise ContractViolation(f"Refusing to overwrite {path} (use --force)")


def write_json(path: PathLike, payload: Dict[str, Any], force: bool = True) -> None:
    """
    Writes pretty-printed JSON with sorted keys, so equal payloads give equal bytes.
    """
    check_writable(path, force)
    with open(path, 'w') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')


def read_json(path: PathLike) -> Dict[str, Any]:
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise FormatError(f"Missing file: {path}") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"Malformed JSON in {path}: {e}") from e


def write_codes(path: PathLike,
                codes: CodeArray,
                role: str,
                metadata: Optional[Dict[str, Any]] = None,
                force: bool = False,
                ) -> Dict[str, Any]:
    """
    Writes the code file and its sidecar; returns the sidecar contents.
    """
    if role not in ROLES:
        raise UsageError(f"Unknown role {role!r}, expected one of {ROLES}")
    check_writable(path, force)
    data = codes_to_bytes(codes)
    with open(path, 'wb') as f:
        f.write(data)

    sidecar = dict(metadata or {})
    sidecar.update(schema_version=SCHEMA_VERSION,
                   role=role,
                   width=codes.width,
                   count=len(codes),
                   fingerprint=fingerprint(b"CODE_FILE", data))
    write_json(sidecar_path(path), sidecar, force=True)
    return sidecar


def read_codes(path: PathLike) -> Tuple[CodeArray, Dict[str, Any]]:
    """
    Reads a code file and its sidecar (an empty dict if there is none).
    The sidecar fingerprint, when present, must match the file contents.
    """
    try:
        with open(path, 'rb') as f:
            data = f.read()
    except FileNotFoundError as e:
        raise FormatError(f"Missing code file: {path}") from e

    codes = codes_from_bytes(data)

    meta: Dict[str, Any] = {}
    if sidecar_path(path).exists():
        meta = read_json(sidecar_path(path))
        expected = meta.get('fingerprint')
        if expected is not None and expected != fingerprint(b"CODE_FILE", data):
            raise FormatError(f"Sidecar fingerprint does not match {path}")
    return codes, meta
