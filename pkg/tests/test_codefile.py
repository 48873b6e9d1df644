import json

import pytest

from hamspace.bitcode import CodeArray, HashCode
from hamspace.codefile import (
    CodeFileHeader, codes_from_bytes, codes_to_bytes, read_codes, sidecar_path, write_codes,
)
from hamspace.errors import ContractViolation, FormatError


def test_header_layout():
    header = CodeFileHeader(32, 3)
    data = bytes(header)
    assert data == b"HAMSPC01" + b"\x20\x00\x00\x00" + b"\x03" + b"\x00" * 7
    assert CodeFileHeader.from_bytes(data) == header


def test_header_errors():
    with pytest.raises(FormatError, match="Bad magic"):
        CodeFileHeader.from_bytes(b"HAMSPC02" + bytes(12))
    with pytest.raises(FormatError, match="Unsupported code width"):
        CodeFileHeader.from_bytes(b"HAMSPC01" + (12).to_bytes(4, 'little') + bytes(8))
    with pytest.raises(FormatError):
        CodeFileHeader.from_bytes(b"HAMSPC01")


def test_codes_bytes():
    codes = CodeArray.from_codes([HashCode.from_string('1' * 8 + '0' * 8),
                                  HashCode.from_string('0' * 15 + '1')])
    data = codes_to_bytes(codes)
    assert data[20:] == b"\xff\x00\x00\x80"
    assert codes_from_bytes(data) == codes

    with pytest.raises(FormatError, match="Expected 4 bytes of codes, got 3"):
        codes_from_bytes(data[:-1])
    with pytest.raises(FormatError):
        codes_from_bytes(data[:10])


def test_write_read(tmp_path, random_codes_32):
    path = tmp_path / 'codes.bin'
    sidecar = write_codes(path, random_codes_32, role='documents', metadata=dict(seed=3))
    assert sidecar['role'] == 'documents'
    assert sidecar['count'] == len(random_codes_32)

    codes, meta = read_codes(path)
    assert codes == random_codes_32
    assert meta == json.loads(sidecar_path(path).read_text())
    assert meta['seed'] == 3
    assert meta['schema_version'] == 1


def test_refuses_overwrite(tmp_path, random_codes_32):
    path = tmp_path / 'codes.bin'
    write_codes(path, random_codes_32, role='items')
    with pytest.raises(ContractViolation):
        write_codes(path, random_codes_32, role='items')
    write_codes(path, random_codes_32[:5], role='items', force=True)
    assert len(read_codes(path)[0]) == 5


def test_detects_tampering(tmp_path, random_codes_32):
    path = tmp_path / 'codes.bin'
    write_codes(path, random_codes_32, role='documents')
    data = bytearray(path.read_bytes())
    data[-1] ^= 1
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="fingerprint"):
        read_codes(path)


def test_missing_file(tmp_path):
    with pytest.raises(FormatError, match="Missing"):
        read_codes(tmp_path / 'nothing.bin')


def test_deterministic_bytes(tmp_path, random_codes_32):
    first, second = tmp_path / 'a.bin', tmp_path / 'b.bin'
    write_codes(first, random_codes_32, role='documents', metadata=dict(seed=1))
    write_codes(second, random_codes_32, role='documents', metadata=dict(seed=1))
    assert first.read_bytes() == second.read_bytes()
    assert sidecar_path(first).read_bytes() == sidecar_path(second).read_bytes()
