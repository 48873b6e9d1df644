"""
Packed binary hash codes and the bit-level computations on them.

Bit convention: code bit ``j`` is bit ``j % 8`` (LSB first) of byte ``j // 8``.
In the {-1, +1} algebra used by the projected Hamming dissimilarity,
bit value 1 stands for +1 and bit value 0 for -1.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb
from typing import Iterable, Iterator, List, Sequence, Tuple, Union, overload

import numpy as np

from .errors import UsageError
from .serializable import Serializable, Deserializable


SUPPORTED_WIDTHS = (8, 16, 32, 64, 128)

# Number of set bits for every byte value
POPCOUNT_TABLE = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def check_width(width: int) -> int:
    if width not in SUPPORTED_WIDTHS:
        raise UsageError(f"Code width must be one of {SUPPORTED_WIDTHS} (given: {width})")
    return width


def num_bytes(width: int) -> int:
    return (width + 7) // 8


def _check_same_width(a_width: int, b_width: int) -> None:
    if a_width != b_width:
        raise UsageError(f"Code widths differ: {a_width} != {b_width}")


class HashCode(Serializable, Deserializable):
    """
    A fixed-width binary code, stored as a non-negative integer whose bit ``j`` is code bit ``j``.
    """

    def __init__(self, value: int, width: int):
        check_width(width)
        if not 0 <= value < (1 << width):
            raise UsageError(f"Value does not fit in {width} bits")
        self.value = value
        self.width = width

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> 'HashCode':
        """
        Builds a code from a sequence of 0/1 values, code bit 0 first.
        """
        bits = list(bits)
        value = 0
        for j, bit in enumerate(bits):
            if bit not in (0, 1):
                raise UsageError(f"Bits must be 0 or 1, got {bit!r} at position {j}")
            value |= bit << j
        return cls(value, len(bits))

    @classmethod
    def from_string(cls, bit_string: str) -> 'HashCode':
        """
        Parses a string of ``0``/``1`` characters, code bit 0 first (the order ``str()`` prints).
        """
        return cls.from_bits(int(c) for c in bit_string)

    @classmethod
    def zeros(cls, width: int) -> 'HashCode':
        return cls(0, width)

    def to_bits(self) -> List[int]:
        return [(self.value >> j) & 1 for j in range(self.width)]

    def to_signs(self) -> List[int]:
        """
        The code as a {-1, +1} vector.
        """
        return [1 if bit else -1 for bit in self.to_bits()]

    def bit(self, j: int) -> int:
        return (self.value >> j) & 1

    def popcount(self) -> int:
        return bin(self.value).count("1")

    def __invert__(self) -> 'HashCode':
        return HashCode(self.value ^ ((1 << self.width) - 1), self.width)

    @classmethod
    def serialized_size(cls, width: int):
        return num_bytes(check_width(width))

    @classmethod
    def _from_exact_bytes(cls, data: bytes, width: int):
        return cls(int.from_bytes(data, byteorder='little'), width)

    def __bytes__(self):
        return self.value.to_bytes(num_bytes(self.width), byteorder='little')

    def __int__(self):
        return self.value

    def __eq__(self, other):
        return (isinstance(other, HashCode)
                and self.width == other.width
                and self.value == other.value)

    def __hash__(self):
        return hash((self.__class__, self.width, self.value))

    def __str__(self):
        return ''.join(str(bit) for bit in self.to_bits())

    def __repr__(self):
        return f"{self.__class__.__name__}('{self}')"


@dataclass(frozen=True)
class Substring:
    """
    One of the ``m`` disjoint slices of a code; slot ``index`` covers
    code bits ``[index * length, (index + 1) * length)``.
    """
    value: int
    index: int
    m: int
    length: int

    def __str__(self):
        return ''.join(str((self.value >> j) & 1) for j in range(self.length))


def hamming_distance(a: HashCode, b: HashCode) -> int:
    _check_same_width(a.width, b.width)
    return bin(a.value ^ b.value).count("1")


def projected_hamming_dissimilarity(u: HashCode, i: HashCode) -> int:
    """
    Hamming distance restricted to the dimensions where ``u`` is +1,
    i.e. the number of positions with ``u_j = +1`` and ``i_j = -1``.
    Costs the same single AND-NOT and popcount as the Hamming distance.
    """
    _check_same_width(u.width, i.width)
    return bin(u.value & ~i.value).count("1")


def substring_length(width: int, m: int) -> int:
    if m < 1 or width % m != 0:
        raise UsageError(f"Substring count {m} does not divide code width {width}")
    return width // m


def split_substrings(code: HashCode, m: int) -> List[Substring]:
    length = substring_length(code.width, m)
    mask = (1 << length) - 1
    return [Substring(value=(code.value >> (j * length)) & mask, index=j, m=m, length=length)
            for j in range(m)]


def concat_substrings(substrings: Sequence[Substring]) -> HashCode:
    if not substrings:
        raise UsageError("Cannot concatenate an empty list of substrings")
    length = substrings[0].length
    value = 0
    for j, sub in enumerate(sorted(substrings, key=lambda s: s.index)):
        if sub.index != j or sub.length != length:
            raise UsageError("Substrings do not form a complete, uniform split")
        value |= sub.value << (j * length)
    return HashCode(value, length * len(substrings))


def pigeonhole_threshold(radius: int, m: int) -> int:
    """
    If two codes are within ``radius``, at least one of their ``m`` substring pairs
    is within the returned distance.
    """
    if radius < 0:
        raise UsageError(f"Radius must be non-negative (given: {radius})")
    if m < 1:
        raise UsageError(f"Substring count must be positive (given: {m})")
    return radius // m


@lru_cache(maxsize=None)
def _flip_masks(length: int, flips: int) -> Tuple[int, ...]:
    return tuple(sum(1 << pos for pos in positions)
                 for positions in combinations(range(length), flips))


@lru_cache(maxsize=256)
def flip_masks(length: int, flips: int) -> np.ndarray:
    """
    All ``length``-bit masks with exactly ``flips`` set bits, in ascending order
    of the flipped-position tuple. Requires ``length <= 64``.
    """
    if length > 64:
        raise UsageError(f"Substring keys are limited to 64 bits (given: {length})")
    masks = np.array(_flip_masks(length, flips), dtype=np.uint64)
    masks.setflags(write=False)
    return masks


def perturbation_count(length: int, radius: int) -> int:
    return sum(comb(length, d) for d in range(min(radius, length) + 1))


def enumerate_perturbations(sub: Substring, radius: int) -> List[int]:
    """
    All substring values within Hamming distance ``radius`` of ``sub.value``,
    ordered by flip count and then by the flipped positions.
    """
    if radius > sub.length:
        raise UsageError(f"Radius {radius} exceeds substring length {sub.length}")
    return [sub.value ^ mask
            for flips in range(radius + 1)
            for mask in _flip_masks(sub.length, flips)]


def popcount_rows(packed: np.ndarray) -> np.ndarray:
    """
    Per-row number of set bits of a 2D ``uint8`` array.
    """
    return POPCOUNT_TABLE[packed].sum(axis=-1, dtype=np.int64)


class CodeArray:
    """
    ``N`` codes of one width as a dense ``(N, ceil(B/8))`` ``uint8`` array in the same
    byte layout as :py:class:`HashCode` serialization.
    """

    def __init__(self, packed: np.ndarray, width: int):
        check_width(width)
        packed = np.ascontiguousarray(packed, dtype=np.uint8)
        if packed.ndim != 2 or packed.shape[1] != num_bytes(width):
            raise UsageError(f"Expected an (N, {num_bytes(width)}) byte array, "
                             f"got shape {packed.shape}")
        packed.setflags(write=False)
        self.packed = packed
        self.width = width

    @classmethod
    def empty(cls, width: int) -> 'CodeArray':
        return cls(np.zeros((0, num_bytes(check_width(width))), dtype=np.uint8), width)

    @classmethod
    def from_codes(cls, codes: Sequence[HashCode], width: Union[int, None] = None) -> 'CodeArray':
        if width is None:
            if not codes:
                raise UsageError("The width of an empty code list must be given explicitly")
            width = codes[0].width
        for code in codes:
            _check_same_width(width, code.width)
        nbytes = num_bytes(width)
        data = b''.join(bytes(code) for code in codes)
        packed = np.frombuffer(data, dtype=np.uint8).reshape(len(codes), nbytes)
        return cls(packed, width)

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> 'CodeArray':
        """
        Packs an ``(N, B)`` array of 0/1 values (or booleans).
        """
        bits = np.asarray(bits)
        if bits.ndim != 2:
            raise UsageError(f"Expected a 2D bit matrix, got shape {bits.shape}")
        if not np.isin(bits, (0, 1)).all():
            raise UsageError("Bit matrix must contain only 0 and 1")
        packed = np.packbits(bits.astype(np.uint8), axis=1, bitorder='little')
        return cls(packed, bits.shape[1])

    def to_bits(self) -> np.ndarray:
        return np.unpackbits(self.packed, axis=1, count=self.width, bitorder='little')

    def __len__(self):
        return self.packed.shape[0]

    @overload
    def __getitem__(self, key: int) -> HashCode: ...

    @overload
    def __getitem__(self, key: Union[slice, np.ndarray, Sequence[int]]) -> 'CodeArray': ...

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)):
            return HashCode.from_bytes(self.packed[key].tobytes(), self.width)
        return CodeArray(self.packed[key], self.width)

    def __iter__(self) -> Iterator[HashCode]:
        for i in range(len(self)):
            yield self[i]

    def __bytes__(self):
        return self.packed.tobytes()

    def __eq__(self, other):
        return (isinstance(other, CodeArray)
                and self.width == other.width
                and np.array_equal(self.packed, other.packed))

    def _query_bytes(self, query: HashCode) -> np.ndarray:
        _check_same_width(self.width, query.width)
        return np.frombuffer(bytes(query), dtype=np.uint8)

    def distances_to(self, query: HashCode, rows: Union[np.ndarray, None] = None) -> np.ndarray:
        """
        Hamming distances from ``query`` to every stored code (or to the given rows).
        """
        q = self._query_bytes(query)
        packed = self.packed if rows is None else self.packed[rows]
        return popcount_rows(np.bitwise_xor(packed, q))

    def projected_dissimilarities(self, user: HashCode) -> np.ndarray:
        """
        Projected Hamming dissimilarity from ``user`` (the query) to every stored code.
        """
        u = self._query_bytes(user)
        return popcount_rows(np.bitwise_and(u, np.invert(self.packed)))

    def substring_keys(self, m: int) -> np.ndarray:
        """
        ``(m, N)`` ``uint64`` array of substring values, slot ``j`` in row ``j``.
        """
        length = substring_length(self.width, m)
        if length > 64:
            raise UsageError(f"Substring keys are limited to 64 bits (given: {length})")
        bits = self.to_bits().astype(np.uint64)
        weights = np.left_shift(np.uint64(1), np.arange(length, dtype=np.uint64))
        keys = np.empty((m, len(self)), dtype=np.uint64)
        for j in range(m):
            keys[j] = (bits[:, j * length:(j + 1) * length] * weights).sum(axis=1, dtype=np.uint64)
        return keys
