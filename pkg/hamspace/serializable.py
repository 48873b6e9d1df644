from abc import abstractmethod, ABC
from typing import Type, List, Any, TypeVar

from .errors import FormatError


class HasSerializedSize(ABC):
    """
    A base serialization mixin, denoting a type whose serialized size is fully determined
    by its class and (optionally) a code width.
    """

    @classmethod
    @abstractmethod
    def serialized_size(cls, *args: Any) -> int:
        """
        Returns the size in bytes of the serialized representation of this object
        (obtained with ``bytes()``).
        """
        raise NotImplementedError


class Deserializable(HasSerializedSize):
    """
    A mixin for composable deserialization.
    """

    Self = TypeVar('Self', bound='Deserializable')

    @classmethod
    def from_bytes(cls: Type[Self], data: bytes, *args: Any) -> Self:
        """
        Restores the object from serialized bytes.
        Width-dependent types take the width as an extra positional argument.
        """
        expected_size = cls.serialized_size(*args)
        if len(data) != expected_size:
            raise FormatError(f"Expected {expected_size} bytes, got {len(data)}")
        return cls._from_exact_bytes(data, *args)

    @staticmethod
    def _split(data: bytes, *sizes: int) -> List[bytes]:
        """
        Splits the bytestring into consecutive chunks of the given sizes.
        """
        chunks = []
        pos = 0
        for size in sizes:
            chunk = data[pos:pos+size]
            if len(chunk) != size:
                raise FormatError(f"Expected {size} bytes at offset {pos}, got {len(chunk)}")
            chunks.append(chunk)
            pos += size
        return chunks

    @classmethod
    @abstractmethod
    def _from_exact_bytes(cls: Type[Self], data: bytes, *args: Any) -> Self:
        """
        Deserializes the object from a bytestring of exactly the expected length
        (defined by ``serialized_size()``).
        """
        raise NotImplementedError


class Serializable(HasSerializedSize):
    """
    A mixin for composable serialization.
    """

    @abstractmethod
    def __bytes__(self):
        """
        Serializes the object into bytes.
        """
        raise NotImplementedError


def uint_bytes(value: int, size: int) -> bytes:
    return value.to_bytes(size, byteorder='little')


def uint_from_exact_bytes(data: bytes) -> int:
    return int.from_bytes(data, byteorder='little')
