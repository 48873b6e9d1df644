from typing import Optional, Union

from cryptography.hazmat.primitives import hashes

from .serializable import Serializable


class Hash:

    OUTPUT_SIZE = 32

    def __init__(self, dst: Optional[bytes] = None):
        self._backend_hash_algorithm = hashes.SHA256()
        self._hash = hashes.Hash(self._backend_hash_algorithm)

        if dst is not None:
            len_dst = len(dst).to_bytes(4, byteorder='big')
            self.update(len_dst + dst)

    def update(self, data: Union[bytes, Serializable]) -> None:
        self._hash.update(bytes(data))

    def finalize(self) -> bytes:
        return self._hash.finalize()


def fingerprint(dst: bytes, *chunks: Union[bytes, Serializable]) -> str:
    """
    Hex SHA-256 of the length-prefixed chunks under the given domain tag.
    Used to tie sidecars, checkpoints and reports to the exact bytes they describe.
    """
    digest = Hash(dst)
    for chunk in chunks:
        data = bytes(chunk)
        digest.update(len(data).to_bytes(8, byteorder='big') + data)
    return digest.finalize().hex()


def derive_seed(seed: int, label: bytes) -> int:
    """
    Derives an independent 64-bit seed for one purpose (initialization, sampling noise,
    shuffling, ...) from the master seed, so that adding a random draw in one place
    does not shift the streams used elsewhere.
    """
    digest = Hash(b"SEED_DERIVATION")
    digest.update(seed.to_bytes(8, byteorder='big', signed=True))
    digest.update(label)
    return int.from_bytes(digest.finalize()[:8], byteorder='big') >> 1
