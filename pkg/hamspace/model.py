"""
Encoder and decoder networks, Bernoulli bit sampling and post-hoc quantization.
"""

import math
from typing import Dict, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
import torch
from torch import nn

from .bitcode import CodeArray
from .corpus import TfIdfVector
from .errors import UsageError


# Bit probabilities are kept inside [EPS, 1 - EPS]
EPS = 1e-7

SAMPLING_MODES = ('stochastic', 'deterministic')


def _init_uniform(tensor: torch.Tensor, bound: float, generator: torch.Generator) -> None:
    with torch.no_grad():
        noise = torch.rand(tensor.shape, generator=generator, dtype=torch.float64)
        tensor.copy_((noise * 2 - 1) * bound)


def _glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


class Encoder(nn.Module):
    """
    Feed-forward map from a tf-idf vector to per-bit activation probabilities:
    ``V -> H`` (tanh) ``-> B`` (logistic).
    """

    def __init__(self,
                 vocab_size: int,
                 hidden: int,
                 bits: int,
                 generator: torch.Generator,
                 dtype: torch.dtype = torch.float32,
                 ):
        super().__init__()
        self.vocab_size = vocab_size
        self.bits = bits
        self.hidden = nn.Linear(vocab_size, hidden, dtype=dtype)
        self.output = nn.Linear(hidden, bits, dtype=dtype)

        _init_uniform(self.hidden.weight, _glorot_bound(vocab_size, hidden), generator)
        _init_uniform(self.output.weight, _glorot_bound(hidden, bits), generator)
        nn.init.zeros_(self.hidden.bias)
        nn.init.zeros_(self.output.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.vocab_size:
            raise UsageError(f"Input has {x.shape[-1]} terms, encoder expects {self.vocab_size}")
        hidden = torch.tanh(self.hidden(x))
        return torch.sigmoid(self.output(hidden)).clamp(EPS, 1 - EPS)


class Decoder(nn.Module):
    """
    Scores every vocabulary term from a code: ``score_t = z . W_t + b_t``.
    """

    def __init__(self,
                 vocab_size: int,
                 bits: int,
                 generator: torch.Generator,
                 dtype: torch.dtype = torch.float32,
                 ):
        super().__init__()
        self.scores = nn.Linear(bits, vocab_size, dtype=dtype)
        _init_uniform(self.scores.weight, _glorot_bound(bits, vocab_size), generator)
        nn.init.zeros_(self.scores.bias)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        """
        Log-probabilities over the vocabulary.
        """
        return torch.log_softmax(self.scores(z), dim=-1)


def to_tensor(x: Union[TfIdfVector, sp.spmatrix, np.ndarray, torch.Tensor],
              dtype: torch.dtype = torch.float32,
              ) -> torch.Tensor:
    """
    Dense 2D tensor from a single vector, a sparse matrix or an array.
    """
    if isinstance(x, torch.Tensor):
        return x.to(dtype)
    if isinstance(x, TfIdfVector):
        return torch.as_tensor(x.to_dense()[None, :], dtype=dtype)
    if sp.issparse(x):
        x = x.toarray()
    array = np.asarray(x)
    if array.ndim == 1:
        array = array[None, :]
    return torch.as_tensor(array, dtype=dtype)


def encode(encoder: Encoder,
           x: Union[TfIdfVector, sp.spmatrix, np.ndarray, torch.Tensor],
           ) -> torch.Tensor:
    """
    Bit probabilities for one vector or a batch of row vectors.
    """
    dtype = encoder.output.weight.dtype
    return encoder(to_tensor(x, dtype))


def straight_through(sigma: torch.Tensor, bits: torch.Tensor) -> torch.Tensor:
    """
    Equals ``bits`` in the forward pass; the backward pass treats it as ``sigma``.
    """
    return sigma + (bits - sigma).detach()


def sample_bits(sigma: torch.Tensor,
                mode: str = 'stochastic',
                generator: Optional[torch.Generator] = None,
                noise: Optional[torch.Tensor] = None,
                ) -> torch.Tensor:
    """
    Stochastic mode: bit ``j`` is 1 when ``u_j < sigma_j`` with ``u_j ~ Uniform(0, 1)``,
    returned through the straight-through estimator.
    Deterministic mode (inference): bit ``j`` is 1 iff ``sigma_j > 0.5``.
    """
    if mode == 'deterministic':
        return (sigma > 0.5).to(sigma.dtype)
    if mode != 'stochastic':
        raise UsageError(f"Sampling mode must be one of {SAMPLING_MODES} (given: {mode!r})")
    if noise is None:
        noise = torch.rand(sigma.shape, generator=generator, dtype=sigma.dtype)
    bits = (noise < sigma).to(sigma.dtype)
    return straight_through(sigma, bits)


class Sampler:
    """
    Draws straight-through Bernoulli codes from a seeded generator.
    ``key`` names the role of a code within one loss evaluation.
    """

    def __init__(self, generator: torch.Generator):
        self.generator = generator

    def __call__(self, sigma: torch.Tensor, key: str) -> torch.Tensor:
        return sample_bits(sigma, 'stochastic', generator=self.generator)


class FrozenSampler(Sampler):
    """
    Samples once per key and then replays the same straight-through offset
    ``bits - sigma``, so the loss becomes a smooth function of the parameters
    whose gradient is the straight-through gradient.
    """

    def __init__(self, generator: torch.Generator):
        super().__init__(generator)
        self.offsets: Dict[str, torch.Tensor] = {}

    def __call__(self, sigma: torch.Tensor, key: str) -> torch.Tensor:
        if key not in self.offsets:
            bits = sample_bits(sigma, 'stochastic', generator=self.generator).detach()
            self.offsets[key] = bits - sigma.detach()
        return sigma + self.offsets[key]


def threshold_codes(sigma: Union[torch.Tensor, np.ndarray]) -> CodeArray:
    """
    Inference codes: bit ``j`` is 1 iff ``sigma_j > 0.5``.
    """
    if isinstance(sigma, torch.Tensor):
        sigma = sigma.detach().cpu().numpy()
    return CodeArray.from_bits(np.asarray(sigma) > 0.5)


def median_thresholds(values: np.ndarray) -> np.ndarray:
    """
    Per-column median; for an even number of rows, the lower of the two middle values.
    """
    values = np.asarray(values)
    if values.ndim != 2 or values.shape[0] < 1:
        raise UsageError(f"Expected a non-empty 2D matrix, got shape {values.shape}")
    return np.sort(values, axis=0)[(values.shape[0] - 1) // 2]


def quantize_median(values: np.ndarray,
                    thresholds: Optional[np.ndarray] = None,
                    ) -> Tuple[CodeArray, np.ndarray]:
    """
    Post-hoc binarization: bit ``j`` of a row is 1 iff its value exceeds the column median.
    Returns the codes and the thresholds so that new rows can be quantized consistently.
    """
    values = np.asarray(values)
    if thresholds is None:
        thresholds = median_thresholds(values)
    return CodeArray.from_bits(values > thresholds), thresholds
