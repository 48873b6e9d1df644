"""
Collaborative filtering with hash codes.

Users are coded from their ID alone (one table of bit probabilities per user); items are
coded from their content by the same encoder for every item, seen or unseen in training.
Both are trained to reconstruct the observed ratings from the dissimilarity between the
user and item codes: the Hamming distance, or the projected Hamming dissimilarity,
which only counts the dimensions where the user code is +1.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
import torch
from torch import nn

from . import losses
from .bitcode import CodeArray, HashCode, check_width
from .corpus import TfIdfVector
from .errors import NumericError, UsageError
from .hashing import derive_seed
from .mih import MihIndex, rank_by_distance
from .model import EPS, Encoder, Sampler, sample_bits, threshold_codes, to_tensor


logger = logging.getLogger(__name__)

MEASURES = ('hamming', 'phd')

_DTYPES = {'float32': torch.float32, 'float64': torch.float64}

# An item content encoder is the document encoder applied to item descriptions
ItemContentEncoder = Encoder


@dataclass(frozen=True)
class RatingTriple:
    user: int
    item: int
    # Normalized to [0, 1]
    rating: float


@dataclass
class CFConfig:
    bits: int = 32
    hidden: int = 500
    epochs: int = 20
    batch_size: int = 256
    learning_rate: float = 1e-3
    # Sampled unobserved pairs per observed rating, with target 0 (0 disables)
    negatives_per_positive: int = 0
    seed: int = 0
    dtype: str = 'float32'

    def validate(self) -> 'CFConfig':
        check_width(self.bits)
        if self.dtype not in _DTYPES:
            raise UsageError(f"dtype must be one of {tuple(_DTYPES)} (given: {self.dtype!r})")
        for name in ('hidden', 'batch_size'):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive (given: {getattr(self, name)})")
        for name in ('epochs', 'learning_rate', 'negatives_per_positive'):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be non-negative (given: {getattr(self, name)})")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'CFConfig':
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise UsageError(f"Unknown collaborative filtering options: {sorted(unknown)}")
        return cls(**values)

    @property
    def torch_dtype(self) -> torch.dtype:
        return _DTYPES[self.dtype]


def _check_measure(measure: str) -> None:
    if measure not in MEASURES:
        raise UsageError(f"measure must be one of {MEASURES} (given: {measure!r})")


class UserTable(nn.Module):
    """
    Per-user bit probabilities, parameterized by their logits.
    """

    def __init__(self, n_users: int, bits: int, generator: torch.Generator,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        logits = (torch.rand((n_users, bits), generator=generator, dtype=torch.float64) - 0.5)
        self.logits = nn.Parameter(logits.to(dtype))

    def __len__(self):
        return self.logits.shape[0]

    def forward(self, users: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits[users]).clamp(EPS, 1 - EPS)


class ScaleParams(nn.Module):
    """
    Affine link from dissimilarity to rating: ``r = c + a * (1 - 2 * delta / B)``, ``a > 0``.
    The slope is kept positive through a softplus.
    """

    def __init__(self, slope: float = 0.5, offset: float = 0.5,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        if slope <= 0:
            raise UsageError(f"Slope must be positive (given: {slope})")
        raw = slope + math.log(-math.expm1(-slope))  # inverse softplus
        self.raw_slope = nn.Parameter(torch.tensor(raw, dtype=dtype))
        self.offset = nn.Parameter(torch.tensor(offset, dtype=dtype))

    @classmethod
    def for_measure(cls, measure: str, dtype: torch.dtype = torch.float32) -> 'ScaleParams':
        """
        A link that starts at 1 for identical codes and at 0.5 for the dissimilarity of
        unrelated codes: ``B / 2`` differing bits under the Hamming distance, but only
        ``B / 4`` under the projected dissimilarity, which counts half of the user's bits.
        """
        _check_measure(measure)
        if measure == 'phd':
            return cls(slope=1.0, offset=0.0, dtype=dtype)
        return cls(slope=0.5, offset=0.5, dtype=dtype)

    @property
    def slope(self) -> torch.Tensor:
        return nn.functional.softplus(self.raw_slope)

    def to_dict(self) -> Dict[str, float]:
        return dict(slope=self.slope.item(), offset=self.offset.item())


def as_code_tensor(code: Union[HashCode, torch.Tensor], dtype: torch.dtype = torch.float32,
                   ) -> torch.Tensor:
    if isinstance(code, HashCode):
        return torch.tensor(code.to_bits(), dtype=dtype)
    return code


def dissimilarity(u: torch.Tensor, i: torch.Tensor, measure: str) -> torch.Tensor:
    """
    Relaxed Hamming distance or relaxed projected Hamming dissimilarity (user as query).
    """
    _check_measure(measure)
    if u.shape[-1] != i.shape[-1]:
        raise UsageError(f"Code widths differ: {u.shape[-1]} != {i.shape[-1]}")
    if measure == 'hamming':
        return losses.relaxed_hamming(u, i)
    return losses.relaxed_projected_dissimilarity(u, i)


def predict_rating(u: Union[HashCode, torch.Tensor],
                   i: Union[HashCode, torch.Tensor],
                   measure: str,
                   scale: ScaleParams,
                   ) -> torch.Tensor:
    """
    ``clamp(c + a * (1 - 2 * delta / B), 0, 1)`` for codes or bit probabilities.
    """
    dtype = scale.offset.dtype
    u_t, i_t = as_code_tensor(u, dtype), as_code_tensor(i, dtype)
    delta = dissimilarity(u_t, i_t, measure)
    bits = u_t.shape[-1]
    return torch.clamp(scale.offset + scale.slope * (1 - 2 * delta / bits), 0.0, 1.0)


def encode_item(encoder: ItemContentEncoder,
                content: Union[TfIdfVector, sp.spmatrix, np.ndarray, torch.Tensor],
                mode: str = 'deterministic',
                generator: Optional[torch.Generator] = None,
                ) -> torch.Tensor:
    """
    Item codes from content alone. The same path serves training items and
    cold-start items that never appeared in a rating.
    """
    x = to_tensor(content, encoder.output.weight.dtype)
    if x.shape[-1] != encoder.vocab_size:
        raise UsageError(f"Item content has {x.shape[-1]} terms, "
                         f"encoder expects {encoder.vocab_size}")
    return sample_bits(encoder(x), mode, generator=generator)


class CFModel:
    """
    User table, item content encoder and rating link, trained jointly.
    """

    def __init__(self, n_users: int, vocab_size: int, config: CFConfig, measure: str):
        _check_measure(measure)
        self.config = config.validate()
        self.measure = measure
        dtype = config.torch_dtype
        generator = torch.Generator().manual_seed(derive_seed(config.seed, b"CF_INIT"))
        self.users = UserTable(n_users, config.bits, generator, dtype)
        self.items = ItemContentEncoder(vocab_size, config.hidden, config.bits, generator, dtype)
        self.scale = ScaleParams.for_measure(measure, dtype)
        self.epoch = 0
        self.history: List[Dict[str, float]] = []

    @property
    def n_users(self) -> int:
        return len(self.users)

    def parameters(self) -> List[nn.Parameter]:
        return (list(self.users.parameters()) + list(self.items.parameters())
                + list(self.scale.parameters()))

    def user_codes(self) -> CodeArray:
        with torch.no_grad():
            return threshold_codes(self.users(torch.arange(self.n_users)))

    def item_codes(self, content: Union[sp.spmatrix, np.ndarray]) -> CodeArray:
        with torch.no_grad():
            return CodeArray.from_bits(
                encode_item(self.items, content).numpy().astype(np.uint8))


def cf_batch_loss(model: CFModel,
                  content: Union[sp.spmatrix, np.ndarray, torch.Tensor],
                  batch: np.ndarray,
                  sampler: Sampler,
                  ) -> Dict[str, torch.Tensor]:
    """
    Mean squared rating error over ``batch`` rows of ``(user, item, rating)``.
    """
    dtype = model.config.torch_dtype
    users = torch.as_tensor(batch[:, 0].astype(np.int64))
    items = batch[:, 1].astype(np.int64)
    targets = torch.as_tensor(batch[:, 2], dtype=dtype)

    if isinstance(content, torch.Tensor):
        x = content[torch.as_tensor(items)].to(dtype)
    else:
        x = to_tensor(content[items], dtype)

    z_u = sampler(model.users(users), 'user')
    z_i = sampler(model.items(x), 'item')
    predicted = predict_rating(z_u, z_i, model.measure, model.scale)
    mse = ((predicted - targets) ** 2).mean()
    return {'mse': mse, 'total': mse}


def _as_rows(ratings: Sequence[RatingTriple], n_users: int, n_items: int) -> np.ndarray:
    rows = np.array([(r.user, r.item, r.rating) for r in ratings],
                    dtype=np.float64).reshape(-1, 3)
    if len(rows):
        if rows[:, 0].min() < 0 or rows[:, 0].max() >= n_users:
            raise UsageError(f"User ids must be within [0, {n_users})")
        if rows[:, 1].min() < 0 or rows[:, 1].max() >= n_items:
            raise UsageError(f"Item ids must be within [0, {n_items})")
        if not np.isfinite(rows[:, 2]).all():
            raise UsageError("Ratings must be finite")
    return rows


def _with_negatives(rows: np.ndarray, n_items: int, per_positive: int,
                    rng: np.random.Generator) -> np.ndarray:
    if per_positive == 0 or len(rows) == 0:
        return rows
    users = np.repeat(rows[:, 0], per_positive)
    items = rng.integers(n_items, size=len(users)).astype(np.float64)
    negatives = np.stack([users, items, np.zeros(len(users))], axis=1)
    return np.concatenate([rows, negatives])


def train_cf(ratings: Sequence[RatingTriple],
             content: Union[sp.spmatrix, np.ndarray],
             n_users: int,
             config: CFConfig,
             measure: str,
             log_path: Optional[str] = None,
             ) -> CFModel:
    """
    Minimizes the squared rating error over the observed triples with straight-through
    bits on both the user and the item side.
    """
    config = config.validate()
    n_items = content.shape[0]
    rows = _as_rows(ratings, n_users, n_items)
    model = CFModel(n_users, content.shape[1], config, measure)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng(derive_seed(config.seed, b"CF_SHUFFLE"))
    sampler = Sampler(torch.Generator().manual_seed(derive_seed(config.seed, b"CF_NOISE")))
    logger.info("Training %s CF codes: B=%d, users=%d, items=%d, ratings=%d",
                measure, config.bits, n_users, n_items, len(rows))

    for _ in range(config.epochs):
        model.epoch += 1
        epoch_rows = _with_negatives(rows, n_items, config.negatives_per_positive, rng)
        order = rng.permutation(len(epoch_rows))
        total, batches = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = epoch_rows[order[start:start + config.batch_size]]
            parts = cf_batch_loss(model, content, batch, sampler)
            value = parts['total'].item()
            if not math.isfinite(value):
                raise NumericError(f"Non-finite rating loss at epoch {model.epoch}: {value}")
            optimizer.zero_grad()
            parts['total'].backward()
            optimizer.step()
            total += value
            batches += 1

        record = {'epoch': model.epoch, 'mse': total / max(batches, 1)}
        record.update(model.scale.to_dict())
        model.history.append(record)
        logger.info("epoch %d: mse=%.5f", model.epoch, record['mse'])
        if log_path is not None:
            with open(log_path, 'a') as f:
                f.write(json.dumps(record, sort_keys=True) + '\n')
    return model


def observed_mse(model: CFModel,
                 ratings: Sequence[RatingTriple],
                 content: Union[sp.spmatrix, np.ndarray],
                 ) -> float:
    """
    Squared rating error of the binary (inference) codes.
    """
    rows = _as_rows(ratings, model.n_users, content.shape[0])
    if len(rows) == 0:
        return 0.0
    dtype = model.config.torch_dtype
    with torch.no_grad():
        u = model.users(torch.as_tensor(rows[:, 0].astype(np.int64)))
        i = model.items(to_tensor(content[rows[:, 1].astype(np.int64)], dtype))
        predicted = predict_rating(sample_bits(u, 'deterministic'), sample_bits(i, 'deterministic'),
                                   model.measure, model.scale)
        return ((predicted - torch.as_tensor(rows[:, 2], dtype=dtype)) ** 2).mean().item()


def normalize_ratings(raw: Sequence[Tuple[str, str, float]],
                      item_ids: Sequence[str],
                      ) -> Tuple[List[RatingTriple], List[str], Dict[str, float]]:
    """
    Maps user and item names to dense ids (items in the order of ``item_ids``, users by
    first appearance) and rescales ratings linearly to ``[0, 1]``.
    """
    item_index = {item: i for i, item in enumerate(item_ids)}
    user_index: Dict[str, int] = {}
    values = [rating for _, _, rating in raw]
    low, high = (min(values), max(values)) if values else (0.0, 1.0)
    span = high - low

    triples = []
    for user, item, rating in raw:
        if item not in item_index:
            raise UsageError(f"Rated item {item!r} has no content")
        uid = user_index.setdefault(user, len(user_index))
        normalized = (rating - low) / span if span > 0 else 1.0
        triples.append(RatingTriple(uid, item_index[item], normalized))
    return triples, list(user_index), dict(low=low, high=high)


def coldstart_split(ratings: Sequence[RatingTriple],
                    fraction: float,
                    seed: int,
                    ) -> Tuple[List[RatingTriple], List[int], List[RatingTriple]]:
    """
    Holds out ``floor(fraction * n_items)`` rated items with all their ratings.
    Returns the training triples, the held-out item ids and their test triples.
    """
    if not 0 < fraction < 1:
        raise UsageError(f"Cold-start fraction must be within (0, 1) (given: {fraction})")
    items = sorted({r.item for r in ratings})
    n_held = math.floor(fraction * len(items))
    if n_held == 0 or n_held == len(items):
        raise UsageError(f"Fraction {fraction} of {len(items)} items leaves an empty split")

    rng = np.random.default_rng(derive_seed(seed, b"COLDSTART"))
    held = sorted(np.asarray(items)[rng.permutation(len(items))[:n_held]].tolist())
    held_set = set(held)
    train = [r for r in ratings if r.item not in held_set]
    test = [r for r in ratings if r.item in held_set]
    return train, held, test


def rating_split(ratings: Sequence[RatingTriple],
                 fraction: float,
                 seed: int,
                 ) -> Tuple[List[RatingTriple], List[RatingTriple]]:
    """
    Holds out ``floor(fraction * n_ratings)`` ratings; every item keeps its content codes.
    """
    if not 0 < fraction < 1:
        raise UsageError(f"Held-out fraction must be within (0, 1) (given: {fraction})")
    n_held = math.floor(fraction * len(ratings))
    rng = np.random.default_rng(derive_seed(seed, b"RATING_SPLIT"))
    held = set(rng.permutation(len(ratings))[:n_held].tolist())
    train = [r for pos, r in enumerate(ratings) if pos not in held]
    test = [r for pos, r in enumerate(ratings) if pos in held]
    return train, test


def recommend(user: HashCode,
              item_codes: CodeArray,
              k: int,
              measure: str,
              index: Optional[MihIndex] = None,
              candidates: Optional[Sequence[int]] = None,
              ) -> List[int]:
    """
    Top-``k`` items by ascending dissimilarity, ties by id. Under the Hamming distance an
    index over ``item_codes`` may be given for sub-linear search; the projected Hamming
    dissimilarity is always a linear scan. ``candidates`` restricts the ranking to a subset.
    """
    _check_measure(measure)
    if k < 1:
        raise UsageError(f"k must be positive (given: {k})")
    if candidates is None and index is not None and measure == 'hamming':
        result, _ = index.knn_search(user, k)
        return result.ids

    if measure == 'hamming':
        scores = item_codes.distances_to(user)
    else:
        scores = item_codes.projected_dissimilarities(user)
    ids = np.arange(len(item_codes)) if candidates is None else np.asarray(candidates, np.int64)
    return [id_ for id_, _ in rank_by_distance(ids, scores[ids], limit=min(k, len(ids)))]
