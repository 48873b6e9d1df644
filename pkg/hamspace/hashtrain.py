"""
End-to-end training of document hash codes with a Bernoulli-latent autoencoder.

Objectives:

- ``vae``: reconstruction + beta * KL to the Bernoulli(0.5) prior;
- ``rbsh``: ``vae`` + a hinge ranking loss on mined (query, similar, dissimilar) triplets;
- ``pairrec``: both codes of a mined (query, similar) pair reconstruct the query, + beta * KL;
- ``mish``: ``vae`` + losses that make the codes cheap to search with multi-index hashing.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
import torch

from . import losses
from .bitcode import CodeArray, check_width, substring_length
from .codefile import PathLike, check_writable
from .errors import FormatError, NumericError, UsageError
from .hashing import derive_seed, fingerprint
from .mining import make_pairs, make_triplets, mine_neighbors
from .model import (
    Decoder, Encoder, FrozenSampler, Sampler, quantize_median, threshold_codes, to_tensor,
    )


logger = logging.getLogger(__name__)

OBJECTIVES = ('vae', 'rbsh', 'pairrec', 'mish')

CHECKPOINT_SCHEMA_VERSION = 1

_DTYPES = {'float32': torch.float32, 'float64': torch.float64}


@dataclass
class TrainConfig:
    objective: str = 'vae'
    bits: int = 32
    hidden: int = 1000
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    kl_weight: float = 0.01
    # Share of all steps over which the KL weight grows linearly from 0
    kl_anneal_fraction: float = 0.2
    ranking_weight: float = 1.0
    # Defaults to bits / 4
    ranking_margin: Optional[float] = None
    triplets_per_query: int = 1
    pairs_per_query: int = 1
    neighbors: int = 100
    mining: str = 'cosine'
    mish_fp_weight: float = 1.0
    mish_knn_weight: float = 1.0
    # Defaults to bits / 8
    mish_target_radius: Optional[float] = None
    mish_substrings: int = 4
    mish_substring_margin: float = 1.0
    # Defaults to bits / 4
    mish_gate_radius: Optional[float] = None
    mish_k: int = 10
    seed: int = 0
    dtype: str = 'float32'

    def validate(self) -> 'TrainConfig':
        if self.objective not in OBJECTIVES:
            raise UsageError(f"objective must be one of {OBJECTIVES} (given: {self.objective!r})")
        check_width(self.bits)
        if self.objective == 'mish':
            substring_length(self.bits, self.mish_substrings)
        if self.mining not in ('cosine', 'hamming'):
            raise UsageError(f"mining must be 'cosine' or 'hamming' (given: {self.mining!r})")
        if self.dtype not in _DTYPES:
            raise UsageError(f"dtype must be one of {tuple(_DTYPES)} (given: {self.dtype!r})")
        for name in ('hidden', 'batch_size', 'neighbors', 'triplets_per_query',
                     'pairs_per_query', 'mish_k'):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive (given: {getattr(self, name)})")
        for name in ('epochs', 'learning_rate', 'kl_weight', 'kl_anneal_fraction',
                     'ranking_weight', 'ranking_margin', 'mish_fp_weight', 'mish_knn_weight',
                     'mish_target_radius', 'mish_substring_margin', 'mish_gate_radius'):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise UsageError(f"{name} must be non-negative (given: {value})")
        if self.objective == 'mish' and self.batch_size <= self.mish_k:
            raise UsageError(f"batch_size must exceed mish_k so that every batch holds "
                             f"k neighbours (given: {self.batch_size} <= {self.mish_k})")
        return self

    def resolved(self) -> 'TrainConfig':
        """
        A copy with the width-dependent defaults filled in.
        """
        return replace(
            self.validate(),
            ranking_margin=self.bits / 4 if self.ranking_margin is None else self.ranking_margin,
            mish_target_radius=(self.bits / 8 if self.mish_target_radius is None
                                else self.mish_target_radius),
            mish_gate_radius=(self.bits / 4 if self.mish_gate_radius is None
                              else self.mish_gate_radius),
            )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'TrainConfig':
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise UsageError(f"Unknown training options: {sorted(unknown)}")
        return cls(**values)

    @property
    def torch_dtype(self) -> torch.dtype:
        return _DTYPES[self.dtype]


class TrainState:
    """
    Encoder, decoder and optimizer state, plus the training history.
    """

    def __init__(self,
                 encoder: Encoder,
                 decoder: Decoder,
                 config: TrainConfig,
                 epoch: int = 0,
                 step: int = 0,
                 ):
        self.encoder = encoder
        self.decoder = decoder
        self.config = config
        self.epoch = epoch
        self.step = step
        self.optimizer = torch.optim.Adam(self.parameters(), lr=config.learning_rate)
        self.history: List[Dict[str, float]] = []

    @classmethod
    def initialize(cls, vocab_size: int, config: TrainConfig) -> 'TrainState':
        config = config.resolved()
        generator = torch.Generator().manual_seed(derive_seed(config.seed, b"INIT"))
        encoder = Encoder(vocab_size, config.hidden, config.bits, generator, config.torch_dtype)
        decoder = Decoder(vocab_size, config.bits, generator, config.torch_dtype)
        return cls(encoder, decoder, config)

    @property
    def vocab_size(self) -> int:
        return self.encoder.vocab_size

    def named_parameters(self) -> List[Tuple[str, torch.nn.Parameter]]:
        """
        Parameters in checkpoint order: encoder, then decoder.
        """
        return ([('encoder.' + name, p) for name, p in self.encoder.named_parameters()] +
                [('decoder.' + name, p) for name, p in self.decoder.named_parameters()])

    def parameters(self) -> List[torch.nn.Parameter]:
        return [p for _, p in self.named_parameters()]


def kl_weight_at(config: TrainConfig, step: int, total_steps: int) -> float:
    warmup = config.kl_anneal_fraction * total_steps
    if warmup <= 0:
        return config.kl_weight
    return config.kl_weight * min(1.0, step / warmup)


def _rows(x: Union[sp.spmatrix, np.ndarray, torch.Tensor], ids: np.ndarray,
          dtype: torch.dtype) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x[torch.as_tensor(ids)].to(dtype)
    return to_tensor(x[ids], dtype)


def batch_loss(state: TrainState,
               x: Union[sp.spmatrix, np.ndarray, torch.Tensor],
               units: np.ndarray,
               sampler: Sampler,
               kl_weight: float,
               ) -> Dict[str, torch.Tensor]:
    """
    Mean loss components over one batch. ``units`` are document ids (``vae``, ``mish``),
    triplet rows (``rbsh``) or pair rows (``pairrec``). ``total`` is the weighted sum.
    """
    config = state.config
    dtype = config.torch_dtype
    encoder, decoder = state.encoder, state.decoder
    parts: Dict[str, torch.Tensor] = {}

    def code(ids: np.ndarray, key: str) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        x_rows = _rows(x, ids, dtype)
        sigma = encoder(x_rows)
        return x_rows, sigma, sampler(sigma, key)

    if config.objective in ('vae', 'mish'):
        x_q, sigma_q, z_q = code(units, 'query')
        parts['recon'] = losses.recon_loss(z_q, x_q, decoder).mean()
        parts['kl'] = losses.kl_loss(sigma_q).mean()
        total = parts['recon'] + kl_weight * parts['kl']

        if config.objective == 'mish':
            n = len(units)
            left, right = np.nonzero(~np.eye(n, dtype=bool))
            parts['false_positive'] = losses.mish_false_positive_loss(
                z_q[left], z_q[right], config.mish_substrings,
                config.mish_substring_margin, config.mish_gate_radius).mean()
            rank = losses.batch_neighbor_rank(config.mish_k, n, x.shape[0])
            kth = losses.batch_kth_neighbors(z_q, rank)
            parts['knn_distance'] = losses.mish_knn_distance_loss(
                z_q, z_q[kth], config.mish_target_radius).mean()
            total = (total + config.mish_fp_weight * parts['false_positive']
                     + config.mish_knn_weight * parts['knn_distance'])

    elif config.objective == 'rbsh':
        x_q, sigma_q, z_q = code(units[:, 0], 'query')
        _, _, z_p = code(units[:, 1], 'similar')
        _, _, z_n = code(units[:, 2], 'dissimilar')
        parts['recon'] = losses.recon_loss(z_q, x_q, decoder).mean()
        parts['kl'] = losses.kl_loss(sigma_q).mean()
        parts['ranking'] = losses.ranking_loss(z_q, z_p, z_n, config.ranking_margin).mean()
        total = parts['recon'] + kl_weight * parts['kl'] + config.ranking_weight * parts['ranking']

    else:
        x_q, sigma_q, z_q = code(units[:, 0], 'query')
        _, sigma_s, z_s = code(units[:, 1], 'similar')
        parts['recon'] = losses.pairwise_recon_loss(z_q, z_s, x_q, decoder).mean()
        parts['kl'] = (losses.kl_loss(sigma_q) + losses.kl_loss(sigma_s)).mean()
        total = parts['recon'] + kl_weight * parts['kl']

    parts['total'] = total
    return parts


def training_units(x: Union[sp.spmatrix, np.ndarray],
                   config: TrainConfig,
                   ) -> np.ndarray:
    """
    What one epoch iterates over: documents, or triplets/pairs mined from the corpus.
    """
    n = x.shape[0]
    if config.objective in ('vae', 'mish'):
        return np.arange(n)

    rng = np.random.default_rng(derive_seed(config.seed, b"MINING"))
    if config.mining == 'cosine':
        neighbors = mine_neighbors(x, config.neighbors)
    else:
        _, first_pass = train(x, replace(config, objective='vae'))
        neighbors = mine_neighbors(first_pass, config.neighbors)

    if config.objective == 'rbsh':
        return make_triplets(neighbors, config.triplets_per_query, rng).triplets
    return make_pairs(neighbors, config.pairs_per_query, rng).pairs


def _batches(units: np.ndarray, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(len(units))
    for start in range(0, len(units), batch_size):
        yield units[order[start:start + batch_size]]


def _check_finite(parts: Dict[str, torch.Tensor], epoch: int, step: int) -> None:
    values = {k: v.item() for k, v in parts.items()}
    if not all(math.isfinite(v) for v in values.values()):
        raise NumericError(f"Non-finite loss at epoch {epoch}, step {step}: {values}")


def _check_mish_units(config: TrainConfig, units: np.ndarray) -> None:
    if config.objective == 'mish' and len(units) <= config.mish_k:
        raise UsageError(f"mish needs more than mish_k={config.mish_k} documents "
                         f"(given: {len(units)})")


def evaluate_loss(state: TrainState,
                  x: Union[sp.spmatrix, np.ndarray],
                  units: np.ndarray,
                  kl_weight: Optional[float] = None,
                  ) -> Dict[str, float]:
    """
    Mean loss components over all units without updating anything.
    Uses its own noise stream so that it does not disturb training.
    """
    config = state.config
    kl_weight = config.kl_weight if kl_weight is None else kl_weight
    _check_mish_units(config, units)
    generator = torch.Generator().manual_seed(derive_seed(config.seed, b"EVAL"))
    sampler = Sampler(generator)
    totals: Dict[str, float] = {}
    count = 0
    with torch.no_grad():
        for start in range(0, len(units), config.batch_size):
            batch = units[start:start + config.batch_size]
            if config.objective == 'mish' and len(batch) <= config.mish_k:
                # Trailing batch
                continue
            parts = batch_loss(state, x, batch, sampler, kl_weight)
            for name, value in parts.items():
                totals[name] = totals.get(name, 0.0) + value.item()
            count += 1
    return {name: value / max(count, 1) for name, value in totals.items()}


def _log_record(record: Dict[str, float], log_path: Optional[PathLike]) -> None:
    logger.info("epoch %d: %s", record['epoch'],
                ", ".join(f"{k}={v:.4f}" for k, v in record.items() if k != 'epoch'))
    if log_path is not None:
        with open(log_path, 'a') as f:
            f.write(json.dumps(record, sort_keys=True) + '\n')


def fit(state: TrainState,
        x: Union[sp.spmatrix, np.ndarray],
        units: np.ndarray,
        log_path: Optional[PathLike] = None,
        ) -> TrainState:
    """
    Runs ``config.epochs`` epochs of mini-batch training on ``units``.
    """
    config = state.config
    rng = np.random.default_rng(derive_seed(config.seed, b"SHUFFLE"))
    _check_mish_units(config, units)
    sampler = Sampler(torch.Generator().manual_seed(derive_seed(config.seed, b"NOISE")))
    steps_per_epoch = math.ceil(len(units) / config.batch_size)
    total_steps = steps_per_epoch * config.epochs

    if not state.history:
        record: Dict[str, float] = {'epoch': 0}
        record.update(evaluate_loss(state, x, units, kl_weight=0.0))
        state.history.append(record)
        _log_record(record, log_path)

    for _ in range(config.epochs):
        state.epoch += 1
        sums: Dict[str, float] = {}
        seen = 0
        for batch in _batches(units, config.batch_size, rng):
            if config.objective == 'mish' and len(batch) <= config.mish_k:
                # Only the trailing batch can be this small
                continue
            beta = kl_weight_at(config, state.step, total_steps)
            parts = batch_loss(state, x, batch, sampler, beta)
            _check_finite(parts, state.epoch, state.step)

            state.optimizer.zero_grad()
            parts['total'].backward()
            state.optimizer.step()
            state.step += 1

            for name, value in parts.items():
                sums[name] = sums.get(name, 0.0) + value.item()
            sums['kl_weight'] = sums.get('kl_weight', 0.0) + beta
            seen += 1

        record = {'epoch': state.epoch}
        record.update({name: value / max(seen, 1) for name, value in sums.items()})
        state.history.append(record)
        _log_record(record, log_path)
    return state


def encode_corpus(state: TrainState,
                  x: Union[sp.spmatrix, np.ndarray],
                  median: bool = False,
                  batch_size: int = 1024,
                  ) -> CodeArray:
    """
    Inference codes: bit ``j`` is 1 iff ``sigma_j > 0.5``, or, with ``median``,
    iff ``sigma_j`` exceeds the median of bit ``j`` over the corpus.
    """
    dtype = state.config.torch_dtype
    chunks = []
    with torch.no_grad():
        for start in range(0, x.shape[0], batch_size):
            chunks.append(state.encoder(to_tensor(x[start:start + batch_size], dtype)).numpy())
    sigma = (np.concatenate(chunks) if chunks
             else np.zeros((0, state.config.bits), dtype=np.float64))
    if median:
        codes, _ = quantize_median(sigma)
        return codes
    return threshold_codes(sigma)


def train(x: Union[sp.spmatrix, np.ndarray],
          config: TrainConfig,
          log_path: Optional[PathLike] = None,
          ) -> Tuple[TrainState, CodeArray]:
    """
    Trains a model on the tf-idf rows ``x`` and returns it with the corpus codes.
    Identical seed, config and corpus give bitwise-identical codes.
    """
    config = config.resolved()
    logger.info("Training %s codes: B=%d, N=%d, V=%d", config.objective, config.bits,
                x.shape[0], x.shape[1])
    state = TrainState.initialize(x.shape[1], config)
    units = training_units(x, config)
    fit(state, x, units, log_path)
    return state, encode_corpus(state, x)


#
# Checkpoints
#

def _optimizer_tensors(state: TrainState) -> Tuple[List[Tuple[str, torch.Tensor]], List[int]]:
    tensors, steps = [], []
    opt_state = state.optimizer.state
    for name, param in state.named_parameters():
        slot = opt_state.get(param, {})
        zeros = torch.zeros_like(param)
        tensors.append(('adam.exp_avg.' + name, slot.get('exp_avg', zeros)))
        tensors.append(('adam.exp_avg_sq.' + name, slot.get('exp_avg_sq', zeros)))
        steps.append(int(slot['step']) if 'step' in slot else 0)
    return tensors, steps


def checkpoint_bytes(state: TrainState) -> bytes:
    """
    4-byte little-endian header length, the JSON header, then every tensor of the
    manifest as little-endian float32, in manifest order.
    """
    tensors = [(name, p.detach()) for name, p in state.named_parameters()]
    adam_tensors, adam_steps = _optimizer_tensors(state)
    tensors += adam_tensors

    blob = b''.join(t.detach().cpu().to(torch.float32).numpy().astype('<f4').tobytes()
                    for _, t in tensors)
    header = dict(schema_version=CHECKPOINT_SCHEMA_VERSION,
                  config=state.config.to_dict(),
                  seed=state.config.seed,
                  epoch=state.epoch,
                  step=state.step,
                  vocab_size=state.vocab_size,
                  adam_steps=adam_steps,
                  history=state.history,
                  manifest=[dict(name=name, shape=list(t.shape)) for name, t in tensors],
                  blob_fingerprint=fingerprint(b"CHECKPOINT_BLOB", blob))
    header_bytes = json.dumps(header, sort_keys=True).encode()
    return len(header_bytes).to_bytes(4, byteorder='little') + header_bytes + blob


def save_checkpoint(state: TrainState, path: PathLike, force: bool = False) -> None:
    check_writable(path, force)
    Path(path).write_bytes(checkpoint_bytes(state))


def load_checkpoint(path: PathLike) -> TrainState:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError as e:
        raise FormatError(f"Missing checkpoint: {path}") from e

    if len(data) < 4:
        raise FormatError(f"Checkpoint {path} is truncated")
    header_size = int.from_bytes(data[:4], byteorder='little')
    try:
        header = json.loads(data[4:4 + header_size])
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise FormatError(f"Checkpoint {path} has a malformed header") from e
    if not isinstance(header, dict):
        raise FormatError(f"Checkpoint {path} header is not a JSON object")
    blob = data[4 + header_size:]
    if fingerprint(b"CHECKPOINT_BLOB", blob) != header.get('blob_fingerprint'):
        raise FormatError(f"Checkpoint {path} parameter blob is damaged")

    try:
        config = TrainConfig.from_dict(header['config'])
        vocab_size = int(header['vocab_size'])
        epoch, step = int(header['epoch']), int(header['step'])
        history = list(header['history'])
        manifest = [(entry['name'], [int(d) for d in entry['shape']])
                    for entry in header['manifest']]
        adam_steps = [int(s) for s in header['adam_steps']]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"Checkpoint {path} header is incomplete: {e!r}") from e

    state = TrainState.initialize(vocab_size, config)
    state.epoch, state.step, state.history = epoch, step, history

    values = np.frombuffer(blob, dtype='<f4')
    loaded: Dict[str, torch.Tensor] = {}
    offset = 0
    for name, shape in manifest:
        size = int(np.prod(shape))
        if offset + size > len(values):
            raise FormatError(f"Checkpoint {path} parameter blob is too short")
        chunk = values[offset:offset + size].reshape(shape)
        loaded[name] = torch.as_tensor(chunk.copy()).to(config.torch_dtype)
        offset += size
    if offset != len(values):
        raise FormatError(f"Checkpoint {path} has {len(values) - offset} trailing values")

    with torch.no_grad():
        for name, param in state.named_parameters():
            if name not in loaded or loaded[name].shape != param.shape:
                raise FormatError(f"Checkpoint {path} has no matching tensor {name!r}")
            param.copy_(loaded[name])

    if any(adam_steps):
        for (name, param), param_step in zip(state.named_parameters(), adam_steps):
            moments = ('adam.exp_avg.' + name, 'adam.exp_avg_sq.' + name)
            if not all(key in loaded for key in moments):
                raise FormatError(f"Checkpoint {path} has no optimizer state for {name!r}")
            state.optimizer.state[param] = {
                'step': torch.tensor(float(param_step)),
                'exp_avg': loaded[moments[0]].clone(),
                'exp_avg_sq': loaded[moments[1]].clone(),
                }
    return state
