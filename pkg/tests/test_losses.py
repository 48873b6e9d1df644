import math

import numpy as np
import pytest
import torch

from hamspace import losses
from hamspace.bitcode import POPCOUNT_TABLE
from hamspace.errors import UsageError
from hamspace.model import Decoder


ALL_BYTES = np.arange(256, dtype=np.uint8)
ALL_BITS = torch.tensor(np.unpackbits(ALL_BYTES[:, None], axis=1, bitorder='little'),
                        dtype=torch.float64)


def _bits(s):
    return torch.tensor([[float(c) for c in s]], dtype=torch.float64)


def test_relaxed_hamming_on_binary_exhaustive():
    relaxed = losses.pairwise_relaxed_hamming(ALL_BITS, ALL_BITS).numpy()
    expected = POPCOUNT_TABLE[ALL_BYTES[:, None] ^ ALL_BYTES[None, :]]
    assert np.array_equal(relaxed, expected)

    rowwise = losses.relaxed_hamming(ALL_BITS[:, None, :], ALL_BITS[None, :, :]).numpy()
    assert np.array_equal(rowwise, expected)


def test_relaxed_projected_on_binary_exhaustive():
    relaxed = losses.relaxed_projected_dissimilarity(ALL_BITS[:, None, :], ALL_BITS[None, :, :])
    expected = POPCOUNT_TABLE[ALL_BYTES[:, None] & ~ALL_BYTES[None, :]]
    assert np.array_equal(relaxed.numpy(), expected)


def test_substring_distances():
    a, b = _bits('11110000'), _bits('00110011')
    assert losses.substring_distances(a, b, 2).tolist() == [[2.0, 2.0]]
    assert losses.substring_distances(a, b, 4).tolist() == [[2.0, 0.0, 0.0, 2.0]]
    with pytest.raises(UsageError):
        losses.substring_distances(a, b, 3)


def _uniform_decoder(vocab_size, bits):
    decoder = Decoder(vocab_size, bits, torch.Generator().manual_seed(0), torch.float64)
    with torch.no_grad():
        decoder.scores.weight.zero_()
        decoder.scores.bias.zero_()
    return decoder


def test_recon_loss_uniform_decoder():
    decoder = _uniform_decoder(5, 8)
    x = torch.tensor([[0.0, 1.0, 0.0, 0.0, 0.0]], dtype=torch.float64)
    loss = losses.recon_loss(_bits('10101010'), x, decoder)
    assert loss.item() == pytest.approx(math.log(5))
    assert losses.recon_loss(_bits('10101010'), torch.zeros(1, 5, dtype=torch.float64),
                             decoder).item() == 0


def test_recon_loss_tiny_case():
    decoder = Decoder(3, 2, torch.Generator().manual_seed(0), torch.float64)
    with torch.no_grad():
        decoder.scores.weight.copy_(torch.tensor([[1.0, 0.0], [0.0, 2.0], [-1.0, 1.0]]))
        decoder.scores.bias.copy_(torch.tensor([0.5, 0.0, 0.0]))
    z = torch.tensor([[1.0, 1.0]], dtype=torch.float64)
    x = torch.tensor([[0.6, 0.0, 0.8]], dtype=torch.float64)
    scores = np.array([1.5, 2.0, 0.0])
    log_softmax = scores - np.log(np.exp(scores).sum())
    expected = -(0.6 * log_softmax[0] + 0.8 * log_softmax[2])
    assert losses.recon_loss(z, x, decoder).item() == pytest.approx(expected, rel=1e-12)

    assert losses.pairwise_recon_loss(z, z, x, decoder).item() == pytest.approx(2 * expected)


def test_kl_loss():
    assert losses.kl_loss(torch.full((1, 8), 0.5, dtype=torch.float64)).item() == pytest.approx(0)
    near_one = losses.kl_loss(torch.tensor([[1 - 1e-12]], dtype=torch.float64)).item()
    assert near_one == pytest.approx(math.log(2), abs=1e-9)

    sigma = torch.tensor([[0.9, 0.1]], dtype=torch.float64)
    single = 0.9 * math.log(1.8) + 0.1 * math.log(0.2)
    assert losses.kl_loss(sigma).item() == pytest.approx(2 * single)


def test_kl_loss_non_negative(rng):
    sigma = torch.tensor(rng.uniform(1e-6, 1 - 1e-6, size=(200, 16)))
    assert (losses.kl_loss(sigma) >= 0).all()


def test_ranking_loss():
    q, p, n = _bits('0000'), _bits('0001'), _bits('1110')
    assert losses.ranking_loss(q, p, n, margin=1.0).item() == 0
    assert losses.ranking_loss(q, p, p, margin=3.0).item() == 3.0
    assert losses.ranking_loss(q, n, p, margin=1.0).item() == 3.0


def test_ranking_loss_bound(rng):
    z = [torch.tensor(rng.uniform(size=(50, 8))) for _ in range(3)]
    loss = losses.ranking_loss(*z, margin=2.0)
    assert (loss >= 0).all()
    assert (loss <= 2.0 + losses.relaxed_hamming(z[0], z[1]) + 1e-12).all()


def test_false_positive_loss():
    zeros = _bits('00000000')
    # Gate closed: the pair is close overall
    assert losses.mish_false_positive_loss(zeros, _bits('00000011'), 2, 1.0, 2.0).item() == 0
    # Complement: every substring is already far apart
    assert losses.mish_false_positive_loss(zeros, _bits('11111111'), 2, 1.0, 2.0).item() == 0
    # Far overall, but the first substring matches exactly
    assert losses.mish_false_positive_loss(zeros, _bits('00001111'), 2, 1.0, 2.0).item() == 1.0
    with pytest.raises(UsageError):
        losses.mish_false_positive_loss(zeros, zeros, 3, 1.0, 2.0)


def test_false_positive_gate_has_no_gradient():
    z_q = torch.zeros(1, 8, dtype=torch.float64, requires_grad=True)
    z_d = _bits('00001111')
    losses.mish_false_positive_loss(z_q, z_d, 2, 1.0, 2.0).sum().backward()
    # Only the first substring's hinge is active: d/dz_q of (1 - sum_j z_q_j) over bits 0..3
    assert z_q.grad.tolist() == [[-1.0] * 4 + [0.0] * 4]


def test_knn_distance_loss():
    q = _bits('00000000')
    assert losses.mish_knn_distance_loss(q, q, 1.0).item() == 0
    assert losses.mish_knn_distance_loss(q, _bits('11000000'), 2.0).item() == 0
    assert losses.mish_knn_distance_loss(q, _bits('11110000'), 2.0).item() == 2.0


def test_batch_kth_neighbors():
    z = torch.tensor([[0.0] * 8, [1.0] + [0.0] * 7, [1.0] * 8, [1.0, 1.0] + [0.0] * 6],
                     dtype=torch.float64)
    # Distances from row 0: 1 (row 1), 8 (row 2), 2 (row 3)
    assert losses.batch_kth_neighbors(z, 1)[0].item() == 1
    assert losses.batch_kth_neighbors(z, 2)[0].item() == 3
    assert losses.batch_kth_neighbors(z, 3)[0].item() == 2
    with pytest.raises(UsageError):
        losses.batch_kth_neighbors(z, 4)


def test_batch_neighbor_rank():
    assert losses.batch_neighbor_rank(10, 64, 2000) == 1
    assert losses.batch_neighbor_rank(10, 64, 64) == 10
    assert losses.batch_neighbor_rank(2, 6, 6) == 2
    assert losses.batch_neighbor_rank(100, 64, 200) == 32
    assert losses.batch_neighbor_rank(150, 8, 160) == 7
    with pytest.raises(UsageError):
        losses.batch_neighbor_rank(10, 1, 100)
    with pytest.raises(UsageError):
        losses.batch_neighbor_rank(0, 8, 100)
