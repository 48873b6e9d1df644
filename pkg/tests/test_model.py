import numpy as np
import pytest
import torch

from hamspace.corpus import TfIdfVector
from hamspace.errors import UsageError
from hamspace.model import (
    EPS, Decoder, Encoder, FrozenSampler, Sampler, encode,
    median_thresholds, quantize_median, sample_bits, threshold_codes,
)


def _encoder(seed=0, vocab_size=3, hidden=2, bits=2):
    return Encoder(vocab_size, hidden, bits, torch.Generator().manual_seed(seed), torch.float64)


def test_encoder_matches_matrix_arithmetic():
    encoder = _encoder()
    with torch.no_grad():
        encoder.hidden.bias.copy_(torch.tensor([0.1, -0.2]))
        encoder.output.bias.copy_(torch.tensor([0.3, 0.05]))
    w1 = encoder.hidden.weight.detach().numpy()
    b1 = encoder.hidden.bias.detach().numpy()
    w2 = encoder.output.weight.detach().numpy()
    b2 = encoder.output.bias.detach().numpy()

    x = np.array([0.6, 0.0, 0.8])
    expected = 1 / (1 + np.exp(-(w2 @ np.tanh(w1 @ x + b1) + b2)))
    sigma = encode(encoder, x).detach().numpy()[0]
    np.testing.assert_allclose(sigma, expected, rtol=1e-12)


def test_zero_input_gives_output_bias():
    encoder = _encoder()
    with torch.no_grad():
        encoder.output.bias.copy_(torch.tensor([2.0, -1.0]))
    sigma = encode(encoder, TfIdfVector({}, 3))[0]
    expected = torch.sigmoid(torch.tensor([2.0, -1.0], dtype=torch.float64))
    np.testing.assert_allclose(sigma.detach().numpy(), expected.numpy())


def test_encoder_deterministic():
    x = torch.tensor([[0.6, 0.0, 0.8]], dtype=torch.float64)
    assert torch.equal(_encoder(seed=4)(x), _encoder(seed=4)(x))
    assert not torch.equal(_encoder(seed=4)(x), _encoder(seed=5)(x))


def test_encoder_clamps():
    encoder = _encoder()
    with torch.no_grad():
        encoder.output.bias.copy_(torch.tensor([100.0, -100.0]))
    sigma = encoder(torch.zeros(1, 3, dtype=torch.float64))[0]
    assert sigma[0] == 1 - EPS and sigma[1] == EPS


def test_encoder_dimension_mismatch():
    with pytest.raises(UsageError):
        _encoder()(torch.zeros(1, 4, dtype=torch.float64))


def test_decoder_log_softmax():
    decoder = Decoder(3, 2, torch.Generator().manual_seed(0), torch.float64)
    z = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    scores = (decoder.scores.weight @ z[0]).detach().numpy()
    expected = scores - np.log(np.exp(scores).sum())
    np.testing.assert_allclose(decoder(z).detach().numpy()[0], expected, rtol=1e-12)


def test_deterministic_sampling():
    sigma = torch.tensor([[0.9, 0.2]])
    assert sample_bits(sigma, 'deterministic').tolist() == [[1.0, 0.0]]
    wide = torch.tensor([[0.9, 0.2, 0.5, 0.51, 0.0, 1.0, 0.4, 0.6]])
    assert str(threshold_codes(wide)[0]) == '10010101'
    with pytest.raises(UsageError):
        sample_bits(sigma, 'greedy')


def test_stochastic_sampling_extremes():
    sigma = torch.tensor([[1 - EPS, EPS]] * 1000, dtype=torch.float64)
    bits = sample_bits(sigma, 'stochastic', torch.Generator().manual_seed(0))
    assert bits[:, 0].sum() == 1000
    assert bits[:, 1].sum() == 0


def test_stochastic_sampling_mean():
    sigma = torch.tensor([0.1, 0.5, 0.73], dtype=torch.float64).repeat(100000, 1)
    bits = sample_bits(sigma, 'stochastic', torch.Generator().manual_seed(1))
    means = bits.mean(dim=0).numpy()
    stderr = np.sqrt(np.array([0.1 * 0.9, 0.25, 0.73 * 0.27]) / 100000)
    assert np.all(np.abs(means - [0.1, 0.5, 0.73]) < 3 * stderr)


def test_straight_through_gradient():
    sigma = torch.tensor([[0.3, 0.8]], dtype=torch.float64, requires_grad=True)
    bits = sample_bits(sigma, 'stochastic', torch.Generator().manual_seed(0))
    assert set(bits.detach().flatten().tolist()) <= {0.0, 1.0}
    (bits * torch.tensor([[2.0, 3.0]], dtype=torch.float64)).sum().backward()
    assert sigma.grad.tolist() == [[2.0, 3.0]]


def test_samplers():
    sigma = torch.tensor([[0.3, 0.8, 0.5]], dtype=torch.float64, requires_grad=True)
    frozen = FrozenSampler(torch.Generator().manual_seed(3))
    first = frozen(sigma, 'query')
    shifted = frozen(sigma + 0.01, 'query')
    torch.testing.assert_close(shifted - first, torch.full_like(first, 0.01))

    plain = Sampler(torch.Generator().manual_seed(3))
    torch.testing.assert_close(plain(sigma, 'query'), first)


def test_quantize_median():
    values = np.zeros((3, 8))
    values[:, 0] = (1.0, 2.0, 3.0)
    values[:, 1] = 5.0
    codes, thresholds = quantize_median(values)
    assert thresholds[:2].tolist() == [2.0, 5.0]
    assert not codes.to_bits()[:, 2:].any()
    assert codes.to_bits()[:, :2].tolist() == [[0, 0], [0, 0], [1, 0]]


def test_median_even_rows_takes_lower_middle():
    assert median_thresholds(np.array([[4.0], [1.0], [3.0], [2.0]])).tolist() == [2.0]
    with pytest.raises(UsageError):
        median_thresholds(np.zeros((0, 3)))


def test_quantize_median_matches_sort_oracle(rng):
    values = rng.normal(size=(100, 16))
    codes, _ = quantize_median(values)
    expected = values > np.sort(values, axis=0)[49]
    assert np.array_equal(codes.to_bits().astype(bool), expected)
