"""
Training objectives on relaxed codes.

Every function takes batches (leading dimension = batch) and returns one loss per row;
callers reduce. Codes are relaxed: values in ``[0, 1]`` that equal the bits on binary input.
"""

import torch

from .errors import UsageError
from .model import Decoder


LN2 = float(torch.log(torch.tensor(2.0, dtype=torch.float64)))


def relaxed_hamming(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """
    ``sum_j a_j (1 - b_j) + (1 - a_j) b_j``; the Hamming distance on binary input.
    """
    return (a * (1 - b) + (1 - a) * b).sum(dim=-1)


def relaxed_projected_dissimilarity(u: torch.Tensor, i: torch.Tensor) -> torch.Tensor:
    """
    ``sum_j u_j (1 - i_j)``; the projected Hamming dissimilarity on binary input.
    """
    return (u * (1 - i)).sum(dim=-1)


def pairwise_relaxed_hamming(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """
    ``(len(a), len(b))`` matrix of relaxed Hamming distances.
    """
    return a @ (1 - b).T + (1 - a) @ b.T


def substring_distances(a: torch.Tensor, b: torch.Tensor, m: int) -> torch.Tensor:
    """
    ``(batch, m)`` relaxed Hamming distances between corresponding substrings.
    """
    bits = a.shape[-1]
    if m < 1 or bits % m != 0:
        raise UsageError(f"Substring count {m} does not divide code width {bits}")
    shape = a.shape[:-1] + (m, bits // m)
    return relaxed_hamming(a.reshape(shape), b.reshape(shape))


def recon_loss(z: torch.Tensor, x: torch.Tensor, decoder: Decoder) -> torch.Tensor:
    """
    ``-sum_{t: x_t > 0} x_t log softmax_t(z W + b)``, the softmax taken over the whole vocabulary.
    """
    return -(x * decoder(z)).sum(dim=-1)


def kl_loss(sigma: torch.Tensor) -> torch.Tensor:
    """
    KL divergence from ``Bernoulli(sigma_j)`` to ``Bernoulli(0.5)``, summed over bits.
    """
    return (sigma * (torch.log(sigma) + LN2)
            + (1 - sigma) * (torch.log(1 - sigma) + LN2)).sum(dim=-1)


def ranking_loss(z_q: torch.Tensor, z_p: torch.Tensor, z_n: torch.Tensor,
                 margin: float) -> torch.Tensor:
    """
    Hinge on the triplet: the dissimilar code must be at least ``margin`` further
    from the query than the similar one.
    """
    gap = relaxed_hamming(z_q, z_n) - relaxed_hamming(z_q, z_p)
    return torch.relu(margin - gap)


def pairwise_recon_loss(z_q: torch.Tensor, z_s: torch.Tensor, x_q: torch.Tensor,
                        decoder: Decoder) -> torch.Tensor:
    """
    Both the query's code and its similar document's code must reconstruct the query.
    """
    return recon_loss(z_q, x_q, decoder) + recon_loss(z_s, x_q, decoder)


def mish_false_positive_loss(z_q: torch.Tensor,
                             z_d: torch.Tensor,
                             m: int,
                             substring_margin: float,
                             gate_radius: float,
                             ) -> torch.Tensor:
    """
    For pairs further apart than ``gate_radius``, pushes every substring distance up to
    ``substring_margin`` so the pair no longer shares a near-identical substring.
    The gate itself carries no gradient.
    """
    gate = (relaxed_hamming(z_q, z_d) > gate_radius).to(z_q.dtype).detach()
    shortfall = torch.relu(substring_margin - substring_distances(z_q, z_d, m))
    return gate * shortfall.sum(dim=-1)


def mish_knn_distance_loss(z_q: torch.Tensor, z_k: torch.Tensor,
                           target_radius: float) -> torch.Tensor:
    """
    Keeps the distance to the k-th neighbour within ``target_radius``.
    """
    return torch.relu(relaxed_hamming(z_q, z_k) - target_radius)


def batch_neighbor_rank(k: int, batch_size: int, corpus_size: int) -> int:
    """
    The in-batch rank that estimates the corpus-wide ``k``-th neighbour. A batch holds
    ``batch_size - 1`` of the ``corpus_size - 1`` other codes, so ranks shrink by that
    ratio (rounded up, at least 1).
    """
    if batch_size < 2 or corpus_size < batch_size:
        raise UsageError(f"Batch of {batch_size} codes from a corpus of {corpus_size} "
                         f"has no neighbours to rank")
    if not 1 <= k < corpus_size:
        raise UsageError(f"k must be within [1, {corpus_size}) (given: {k})")
    rank = -(-k * (batch_size - 1) // (corpus_size - 1))
    return max(1, min(batch_size - 1, rank))


def batch_kth_neighbors(z: torch.Tensor, k: int) -> torch.Tensor:
    """
    Row index of each row's k-th nearest other row in the batch (relaxed Hamming,
    ties to the lower index). Selection does not take part in the gradient.
    """
    n = z.shape[0]
    if n < k + 1:
        raise UsageError(f"Batch of {n} codes has fewer than k={k} neighbours per code")
    with torch.no_grad():
        distances = pairwise_relaxed_hamming(z, z)
        distances.fill_diagonal_(float('inf'))
        order = torch.sort(distances, dim=1, stable=True).indices
    return order[:, k - 1]
