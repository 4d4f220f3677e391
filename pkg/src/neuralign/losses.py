"""Objective functions: reconstruction, embedding mapping, and prototype matching.

Reconstruction and mapping losses are mean-per-sample squared L2 distances.
Distribution matching works through class prototypes: centroids of embeddings
per class, a softmax over negated distances to those centroids, and the
negative log-probability of the true class. The batched matching loss is
built from tape primitives via log-sum-exp so gradients reach the emotion
encoder and its mapping network; prototypes themselves stay constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import (ConfigurationError, ContractError, DimensionError,
                     EmptyClassError)

SUPPORTED_DISTANCES = ("sq_euclidean",)


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def check_distance_tag(tag: str) -> None:
    if tag not in SUPPORTED_DISTANCES:
        raise ConfigurationError(
            f"unsupported distance {tag!r}; supported: {SUPPORTED_DISTANCES}")


@dataclass
class Prototypes:
    """Per-class centroids in the fMRI embedding space."""

    matrix: np.ndarray  # (K, dim)
    class_ids: np.ndarray  # 0..K-1
    counts: np.ndarray  # samples per class used for each centroid

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.num_classes < 2:
            raise ConfigurationError("prototypes require at least 2 classes")
        if np.any(self.counts < 1):
            raise ConfigurationError("every prototype needs at least one sample")

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def reconstruction_loss(x: Tensor, x_hat: Tensor) -> Tensor:
    """Mean over samples of the squared L2 norm of the residual."""
    if x.shape != x_hat.shape:
        raise DimensionError(
            f"reconstruction_loss: shapes {x.shape} and {x_hat.shape} differ")
    n = x.shape[0]
    if n < 1:
        raise DimensionError("reconstruction_loss: empty batch")
    return ad.scale(ad.reduce_sum(ad.square(ad.sub(x, x_hat))), 1.0 / n)


def mapping_loss(video_emb: Tensor, mapped_fmri_emb: Tensor) -> Tensor:
    """Mean per-sample squared L2 distance between paired embedding rows."""
    if video_emb.shape != mapped_fmri_emb.shape:
        raise DimensionError(
            f"mapping_loss: shapes {video_emb.shape} and {mapped_fmri_emb.shape} differ")
    n = video_emb.shape[0]
    if n < 1:
        raise DimensionError("mapping_loss: empty batch")
    return ad.scale(ad.reduce_sum(ad.square(ad.sub(video_emb, mapped_fmri_emb))), 1.0 / n)


def stage2_loss(fmri_x: Tensor, fmri_rec: Tensor, video_emb: Tensor,
                mapped_emb: Tensor, lambda_map: float = 1.0) -> Tensor:
    """fMRI reconstruction plus weighted point-to-point mapping term."""
    if lambda_map < 0:
        raise ConfigurationError(f"lambda_map must be >= 0, got {lambda_map}")
    recon = reconstruction_loss(fmri_x, fmri_rec)
    mapped = mapping_loss(video_emb, mapped_emb)
    return ad.add(recon, ad.scale(mapped, lambda_map))


def compute_prototypes(embeddings, labels, num_classes: int) -> Prototypes:
    """Arithmetic mean of embeddings per class, in class-id order."""
    emb = _as_array(embeddings)
    labels = np.asarray(labels, dtype=np.int64)
    if num_classes < 2:
        raise ConfigurationError(f"need at least 2 classes, got {num_classes}")
    if emb.ndim != 2 or emb.shape[0] != labels.shape[0]:
        raise DimensionError(
            f"compute_prototypes: {emb.shape} embeddings vs {labels.shape} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ConfigurationError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]")
    matrix = np.zeros((num_classes, emb.shape[1]))
    counts = np.zeros(num_classes, dtype=np.int64)
    for k in range(num_classes):
        members = emb[labels == k]
        if members.shape[0] == 0:
            raise EmptyClassError(k, "prototype computation")
        matrix[k] = members.mean(axis=0)
        counts[k] = members.shape[0]
    return Prototypes(matrix, np.arange(num_classes), counts)


def sq_euclidean(a, b) -> float:
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise DimensionError(f"sq_euclidean: shapes {a.shape} and {b.shape} differ")
    diff = a - b
    return float(np.dot(diff.ravel(), diff.ravel()))


def distances_to_prototypes(mapped_emb, prototypes: Prototypes,
                            distance: str = "sq_euclidean") -> np.ndarray:
    check_distance_tag(distance)
    query = _as_array(mapped_emb).ravel()
    if query.shape[0] != prototypes.dim:
        raise DimensionError(
            f"query dim {query.shape[0]} != prototype dim {prototypes.dim}")
    diff = prototypes.matrix - query[None, :]
    return np.einsum("kd,kd->k", diff, diff)


def softmax_from_distances(distances: np.ndarray) -> np.ndarray:
    """Probabilities proportional to exp(-distance), max-subtracted for stability."""
    logits = -np.asarray(distances, dtype=np.float64)
    logits = logits - logits.max()
    expd = np.exp(logits)
    return expd / expd.sum()


def proto_softmax(mapped_emb, prototypes: Prototypes,
                  distance: str = "sq_euclidean") -> np.ndarray:
    """Class posterior for one query vector against the prototype set."""
    if prototypes.num_classes < 2:
        raise ConfigurationError("proto_softmax needs at least 2 classes")
    return softmax_from_distances(distances_to_prototypes(mapped_emb, prototypes, distance))


def matching_loss(probabilities, true_class: int) -> float:
    """Negative log-probability of the true class under a given posterior."""
    probs = _as_array(probabilities).ravel()
    if not (0 <= true_class < probs.shape[0]):
        raise IndexError(
            f"true_class {true_class} out of range for {probs.shape[0]} classes")
    if abs(probs.sum() - 1.0) > 1e-6 or np.any(probs < 0):
        raise ContractError("probabilities must be nonnegative and sum to 1")
    return float(-np.log(probs[true_class]))


def batch_matching_loss(mapped_embs: Tensor, labels, prototypes: Prototypes,
                        distance: str = "sq_euclidean") -> Tensor:
    """Mean negative log-probability over a batch, differentiable w.r.t. the queries.

    Composed as log-sum-exp over negated squared distances minus the true-class
    logit. The per-row max is subtracted as a constant; the value is unchanged
    by that shift and the gradient path stays exact.
    """
    check_distance_tag(distance)
    labels = np.asarray(labels, dtype=np.int64)
    n, dim = mapped_embs.shape
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} != ({n},)")
    k = prototypes.num_classes
    if dim != prototypes.dim:
        raise DimensionError(f"embedding dim {dim} != prototype dim {prototypes.dim}")
    if labels.min() < 0 or labels.max() >= k:
        raise IndexError(f"labels must lie in [0, {k})")

    proto_t = Tensor(prototypes.matrix.T)  # (dim, K), constant
    proto_sq = Tensor(np.sum(prototypes.matrix ** 2, axis=1)[None, :])  # (1, K)
    ones_col_dim = Tensor(np.ones((dim, 1)))
    ones_col_k = Tensor(np.ones((k, 1)))

    query_sq = ad.matmul(ad.square(mapped_embs), ones_col_dim)  # (n, 1)
    cross = ad.matmul(mapped_embs, proto_t)  # (n, K)
    dist = ad.add(ad.sub(query_sq, ad.scale(cross, 2.0)), proto_sq)  # (n, K)
    logits = ad.neg(dist)

    row_max = logits.data.max(axis=1, keepdims=True)  # constant shift
    shifted = ad.sub(logits, Tensor(row_max))
    sum_exp = ad.matmul(ad.exp(shifted), ones_col_k)  # (n, 1)
    lse = ad.add(ad.log(sum_exp), Tensor(row_max))  # (n, 1)

    one_hot = np.zeros((n, k))
    one_hot[np.arange(n), labels] = 1.0
    true_logits = ad.reduce_sum(ad.mul(logits, Tensor(one_hot)))
    return ad.scale(ad.sub(ad.reduce_sum(lse), true_logits), 1.0 / n)


def stage3_loss(emotion_x: Tensor, emotion_rec: Tensor, mapped_embs: Tensor,
                labels, prototypes: Prototypes, lambda_match: float = 1.0,
                distance: str = "sq_euclidean") -> Tensor:
    """Emotion reconstruction plus weighted prototype matching term."""
    if lambda_match < 0:
        raise ConfigurationError(f"lambda_match must be >= 0, got {lambda_match}")
    recon = reconstruction_loss(emotion_x, emotion_rec)
    match = batch_matching_loss(mapped_embs, labels, prototypes, distance)
    return ad.add(recon, ad.scale(match, lambda_match))
