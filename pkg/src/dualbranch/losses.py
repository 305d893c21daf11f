"""Focal, supervised contrastive and frequency center-margin losses.

Batch reductions differ per term: focal is a batch mean, SupCon is a mean
over anchors that have at least one positive, and the center term is a sum
over samples. The center-separation penalty sums over ordered class pairs,
so with two classes each pair is counted twice.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import (
    Tensor,
    add,
    clamp,
    index,
    l2_norm,
    log,
    masked_logsumexp,
    matmul,
    mean,
    mul,
    power,
    relu,
    sub,
    transpose,
)
from .autodiff import tsum as tensor_sum
from .autodiff.tensor import as_tensor
from .errors import ConfigError, ContractError, ShapeError
from .model import init_uniform

PROB_EPS = 1e-7


@dataclass
class LossWeights:
    lambda1: float = 0.5
    lambda2: float = 0.01
    alpha: float = 0.25
    gamma: float = 2.0
    tau: float = 0.1
    mu: float = 0.5
    margin: float = 1.0

    def validate(self) -> None:
        if self.lambda1 < 0:
            raise ConfigError(f"loss.lambda1: must be >= 0, got {self.lambda1}")
        if self.lambda2 < 0:
            raise ConfigError(f"loss.lambda2: must be >= 0, got {self.lambda2}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"loss.alpha: must lie in (0, 1), got {self.alpha}")
        if self.gamma < 0:
            raise ConfigError(f"loss.gamma: must be >= 0, got {self.gamma}")
        if not self.tau > 0:
            raise ConfigError(f"loss.tau: must be > 0, got {self.tau}")
        if self.mu < 0:
            raise ConfigError(f"loss.mu: must be >= 0, got {self.mu}")
        if not self.margin > 0:
            raise ConfigError(f"loss.margin: must be > 0, got {self.margin}")


@dataclass
class LossBreakdown:
    focal: Tensor
    supcon: Tensor
    f_center: Tensor
    total: Tensor

    def values(self) -> dict:
        return {
            "focal": self.focal.item(),
            "supcon": self.supcon.item(),
            "f_center": self.f_center.item(),
            "total": self.total.item(),
        }


def init_centers(seed: int, dim: int, margin: float) -> Tensor:
    """Two class centers (real, fake); the fake center is shifted so the initial gap is about ``margin``."""
    c = init_uniform(seed, "centers", (2, dim), dim)
    c[1] += margin / np.sqrt(dim)
    return Tensor(c, requires_grad=True)


def _labels(y, n: int) -> np.ndarray:
    y = np.asarray(y.data if isinstance(y, Tensor) else y).astype(np.int64).reshape(-1)
    if y.shape[0] != n:
        raise ShapeError(f"got {y.shape[0]} labels for a batch of {n}")
    return y


def focal_loss(p, y, alpha: float = 0.25, gamma: float = 2.0) -> Tensor:
    """Batch mean of -a (1-p)^g log p (y=1) and -(1-a) p^g log(1-p) (y=0)."""
    p = as_tensor(p)
    if p.size == 0:
        raise ContractError("focal_loss: empty batch")
    p = clamp(p.reshape(-1), PROB_EPS, 1.0 - PROB_EPS)
    yv = _labels(y, p.shape[0]).astype(p.dtype)
    q = 1.0 - p
    pos = mul(mul(power(q, gamma), log(p)), -alpha)
    neg = mul(mul(power(p, gamma), log(q)), -(1.0 - alpha))
    per_sample = add(mul(pos, yv), mul(neg, 1.0 - yv))
    return mean(per_sample)


def supcon_loss(z, y, tau: float = 0.1) -> Tensor:
    """Supervised contrastive loss over L2-normalized embeddings ``z`` (N, C)."""
    z = as_tensor(z)
    if z.ndim != 2:
        raise ShapeError(f"supcon_loss: expected (N, C) embeddings, got {z.shape}")
    n = z.shape[0]
    if n < 2:
        raise ContractError(f"supcon_loss: need at least 2 samples, got {n}")
    norms = np.linalg.norm(z.data, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ContractError("supcon_loss: embeddings must be unit-norm")
    labels = _labels(y, n)
    others = ~np.eye(n, dtype=bool)
    positives = (labels[:, None] == labels[None, :]) & others
    n_pos = positives.sum(axis=1)
    valid = n_pos > 0
    if not valid.any():
        return mul(tensor_sum(z), 0.0)

    logits = mul(matmul(z, transpose(z)), 1.0 / tau)
    log_denom = masked_logsumexp(logits, others, axis=1)
    # -(1/|P|) sum_p (logit_ip - log_denom_i), averaged over anchors with positives
    weights = np.where(valid[:, None], positives / np.maximum(n_pos, 1)[:, None], 0.0)
    pos_term = tensor_sum(mul(logits, weights))
    denom_term = tensor_sum(mul(log_denom, valid.astype(np.float64)))
    return mul(sub(denom_term, pos_term), 1.0 / valid.sum())


def f_center_loss(f, y, centers: Tensor, mu: float = 0.5, margin: float = 1.0) -> Tensor:
    """Sum of squared distances to class centers plus a squared hinge on center gaps.

    Pass ``f=None`` to keep only the center-separation term.
    """
    centers = as_tensor(centers)
    k = centers.shape[0]
    sep_terms = []
    for j in range(k):
        for m in range(k):
            if j != m:
                gap = l2_norm(sub(index(centers, j), index(centers, m)))
                sep_terms.append(power(relu(sub(margin, gap)), 2.0))
    separation = sep_terms[0]
    for t in sep_terms[1:]:
        separation = add(separation, t)
    separation = mul(separation, mu)
    if f is None:
        return separation

    f = as_tensor(f)
    if f.ndim != 2 or f.shape[1] != centers.shape[1]:
        raise ShapeError(f"f_center_loss: features {f.shape} do not match centers {centers.shape}")
    if f.shape[0] < 1:
        raise ContractError("f_center_loss: empty batch")
    labels = _labels(y, f.shape[0])
    onehot = np.zeros((f.shape[0], k), dtype=f.dtype)
    onehot[np.arange(f.shape[0]), labels] = 1.0
    assigned = matmul(Tensor(onehot), centers)
    diff = sub(f, assigned)
    pull = tensor_sum(mul(diff, diff))
    return add(pull, separation)


def fsc_total(focal: Tensor, supcon: Tensor, f_center: Tensor, weights: LossWeights) -> LossBreakdown:
    focal, supcon, f_center = as_tensor(focal), as_tensor(supcon), as_tensor(f_center)
    total = add(add(focal, mul(supcon, weights.lambda1)), mul(f_center, weights.lambda2))
    return LossBreakdown(focal=focal, supcon=supcon, f_center=f_center, total=total)


def fsc_loss(
    p: Tensor,
    z: Tensor,
    f_fre: Optional[Tensor],
    y,
    centers: Tensor,
    weights: LossWeights,
) -> LossBreakdown:
    """All three terms for one batch plus their weighted total."""
    focal = focal_loss(p, y, weights.alpha, weights.gamma)
    supcon = supcon_loss(z, y, weights.tau)
    f_center = f_center_loss(f_fre, y, centers, weights.mu, weights.margin)
    return fsc_total(focal, supcon, f_center, weights)
