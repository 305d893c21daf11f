"""Central finite-difference gradient checks for ops, losses and the model.

The relative error of a check is ``||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8)``
taken over all checked coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .losses import LossWeights, f_center_loss, focal_loss, fsc_loss, init_centers, supcon_loss
from .model import AttentionWeights, BackboneConfig, DualBranchDetector, ModelConfig, channel_attention, fuse

STEP = 1e-5
OPS_TOLERANCE = 1e-4
LOSS_TOLERANCE = 1e-5
MODEL_TOLERANCE = 1e-4
END_TO_END_TOLERANCE = 1e-3
TRIALS = 20


def numeric_grad(
    fn: Callable[[], Tensor],
    leaf: Tensor,
    step: float = STEP,
    coords: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Central differences of scalar ``fn()`` w.r.t. ``leaf`` (modified in place, then restored)."""
    flat = leaf.data.reshape(-1)
    coords = range(flat.size) if coords is None else coords
    out = np.zeros(len(coords))
    for k, i in enumerate(coords):
        orig = flat[i]
        flat[i] = orig + step
        plus = fn().item()
        flat[i] = orig - step
        minus = fn().item()
        flat[i] = orig
        out[k] = (plus - minus) / (2 * step)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic).reshape(-1)
    numeric = np.asarray(numeric).reshape(-1)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_function(
    fn: Callable[[], Tensor],
    leaves: Sequence[Tensor],
    step: float = STEP,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Max relative error over ``leaves`` between backward() and finite differences."""
    for leaf in leaves:
        leaf.zero_grad()
    fn().backward()
    worst = 0.0
    for leaf in leaves:
        analytic = leaf.grad.reshape(-1).copy()
        coords = None
        if max_coords is not None and analytic.size > max_coords:
            coords = np.sort((rng or np.random.default_rng(0)).choice(analytic.size, max_coords, replace=False))
        numeric = numeric_grad(fn, leaf, step, coords)
        worst = max(worst, relative_error(analytic if coords is None else analytic[coords], numeric))
    return worst


@dataclass
class CheckResult:
    scope: str
    target: str
    trials: int
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error)) and self.max_rel_error < self.tolerance


def _leaf(rng: np.random.Generator, *shape, low=-2.0, high=2.0) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


def _away_from_zero(rng: np.random.Generator, *shape) -> Tensor:
    # keep |x| > 0.1 so kinks (relu, max) stay outside the finite-difference stencil
    mag = rng.uniform(0.1, 2.0, size=shape)
    return Tensor(mag * rng.choice([-1.0, 1.0], size=shape), requires_grad=True)


def _distinct(rng: np.random.Generator, *shape) -> Tensor:
    # well-separated values so the argmax of every pooling window is stable
    n = int(np.prod(shape))
    vals = rng.permutation(n) * (4.0 / max(n - 1, 1)) - 2.0
    return Tensor(vals.reshape(shape), requires_grad=True)


def _op_cases() -> Dict[str, Callable[[np.random.Generator], float]]:
    def binary(op):
        def case(rng):
            a, b = _leaf(rng, 3, 4), _leaf(rng, 4)
            return check_function(lambda: ad.tsum(ad.mul(ad.elementwise(op, a, b), a)), [a, b])

        return case

    def unary(op, leaf_fn=_leaf):
        def case(rng):
            a = leaf_fn(rng, 3, 4)
            w = Tensor(rng.uniform(-1, 1, size=(3, 4)))
            return check_function(lambda: ad.tsum(ad.mul(ad.elementwise(op, a), w)), [a])

        return case

    def log1p_case(rng):
        a = _leaf(rng, 3, 4, low=-0.9, high=2.0)
        return check_function(lambda: ad.tsum(ad.log1p(a)), [a])

    def matmul_case(rng):
        a, b = _leaf(rng, 3, 5), _leaf(rng, 5, 2)
        w = Tensor(rng.uniform(-1, 1, size=(3, 2)))
        return check_function(lambda: ad.tsum(ad.mul(ad.matmul(a, b), w)), [a, b])

    def conv_case(rng):
        x, k = _leaf(rng, 2, 6, 6), _leaf(rng, 3, 2, 3, 3)
        stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
        out_shape = ad.conv2d(x, k, stride, pad).shape
        w = Tensor(rng.uniform(-1, 1, size=out_shape))
        return check_function(lambda: ad.tsum(ad.mul(ad.conv2d(x, k, stride, pad), w)), [x, k])

    def pool_case(kind):
        def case(rng):
            x = _distinct(rng, 2, 6, 6)
            window, stride = int(rng.integers(2, 4)), int(rng.integers(1, 3))
            out_shape = ad.pool2d(kind, x, window, stride).shape
            w = Tensor(rng.uniform(-1, 1, size=out_shape))
            return check_function(lambda: ad.tsum(ad.mul(ad.pool2d(kind, x, window, stride), w)), [x])

        return case

    def gap_case(rng):
        x = _leaf(rng, 3, 4, 5)
        w = Tensor(rng.uniform(-1, 1, size=3))
        return check_function(lambda: ad.tsum(ad.mul(ad.global_avg_pool(x), w)), [x])

    def gmp_case(rng):
        x = _distinct(rng, 3, 4, 4)
        w = Tensor(rng.uniform(-1, 1, size=3))
        return check_function(lambda: ad.tsum(ad.mul(ad.global_max_pool(x), w)), [x])

    def concat_case(rng):
        a, b = _leaf(rng, 2, 3, 3), _leaf(rng, 3, 3, 3)
        w = Tensor(rng.uniform(-1, 1, size=(5, 3, 3)))
        return check_function(lambda: ad.tsum(ad.mul(ad.concat_channels(a, b), w)), [a, b])

    def norm_case(rng):
        a = _leaf(rng, 4, 3)
        return check_function(lambda: ad.tsum(ad.div(a, ad.l2_norm(a, axis=1, keepdims=True))[:, 0]), [a])

    def lse_case(rng):
        a = _leaf(rng, 4, 4)
        mask = ~np.eye(4, dtype=bool)
        w = Tensor(rng.uniform(-1, 1, size=4))
        return check_function(lambda: ad.tsum(ad.mul(ad.masked_logsumexp(a, mask, axis=1), w)), [a])

    return {
        "add": binary("add"),
        "sub": binary("sub"),
        "mul": binary("mul"),
        "relu": unary("relu", _away_from_zero),
        "sigmoid": unary("sigmoid"),
        "exp": unary("exp"),
        "negate": unary("negate"),
        "log1p": log1p_case,
        "matmul": matmul_case,
        "conv2d": conv_case,
        "max_pool2d": pool_case("max"),
        "avg_pool2d": pool_case("avg"),
        "global_avg_pool": gap_case,
        "global_max_pool": gmp_case,
        "concat_channels": concat_case,
        "l2_normalize": norm_case,
        "masked_logsumexp": lse_case,
    }


def _unit_rows(rng: np.random.Generator, n: int, c: int) -> np.ndarray:
    z = rng.normal(size=(n, c))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _loss_cases() -> Dict[str, Callable[[np.random.Generator], float]]:
    def focal_case(rng):
        p = Tensor(rng.uniform(0.05, 0.95, size=8), requires_grad=True)
        y = rng.integers(0, 2, size=8)
        alpha, gamma = rng.uniform(0.1, 0.9), rng.uniform(0.0, 3.0)
        return check_function(lambda: focal_loss(p, y, alpha, gamma), [p])

    def supcon_case(rng):
        raw = Tensor(rng.normal(size=(6, 5)), requires_grad=True)
        y = np.array([0, 0, 1, 1, 0, 1])
        rng.shuffle(y)
        tau = rng.uniform(0.1, 1.0)

        def fn():
            return supcon_loss(ad.div(raw, ad.l2_norm(raw, axis=1, keepdims=True)), y, tau)

        return check_function(fn, [raw])

    def center_case(rng):
        f = _leaf(rng, 5, 4)
        centers = Tensor(rng.uniform(-0.3, 0.3, size=(2, 4)), requires_grad=True)
        y = np.array([0, 1, 0, 1, 1])
        mu, margin = rng.uniform(0.1, 1.0), rng.uniform(1.0, 2.0)
        return check_function(lambda: f_center_loss(f, y, centers, mu, margin), [f, centers])

    def total_case(rng):
        p = Tensor(rng.uniform(0.05, 0.95, size=6), requires_grad=True)
        raw = Tensor(rng.normal(size=(6, 4)), requires_grad=True)
        f = _leaf(rng, 6, 3)
        centers = Tensor(rng.uniform(-0.3, 0.3, size=(2, 3)), requires_grad=True)
        y = np.array([0, 1, 0, 1, 1, 0])
        w = LossWeights(lambda1=rng.uniform(0, 1), lambda2=rng.uniform(0, 1))

        def fn():
            z = ad.div(raw, ad.l2_norm(raw, axis=1, keepdims=True))
            return fsc_loss(p, z, f, y, centers, w).total

        return check_function(fn, [p, raw, f, centers])

    return {
        "focal": focal_case,
        "supcon": supcon_case,
        "f_center": center_case,
        "fsc_total": total_case,
    }


def _tiny_model_config() -> ModelConfig:
    return ModelConfig(
        image_size=8,
        rgb=BackboneConfig([4, 4], [2, 2], in_channels=3),
        fre=BackboneConfig([2, 4], [2, 2], in_channels=1),
        reduction=2,
        head_hidden=4,
    )


def _model_cases() -> Dict[str, Callable[[np.random.Generator], float]]:
    def make(rng):
        model = DualBranchDetector.create(_tiny_model_config(), int(rng.integers(0, 2**32)))
        # positive biases keep ReLUs active so tiny perturbations do not cross kinks
        for name, p in model.params.items():
            if name.endswith("bias"):
                p.data[...] = rng.uniform(0.05, 0.2, size=p.shape)
        pixels = rng.uniform(0, 1, size=(4, 8, 8, 3))
        return model, pixels

    def branch_case(prefix):
        def case(rng):
            model, pixels = make(rng)
            if prefix == "rgb":
                x = Tensor(pixels.transpose(0, 3, 1, 2).copy())
                fn = lambda: ad.mean(model.rgb_branch(x))  # noqa: E731
            else:
                x = Tensor(model.spectra(pixels))
                fn = lambda: ad.mean(model.fre_branch(x))  # noqa: E731
            return check_function(fn, [model.params[f"{prefix}.conv0.weight"]])

        return case

    def attention_case(rng):
        feat = _leaf(rng, 2, 4, 3, 3)
        w = AttentionWeights(_leaf(rng, 2, 4, low=-1, high=1), _leaf(rng, 4, 2, low=-1, high=1))
        v = Tensor(rng.uniform(-1, 1, size=(2, 4)))
        return check_function(lambda: ad.tsum(ad.mul(channel_attention(feat, w), v)), [w.mlp_w1, w.mlp_w2, feat])

    def fuse_case(rng):
        a, b = _leaf(rng, 2, 3, 3), _leaf(rng, 2, 3, 3)
        w = AttentionWeights(_leaf(rng, 2, 4, low=-1, high=1), _leaf(rng, 4, 2, low=-1, high=1))
        v = Tensor(rng.uniform(-1, 1, size=4))
        return check_function(lambda: ad.tsum(ad.mul(fuse(a, b, w).embedding, v)), [a, b, w.mlp_w1])

    def head_case(rng):
        model, _ = make(rng)
        f = Tensor(rng.uniform(0, 1, size=(3, 8)))
        names = ["head.fc1.weight", "head.fc1.bias", "head.fc2.weight", "head.fc2.bias"]
        return check_function(lambda: ad.tsum(model.classify(f)), [model.params[n] for n in names])

    def full_case(rng):
        model, pixels = make(rng)
        centers = init_centers(int(rng.integers(0, 2**32)), 4, 1.0)
        model.params.add("centers", centers)
        y = np.array([0, 1, 0, 1])
        spectra = model.spectra(pixels)

        def fn():
            out = model.forward_batch(pixels, spectra)
            return fsc_loss(out.p, out.z, out.f_fre, y, centers, LossWeights(lambda2=0.1)).total

        leaves = [p for _, p in model.params.items()]
        return check_function(fn, leaves, max_coords=4, rng=rng)

    return {
        "rgb_branch": branch_case("rgb"),
        "fre_branch": branch_case("fre"),
        "channel_attention": attention_case,
        "fuse": fuse_case,
        "classify": head_case,
        "forward_fsc": full_case,
    }


SCOPES = {
    "ops": (_op_cases, OPS_TOLERANCE),
    "losses": (_loss_cases, LOSS_TOLERANCE),
    "model": (_model_cases, MODEL_TOLERANCE),
}


def run_gradcheck(scopes: Sequence[str] = ("ops", "losses", "model"), trials: int = TRIALS, seed: int = 0) -> List[CheckResult]:
    """One result row per checked target; every target runs ``trials`` random trials."""
    results = []
    for scope in scopes:
        if scope not in SCOPES:
            raise ValueError(f"unknown gradcheck scope {scope!r}; expected one of {sorted(SCOPES)}")
        make_cases, tol = SCOPES[scope]
        for target, case in make_cases().items():
            rng = np.random.default_rng([seed, len(scope), sum(map(ord, target))])
            errors = [case(rng) for _ in range(trials)]
            target_tol = END_TO_END_TOLERANCE if target == "forward_fsc" else tol
            results.append(CheckResult(scope, target, trials, max(errors), target_tol))
    return results


def format_report(results: Sequence[CheckResult]) -> str:
    lines = [f"{'scope':<8} {'target':<20} {'trials':>6} {'max_rel_err':>12} {'tol':>8}  status"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.scope:<8} {r.target:<20} {r.trials:>6} {r.max_rel_error:>12.3e} {r.tolerance:>8.0e}  {status}")
    return "\n".join(lines)
