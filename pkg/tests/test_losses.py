import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import dualbranch.autodiff as ad
from dualbranch.autodiff import Tensor
from dualbranch.errors import ConfigError, ContractError
from dualbranch.gradcheck import check_function
from dualbranch.losses import (
    LossWeights,
    f_center_loss,
    focal_loss,
    fsc_loss,
    fsc_total,
    init_centers,
    supcon_loss,
)


def unit_rows(rng, n, c):
    z = rng.normal(size=(n, c))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def naive_supcon(z, y, tau):
    """Direct double loop over anchors, positives and the full denominator."""
    n = len(y)
    terms = []
    for i in range(n):
        pos = [p for p in range(n) if p != i and y[p] == y[i]]
        if not pos:
            continue
        denom = sum(np.exp(z[i] @ z[a] / tau) for a in range(n) if a != i)
        terms.append(-np.mean([np.log(np.exp(z[i] @ z[p] / tau) / denom) for p in pos]))
    return float(np.mean(terms))


# -- weights -------------------------------------------------------------------


@pytest.mark.parametrize(
    "field,value",
    [("lambda1", -0.1), ("lambda2", -1), ("alpha", 0.0), ("alpha", 1.0), ("gamma", -1), ("tau", 0), ("mu", -1), ("margin", 0)],
)
def test_loss_weight_validation(field, value):
    with pytest.raises(ConfigError, match=field):
        LossWeights(**{field: value}).validate()


# -- focal ---------------------------------------------------------------------


def test_focal_reduces_to_half_cross_entropy():
    p = np.linspace(0.005, 0.995, 100)
    for label in (0, 1):
        y = np.full(100, label)
        ce = -np.log(p) if label == 1 else -np.log(1 - p)
        for i in range(100):
            got = focal_loss(Tensor(p[i : i + 1]), y[i : i + 1], alpha=0.5, gamma=0.0).item()
            assert abs(got - 0.5 * ce[i]) < 1e-12


def test_focal_closed_form_value():
    assert focal_loss(Tensor([0.5]), [1]).item() == pytest.approx(-0.25 * 0.25 * np.log(0.5), abs=1e-12)
    assert focal_loss(Tensor([0.5]), [1]).item() == pytest.approx(0.04332, abs=1e-5)


def test_focal_confident_positive_vanishes():
    assert focal_loss(Tensor([1.0 - 1e-9]), [1]).item() < 1e-12
    assert focal_loss(Tensor([1.0]), [1]).item() < 1e-12  # clamped, still finite


def test_focal_monotone_on_grid():
    p = np.linspace(0.01, 0.99, 99)
    pos = np.array([focal_loss(Tensor([v]), [1]).item() for v in p])
    neg = np.array([focal_loss(Tensor([v]), [0]).item() for v in p])
    assert np.all(pos >= 0) and np.all(neg >= 0)
    assert np.all(np.diff(pos) < 0) and np.all(np.diff(neg) > 0)


def test_focal_empty_batch():
    with pytest.raises(ContractError):
        focal_loss(Tensor(np.zeros(0)), [])


# -- supcon --------------------------------------------------------------------


def test_supcon_same_class_pair_is_zero():
    z = unit_rows(np.random.default_rng(0), 2, 5)
    assert supcon_loss(Tensor(z), [1, 1]).item() == 0.0


def test_supcon_equal_similarity_gives_ln2():
    # orthogonal embeddings: every similarity is 0, so each anchor with a positive scores -log(1/2)
    z = np.eye(3)
    assert supcon_loss(Tensor(z), [0, 0, 1], tau=0.1).item() == pytest.approx(np.log(2), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_supcon_matches_naive_formula(seed):
    rng = np.random.default_rng(seed)
    z = unit_rows(rng, 9, 4)
    y = rng.integers(0, 2, 9)
    tau = rng.uniform(0.2, 1.0)
    assert abs(supcon_loss(Tensor(z), y, tau).item() - naive_supcon(z, y, tau)) < 1e-9


def test_supcon_stable_at_small_temperature():
    z = unit_rows(np.random.default_rng(1), 6, 3)
    out = supcon_loss(Tensor(z), [0, 0, 1, 1, 0, 1], tau=1e-3).item()
    assert np.isfinite(out) and out >= 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 10))
def test_supcon_nonnegative_and_permutation_invariant(seed, n):
    rng = np.random.default_rng(seed)
    z = unit_rows(rng, n, 3)
    y = rng.integers(0, 2, n)
    perm = rng.permutation(n)
    a = supcon_loss(Tensor(z), y, 0.5).item()
    b = supcon_loss(Tensor(z[perm]), y[perm], 0.5).item()
    assert a >= -1e-12
    assert a == pytest.approx(b, abs=1e-12)


def test_supcon_decreases_when_positive_pair_moves_closer():
    rng = np.random.default_rng(2)
    z = unit_rows(rng, 4, 3)
    y = [0, 0, 1, 1]
    before = supcon_loss(Tensor(z), y, 0.5).item()
    moved = z.copy()
    moved[1] = z[1] + 0.3 * (z[0] - z[1])
    moved[1] /= np.linalg.norm(moved[1])
    assert supcon_loss(Tensor(moved), y, 0.5).item() < before


def test_supcon_preconditions():
    with pytest.raises(ContractError):
        supcon_loss(Tensor([[1.0, 0.0]]), [0])
    with pytest.raises(ContractError):
        supcon_loss(Tensor([[2.0, 0.0], [0.0, 1.0]]), [0, 1])


def test_supcon_without_positives_is_zero_with_zero_grad():
    z = Tensor(unit_rows(np.random.default_rng(3), 2, 3), requires_grad=True)
    out = supcon_loss(z, [0, 1])
    out.backward()
    assert out.item() == 0.0 and np.all(z.grad == 0)


# -- center loss ---------------------------------------------------------------


def test_center_zero_at_centers():
    c = Tensor([[0.0, 0.0], [1.0, 1.0]])
    f = Tensor([[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]])
    assert f_center_loss(f, [0, 1, 0], c).item() == 0.0


def test_center_coincident_centers():
    c = Tensor([[0.3, -0.2], [0.3, -0.2]])
    out = f_center_loss(Tensor([[0.3, -0.2]]), [1], c, mu=0.5, margin=1.5).item()
    assert out == pytest.approx(2 * 0.5 * 1.5**2, abs=1e-12)


def test_center_single_sample_distance():
    c = Tensor([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    f = Tensor([[2.0, 0.3, 0.0]])
    assert f_center_loss(f, [1], c).item() == pytest.approx(0.09, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.1, 2.0))
def test_center_separation_term(gap, margin):
    c = Tensor([[0.0, 0.0], [gap, 0.0]])
    sep = f_center_loss(None, None, c, mu=1.0, margin=margin).item()
    if gap >= margin:
        assert sep == 0.0
    else:
        assert sep > 0
        assert sep == pytest.approx(2 * (margin - gap) ** 2)


def test_center_sum_not_mean():
    c = Tensor([[0.0], [5.0]])
    one = f_center_loss(Tensor([[1.0]]), [0], c).item()
    two = f_center_loss(Tensor([[1.0], [1.0]]), [0, 0], c).item()
    assert two == 2 * one


def test_init_centers_shape_and_determinism():
    c = init_centers(0, 32, 1.0)
    assert c.shape == (2, 32) and c.requires_grad
    assert np.array_equal(c.data, init_centers(0, 32, 1.0).data)


# -- total ---------------------------------------------------------------------


def test_total_weights():
    b = fsc_total(Tensor(0.1), Tensor(0.2), Tensor(0.3), LossWeights(lambda1=0.5, lambda2=0.1))
    assert b.total.item() == pytest.approx(0.23, abs=1e-15)
    b = fsc_total(Tensor(0.1), Tensor(0.2), Tensor(0.3), LossWeights(lambda1=0.0, lambda2=0.0))
    assert b.total.item() == 0.1
    assert set(b.values()) == {"focal", "supcon", "f_center", "total"}


def _batch(rng, n=6):
    p = Tensor(rng.uniform(0.05, 0.95, n), requires_grad=True)
    z = Tensor(unit_rows(rng, n, 4), requires_grad=True)
    f = Tensor(rng.normal(size=(n, 3)), requires_grad=True)
    y = np.array([0, 1] * (n // 2))
    return p, z, f, y


def test_total_gradient_wrt_centers():
    rng = np.random.default_rng(4)
    p, z, f, y = _batch(rng)
    centers = Tensor(rng.normal(size=(2, 3)) * 0.2, requires_grad=True)
    w = LossWeights(lambda2=0.3)

    def fn():
        return fsc_loss(p, z, f, y, centers, w).total

    assert check_function(fn, [centers]) < 1e-5


def test_component_gradients():
    rng = np.random.default_rng(5)
    p, z, f, y = _batch(rng)
    centers = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    assert check_function(lambda: focal_loss(p, y), [p]) < 1e-5
    assert check_function(lambda: supcon_loss(ad.div(z, ad.l2_norm(z, axis=1, keepdims=True)), y), [z]) < 1e-5
    assert check_function(lambda: f_center_loss(f, y, centers, margin=5.0), [f, centers]) < 1e-5


def test_total_permutation_invariant():
    rng = np.random.default_rng(6)
    p, z, f, y = _batch(rng, 8)
    centers = init_centers(1, 3, 1.0)
    perm = rng.permutation(8)
    a = fsc_loss(p, z, f, y, centers, LossWeights()).total.item()
    b = fsc_loss(Tensor(p.data[perm]), Tensor(z.data[perm]), Tensor(f.data[perm]), y[perm], centers, LossWeights()).total.item()
    assert a == pytest.approx(b, abs=1e-12)
