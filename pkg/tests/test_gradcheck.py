import numpy as np
import pytest

import dualbranch.autodiff.ops as ops
from dualbranch.gradcheck import check_function, format_report, relative_error, run_gradcheck
from dualbranch.autodiff import Tensor
import dualbranch.autodiff as ad

OPS = [
    "add", "sub", "mul", "relu", "sigmoid", "exp", "negate", "log1p", "matmul", "conv2d", "max_pool2d",
    "avg_pool2d", "global_avg_pool", "global_max_pool", "concat_channels", "l2_normalize", "masked_logsumexp",
]
LOSSES = ["focal", "supcon", "f_center", "fsc_total"]


def test_relative_error():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.array([1.0, 0.0]), np.array([1.0, 1e-6])) == pytest.approx(1e-6)


def test_check_function_on_a_known_gradient():
    x = Tensor(np.array([0.3, -1.2, 2.0]), requires_grad=True)
    assert check_function(lambda: ad.tsum(ad.mul(x, x)), [x]) < 1e-9


def test_report_lists_every_target():
    results = run_gradcheck(["ops", "losses"], trials=2, seed=3)
    assert [r.target for r in results] == OPS + LOSSES
    assert all(r.trials == 2 and np.isfinite(r.max_rel_error) for r in results)
    assert all(r.passed for r in results), format_report(results)
    assert len(format_report(results).splitlines()) == len(results) + 1


def test_unknown_scope():
    with pytest.raises(ValueError):
        run_gradcheck(["everything"])


def test_corrupted_sigmoid_derivative_is_caught(monkeypatch):
    monkeypatch.setattr(ops, "_sigmoid_grad", lambda y: y * (1.0 - y) * 1.01)
    results = {r.target: r for r in run_gradcheck(["ops"], trials=3)}
    assert not results["sigmoid"].passed
    assert results["relu"].passed and results["exp"].passed
    assert "FAIL" in format_report(results.values())
