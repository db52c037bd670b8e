import numpy as np
import pytest

import mqf


def test_check_loss_examples():
    assert mqf.check_loss(-2.0, 0.25) == pytest.approx(1.5)
    assert mqf.check_loss(3.0, 0.5) == pytest.approx(1.5)
    assert mqf.rate_L(100, 100, 1) == pytest.approx(10.0)


def test_gen_panel_and_fit_noiseless():
    x, truth = mqf.gen_panel(20, 15, 15, theta_star=0.0, seed=3)
    assert x.shape == (20, 15, 15)
    assert (truth.effective_k1, truth.effective_k2) == (2, 3)
    res = mqf.fit(x, 0.5, 2, 3, n_restarts=3)
    assert res.converged
    assert mqf.theta_distance(res.params, truth.params) < 1e-4
    assert mqf.loading_distance(truth.params.R, res.params.R) < 1e-4
    assert len(res.params.F) == 20


def test_masked_fit_and_impute():
    x, _ = mqf.gen_panel(16, 12, 12, theta_star=0.0, seed=1)
    rng = np.random.default_rng(0)
    mask = rng.random(x.shape) > 0.1
    res = mqf.fit(np.where(mask, x, 0.0), 0.5, 2, 3, mask=mask, n_restarts=3)
    filled, full_mask = mqf.impute(np.where(mask, x, 0.0), mask, res)
    assert full_mask.all()
    assert np.max(np.abs(filled - x)) < 1e-4


def test_select_noiseless():
    x, _ = mqf.gen_panel(20, 20, 20, theta_star=0.0, seed=0)
    sel = mqf.select(x, 0.5, method="ER", obj_rel_tol=1e-4)
    assert (sel.k1_hat, sel.k2_hat) == (2, 3)


def test_kernel_and_errors():
    k = mqf.build_kernel(2, 1.0)
    assert k.k(0.0) == pytest.approx(35.0 / 32.0)
    assert mqf.default_bandwidth(100, 8, 0.15) == pytest.approx(100 ** -0.3)
    with pytest.raises(ValueError):
        mqf.default_bandwidth(100, 8, 0.2)
    with pytest.raises(ValueError):
        mqf.check_loss(1.0, 1.5)
    with pytest.raises(ValueError):
        mqf.fit(np.zeros((2, 3)), 0.5, 1, 1)


def test_normalize_and_similarity():
    rng = np.random.default_rng(4)
    p = mqf.FactorParams(rng.normal(size=(6, 2)), rng.normal(size=(5, 2)),
                         [rng.normal(size=(2, 2)) for _ in range(4)])
    n = mqf.normalize(p)
    assert np.allclose(n.R.T @ n.R / 6, np.eye(2))
    assert mqf.space_similarity(n.R, n.R) == pytest.approx(1.0)
    cc_a = mqf.common_component(p)
    cc_b = mqf.common_component(n)
    assert all(np.allclose(a, b) for a, b in zip(cc_a, cc_b))
