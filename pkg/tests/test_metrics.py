import numpy as np
import pytest

from msct_potts.metrics import CSV_HEADER, evaluate, gaussian_window, mae, mssim, rmse

import oracles


def test_rmse_examples():
    rng = np.random.default_rng(0)
    u = rng.random((4, 4))
    assert rmse(u, u) == 0.0
    assert rmse(u + 0.01, u) == pytest.approx(1.0)
    v = rng.random((4, 4))
    assert rmse(u, v) == pytest.approx(oracles.rmse_direct(u, v), abs=1e-12)
    with pytest.raises(ValueError):
        rmse(u, np.zeros((4, 5)))


def test_mae_examples():
    rng = np.random.default_rng(1)
    u = rng.random((10, 10))
    assert mae(u, u) == 0.0
    v = u.copy()
    v[3, 7] += 1.0
    assert mae(u, v) == pytest.approx(1.0)
    w = rng.random((10, 10))
    assert mae(u, w) == pytest.approx(oracles.mae_direct(u, w), abs=1e-12)
    with pytest.raises(ValueError):
        mae(u, np.zeros(3))


def test_window():
    w = gaussian_window()
    assert w.shape == (11, 11)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(w, oracles.gaussian_11(), rtol=1e-14)


def test_mssim_examples():
    rng = np.random.default_rng(2)
    u = rng.standard_normal((16, 16))
    assert mssim(u, u) == 1.0
    z = u - u.mean()
    assert mssim(z, -z) < 1.0
    a = np.zeros((16, 16))
    a[:, 8:] = 0.5
    b = a.copy()
    b[:, 8:] += 0.1
    assert mssim(a, b) == pytest.approx(oracles.mssim_direct(a, b), abs=1e-10)
    with pytest.raises(ValueError):
        mssim(np.zeros((10, 12)), np.zeros((10, 12)))


def test_oracles_random_pairs():
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = int(rng.integers(11, 20))
        u = rng.random((n, n))
        v = u + 0.1 * rng.standard_normal((n, n))
        assert mssim(u, v) == pytest.approx(oracles.mssim_direct(u, v), abs=1e-10)
        assert mssim(u, v) == pytest.approx(mssim(v, u), abs=1e-14)
        assert rmse(u, v) >= mae(u, v)


def test_rotation_invariance():
    rng = np.random.default_rng(4)
    u = rng.random((15, 15))
    v = rng.random((15, 15))
    for k in (1, 2, 3):
        ru, rv = np.rot90(u, k), np.rot90(v, k)
        assert mssim(ru, rv) == pytest.approx(mssim(u, v), abs=1e-12)
        assert rmse(ru, rv) == pytest.approx(rmse(u, v), abs=1e-12)
        assert mae(ru, rv) == pytest.approx(mae(u, v), abs=1e-12)


def test_report_and_csv():
    rng = np.random.default_rng(5)
    truth = rng.random((12, 12, 3))
    res = truth + 0.02 * rng.standard_normal(truth.shape)
    rep = evaluate(res, truth)
    for c in range(3):
        assert rep.rmse[c] == rmse(res[..., c], truth[..., c])
        assert rep.mssim[c] == mssim(res[..., c], truth[..., c])
    assert rep.mean()["mssim"] == pytest.approx(rep.mssim.mean())
    lines = rep.to_csv().splitlines()
    assert tuple(lines[0].split(",")) == CSV_HEADER
    assert lines[1].split(",")[0] == "0" and lines[-1].split(",")[0] == "mean"
    assert float(lines[2].split(",")[3]) == rep.mssim[1]
    same = evaluate(truth, truth)
    assert np.all(same.mssim == 1.0) and np.all(same.rmse == 0) and np.all(same.mae == 0)
