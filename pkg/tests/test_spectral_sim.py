import math

import numpy as np
import pytest
import scipy.sparse as sp

from msct_potts import io as msio
from msct_potts.projector import Geometry, RayOperator, build_operator
from msct_potts.spectral_sim import (Phantom, Sinogram, SpectralModel, SpectrumSpec,
                                     builtin_phantoms, expected_counts, log_transform,
                                     make_multichannel_ground_truth, pwls_weights,
                                     simulate_counts, spectral_volume)


def op(dense):
    return RayOperator(sp.csr_matrix(np.asarray(dense, dtype=float)))


def model(energies, flux, edges, lac):
    return SpectralModel(energies=np.asarray(energies, float), flux=np.asarray(flux, float),
                         bin_edges=edges, lac=np.asarray(lac, float))


def test_ground_truth_background_and_constant():
    m = model([10, 11, 12, 13, 14, 15], np.ones(6), [0, 2, 4, 6],
              [np.zeros(6), np.full(6, 0.5)])
    assert np.all(make_multichannel_ground_truth(Phantom(np.zeros((4, 4), int)), m) == 0)
    u = make_multichannel_ground_truth(Phantom(np.ones((4, 4), int)), m)
    assert u.shape == (4, 4, 3) and np.all(u == 0.5)


def test_ground_truth_linear_curves():
    e = np.arange(20.0, 32.0)
    lac = [np.zeros_like(e), 3.0 - 0.05 * e, 1.0 + 0.02 * e]
    m = model(e, np.ones_like(e), [0, 4, 8, 12], lac)
    labels = np.array([[0, 1], [2, 1]])
    u = make_multichannel_ground_truth(Phantom(labels), m)
    for c, ec in enumerate((20.0, 24.0, 28.0)):
        assert u[0, 1, c] == pytest.approx(3.0 - 0.05 * ec)
        assert u[1, 0, c] == pytest.approx(1.0 + 0.02 * ec)
        assert u[0, 0, c] == 0.0
    with pytest.raises(ValueError):
        make_multichannel_ground_truth(Phantom(np.full((2, 2), 3)), m)


def test_empty_object_counts_equal_bin_flux():
    e = np.arange(30.0, 36.0)
    flux = np.array([5.0, 7.0, 11.0, 13.0, 17.0, 19.0])
    m = model(e, flux, [0, 3, 6], [np.zeros(6)])
    A = build_operator(Geometry(n=4, detectors=5, angles=3, domain_width=1.0, detector_width=1.0))
    sino = simulate_counts(np.zeros((4, 4, 6)), A, m)
    np.testing.assert_array_equal(sino.counts, np.tile([23.0, 49.0], (A.rows, 1)))


def test_half_attenuation():
    m = model([50.0], [1000.0], [0, 1], [[0.0], [math.log(2)]])
    sino = simulate_counts(np.full((1, 1, 1), math.log(2)), op([[1.0]]), m)
    assert sino.counts[0, 0] == pytest.approx(500.0, rel=1e-14)


def test_two_pixel_term_by_term():
    e = [40.0, 41.0, 42.0, 43.0]
    flux = [900.0, 1100.0, 700.0, 400.0]
    m = model(e, flux, [0, 2, 4], [np.zeros(4)])
    a = [0.3, 0.7]
    vol = np.array([[[0.2, 0.25, 0.3, 0.1], [0.05, 0.4, 0.15, 0.35]]])       # (1, 2, E)
    counts = simulate_counts(vol, op([a]), m).counts[0]
    for c, energies in enumerate(((0, 1), (2, 3))):
        ref = 0.0
        for k in energies:
            ref += flux[k] * math.exp(-(a[0] * vol[0, 0, k] + a[1] * vol[0, 1, k]))
        assert counts[c] == pytest.approx(ref, rel=1e-14)


def test_negative_lac_rejected():
    m = model([50.0], [1.0], [0, 1], [[0.0]])
    with pytest.raises(ValueError):
        simulate_counts(np.full((1, 1, 1), -0.1), op([[1.0]]), m)
    with pytest.raises(ValueError):
        model([50.0], [1.0], [0, 1], [[0.0], [-1.0]])


def test_log_transform_examples():
    s = Sinogram(counts=np.array([[1000.0, 1000.0 / math.e, 0.0]]),
                 flux_per_bin=np.array([1000.0, 1000.0, 1000.0]))
    f = log_transform(s).logdata[0]
    assert f[0] == 0.0
    assert f[1] == pytest.approx(1.0, abs=1e-14)
    assert f[2] == pytest.approx(6.9078, abs=1e-4)
    with pytest.raises(ValueError):
        log_transform(Sinogram(counts=np.ones((1, 1)), flux_per_bin=np.zeros(1)))


def test_left_endpoint_reference_flux():
    m = model([20.0, 21.0, 22.0, 23.0, 24.0], [4.0, 5.0, 6.0, 7.0, 8.0], [0, 2, 5], [np.zeros(5)])
    np.testing.assert_array_equal(m.reference_flux(), [8.0, 18.0])
    np.testing.assert_array_equal(m.reference_flux("bin_total"), [9.0, 21.0])


def test_pwls_weights_examples():
    s = Sinogram(counts=np.array([[400.0, 0.0]]), flux_per_bin=np.ones(2))
    assert pwls_weights(s).tolist() == [[400.0, 1.0]]
    rng = np.random.default_rng(0)
    A = rng.random((3, 2))
    f = rng.random(3)
    u = rng.random(2)
    k = 37.0
    w = pwls_weights(Sinogram(counts=np.full((3, 1), k), flux_per_bin=np.ones(1)))[:, 0]
    assert np.sum(w * (A @ u - f) ** 2) == pytest.approx(k * np.sum((A @ u - f) ** 2))


def test_builtin_phantoms():
    ph, m = builtin_phantoms("organic_spheres_like", 64)
    assert sorted(np.unique(ph.labels).tolist()) == [0, 1, 2, 3]
    assert m.channels == 3
    ph, m = builtin_phantoms("shepp_logan_color", 64)
    u = make_multichannel_ground_truth(ph, m)
    assert u.shape == (64, 64, 3)
    # piecewise constant: every label maps to one colour
    for lab in np.unique(ph.labels):
        assert np.unique(u[ph.labels == lab], axis=0).shape[0] == 1
    a, _ = builtin_phantoms("geocore_like", 64)
    b, _ = builtin_phantoms("geocore_like", 64)
    assert np.bincount(a.labels.ravel()).tolist() == np.bincount(b.labels.ravel()).tolist()
    with pytest.raises(ValueError):
        builtin_phantoms("nope", 64)
    with pytest.raises(ValueError):
        builtin_phantoms("geocore_like", 16)


def test_background_and_fat_muscle_curves():
    _, m = builtin_phantoms("organic_spheres_like", 32)
    assert np.all(m.lac[0] == 0)
    assert np.all(np.diff(m.lac[1:], axis=1) <= 0)          # decreasing curves
    fat, muscle = m.lac[1], m.lac[2]
    gap = np.abs(fat - muscle) / muscle
    assert gap[-1] < 0.25 and gap[-1] < gap[0]


def test_noiseless_round_trip_one_energy_per_bin():
    spec = SpectrumSpec(40, 42, 120, channels=3, bins=((40, 40), (41, 41), (42, 42)))
    ph, m = builtin_phantoms("organic_spheres_like", 32, spec)
    assert np.all(np.diff(m.bin_edges) == 1)
    A = build_operator(Geometry(mode="fan", n=32, detectors=48, angles=9, domain_width=1.0,
                                detector_width=2.0))
    u = make_multichannel_ground_truth(ph, m)
    sino = log_transform(simulate_counts(spectral_volume(ph, m), A, m))
    Au = A.apply(u.reshape(-1, 3))
    assert np.max(np.abs(sino.logdata - Au)) <= 1e-10


def test_poisson_determinism_and_weights():
    ph, m = builtin_phantoms("organic_spheres_like", 32)
    A = build_operator(Geometry(mode="fan", n=32, detectors=24, angles=5))
    vol = spectral_volume(ph, m)
    a = simulate_counts(vol, A, m, noise="poisson", seed=11)
    b = simulate_counts(vol, A, m, noise="poisson", seed=11)
    c = simulate_counts(vol, A, m, noise="poisson", seed=12)
    assert a.counts.tobytes() == b.counts.tobytes()
    assert not np.array_equal(a.counts, c.counts)
    assert np.all(a.counts == np.round(a.counts)) and np.all(a.counts >= 0)
    assert np.all(pwls_weights(a) >= 1)
    with pytest.raises(ValueError):
        simulate_counts(vol, A, m, noise="poisson")


def test_monotonicity():
    rng = np.random.default_rng(5)
    e = np.arange(30.0, 40.0)
    m = model(e, rng.random(10) * 100, [0, 5, 10], [np.zeros(10)])
    A = op(rng.random((6, 9)) * (rng.random((6, 9)) < 0.6))
    for _ in range(20):
        u = rng.random((3, 3, 10))
        more = u + rng.random((3, 3, 10)) * (rng.random((3, 3, 10)) < 0.5)
        assert np.all(expected_counts(more, A, m) <= expected_counts(u, A, m))


def test_array_and_label_files(tmp_path):
    u = np.arange(24.0).reshape(2, 3, 4)
    msio.write_array(tmp_path / "u.msimg", u)
    blob = (tmp_path / "u.msimg").read_bytes()
    assert blob[:6] == b"MSIMG1"
    assert np.frombuffer(blob, "<u8", 4, 6).tolist() == [3, 2, 3, 4]
    np.testing.assert_array_equal(msio.read_array(tmp_path / "u.msimg"), u)
    msio.write_array(tmp_path / "f.mssin", u[0], msio.SINO_MAGIC)
    with pytest.raises(ValueError):
        msio.read_array(tmp_path / "f.mssin", msio.IMAGE_MAGIC)
    labels = builtin_phantoms("geocore_like", 32)[0].labels
    msio.write_labels_pgm(tmp_path / "l.pgm", labels)
    np.testing.assert_array_equal(msio.read_pgm(tmp_path / "l.pgm"), labels)
