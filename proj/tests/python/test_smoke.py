"""Smoke tests for the pybind11 surface: exercise the main operations and a
noiseless end-to-end reconstruction through numpy."""

import numpy as np
import pytest

import cmpstomo as ct


def test_generate_and_transfer_shapes():
    state = ct.random_cmps(d=2, sigma=0.01, eta=0.1, seed=11)
    assert state.d == 2
    assert state.Q.shape == (2, 2)
    tm = ct.build_transfer(state)
    assert tm.T.shape == (4, 4)
    # stationary: largest real part of the spectrum is zero
    evals = np.linalg.eigvals(tm.T)
    assert abs(evals.real.max()) < 1e-10


def test_kq_roundtrip():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    K = 0.5 * (a + a.conj().T)
    R = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    Q = ct.q_from_kr(K, R)
    assert np.max(np.abs(Q + Q.conj().T + R.conj().T @ R)) < 1e-12
    K2 = ct.k_from_qr(Q, R)
    assert np.max(np.abs(K2 - K)) < 1e-10


def test_sample_matches_correlate():
    state = ct.random_cmps(d=2, seed=5)
    sd = ct.spectral_decompose(state)
    dt = ct.nyquist_delta_tau(sd.poles)
    tensor = ct.sample(sd, 3, 4, dt)
    values = np.asarray(tensor.values).reshape(4, 4)
    for l1 in range(4):
        for l2 in range(4):
            direct = ct.correlate(sd, [l1 * dt, l2 * dt])
            assert abs(values[l1, l2] - direct) < 1e-12 * (1 + abs(direct))


def test_pole_estimation_exact():
    state = ct.random_cmps(d=2, seed=21)
    sd = ct.spectral_decompose(state)
    dt = ct.nyquist_delta_tau(sd.poles)
    c2 = ct.sample(sd, 2, 60, dt)
    assert ct.estimate_order(c2.values, 24, 1e-8) == 4
    pe = ct.estimate_poles("ssmpm", c2.values, 4, dt)
    # exclude the stationary pole: its modulus is ~0, so relative errors
    # are only meaningful for the damped ones
    mean_rel, max_rel = ct.pole_error(sd.poles, pe.lambdas, True)
    assert max_rel < 1e-6


def test_end_to_end_reconstruction():
    state = ct.random_cmps(d=2, seed=42)
    sd = ct.spectral_decompose(state)
    dt = ct.nyquist_delta_tau(sd.poles)
    c3 = ct.sample(sd, 3, 60, dt)
    res = ct.reconstruct(c3)
    assert res.md.d == 2
    assert res.md.symmetry_defect < 1e-8
    assert res.cmps is not None
    assert res.cmps.quality.kron_defect < 1e-7

    rebuilt = ct.build_transfer(ct.Cmps(res.cmps.Q_rec, res.cmps.R_rec))
    got = np.linalg.eigvals(rebuilt.T)
    mean_rel, max_rel = ct.pole_error(sd.poles, list(got), True)
    assert max_rel < 1e-6

    # held-out prediction through the MD model
    c4 = ct.sample(sd, 4, 6, dt)
    rep = ct.consistency_check(res.md, c4, 1e-6)
    assert rep.passed
    assert rep.rel_sup < 1e-6


def test_wick_prediction():
    state = ct.random_cmps(d=2, seed=77)
    sd = ct.spectral_decompose(state)
    md = ct.md_from_spectral(sd)
    rm4 = ct.wick_predict(md, 4)
    truth = np.array(
        [
            ct.residue(sd, [k1, k2, k3])
            for k1 in range(4)
            for k2 in range(4)
            for k3 in range(4)
        ]
    )
    got = np.asarray(rm4.residues)
    assert np.max(np.abs(got - truth)) < 1e-10 * np.abs(truth).max()


def test_noise_and_benchmark_runs():
    state = ct.random_cmps(d=2, seed=8)
    sd = ct.spectral_decompose(state)
    dt = ct.nyquist_delta_tau(sd.poles)
    c2 = ct.sample(sd, 2, 100, dt)
    noisy = ct.add_noise(c2, snr=100.0, seed=4)
    assert len(noisy.values) == 100
    reports = ct.run_benchmark("perturb_M", [0.0], 5, 2, mode="naive", sigma=1.0, seed=6)
    assert reports[0].success_rate_mean_criterion == 1.0


def test_file_roundtrip(tmp_path):
    state = ct.random_cmps(d=2, seed=9)
    path = str(tmp_path / "state.json")
    ct.save_cmps(path, state)
    back = ct.load_cmps(path)
    assert np.array_equal(back.Q, state.Q)
    assert np.array_equal(back.R, state.R)


def test_errors_surface_as_exceptions():
    with pytest.raises(ValueError):
        ct.random_cmps(d=0, seed=1)
    state = ct.random_cmps(d=2, seed=2)
    sd = ct.spectral_decompose(state)
    with pytest.raises(ValueError):
        ct.sample(sd, 1, 4, 0.1)  # n < 2
