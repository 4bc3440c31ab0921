import io
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from bhtbp.model import (
    Measurement,
    SignalSpec,
    SparseSignal,
    StateVector,
    dump_instance,
    gen_gaussian_matrix,
    gen_signal,
    gen_sparse_matrix,
    load_instance,
    measure,
    noise_std_for_snr,
    ser,
    truncated_slab_second_moment,
)

SPEC = SignalSpec(n=128, k=12, slab_std=10.0)


# -- gen_signal --------------------------------------------------------------

def test_signal_support_and_magnitude_band():
    rng = np.random.default_rng(0)
    for _ in range(20):
        sig = gen_signal(SPEC, rng)
        assert sig.support.popcount == 12
        mags = np.abs(sig.values[sig.values != 0])
        assert mags.min() >= 2.0 and mags.max() <= 30.0


def test_signal_empty_support():
    sig = gen_signal(SignalSpec(8, 0, 1.0), np.random.default_rng(1))
    assert not sig.values.any()
    assert sig.support.popcount == 0


def test_signal_k_larger_than_n_rejected():
    with pytest.raises(ValueError):
        SignalSpec(4, 5, 1.0)


def quadrature_second_moment(spec):
    lo, hi = spec.mag_lo_ratio * spec.slab_std, spec.mag_hi_ratio * spec.slab_std
    pdf = lambda x: norm.pdf(x, scale=spec.slab_std)
    mass, _ = quad(pdf, lo, hi)
    second, _ = quad(lambda x: x * x * pdf(x), lo, hi)
    return second / mass  # two-sided symmetry: halves cancel


def test_nonzero_second_moment_against_quadrature():
    # 1e6 draws through the rejection sampler vs the quadrature oracle
    big = SignalSpec(n=1_000_000, k=1_000_000, slab_std=10.0)
    sig = gen_signal(big, np.random.default_rng(2))
    expect = quadrature_second_moment(big)
    assert np.mean(sig.values**2) == pytest.approx(expect, rel=2e-3)
    # and the closed form used for ensemble SNR agrees with the quadrature
    assert truncated_slab_second_moment(big) == pytest.approx(expect, rel=1e-9)


# -- gen_sparse_matrix ---------------------------------------------------------

def test_sparse_matrix_column_weight():
    rng = np.random.default_rng(3)
    mat = gen_sparse_matrix(128, 64, 3, rng)
    dense = mat.to_dense()
    np.testing.assert_array_equal((dense != 0).sum(axis=0), np.full(128, 3))
    np.testing.assert_allclose((dense**2).sum(axis=0), np.full(128, 3.0))
    assert set(np.unique(dense)) <= {-1.0, 0.0, 1.0}


def test_sparse_matrix_l_equals_m_hits_every_row():
    mat = gen_sparse_matrix(4, 2, 2, np.random.default_rng(4))
    for rows in mat.col_rows:
        assert sorted(rows) == [0, 1]


def test_sparse_matrix_row_view_matches_columns():
    mat = gen_sparse_matrix(30, 10, 3, np.random.default_rng(5))
    edges_from_cols = {(int(r), j, int(s)) for j in range(30)
                       for r, s in zip(mat.col_rows[j], mat.col_signs[j])}
    edges_from_rows = {(i, int(c), int(s)) for i in range(10)
                       for c, s in zip(mat.row_cols[i], mat.row_signs[i])}
    assert edges_from_cols == edges_from_rows


def test_sparse_matrix_mean_row_degree():
    # combinatorial expectation: n*L/m, checked over many draws
    rng = np.random.default_rng(6)
    n, m, L = 16, 8, 3
    total = 0
    draws = 10_000
    for _ in range(draws):
        mat = gen_sparse_matrix(n, m, L, rng)
        total += len(mat.row_cols[0])
    assert total / draws == pytest.approx(n * L / m, rel=2e-2)


def test_sparse_matrix_deterministic_under_seed():
    a = gen_sparse_matrix(20, 10, 3, np.random.default_rng(7))
    b = gen_sparse_matrix(20, 10, 3, np.random.default_rng(7))
    np.testing.assert_array_equal(a.to_dense(), b.to_dense())


def test_sparse_matrix_rejects_bad_weight():
    with pytest.raises(ValueError):
        gen_sparse_matrix(8, 4, 5, np.random.default_rng(8))


# -- gen_gaussian_matrix ----------------------------------------------------------

def test_gaussian_matrix_column_energy():
    mat = gen_gaussian_matrix(64, 32, 3.0, np.random.default_rng(9))
    np.testing.assert_allclose((mat.entries**2).sum(axis=0), np.full(64, 3.0), atol=1e-12)


def test_gaussian_matrix_single_entry():
    mat = gen_gaussian_matrix(1, 1, 4.0, np.random.default_rng(10))
    assert abs(mat.entries[0, 0]) == pytest.approx(2.0)


def test_orthogonal_matrix_rows_and_energy():
    from bhtbp.model import gen_orthogonal_matrix

    mat = gen_orthogonal_matrix(64, 32, 3.0, np.random.default_rng(30))
    np.testing.assert_allclose((mat.entries**2).sum(axis=0), np.full(64, 3.0), atol=1e-12)
    # before column rescaling the rows are orthonormal; after it they stay
    # near-orthogonal: off-diagonal correlations are small relative to diagonal
    gram = mat.entries @ mat.entries.T
    off = gram - np.diag(np.diag(gram))
    assert np.abs(off).max() < 0.2 * np.diag(gram).min()
    with pytest.raises(ValueError):
        gen_orthogonal_matrix(8, 9, 3.0, np.random.default_rng(31))


def test_gaussian_matrix_coherence_distribution():
    # Monte-Carlo oracle: column-pair coherences match a fresh reference
    # sample of normalized Gaussian pairs in mean and spread.
    rng = np.random.default_rng(11)
    m = 32
    mats = [gen_gaussian_matrix(40, m, 3.0, rng) for _ in range(30)]
    coh = []
    for mat in mats:
        g = mat.entries / np.linalg.norm(mat.entries, axis=0)
        c = np.abs(g.T @ g)
        coh.extend(c[np.triu_indices_from(c, k=1)])
    coh = np.asarray(coh)
    ref_rng = np.random.default_rng(12)
    u = ref_rng.standard_normal((m, 5000))
    v = ref_rng.standard_normal((m, 5000))
    ref = np.abs(np.einsum("ij,ij->j", u / np.linalg.norm(u, axis=0), v / np.linalg.norm(v, axis=0)))
    assert coh.mean() == pytest.approx(ref.mean(), rel=5e-2)
    assert coh.std() == pytest.approx(ref.std(), rel=1e-1)


# -- noise_std_for_snr -------------------------------------------------------------

def test_noise_std_formula_value():
    assert noise_std_for_snr(1000.0, 100, 10.0) == pytest.approx(1.0)


def test_noise_std_zero_energy():
    assert noise_std_for_snr(0.0, 10, 20.0) == 0.0


def test_noise_std_round_trip():
    rng = np.random.default_rng(13)
    for _ in range(50):
        energy = float(rng.uniform(0.1, 1e4))
        m = int(rng.integers(1, 200))
        snr = float(rng.uniform(-10, 60))
        sigma = noise_std_for_snr(energy, m, snr)
        back = 10.0 * math.log10(energy / (m * sigma**2))
        assert back == pytest.approx(snr, abs=1e-12)


def test_noise_std_infinite_snr_flag():
    assert noise_std_for_snr(123.0, 7, math.inf) == 0.0


def test_noise_std_negative_energy():
    with pytest.raises(ValueError):
        noise_std_for_snr(-1.0, 4, 10.0)


# -- measure --------------------------------------------------------------------

def test_measure_noiseless_flag_exact():
    rng = np.random.default_rng(14)
    mat = gen_sparse_matrix(16, 8, 2, rng)
    sig = gen_signal(SignalSpec(16, 3, 5.0), rng)
    meas = measure(mat, sig, math.inf, rng)
    np.testing.assert_array_equal(meas.z, mat.matvec(sig.values))
    assert meas.noise_std == 0.0


def test_measure_zero_signal_finite_snr():
    rng = np.random.default_rng(15)
    mat = gen_sparse_matrix(16, 8, 2, rng)
    sig = gen_signal(SignalSpec(16, 0, 5.0), rng)
    meas = measure(mat, sig, 20.0, rng)
    np.testing.assert_array_equal(meas.z, np.zeros(8))


def test_measure_noise_variance():
    rng = np.random.default_rng(16)
    mat = gen_sparse_matrix(8, 4, 2, rng)
    sig = gen_signal(SignalSpec(8, 2, 5.0), rng)
    clean = mat.matvec(sig.values)
    trials = 100_000
    sigma = None
    sq = 0.0
    for _ in range(trials):
        meas = measure(mat, sig, 10.0, rng)
        sigma = meas.noise_std
        sq += float(((meas.z - clean) ** 2).sum())
    var = sq / (trials * 4)
    assert var == pytest.approx(sigma**2, rel=2e-2)


def test_measure_deterministic_under_seed():
    mat = gen_sparse_matrix(16, 8, 2, np.random.default_rng(17))
    sig = gen_signal(SignalSpec(16, 3, 5.0), np.random.default_rng(18))
    a = measure(mat, sig, 15.0, np.random.default_rng(19))
    b = measure(mat, sig, 15.0, np.random.default_rng(19))
    np.testing.assert_array_equal(a.z, b.z)


def test_measure_ensemble_energy_override():
    rng = np.random.default_rng(20)
    mat = gen_sparse_matrix(16, 8, 2, rng)
    sig = gen_signal(SignalSpec(16, 3, 5.0), rng)
    meas = measure(mat, sig, 20.0, rng, energy=800.0)
    assert meas.noise_std == pytest.approx(noise_std_for_snr(800.0, 8, 20.0))


# -- ser ---------------------------------------------------------------------------

def bits(*b):
    return StateVector(np.array(b, dtype=np.uint8))


def test_ser_identity_and_complement():
    x = bits(1, 0, 1, 1, 0, 0, 0, 1)
    assert ser(x, x) == 0.0
    comp = StateVector(1 - x.bits)
    assert ser(x, comp) == 1.0


def test_ser_single_flip_reference_level():
    rng = np.random.default_rng(21)
    truth = StateVector((rng.random(128) < 0.1).astype(np.uint8))
    flipped = truth.bits.copy()
    flipped[37] ^= 1
    assert ser(StateVector(flipped), truth) == pytest.approx(1 / 128)


def test_ser_symmetric_and_triangle():
    rng = np.random.default_rng(22)
    for _ in range(100):
        a, b, c = (StateVector((rng.random(32) < 0.5).astype(np.uint8)) for _ in range(3))
        assert ser(a, b) == ser(b, a)
        assert ser(a, c) <= ser(a, b) + ser(b, c) + 1e-15


def test_ser_length_mismatch():
    with pytest.raises(ValueError):
        ser(bits(0, 1), bits(0, 1, 0))


# -- types and serialization ---------------------------------------------------------

def test_state_vector_rejects_non_binary():
    with pytest.raises(ValueError):
        StateVector(np.array([0, 2, 1]))


def test_sparse_signal_support_consistency_enforced():
    with pytest.raises(ValueError):
        SparseSignal(np.array([1.0, 0.0]), bits(1, 1))


def test_measurement_rejects_negative_noise():
    with pytest.raises(ValueError):
        Measurement(np.zeros(3), -0.5)


def test_instance_dump_load_round_trip():
    rng = np.random.default_rng(23)
    mat = gen_sparse_matrix(12, 6, 2, rng)
    sig = gen_signal(SignalSpec(12, 3, 10.0), rng)
    buf = io.StringIO()
    dump_instance(buf, mat, sig, seed=99)
    buf.seek(0)
    mat2, sig2, seed = load_instance(buf)
    assert seed == 99
    np.testing.assert_array_equal(mat.to_dense(), mat2.to_dense())
    np.testing.assert_array_equal(sig.values, sig2.values)
    np.testing.assert_array_equal(sig.support.bits, sig2.support.bits)
