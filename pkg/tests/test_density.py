import numpy as np
import pytest

from bhtbp.density import (
    DIRAC_GRID,
    MASS_FLOOR,
    ContinuousDensity,
    DegenerateMessageError,
    Grid,
    SpikedDensity,
    convolve,
    convolve_spiked,
    evaluate_shifted,
    gaussian_on_grid,
    normalize,
    product_spiked,
    reflect,
    spike_and_slab_prior,
    total_variation,
)


def direct_convolve(a, b):
    """Reference O(G^2) linear convolution of mass vectors."""
    out = np.zeros(len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        out[i : i + len(b)] += ai * b
    return out


def random_density(rng, grid):
    mass = rng.random(grid.points)
    return normalize(ContinuousDensity(grid, mass))


def random_spiked(rng, grid):
    mass = rng.random(grid.points)
    return normalize(SpikedDensity(rng.random(), ContinuousDensity(grid, mass)))


# -- Grid ----------------------------------------------------------------

def test_grid_center_and_spacing():
    g = Grid(4.0, 9)
    assert g.spacing == pytest.approx(1.0)
    assert g.centers()[g.zero_index] == 0.0
    assert g.centers()[0] == -4.0 and g.centers()[-1] == 4.0


def test_grid_rejects_even_points():
    with pytest.raises(ValueError):
        Grid(1.0, 8)


def test_single_point_grid_is_dirac():
    assert DIRAC_GRID.points == 1
    assert DIRAC_GRID.spacing == 0.0


# -- gaussian_on_grid ------------------------------------------------------

def test_gaussian_masses_symmetric():
    g = Grid(4.0, 65)
    d = gaussian_on_grid(1.0, g)
    np.testing.assert_allclose(d.mass, d.mass[::-1], atol=0)
    assert d.total() == pytest.approx(1.0, abs=1e-12)


def test_gaussian_huge_std_is_nearly_uniform():
    g = Grid(1.0, 33)
    d = gaussian_on_grid(1e6, g)
    assert d.mass.max() / d.mass.min() == pytest.approx(1.0, abs=1e-6)


def test_gaussian_tiny_std_single_bin():
    g = Grid(1.0, 33)
    d = gaussian_on_grid(1e-9, g)
    assert d.mass[g.zero_index] == pytest.approx(1.0)


def test_gaussian_second_moment_matches_closed_form():
    # criterion: within 0.5% at G=513, R=4*std
    std = 10.0
    g = Grid(4 * std, 513)
    d = gaussian_on_grid(std, g)
    second = float(np.sum(d.mass * g.centers() ** 2))
    assert second == pytest.approx(std**2, rel=5e-3)


# -- normalize -------------------------------------------------------------

def test_normalize_idempotent_and_scale_invariant():
    rng = np.random.default_rng(0)
    g = Grid(2.0, 17)
    d = random_spiked(rng, g)
    again = normalize(d)
    assert total_variation(d, again) < 1e-15
    scaled = SpikedDensity(2 * d.spike_weight, ContinuousDensity(g, 2 * d.cont.mass))
    assert total_variation(normalize(scaled), d) < 1e-15


def test_normalize_preserves_spike_cont_ratio():
    g = Grid(1.0, 5)
    d = SpikedDensity(0.2, ContinuousDensity(g, np.full(5, 0.06)))  # cont total 0.3
    nd = normalize(d)
    assert nd.spike_weight == pytest.approx(0.4)
    assert nd.cont.total() == pytest.approx(0.6)


def test_normalize_degenerate_raises():
    g = Grid(1.0, 5)
    with pytest.raises(DegenerateMessageError):
        normalize(ContinuousDensity(g, np.zeros(5)))


# -- product_spiked ---------------------------------------------------------

def test_product_uniform_factor_is_identity():
    rng = np.random.default_rng(1)
    g = Grid(2.0, 33)
    base = random_spiked(rng, g)
    uniform = ContinuousDensity(g, np.full(33, 1.0 / 33))
    out = product_spiked(base, [uniform, uniform])
    assert total_variation(out, base) < 1e-12


def test_product_pure_spike_absorbs_factors():
    rng = np.random.default_rng(2)
    g = Grid(2.0, 33)
    base = SpikedDensity(1.0, ContinuousDensity(g, np.zeros(33)))
    out = product_spiked(base, [random_density(rng, g)])
    assert out.spike_weight == pytest.approx(1.0)


def test_product_three_bin_hand_example():
    g = Grid(1.0, 3)
    base = SpikedDensity(0.5, ContinuousDensity(g, np.array([0.25, 0.0, 0.25])))
    factor = ContinuousDensity(g, np.array([0.2, 0.6, 0.2]))
    out = product_spiked(base, [factor])
    # unnormalized: spike 0.5*0.6 = 0.3, cont [0.05, 0, 0.05]; total 0.4
    assert out.spike_weight == pytest.approx(0.75)
    np.testing.assert_allclose(out.cont.mass, [0.125, 0.0, 0.125], atol=1e-12)


def test_product_invariant_to_factor_rescaling():
    rng = np.random.default_rng(3)
    g = Grid(2.0, 17)
    base = random_spiked(rng, g)
    f = random_density(rng, g)
    scaled = ContinuousDensity(g, 37.0 * f.mass)
    assert total_variation(product_spiked(base, [f]), product_spiked(base, [scaled])) < 1e-12


def test_product_requires_same_grid():
    rng = np.random.default_rng(4)
    base = random_spiked(rng, Grid(2.0, 17))
    with pytest.raises(ValueError):
        product_spiked(base, [random_density(rng, Grid(2.0, 33))])


# -- convolve ---------------------------------------------------------------

def test_convolve_identity_element():
    rng = np.random.default_rng(5)
    d = random_density(rng, Grid(2.0, 17))
    unit = ContinuousDensity(DIRAC_GRID, np.ones(1))
    out = convolve(d, unit)
    assert out.grid == d.grid
    np.testing.assert_allclose(out.mass, d.mass, atol=1e-14)


def test_convolve_boxes_make_triangle_and_match_direct():
    g = Grid(1.0, 5)
    box = normalize(ContinuousDensity(g, np.ones(5)))
    out = convolve(box, box)
    ref = direct_convolve(box.mass, box.mass)
    ref /= ref.sum()
    assert out.grid.points == 9
    assert out.grid.half_range == pytest.approx(2.0)
    np.testing.assert_allclose(out.mass, ref, atol=1e-10)
    assert np.argmax(out.mass) == out.grid.zero_index


@pytest.mark.parametrize("points", [129, 513, 1025])
def test_convolve_matches_direct_reference(points):
    rng = np.random.default_rng(points)
    g = Grid(4.0, points)
    a = random_density(rng, g)
    b = random_density(rng, g)
    out = convolve(a, b)
    ref = direct_convolve(a.mass, b.mass)
    ref /= ref.sum()
    assert np.abs(out.mass - ref).max() < 1e-10


def test_convolve_gaussians_closed_form():
    s1, s2 = 1.0, 2.0
    g1 = Grid(8 * s1, 513)
    g2 = Grid.from_spacing(g1.spacing, 1025)
    a = gaussian_on_grid(s1, g1)
    b = gaussian_on_grid(s2, g2)
    out = convolve(a, b)
    ref = gaussian_on_grid(np.hypot(s1, s2), out.grid)
    assert total_variation(out, ref) < 1e-3


def test_convolve_commutative_associative():
    rng = np.random.default_rng(6)
    g = Grid(2.0, 33)
    a, b, c = (random_density(rng, g) for _ in range(3))
    ab = convolve(a, b)
    ba = convolve(b, a)
    assert total_variation(ab, ba) < 1e-9
    left = convolve(convolve(a, b), c)
    right = convolve(a, convolve(b, c))
    assert total_variation(left, right) < 1e-9


def test_convolve_spacing_mismatch():
    with pytest.raises(ValueError):
        convolve(
            ContinuousDensity(Grid(1.0, 5), np.ones(5)),
            ContinuousDensity(Grid(1.0, 9), np.ones(9)),
        )


# -- convolve_spiked ----------------------------------------------------------

def test_convolve_spiked_pure_spike_returns_other():
    rng = np.random.default_rng(7)
    g = Grid(2.0, 17)
    b = random_density(rng, g)
    spike = SpikedDensity(1.0, ContinuousDensity(g, np.zeros(17)))
    out = convolve_spiked(spike, b)
    mid = slice(g.zero_index, g.zero_index + 17)
    np.testing.assert_allclose(out.mass[mid], b.mass, atol=1e-14)
    assert out.mass.sum() == pytest.approx(1.0)


def test_convolve_spiked_weightless_spike_reduces_to_convolve():
    rng = np.random.default_rng(8)
    g = Grid(2.0, 17)
    a = SpikedDensity(0.0, random_density(rng, g))
    b = random_density(rng, g)
    out = convolve_spiked(a, b)
    ref = convolve(a.cont, b)
    assert total_variation(out, ref) < 1e-12


def test_convolve_spiked_mixture_matches_direct_sum():
    rng = np.random.default_rng(9)
    g = Grid(1.0, 5)
    a = random_spiked(rng, g)
    b = random_density(rng, g)
    out = convolve_spiked(a, b)
    ref = a.spike_weight * np.pad(b.mass, 2) + direct_convolve(a.cont.mass, b.mass)
    ref /= ref.sum()
    np.testing.assert_allclose(out.mass, ref, atol=1e-12)


def test_convolve_spiked_with_spiked_operand():
    rng = np.random.default_rng(10)
    g = Grid(1.0, 5)
    a = random_spiked(rng, g)
    b = random_spiked(rng, g)
    out = convolve_spiked(a, b)
    assert isinstance(out, SpikedDensity)
    assert out.spike_weight == pytest.approx(a.spike_weight * b.spike_weight, rel=1e-12)
    ref = (a.spike_weight * np.pad(b.cont.mass, 2)
           + b.spike_weight * np.pad(a.cont.mass, 2)
           + direct_convolve(a.cont.mass, b.cont.mass))
    total = ref.sum() + a.spike_weight * b.spike_weight
    np.testing.assert_allclose(out.cont.mass, ref / total, atol=1e-12)


# -- reflect -------------------------------------------------------------------

def test_reflect_symmetric_fixed_point_and_involution():
    rng = np.random.default_rng(11)
    g = Grid(2.0, 17)
    sym = gaussian_on_grid(1.0, g)
    sd = SpikedDensity(0.3, ContinuousDensity(g, 0.7 * sym.mass))
    assert total_variation(reflect(sd), sd) < 1e-15
    d = random_spiked(rng, g)
    assert total_variation(reflect(reflect(d)), d) == 0.0
    assert reflect(d).total() == pytest.approx(d.total())


def test_reflect_moves_point_mass():
    g = Grid(2.0, 5)
    mass = np.zeros(5)
    mass[3] = 1.0  # at +1.0
    out = reflect(SpikedDensity(0.0, ContinuousDensity(g, mass)))
    assert out.cont.mass[1] == 1.0  # now at -1.0


# -- evaluate_shifted ------------------------------------------------------------

def test_evaluate_shifted_centered_peak():
    g = Grid(4.0, 129)
    d = gaussian_on_grid(0.25, g)
    out = evaluate_shifted(d, 0.0, +1, g)
    assert np.argmax(out.mass) == g.zero_index


@pytest.mark.parametrize("sign,expect", [(+1, 2.0), (-1, -2.0)])
def test_evaluate_shifted_peak_follows_observation(sign, expect):
    g = Grid(4.0, 129)
    d = gaussian_on_grid(0.25, g)
    out = evaluate_shifted(d, 2.0, sign, g)
    peak = out.grid.centers()[np.argmax(out.mass)]
    assert peak == pytest.approx(expect, abs=g.spacing)


def test_evaluate_shifted_out_of_range_reads_floor():
    g = Grid(1.0, 9)
    d = normalize(ContinuousDensity(g, np.ones(9)))
    out_grid = Grid.from_spacing(g.spacing, 9)
    out = evaluate_shifted(d, 100.0, +1, out_grid)
    # all reads out of range -> floored everywhere -> uniform after normalize
    np.testing.assert_allclose(out.mass, np.full(9, 1.0 / 9), atol=1e-12)


def test_evaluate_shifted_mass_conserving_for_on_grid_shift():
    # query spacing equals grid spacing, so interpolating a single-bin mass
    # splits it between two neighbours but keeps the total
    g = Grid(2.0, 9)
    mass = np.zeros(9)
    mass[4] = 1.0
    d = ContinuousDensity(g, mass)
    out = evaluate_shifted(d, 0.125, +1, g)
    raw_total = np.interp(0.125 - g.centers(), g.centers(), mass, left=0, right=0).sum()
    assert raw_total == pytest.approx(1.0)
    assert out.total() == pytest.approx(1.0)


# -- debug dump -------------------------------------------------------------------

def test_dump_density_writes_pairs():
    import io

    from bhtbp.density import dump_density

    g = Grid(1.0, 3)
    d = SpikedDensity(0.4, ContinuousDensity(g, np.array([0.1, 0.2, 0.3])))
    buf = io.StringIO()
    dump_density(d, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "spike 0.4"
    assert len(lines) == 4
    assert [float(line.split()[0]) for line in lines[1:]] == [-1.0, 0.0, 1.0]


# -- prior ----------------------------------------------------------------------

def test_spike_and_slab_prior_weights():
    g = Grid(40.0, 513)
    prior = spike_and_slab_prior(12 / 128, 10.0, g)
    assert prior.spike_weight == pytest.approx(1 - 12 / 128)
    assert prior.cont.total() == pytest.approx(12 / 128, rel=1e-9)
    assert prior.total() == pytest.approx(1.0, abs=1e-9)
