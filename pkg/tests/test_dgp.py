import io
import itertools

import numpy as np
import pytest
from scipy import integrate, stats

from mtewelfare import (ConfigurationError, DomainError, LatentSelectionSpec, normalize_selection,
                        population_moments, simulate, true_integrated_mte, true_mte)
from mtewelfare.dgp import EPS_P, Dataset, read_dataset, write_dataset

from conftest import make_spec


def test_empty_sample(ref):
    ds = simulate(ref, 0, seed=7)
    assert ds.n == 0 and len(ds) == 0
    assert ds.x.shape == (0, 2)


def test_zero_effect_no_noise():
    spec = make_spec(beta1=[0.0, 0.0], rho0=0.0, rho1=0.0, noise_sd=0.0)
    ds = simulate(spec, 500, seed=3)
    np.testing.assert_array_equal(ds.y0, ds.y1)
    np.testing.assert_array_equal(ds.y0, ds.x @ spec.beta0)


def test_observed_outcome_switches_on_treatment(ref):
    ds = simulate(ref, 20_000, seed=11)
    np.testing.assert_array_equal(ds.y, np.where(ds.d == 1, ds.y1, ds.y0))
    assert set(np.unique(ds.d)) <= {0, 1}
    assert np.all((ds.u >= 0) & (ds.u <= 1))


def test_deterministic_in_seed(ref):
    a, b = simulate(ref, 100, seed=5), simulate(ref, 100, seed=5)
    np.testing.assert_array_equal(a.y, b.y)
    assert not np.array_equal(a.y, simulate(ref, 100, seed=6).y)


def test_reference_uniform_latent_and_treatment_rate(ref):
    ds = simulate(ref, 100_000, seed=1)
    assert stats.kstest(ds.u, "uniform").statistic <= 0.01
    # E[nu(Z)] by enumeration over the six support cells
    e_nu = sum(0.5 * (1 / 3) * (0.2 + 0.4 * z0 + 0.1 * x1)
               for z0, x1 in itertools.product([0, 1], [-1, 0, 1]))
    assert e_nu == pytest.approx(0.4, abs=1e-15)
    se = np.sqrt(e_nu * (1 - e_nu) / ds.n)
    assert abs(ds.d.mean() - e_nu) <= 3 * se


def test_conditional_uniformity_and_selection_per_cell(ref):
    ds = simulate(ref, 100_000, seed=1)
    cells = ref.cells()
    within = 0
    for z0, x, nu in zip(cells.z0, cells.x, cells.nu):
        rows = (ds.z0 == z0) & (ds.x[:, 1] == x[1])
        assert stats.kstest(ds.u[rows], "uniform").statistic <= 0.02
        within += abs(ds.d[rows].mean() - nu) <= 3 * np.sqrt(nu * (1 - nu) / rows.sum())
    assert within >= 5


def test_true_mte_values(ref):
    assert true_mte(ref, 0.5, [1, 0]) == pytest.approx(0.3, abs=1e-15)
    assert true_mte(ref, 0.0, [1, 1]) == pytest.approx(0.3, abs=1e-15)
    zero = make_spec(beta1=[0.0, 0.0], rho1=0.5)
    assert true_mte(zero, 0.77, [1, -1]) == 0.0


def test_true_mte_matches_simulated_conditional_effect(ref):
    # oracle: average Y1 - Y0 over simulated latents near the margin u
    ds = simulate(ref, 400_000, seed=2)
    for u0, x1 in [(0.1, -1.0), (0.5, 0.0), (0.9, 1.0)]:
        rows = (np.abs(ds.u - u0) < 0.01) & (ds.x[:, 1] == x1)
        effect = ds.y1[rows] - ds.y0[rows]
        se = effect.std(ddof=1) / np.sqrt(rows.sum())
        assert abs(effect.mean() - true_mte(ref, u0, [1, x1])) < 4 * se + 0.015


def test_true_mte_rejects_off_support(ref):
    with pytest.raises(DomainError):
        true_mte(ref, 0.5, [1, 2])
    with pytest.raises(DomainError):
        true_integrated_mte(ref, [1, 0.5])


@pytest.mark.parametrize("x1,expected", [(1, 0.8), (-1, -0.2), (0, 0.3)])
def test_true_integrated_mte(ref, x1, expected):
    assert true_integrated_mte(ref, [1, x1]) == pytest.approx(expected, abs=1e-15)


def test_integrated_mte_equals_quadrature(ref):
    for x in ref.x_support:
        quad, _ = integrate.fixed_quad(lambda u: true_mte(ref, u, x), 0.0, 1.0, n=128)
        assert abs(quad - true_integrated_mte(ref, x)) <= 1e-10
    assert true_integrated_mte(make_spec(beta1=[0.0, 0.0]), [1, 1]) == 0.0


def test_spec_validation_names_offending_cell():
    with pytest.raises(ConfigurationError, match=r"z0=1.0, x=\[1.0, 1.0\]"):
        make_spec(gamma=[0.2, 0.7, 0.1])
    with pytest.raises(ConfigurationError, match="m_bar"):
        make_spec(beta1=[0.3, 0.9])
    with pytest.raises(ConfigurationError, match="first coordinate"):
        make_spec(x_support=[[0, 1], [1, 0], [1, 1]])
    with pytest.raises(ConfigurationError, match="x_probs"):
        make_spec(x_probs=[0.5, 0.5, 0.5])


# --- normalisation -------------------------------------------------------------

def test_normalize_uniform_is_identity():
    lat = LatentSelectionSpec("uniform", {"a": 0.0, "b": 1.0}, threshold=lambda z: z)
    nu, F = normalize_selection(lat, 0.37)
    assert nu == pytest.approx(0.37, abs=1e-15)
    u = np.linspace(0, 1, 11)
    np.testing.assert_allclose(F(u), u, atol=1e-15)


def test_normalize_exponential_closed_form():
    lat = LatentSelectionSpec("exponential", {"rate": 1.0}, threshold=lambda z: 1.0)
    nu, _ = normalize_selection(lat, None)
    assert nu == pytest.approx(1 - np.exp(-1), abs=1e-15)
    assert round(nu, 6) == 0.632121


@pytest.mark.parametrize("family,params", [("normal", {}), ("exponential", {"rate": 2.0}),
                                           ("uniform", {"a": -3.0, "b": 2.0})])
def test_normalize_preserves_indicator_and_uniformises(family, params):
    lat = LatentSelectionSpec(family, params, threshold=lambda z: 0.5)
    u_tilde = lat.draw(100_000, np.random.default_rng(0))
    nu, F = normalize_selection(lat, None)
    before = 0.5 >= u_tilde
    after = nu >= F(u_tilde)
    assert np.array_equal(before, after)
    assert stats.kstest(F(u_tilde), "uniform").statistic <= 0.01


def test_normalize_rejects_unknown_family():
    with pytest.raises(ConfigurationError):
        LatentSelectionSpec("cauchy")


# --- moments --------------------------------------------------------------------

def test_population_moments_zero():
    spec = make_spec(beta1=[0.0, 0.0], rho0=0.0, rho1=0.0)
    mom = population_moments(spec)
    assert mom.e_y0 == mom.e_y1 == mom.e_y == 0.0


def test_population_moments_reference(ref):
    mom = population_moments(ref)
    assert mom.e_y0 == pytest.approx(0.0, abs=1e-15)
    assert mom.e_y1 == pytest.approx(0.3, abs=1e-15)


def test_cell_means_match_quadrature(ref):
    # oracle: integrate the structural outcome over U in each selection region
    mom = population_moments(ref)
    for k in range(len(mom.cells)):
        x, nu = mom.cells.x[k], mom.cells.nu[k]
        y1 = lambda u: x @ ref.beta1 + ref.rho1 * (u - 0.5)
        y0 = lambda u: x @ ref.beta0 + ref.rho0 * (u - 0.5)
        treated = integrate.quad(y1, 0, nu)[0]
        untreated = integrate.quad(y0, nu, 1)[0]
        assert mom.mean_y[k] == pytest.approx(treated + untreated, abs=1e-12)
        assert mom.mean_y1_treated[k] == pytest.approx(treated / nu, abs=1e-12)
        assert mom.mean_y0_untreated[k] == pytest.approx(untreated / (1 - nu), abs=1e-12)


def test_e_y_matches_simulation(ref):
    ds = simulate(ref, 200_000, seed=4)
    se = ds.y.std(ddof=1) / np.sqrt(ds.n)
    assert abs(ds.y.mean() - population_moments(ref).e_y) < 4 * se


# --- delimited text ----------------------------------------------------------------

@pytest.mark.parametrize("latents", [True, False])
def test_dataset_round_trip(ref, latents):
    ds = simulate(ref, 257, seed=9, retain_latents=latents)
    buf = io.StringIO()
    write_dataset(ds, buf, provenance="test")
    text = buf.getvalue()
    assert text.splitlines()[1] == ("y,d,z0,x1,y0,y1,u" if latents else "y,d,z0,x1")
    back = read_dataset(io.StringIO(text))
    for name in ("y", "d", "z0", "x") + (("y0", "y1", "u") if latents else ()):
        np.testing.assert_array_equal(getattr(back, name), getattr(ds, name))
    assert back.latents_retained == latents


def test_read_dataset_rejects_bad_rows():
    with pytest.raises(DomainError):
        read_dataset("y,d,z0,x1\n1.0,2,0,1\n")
    with pytest.raises(DomainError):
        read_dataset("y,d,z0,x1\n1.0,1,0\n")
    with pytest.raises(DomainError):
        read_dataset("a,b\n")


def test_observation_access(ref):
    ds = simulate(ref, 3, seed=1)
    obs = ds[1]
    assert obs.y == ds.y[1] and obs.d in (0, 1) and obs.u == ds.u[1]
    assert len(list(ds)) == 3
    with pytest.raises(DomainError):
        Dataset(ds.y, ds.d, ds.z0, ds.x, y0=ds.y0)
