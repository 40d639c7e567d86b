import numpy as np
import pytest
from scipy import integrate

from shapelim.envelope import EnvelopeFunctionalTable
from shapelim.experiments.identities import delta1_moment, delta1_moment_quad, identity_suite
from shapelim.experiments.montecarlo import MCRun, compare_to_limit, loglog_slope, mc_mode, mc_pointwise
from shapelim.experiments.perturbation import (
    PerturbationError,
    hellinger2,
    hellinger_rate,
    logconcave_perturbation,
    unimodal_perturbation,
)
from shapelim.experiments.sampling import SamplingError, draw, sample_model
from shapelim.limits import pointwise_constants
from shapelim.model import make_density_model


def test_sampling_is_deterministic():
    u = make_density_model("uniform")
    a, b = sample_model(u, 3, 42), sample_model(u, 3, 42)
    np.testing.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, sample_model(u, 3, 43).points)


def test_gaussian_draws_have_the_right_mean():
    x = draw(make_density_model("gaussian", {"mu": 2.0}), 100_000, np.random.default_rng(1))
    assert abs(x.mean() - 2.0) < 4.0 / np.sqrt(x.size)


def test_quartic_rejection_sampler_fourth_moment():
    x = draw(make_density_model("quartic"), 100_000, np.random.default_rng(2))
    assert np.mean(x**4) == pytest.approx(0.25, rel=0.05)


def test_rescaled_gamma_draws():
    m = make_density_model("gamma", {"shape": 3.0, "rescale": 2.0})
    x = draw(m, 50_000, np.random.default_rng(3))
    assert np.mean(x <= m.mode) == pytest.approx(float(m.cdf(m.mode)), abs=0.01)
    assert issubclass(SamplingError, RuntimeError)


def test_logconcave_perturbation_properties():
    g = make_density_model("gaussian", {"mu": 0.2, "sigma": 1.5})
    fam = logconcave_perturbation(g, 0.1)
    edges = [-np.inf, *fam.knots, np.inf]
    mass = sum(integrate.quad(fam.density, a, b, epsrel=1e-12)[0] for a, b in zip(edges[:-1], edges[1:]))
    assert mass == pytest.approx(1.0, abs=1e-10)
    assert fam.concavity_gap() <= 1e-12
    assert fam.mode == pytest.approx(0.1, abs=1e-14)
    x = np.linspace(-2, 2, 4001)
    assert x[np.argmax(fam.phi(x))] == pytest.approx(fam.mode, abs=1e-3)
    assert 1.0 < fam.c_eps < 10.0
    with pytest.raises(PerturbationError):
        logconcave_perturbation(g, -0.1)


def test_unimodal_perturbation_properties():
    g = make_density_model("gaussian")
    fam = unimodal_perturbation(g, 0.2)
    lo, hi = fam.knots
    mass, _ = integrate.quad(fam.density, lo, hi, epsrel=1e-13)
    base, _ = integrate.quad(g.density, lo, hi, epsrel=1e-13)
    assert mass == pytest.approx(base, rel=1e-12)
    assert fam.right_edge_raised()
    assert fam.density(lo) == pytest.approx(g.density(0.0), rel=1e-15)


def test_hellinger_basics():
    g = make_density_model("gaussian")
    assert hellinger2(g.log_density, g.log_density) == 0.0
    h = make_density_model("gaussian", {"mu": 0.5})
    # closed form for two unit-variance normals
    assert hellinger2(h.log_density, g.log_density) == pytest.approx(1 - np.exp(-0.5**2 / 8), rel=1e-10)
    rep = hellinger_rate(g, [0.02])
    assert np.isnan(rep.exponent) and rep.ratio.shape == (1,)


def test_delta1_moments():
    assert delta1_moment(2, 0.0, 1.0) == pytest.approx(-1.0 / 96.0, rel=1e-15)
    assert delta1_moment(4, -1.0, 1.0) == pytest.approx(-4.0 / 30.0, rel=1e-15)
    assert delta1_moment(3, 0.0, 1.0) == 0.0
    assert delta1_moment_quad(2, 0.0, 1.0) == pytest.approx(-1.0 / 96.0, abs=1e-14)
    rep = identity_suite(seed=1, n_intervals=3, j_max=4)
    assert rep.passed()


def test_loglog_slope():
    n = [100, 1000, 10000]
    assert loglog_slope(n, [3 * k ** -0.4 for k in n]) == pytest.approx(-0.4, abs=1e-12)


@pytest.fixture(scope="module")
def small_run():
    return mc_pointwise(make_density_model("gaussian"), [100, 400], 30, 3, x0=0.25, workers=1)


def test_small_mc_run(small_run, tmp_path):
    run = small_run
    assert run.failure_count == 0
    assert run.raw["f"].shape == (2, 30)
    m = make_density_model("gaussian", {}, 0.25)
    c = pointwise_constants(m)
    assert c.C_k * m.f0 == pytest.approx(c.c_k, rel=1e-13)
    np.testing.assert_allclose(run.standardized["f"][0], 100 ** 0.4 * run.raw["f"][0] / c.c_k)
    run.write(tmp_path / "r.csv", tmp_path / "r.json")
    back = MCRun.read(tmp_path / "r.csv", tmp_path / "r.json")
    for e in ("f", "mode", "sup_f"):
        np.testing.assert_array_equal(back.raw[e], run.raw[e])
        np.testing.assert_array_equal(back.standardized[e], run.standardized[e])
    assert back.summary() == run.summary()


def test_compare_to_limit(small_run):
    f, md = small_run.sample("f"), small_run.sample("mode")
    same = EnvelopeFunctionalTable(2, 3.0, 0.005, f.size, 0, f, np.zeros(f.size), md)
    res = compare_to_limit(small_run, same, estimands=["f", "mode"])
    assert res["rows"]["f"]["ks"] == 0.0 and res["rows"]["mode"]["ks"] == 0.0
    assert np.allclose(res["rows"]["f"]["quantile_deltas"], 0.0)
    k4 = EnvelopeFunctionalTable(4, 2.2, 0.005, f.size, 0, f, f, md)
    with pytest.raises(ValueError):
        compare_to_limit(small_run, k4)
    with pytest.raises(ValueError):
        compare_to_limit(small_run, same, n=999)


def test_mode_run_is_centered_at_the_mode():
    run = mc_mode(make_density_model("gamma", {"shape": 3.0}), [200], 10, 4, workers=1)
    assert run.x0 == 2.0 and run.constants["k_mode"] == 2
    assert np.all(np.isfinite(run.standardized["mode"]))
