import numpy as np
import pytest

from sparse_duality.penalties import PenaltyFamily, PenaltyKind

FAMILIES = [PenaltyFamily.lp(0.01), PenaltyFamily.lp(0.5), PenaltyFamily.lp(1.0),
            PenaltyFamily.log_sum(0.1), PenaltyFamily.gaussian(), PenaltyFamily.ard()]


@pytest.mark.parametrize("pen", FAMILIES, ids=str)
@pytest.mark.parametrize("z", [0.04, 1.0, 7.5])
def test_h_is_the_variational_minimum(pen, z):
    # grid over log gamma, independent of the closed forms for gamma_star
    grid = np.exp(np.linspace(-25, 12, 200001))
    if np.isfinite(pen.gamma_max):
        grid = np.append(grid[grid < pen.gamma_max], pen.gamma_max)
    vals = z / grid + pen.log_plus_f(grid)
    best = np.argmin(vals)
    assert vals[best] == pytest.approx(float(pen.h(z)), abs=1e-6)
    assert np.log(grid[best]) == pytest.approx(np.log(float(pen.gamma_star(z))), abs=1e-3)


@pytest.mark.parametrize("pen", [p for p in FAMILIES if p.kind is not PenaltyKind.GAUSSIAN], ids=str)
def test_h_concave_nondecreasing(pen):
    z = np.linspace(1e-3, 10, 400)
    h = pen.h(z)
    assert np.all(np.diff(h) > 0)
    assert np.all(np.diff(h, 2) <= 1e-12)


@pytest.mark.parametrize("pen", FAMILIES, ids=str)
def test_dh_matches_finite_differences(pen):
    z = np.array([0.1, 0.7, 3.0])
    step = 1e-6
    fd = (pen.h(z + step) - pen.h(z - step)) / (2 * step)
    np.testing.assert_allclose(pen.dh(z), fd, rtol=1e-6)
    np.testing.assert_allclose(pen.gamma_star(z), 1.0 / pen.dh(z), rtol=1e-12)


def test_g_at_zero():
    assert PenaltyFamily.lp(0.5).g(0.0) == 0.0
    assert PenaltyFamily.log_sum(0.01).g(0.0) == pytest.approx(np.log(0.01))
    # the flat hyperprior corresponds to the Jeffreys-type log penalty
    assert np.isneginf(PenaltyFamily.ard().g(0.0))


def test_gaussian_f_domain():
    pen = PenaltyFamily.gaussian()
    assert np.isinf(pen.f(np.array([1.5]))[0])
    assert pen.f(np.array([0.5]))[0] == pytest.approx(np.log(2.0))


@pytest.mark.parametrize("text,kind,param", [
    ("lp:0.5", PenaltyKind.LP_NORM, 0.5), ("l1", PenaltyKind.LP_NORM, 1.0),
    ("logsum", PenaltyKind.LOG_SUM, 1e-2), ("ard", PenaltyKind.ARD_FLAT, None),
    ("gaussian", PenaltyKind.GAUSSIAN, None)])
def test_parse(text, kind, param):
    pen = PenaltyFamily.parse(text)
    assert pen.kind is kind and pen.param == param
    assert PenaltyFamily.parse(str(pen)) == pen


@pytest.mark.parametrize("bad", ["lp:0", "lp:2.5", "logsum:-1", "cauchy"])
def test_parse_rejects(bad):
    with pytest.raises(ValueError):
        PenaltyFamily.parse(bad)
