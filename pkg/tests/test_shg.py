import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pairforge.errors import DegenerateFitError, FitError
from pairforge.shg import (PulseTiming, ShgParams, conversion_ratio, fit_shg, load_power_table,
                           peak_from_average, shg_power)

TIMING = PulseTiming(300e6, 501e-12)


def test_peak_power_of_300mhz_501ps_pump():
    assert peak_from_average(54e-3, TIMING) == pytest.approx(0.3593, abs=1e-3)
    assert TIMING.duty_cycle == pytest.approx(0.1503, rel=1e-3)


def test_timing_validation():
    with pytest.raises(ValueError):
        PulseTiming(1e9, 2e-9)
    with pytest.raises(ValueError):
        PulseTiming(0, 1e-9)
    with pytest.raises(ValueError):
        peak_from_average(-1.0, TIMING)


def test_model_limits():
    p = ShgParams(0.8, 1.5)
    # low power: quadratic, c^3 eta P^2
    assert shg_power(p, 1e-6) == pytest.approx(0.8 ** 3 * 1.5 * 1e-12, rel=1e-6)
    # strong depletion: the output tends to c^2 P
    assert conversion_ratio(p, 1e4) == pytest.approx(0.64, rel=1e-9)
    assert shg_power(p, 0.0) == 0.0
    assert conversion_ratio(p, 0.0) == 0.0


def test_params_validation():
    with pytest.raises(ValueError):
        ShgParams(1.2, 1.0)
    with pytest.raises(ValueError):
        ShgParams(0.5, 0.0)


def _data(params, n=12, pmax=0.4):
    p = np.linspace(0.02, pmax, n)
    return np.column_stack([p, shg_power(params, p)])


def test_noiseless_recovery():
    truth = ShgParams(0.8, 1.572)
    fit = fit_shg(_data(truth))
    assert fit.params.coupling_ratio == pytest.approx(0.8, rel=1e-6)
    assert fit.params.bk_efficiency == pytest.approx(1.572, rel=1e-6)
    assert fit.residual_norm < 1e-9


@given(st.floats(0.3, 1.0), st.floats(0.2, 8.0))
def test_recovery_over_parameter_space(c, eta):
    fit = fit_shg(_data(ShgParams(c, eta), pmax=2.0 / eta))
    assert fit.params.coupling_ratio == pytest.approx(c, rel=1e-6)
    assert fit.params.bk_efficiency == pytest.approx(eta, rel=1e-6)


def test_order_independent(rng):
    d = _data(ShgParams(0.7, 2.0))
    d[:, 1] *= 1 + 0.01 * rng.standard_normal(d.shape[0])
    a = fit_shg(d)
    b = fit_shg(d[rng.permutation(d.shape[0])])
    assert a.params == b.params


def test_noisy_fit_covers_truth(rng):
    truth = ShgParams(0.75, 2.0)
    d = _data(truth, n=40, pmax=1.0)
    d[:, 1] += 2e-4 * rng.standard_normal(d.shape[0])
    fit = fit_shg(d)
    c_sig, e_sig = fit.sigma
    assert abs(fit.params.coupling_ratio - 0.75) < 4 * c_sig
    assert abs(fit.params.bk_efficiency - 2.0) < 4 * e_sig


def test_degenerate_inputs():
    with pytest.raises(DegenerateFitError):
        fit_shg([[0.1, 0.01], [0.2, 0.03]])
    with pytest.raises(DegenerateFitError):
        fit_shg([[0.1, 0.0], [0.2, 0.0], [0.3, 0.0]])
    with pytest.raises(ValueError):
        fit_shg([[0.1, 0.01], [-0.2, 0.03], [0.3, 0.05]])


def test_unphysical_solution_is_reported():
    # output above the input power needs c > 1
    p = np.array([0.1, 0.2, 0.3, 0.4])
    with pytest.raises(FitError) as exc:
        fit_shg(np.column_stack([p, 1.5 * p]))
    assert exc.value.best is not None


def test_power_table(tmp_path):
    f = tmp_path / "shg.csv"
    f.write_text("p_fund,p_shg\n0.1,0.001\n0.2,0.004\n")
    np.testing.assert_allclose(load_power_table(f), [[0.1, 0.001], [0.2, 0.004]])
