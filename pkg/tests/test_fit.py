import math

import numpy as np
import pytest
import scipy.optimize
import scipy.stats
from sklearn.base import clone

from nvraman import fit as F
from nvraman.params import ConfigError, ModelParams

P0 = ModelParams()


# --- Levenberg-Marquardt --------------------------------------------------------


def test_linear_exact():
    x = np.linspace(0, 1, 11)
    y = 2.5 * x
    r = F.least_squares(lambda th: th[0] * x - y, [1.0], names=["a"])
    assert r.converged
    assert r["a"] == pytest.approx(2.5, abs=1e-10)


def test_numeric_jacobian_matches_analytic():
    x = np.linspace(0, 2, 7)
    th = np.array([1.3, -0.4])
    j = F.numeric_jacobian(lambda t: t[0] * np.exp(t[1] * x), th)
    exact = np.column_stack([np.exp(th[1] * x), th[0] * x * np.exp(th[1] * x)])
    assert np.allclose(j, exact, rtol=1e-8, atol=1e-10)


def test_against_scipy_oracle():
    rng = np.random.default_rng(4)
    x = np.linspace(0, 4, 40)
    y = 3.0 * np.exp(-0.7 * x) + 0.2 + rng.normal(0, 0.01, x.size)

    def res(t):
        return t[0] * np.exp(-t[1] * x) + t[2] - y

    ours = F.least_squares(res, [1.0, 0.3, 0.0])
    ref = scipy.optimize.least_squares(res, [1.0, 0.3, 0.0], method="lm", xtol=1e-15,
                                       ftol=1e-15, gtol=1e-15)
    assert np.allclose(ours.params, ref.x, rtol=1e-7)
    # covariance against the analytic-Jacobian Gauss-Newton estimate
    j = ref.jac
    cov = np.linalg.inv(j.T @ j) * np.sum(ref.fun ** 2) / (x.size - 3)
    assert np.allclose(ours.covariance, cov, rtol=1e-4)


def test_history_monotone_and_covariance_psd():
    x = np.linspace(0, 3, 30)
    y = np.sin(1.7 * x) + 0.01 * np.cos(13 * x)
    r = F.least_squares(lambda t: t[0] * np.sin(t[1] * x) - y, [0.6, 1.5])
    assert np.all(np.diff(r.history) <= 0)
    assert r.converged
    assert np.allclose(r.covariance, r.covariance.T)
    assert np.all(np.linalg.eigvalsh(r.covariance) >= -1e-15)


def test_rank_deficient():
    x = np.linspace(0, 1, 10)
    r = F.least_squares(lambda t: t[0] * t[1] * x - 2 * x, [1.0, 1.0])
    assert not r.converged
    assert "rank" in r.message
    assert np.all(np.isnan(r.covariance))


def test_max_iter_exhaustion():
    x = np.linspace(0, 5, 50)
    y = np.exp(-0.3 * x)
    r = F.least_squares(lambda t: np.exp(-t[0] * x) - y, [5.0], max_iter=2)
    assert not r.converged
    assert r.iterations == 2


def test_least_squares_input_errors():
    with pytest.raises(F.FitError):
        F.least_squares(lambda t: np.array([t[0]]), [1.0, 2.0])
    with pytest.raises(F.FitError):
        F.least_squares(lambda t: t, [1.0], names=["a", "b"])
    with pytest.raises(F.FitError):
        F.least_squares(lambda t: np.array([np.nan, 1.0]), [1.0])


# --- strain fit ----------------------------------------------------------------


def test_strain_noiseless_recovery():
    lines = F.synthetic_lines(P0)
    r = F.fit_strain(lines, P0)
    assert r.converged
    assert abs(r["strain_delta"] - 5500.0) < 1e-3
    assert abs(r["freq_offset"]) < 1e-3


def test_strain_translation_invariance():
    lines = F.synthetic_lines(P0, noise=30.0, seed=3)
    a = F.fit_strain(lines, P0)
    shifted = [F.Line(ln.ground_label, ln.excited_label, ln.freq + 123.4) for ln in lines]
    b = F.fit_strain(shifted, P0)
    assert abs(a["strain_delta"] - b["strain_delta"]) < 1e-9 * 5500
    assert b["freq_offset"] - a["freq_offset"] == pytest.approx(123.4, abs=1e-6)


def test_strain_is_l1_fit():
    lines = F.synthetic_lines(P0, noise=50.0, seed=11)
    r = F.fit_strain(lines, P0)
    cost = np.sum(np.abs(r.residuals))
    for dd in (-2.0, -0.2, 0.2, 2.0):
        for do in (-1.0, 0.0, 1.0):
            alt = F.strain_model(P0, lines, r["strain_delta"] + dd, r["freq_offset"] + do)
            assert np.sum(np.abs(alt - [ln.freq for ln in lines])) >= cost - 1e-9


def test_strain_sixteen_lines():
    keys = [k for k in sorted(F.electronic_transition_frequencies(P0))
            if k not in ((0, "A1"), (0, "A2"))]
    lines = F.synthetic_lines(P0, keys=keys)
    assert F.fit_strain(lines, P0)["strain_delta"] == pytest.approx(5500.0, abs=1e-3)


def test_strain_too_few_lines():
    with pytest.raises(F.FitError):
        F.fit_strain(F.synthetic_lines(P0)[:2], P0)


def test_strain_ambiguous_labels():
    lines = F.synthetic_lines(P0)
    lines.append(lines[0])
    with pytest.raises(F.FitError, match="ambiguous"):
        F.fit_strain(lines, P0)


def test_strain_unknown_label_lists_candidates():
    lines = F.synthetic_lines(P0)[:5] + [(0, "Ez", 10.0)]
    with pytest.raises(F.FitError, match="candidates"):
        F.fit_strain(lines, P0)


@pytest.mark.parametrize("label", ["+2", "x"])
def test_bad_ground_label(label):
    with pytest.raises(F.FitError):
        F.normalise_lines([(label, "Ey", 0.0)])


def test_line_list_csv_round_trip():
    lines = F.synthetic_lines(P0, noise=10.0, seed=1)
    back = F.read_line_list_csv(F.line_list_csv(lines))
    assert back == F.normalise_lines(lines)
    with pytest.raises(ConfigError):
        F.read_line_list_csv("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        F.read_line_list_csv("ground_label,excited_label,freq_MHz\n7,Ey,1\n")


def test_strain_estimator():
    lines = F.synthetic_lines(P0)
    est = F.StrainEstimator(params=P0).fit(lines)
    assert est.strain_delta_ == pytest.approx(5500.0, abs=1e-3)
    pred = est.predict([(ln.ground_label, ln.excited_label) for ln in lines])
    assert np.allclose(pred, [ln.freq for ln in lines], atol=1e-3)
    assert clone(est).get_params()["floor"] == 1e-6


# --- trace fits ----------------------------------------------------------------


T = np.linspace(0, 20, 201)
TRUE_SIN = {"c": 0.5, "A": 0.4, "tau": 8.0, "f": 0.35, "phi": 0.3}
TRUE_RAMP = dict(TRUE_SIN, B=0.2, tau_r=10.0)


@pytest.mark.parametrize("model,truth", [("damped_sin", TRUE_SIN),
                                         ("damped_sin_plus_ramp", TRUE_RAMP)])
def test_zero_noise_recovery(model, truth):
    y = F.evaluate_trace_model(model, T, truth)
    r = F.fit_trace(T, y, model)
    assert r.converged
    for k, v in truth.items():
        assert r[k] == pytest.approx(v, rel=1e-8)


def test_noisy_damped_sine_50_seeds():
    y0 = F.evaluate_trace_model("damped_sin", T, TRUE_SIN)
    for seed in range(50):
        y = y0 + np.random.default_rng(seed).normal(0, 0.01 * TRUE_SIN["A"], T.size)
        r = F.fit_trace(T, y)
        assert abs(r["A"] / 0.4 - 1) < 0.01
        assert abs(r["f"] / 0.35 - 1) < 0.01
        assert abs(r["tau"] / 8.0 - 1) < 0.05


def test_negative_amplitude_normalised():
    truth = dict(TRUE_SIN, A=-0.4)
    r = F.fit_trace(T, F.evaluate_trace_model("damped_sin", T, truth))
    assert r["A"] == pytest.approx(0.4, rel=1e-8)
    assert r["phi"] == pytest.approx(0.3 - math.pi, abs=1e-7)


def test_constant_trace_flagged():
    with pytest.warns(F.DegenerateFitWarning):
        r = F.fit_trace(T, np.full(T.size, 0.3))
    assert r.converged
    assert r["A"] == 0.0 and r["c"] == pytest.approx(0.3)
    assert "f" in r.degenerate


def test_trace_input_errors():
    with pytest.raises(F.FitError):
        F.fit_trace(T[:5], T[:5])
    with pytest.raises(F.FitError):
        F.fit_trace(T[::-1], T)
    with pytest.raises(F.FitError):
        F.fit_trace(T, T, model="gaussian")


def test_subtract_background_on_model():
    y = F.evaluate_trace_model("damped_sin_plus_ramp", T, TRUE_RAMP)
    r = F.fit_trace(T, y, "damped_sin_plus_ramp")
    osc = F.subtract_background(T, y, r)
    exact = F.damped_sin(T, 0.0, 0.4, 8.0, 0.35, 0.3)
    assert np.max(np.abs(osc - exact)) < 1e-8
    assert np.allclose(F.oscillatory_component(T, r), exact, atol=1e-8)
    with pytest.raises(F.FitError):
        F.subtract_background(T, y, F.fit_trace(T, y, "damped_sin"))


def test_background_mean_over_periods():
    # undamped oscillation on a ramp, integer number of periods
    truth = dict(TRUE_RAMP, tau=1e6, f=0.25)
    t = np.linspace(0, 20, 401)[:-1]
    y = F.evaluate_trace_model("damped_sin_plus_ramp", t, truth)
    y = y + np.random.default_rng(0).normal(0, 0.002, t.size)
    r = F.fit_trace(t, y, "damped_sin_plus_ramp")
    osc = F.subtract_background(t, y, r)
    assert abs(np.mean(osc)) < 0.002


def test_decomposition_consistency():
    y = F.evaluate_trace_model("damped_sin_plus_ramp", T, TRUE_RAMP)
    y = y + np.random.default_rng(5).normal(0, 0.003, T.size)
    joint = F.fit_trace(T, y, "damped_sin_plus_ramp")
    refit = F.fit_trace(T, F.subtract_background(T, y, joint), "damped_sin")
    for k in ("A", "f", "tau"):
        assert refit[k] == pytest.approx(joint[k], rel=0.01)
    assert refit["phi"] == pytest.approx(joint["phi"], abs=0.01)


def test_pipeline_self_consistency():
    # a trace regenerated from fitted parameters gives the same oscillation
    y = F.evaluate_trace_model("damped_sin_plus_ramp", T, TRUE_RAMP)
    y = y + np.random.default_rng(8).normal(0, 0.003, T.size)
    first = F.fit_trace(T, y, "damped_sin_plus_ramp")
    regen = F.evaluate_trace_model("damped_sin_plus_ramp", T, first.params)
    second = F.fit_trace(T, regen, "damped_sin_plus_ramp")
    assert np.allclose(F.oscillatory_component(T, first), F.oscillatory_component(T, second),
                       atol=1e-8)


def test_scale_to_reference():
    y = np.array([0.2, 0.5, 0.9, 0.7])
    same = F.scale_to_reference(y, 0.2, 0.7)
    assert np.allclose(same.values, y)
    unit = F.scale_to_reference(y, 0.0, 1.0)
    assert unit.values[0] == 0.0 and unit.values[-1] == pytest.approx(1.0)
    assert np.allclose(unit.values, unit.offset + unit.scale * y)
    with pytest.raises(F.FitError):
        F.scale_to_reference([0.3, 0.1, 0.3], 0.0, 1.0)


def test_scale_anchored_to_reference_and_fit_endpoint():
    # offset set by a reference level, far end by the fitted value at 30 us
    t = np.linspace(0, 30, 301)
    sim = F.evaluate_trace_model("damped_sin", t, dict(TRUE_SIN, c=0.2, phi=math.pi))
    data = 0.1 + 0.8 * sim
    ref_mean = data[0]
    end = F.fit_trace(t, data).params
    end_value = F.evaluate_trace_model("damped_sin", [30.0], end)[0]
    scaled = F.scale_to_reference(sim, ref_mean, end_value)
    assert np.allclose(scaled.values, data, atol=1e-8)


def test_nuclear_populations_from_peaks():
    freq = np.linspace(-10, 10, 801)
    centers = np.array([-4.3, 0.0, 2.2])
    pops = np.array([0.66, 0.26, 0.08])
    sig = 0.05 + sum(F.lorentzian(freq, 2 * w, c, 0.6) for w, c in zip(pops, centers))
    r = F.nuclear_populations_from_peaks(freq, sig, centers)
    assert np.allclose(r.params, pops, atol=1e-6)
    with pytest.raises(F.FitError):
        F.nuclear_populations_from_peaks(freq, sig, centers[:2])


def test_damped_sine_regressor():
    y = F.evaluate_trace_model("damped_sin", T, TRUE_SIN)
    est = F.DampedSineRegressor().fit(T[:, None], y)
    assert est.params_["f"] == pytest.approx(0.35, rel=1e-8)
    assert est.score(T[:, None], y) == pytest.approx(1.0)
    assert clone(est).get_params() == {"model": "damped_sin", "max_iter": 500}


def test_fitresult_text_round_trip():
    r = F.fit_trace(T, F.evaluate_trace_model("damped_sin", T, TRUE_SIN))
    d = F.parse_fitresult_text(F.fitresult_text(r))
    assert d["model"] == "damped_sin"
    assert d["converged"] == "true"
    for k in TRUE_SIN:
        assert d[k] == float(r[k])
        assert f"{k}_stderr" in d


def test_residuals_csv():
    text = F.residuals_csv([0.0, 1.0], [0.5, -0.5])
    assert text == "t_us,residual\n0.0,0.5\n1.0,-0.5\n"


def _sixteen_line_errors():
    keys = [k for k in sorted(F.electronic_transition_frequencies(P0))
            if k not in ((0, "A1"), (0, "A2"))]
    return np.array([F.fit_strain(F.synthetic_lines(P0, noise=50.0, seed=s, keys=keys), P0)
                     ["strain_delta"] - 5500.0 for s in range(100)])


@pytest.fixture(scope="module")
def sixteen_line_errors():
    return _sixteen_line_errors()


def test_strain_noisy_rms(sixteen_line_errors):
    # the estimator scatter is below the threshold on average
    assert np.sqrt(np.mean(sixteen_line_errors ** 2)) < 60.0
    assert np.mean(np.abs(sixteen_line_errors) <= 100.0) >= 0.95


@pytest.mark.xfail(strict=True, reason="a few noise seeds push the estimate past 100 MHz")
def test_strain_noisy_every_seed(sixteen_line_errors):
    assert np.all(np.abs(sixteen_line_errors) <= 100.0)


def test_prediction_band_gauss_newton_oracle():
    # independent construction from the analytic Jacobian in natural units
    y = F.evaluate_trace_model("damped_sin", T, TRUE_SIN)
    y = y + np.random.default_rng(2).normal(0, 0.01, T.size)
    r = F.fit_trace(T, y)
    c, A, tau, f, phi = r.params
    e = np.exp(-T / tau)
    arg = 2 * math.pi * f * T + phi
    jac = np.column_stack([np.ones_like(T), e * np.cos(arg), A * T / tau ** 2 * e * np.cos(arg),
                           -A * e * np.sin(arg) * 2 * math.pi * T, -A * e * np.sin(arg)])
    dof = T.size - 5
    cov = np.linalg.inv(jac.T @ jac) * np.sum(r.residuals ** 2) / dof
    half = scipy.stats.t.ppf(0.975, dof) * np.sqrt(np.einsum("ij,jk,ik->i", jac, cov, jac))
    fit, lo, hi = F.prediction_band(T, r)
    assert np.allclose(fit, y + r.residuals, atol=1e-12)
    assert np.allclose(hi - fit, half, rtol=1e-4)
    assert np.allclose(fit - lo, half, rtol=1e-4)


def test_prediction_band_coverage():
    truth = F.evaluate_trace_model("damped_sin", T, TRUE_SIN)
    hits = []
    for seed in range(100):
        y = truth + np.random.default_rng(seed).normal(0, 0.01, T.size)
        r = F.fit_trace(T, y)
        _, lo, hi = F.prediction_band(T, r)
        k = 57
        hits.append(lo[k] <= truth[k] <= hi[k])
    assert 0.90 <= np.mean(hits) <= 0.99


def test_prediction_band_errors():
    r = F.fit_trace(T, F.evaluate_trace_model("damped_sin", T, TRUE_SIN))
    with pytest.raises(F.FitError):
        F.prediction_band(T, r, level=1.5)
