import math

import numpy as np
import pytest

from nvraman import model as M
from nvraman import raman as R
from nvraman.params import TWO_PI, ModelParams

P0 = ModelParams()


@pytest.fixture(scope="module")
def states():
    return M.excited_eigensystem(P0), M.ground_eigensystem(P0)


# --- toy model -----------------------------------------------------------------


def test_dressed_degenerate():
    d = R.dressed_states(0.0, 0.0, 1.0)
    assert d.alpha == pytest.approx(1 / math.sqrt(2))
    assert d.beta == pytest.approx(1 / math.sqrt(2))
    assert d.splitting_delta == pytest.approx(2.0)


@pytest.mark.parametrize("ea,eb", [(0.0, 5.0), (5.0, 0.0)])
def test_dressed_unmixed(ea, eb):
    d = R.dressed_states(ea, eb, 0.0)
    assert {round(abs(d.alpha), 12), round(abs(d.beta), 12)} == {0.0, 1.0}
    assert d.splitting_delta == pytest.approx(5.0)


@pytest.mark.parametrize("ea,eb,lam", [(0, 1000, 1.0), (3, -7, 2.5), (0, 0, -1.0), (1, 1e4, 3)])
def test_dressed_states_match_eigh(ea, eb, lam):
    d = R.dressed_states(ea, eb, lam)
    assert d.alpha ** 2 + d.beta ** 2 == pytest.approx(1.0, abs=1e-12)
    h = np.array([[ea, lam], [lam, eb]], dtype=float)
    plus = np.array([d.alpha, d.beta])
    assert np.allclose(h @ plus, d.energies[0] * plus, atol=1e-9)
    assert d.splitting_delta >= 0
    assert abs(d.alpha * d.beta) * d.splitting_delta == pytest.approx(abs(lam), rel=1e-12)


def test_dressed_weak_admixture():
    d = R.dressed_states(0.0, 1000.0, 1.0)
    assert d.alpha == pytest.approx(1.0 / 1000.0, rel=1e-3)


def test_toy_rabi_far_detuned():
    pair = R.dressed_states(0.0, 0.0, 1.0)
    big = 100 * pair.splitting_delta
    w = R.toy_raman_rabi(3.0, big, pair)
    approx = -9.0 * pair.alpha * pair.beta * pair.splitting_delta / big ** 2
    assert w.real == pytest.approx(approx, rel=0.05)


def test_toy_rabi_unmixed_zero():
    pair = R.dressed_states(0.0, 10.0, 0.0)
    assert R.toy_raman_rabi(1.0, 7.0, pair) == 0


def test_toy_midway_constructive():
    pair = R.dressed_states(0.0, 3.0, 1.0)
    d = pair.splitting_delta
    gamma = 0.7
    ratio = abs(R.toy_raman_rabi(2.0, -d / 2, pair)) / R.toy_pumping_rate(2.0, -d / 2, pair, gamma)
    assert ratio == pytest.approx(R.toy_figure_of_merit(pair, gamma), rel=1e-12)


def test_toy_pumping_limits():
    pair = R.dressed_states(0.0, 0.0, 1.0)
    big = 100 * pair.splitting_delta
    assert R.toy_pumping_rate(2.0, big, pair, 13.0) == pytest.approx(4.0 * 13.0 / big ** 2, rel=0.02)
    assert R.toy_pumping_rate(0.0, big, pair, 13.0) == 0.0


def test_toy_resonance_error():
    pair = R.dressed_states(0.0, 0.0, 1.0)
    with pytest.raises(R.ResonanceError):
        R.toy_raman_rabi(1.0, 0.0, pair)
    with pytest.raises(R.ResonanceError):
        R.toy_pumping_rate(1.0, -pair.splitting_delta, pair, 1.0)


# --- full model --------------------------------------------------------------


def test_strength_label_validation(states):
    ex, _ = states
    with pytest.raises(ValueError):
        R.transition_strengths(ex, R.ground_label(1, 0), R.ground_label(0, 0))
    with pytest.raises(ValueError):
        R.transition_strengths(ex, R.ground_label(0, 2), R.ground_label(1, 0))


def test_strengths_vanish_without_mixing():
    p = ModelParams(lambda_ss=0.0, A_perp_es=0.0, B_perp=0.0)
    ex = M.excited_eigensystem(p)
    for a, b in R.channel_labels():
        assert np.max(np.abs(R.transition_strengths(ex, a, b))) < 1e-12


def test_strength_bounds(states):
    ex, _ = states
    for a, b in R.channel_labels():
        assert np.all(np.abs(R.transition_strengths(ex, a, b)) <= 1)


def test_selection_rule_hierarchy(states):
    ex, _ = states
    summed = {(a.m_I, b.m_I): sum(abs(v) for k, v in R.grouped_strengths(ex, a, b).items()
                                  if k in M.LOWER_BRANCH)
              for a, b in R.channel_labels()}
    same = [summed[(m, m)] for m in (1, 0, -1)]
    down = [summed[(m, m - 1)] for m in (1, 0)]
    other = [v for (ma, mb), v in summed.items() if mb - ma not in (0, -1)]
    assert min(same) > max(down) > max(other)


def test_raman_rabi_scaling_and_single_term(states):
    ex, gr = states
    a, b = R.channel_labels()[0]
    ch = R.make_channel(P0, a, b, R.anchor_frequency(P0, ex, gr, "E1") - 870.0, ex, gr)
    r1 = R.raman_rabi(ch, 1.0).value
    r2 = R.raman_rabi(ch, 2.0).value
    assert r2 == pytest.approx(4 * r1, rel=1e-14)
    j = 3
    single = R.RamanChannel(a, b, ch.C_ab_j[j:j + 1], ch.Delta_j[j:j + 1], ch.gamma_j[j:j + 1])
    assert R.raman_rabi(single, 5.0).value == 25.0 * ch.C_ab_j[j] / ch.Delta_j[j]


def test_raman_rabi_resonance_flag(states):
    ex, gr = states
    a, b = R.channel_labels()[0]
    j = ex.index("Ey", 1)
    f = (ex.eig.values[j] - gr.energy(0, 1)) / TWO_PI + 1.0
    ch = R.make_channel(P0, a, b, f, ex, gr)
    with pytest.warns(R.ResonanceWarning):
        assert R.raman_rabi(ch, 1.0).near_resonance


def test_flipflop_weaker_than_conserving(states):
    ex, gr = states
    (a, b1), (_, b0) = R.channel_labels()[:2]
    p = P0.replace(lambda_Z=0.0)
    ex0, gr0 = M.excited_eigensystem(p), M.ground_eigensystem(p)
    cons = R.evaluate_channel(p, a, b1, -870.0, reference="E1", excited=ex0, ground=gr0)
    flip = R.evaluate_channel(p, a, b0, -870.0, reference="E1", excited=ex0, ground=gr0)
    assert 0 < abs(flip.rabi) < abs(cons.rabi)


def test_pumping_zero_drive(states):
    ex, gr = states
    assert R.pumping_rate(P0, R.ground_label(0, 1), 0.0, [100.0], ex, gr) == 0.0


def test_pumping_on_resonance_peak():
    p = ModelParams(A_par_es=0.0, A_perp_es=0.0)
    ex, gr = M.excited_eigensystem(p), M.ground_eigensystem(p)
    a = R.ground_label(0, 1)
    j = ex.index("Ey", 1)
    c = R.transition_strengths(ex, a, a).real[j]
    g = R.linewidths(p, ex)[j]
    f = (ex.eig.values[j] - gr.energy(0, 1)) / TWO_PI
    rate = R.pumping_rate(p, a, 2.0, [f], ex, gr)
    assert rate == pytest.approx(4 * 4.0 * c / g, rel=1e-3)


def test_pumping_lorentzian_oracle():
    p = ModelParams(A_par_es=0.0, A_perp_es=0.0)
    ex, gr = M.excited_eigensystem(p), M.ground_eigensystem(p)
    a = R.ground_label(0, 1)
    j = ex.index("Ey", 1)
    c = R.transition_strengths(ex, a, a).real[j]
    g = R.linewidths(p, ex)[j]
    f0 = (ex.eig.values[j] - gr.energy(0, 1)) / TWO_PI
    for d in (5.0, 20.0, 40.0):
        rate = R.pumping_rate(p, a, 1.0, [f0 + d], ex, gr)
        assert rate == pytest.approx(c * g / ((g / 2) ** 2 + d ** 2), rel=2e-3)


def test_isc_rates_zero_gives_uniform_linewidth(states):
    ex, _ = states
    g = R.linewidths(P0.replace(isc_A1=0.0, isc_E12=0.0), ex)
    assert np.allclose(g, P0.gamma_rad + P0.gamma_phonon)
    assert np.all(R.linewidths(P0, ex) >= P0.gamma_rad)
    with pytest.raises(ValueError):
        R.effective_isc_rates(ex, -1.0, 1.0)


def test_fom_omega_invariance(states):
    ex, gr = states
    a, b = R.channel_labels()[1]
    ratios = [R.evaluate_channel(P0, a, b, 150.0, omega=w, excited=ex, ground=gr).ratio
              for w in (0.1, 1.0, 10.0, 100.0)]
    assert np.allclose(ratios, ratios[0], rtol=1e-9, atol=0)


def test_fom_sweep_parallel_deterministic():
    ch = R.channel_labels()[0]
    grid = np.linspace(-500, 500, 41)
    serial = R.figure_of_merit_sweep(P0, ch, grid)
    parallel = R.figure_of_merit_sweep(P0, ch, grid, workers=4)
    assert R.fom_csv(serial) == R.fom_csv(parallel)


def test_fom_csv_format():
    pts = R.figure_of_merit_sweep(P0, R.channel_labels()[0], [0.0, 1.0])
    text = R.fom_csv(pts)
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(R.FOM_HEADER)
    assert len(lines) == 3
    assert float(lines[1].split(",")[-1]) == pytest.approx(pts[0].ratio)


def test_misalignment_aligned_field_flat():
    out = R.misalignment_sweep(P0, [0.0], np.linspace(0, 2 * math.pi, 7))
    for key in ("conserving", "flipflop"):
        r = np.abs(out[key]["rabi"][0])
        assert np.ptp(r) < 1e-9 * r.max()


def test_transverse_zeeman_at_5_degrees():
    # g_es mu_B |B| sin(5 deg) with an isotropic g
    z = M.transverse_zeeman_strength(P0, math.radians(5))
    assert z == pytest.approx(2.15 * 1.39962449361 * 383.5 * math.sin(math.radians(5)))
    assert z == pytest.approx(100.6, abs=0.1)


def test_modulation_depth():
    assert R.modulation_depth([1.0, 3.0]) == pytest.approx(0.5)


def test_far_detuned_ratio_matches_sweep_tail(states):
    # the closed form is the Delta^-2 coefficient ratio: compare with a large
    # detuning after removing the residual first-order term
    ex, gr = states
    a, b = R.channel_labels()[0]
    big = 2e5
    pts = [R.evaluate_channel(P0, a, b, s * big, excited=ex, ground=gr) for s in (1, -1)]
    # first-order term sum C / Delta is odd in Delta, second order even
    even = 0.5 * (pts[0].rabi + pts[1].rabi) * big ** 2
    gamma = 0.5 * (pts[0].gamma_ab + pts[1].gamma_ab) * big ** 2
    # each ground level sees both tones in the sweep, the closed form one
    assert abs(even) / (0.5 * gamma) == pytest.approx(R.far_detuned_ratio(P0, a, b, excited=ex,
                                                                          ground=gr), rel=0.02)
