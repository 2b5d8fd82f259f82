import math

import pytest

from nvraman.params import ConfigError, ModelParams, dump_params, load_params, parse_params


def test_defaults_valid():
    p = ModelParams()
    assert p.lambda_ss == 154.0
    assert p.lambda_Z is None


@pytest.mark.parametrize("kw", [
    {"g_orb": 0.0}, {"gamma_rad": -1.0}, {"A_perp_es": 41.0}, {"B_z": -1.0},
    {"strain_delta": -5.0}, {"isc_A1": -1.0}, {"D_gs": math.nan},
])
def test_invariants(kw):
    with pytest.raises(ConfigError):
        ModelParams(**kw)


def test_parse_round_trip():
    p = ModelParams(B_z=400.0, lambda_Z=-90.5)
    assert parse_params(dump_params(p)) == p
    assert parse_params(dump_params(ModelParams())) == ModelParams()


def test_parse_comments_and_blank():
    p = parse_params("# header\n\nB_z = 100  # field\n")
    assert p.B_z == 100.0


@pytest.mark.parametrize("text", [
    "nonsense_key = 1\n", "B_z = abc\n", "B_z 100\n", "B_z = 1\nB_z = 2\n",
])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_params(text)


def test_load_params(tmp_path):
    f = tmp_path / "p.txt"
    f.write_text("strain_delta = 5000\n")
    assert load_params(f).strain_delta == 5000.0


def test_from_angles():
    p = ModelParams.from_angles(383.5, math.radians(5), 0.3)
    assert math.isclose(math.hypot(p.B_z, p.B_perp), 383.5)
    assert p.phi == 0.3
