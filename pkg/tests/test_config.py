import math

import pytest
from hypothesis import given, settings, strategies as st

from nanomech.config import ConfigError, load_scenario, parse_scenario
from nanomech.runner import _require_seed

from conftest import CONFIGS

MINIMAL = """\
[cavity]
f_c_ghz = 5
q_int = 38000
q_ext = 14000
power_pw = 68

[mechanics]
f_m_khz = 240
mass_pg = 2
q_m = 2300
temperature_mk = 100
"""


def test_reference_config_si_views():
    scn = load_scenario(CONFIGS / "beam_240khz.ini")
    assert scn.cavity.omega_c == pytest.approx(2 * math.pi * 5e9)
    assert scn.cavity.power_incident == pytest.approx(68e-12)
    assert scn.mode.mass == pytest.approx(2e-15)
    assert scn.mode.temperature_bath == pytest.approx(0.1)
    assert scn.g_calibrated == pytest.approx(2 * math.pi * 1.16e3 / 1e-9)
    assert scn.coupling.dcd_dx == pytest.approx(0.2e-12)
    assert scn.sweep("powers_pw")[4] == 68.0
    assert scn.carrier_v0() == pytest.approx(math.sqrt(100 * 68e-12))


def test_every_shipped_config_parses():
    for path in sorted(CONFIGS.glob("*.ini")):
        scn = load_scenario(path)
        assert parse_scenario(scn.serialize()) == scn


def test_defaults_filled():
    scn = parse_scenario(MINIMAL)
    assert scn.run("engine") == "spectral"
    assert scn.run("seed") is None
    assert scn.noise.t_n == 0.0
    assert scn.drive is None
    assert scn.cavity.z_line == 70.0


def _line_of(text, needle):
    return next(i for i, l in enumerate(text.splitlines(), 1) if needle in l)


@pytest.mark.parametrize("extra, needle, fragment", [
    ("[cavity2]\nx = 1\n", "[cavity2]", "unknown section"),
    ("[run]\nseeed = 3\n", "seeed", "unknown key"),
    ("[run]\nengine = euler\n", "engine", "engine must be one of"),
    ("[run]\naverages = 0\n", "averages", "averages must be >= 1"),
    ("[noise]\nt_n_k = abc\n", "t_n_k", "invalid value"),
    ("[noise]\nt_n_k = nan\n", "t_n_k", "invalid value"),
])
def test_errors_carry_line_numbers(extra, needle, fragment):
    text = MINIMAL + "\n" + extra
    with pytest.raises(ConfigError) as err:
        parse_scenario(text)
    assert fragment in str(err.value)
    assert err.value.line == _line_of(text, needle)


def test_missing_required_key_and_section():
    with pytest.raises(ConfigError, match="missing required key 'q_m'"):
        parse_scenario(MINIMAL.replace("q_m = 2300\n", ""))
    with pytest.raises(ConfigError, match=r"missing required section \[mechanics\]"):
        parse_scenario(MINIMAL.split("[mechanics]")[0])


def test_duplicate_key_and_orphan_key():
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_scenario(MINIMAL + "[run]\nseed = 1\nseed = 2\n")
    with pytest.raises(ConfigError, match="outside any"):
        parse_scenario("seed = 1\n" + MINIMAL)


@pytest.mark.parametrize("bad, fragment", [
    ("q_m = 2300", "q_m = -1"),
    ("mass_pg = 2", "mass_pg = 0"),
    ("temperature_mk = 100", "temperature_mk = -5"),
    ("q_ext = 14000", "q_ext = 0"),
])
def test_physical_domain_errors_point_at_section(bad, fragment):
    text = MINIMAL.replace(bad, fragment)
    with pytest.raises(ConfigError) as err:
        parse_scenario(text)
    section = "[mechanics]" if "mk" in fragment or "q_m" in fragment or "mass" in fragment else "[cavity]"
    assert err.value.line == _line_of(text, section)


def test_lossless_cavity_accepted():
    scn = parse_scenario(MINIMAL.replace("q_int = 38000", "q_int = inf"))
    assert math.isinf(scn.cavity.q_int)
    assert scn.cavity.q_total == pytest.approx(14000)


def test_seed_required_for_stochastic_runs():
    with pytest.raises(ConfigError, match="seed is required"):
        _require_seed(parse_scenario(MINIMAL))
    assert _require_seed(parse_scenario(MINIMAL + "[run]\nseed = 5\n")) == 5


def test_unreadable_path(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario(tmp_path / "missing.ini")


def test_bad_grid_rejected():
    scn = parse_scenario(MINIMAL + "[run]\ngrid_f_min_khz = 300\ngrid_f_max_khz = 200\n")
    with pytest.raises(ConfigError):
        scn.grid()


pos = st.floats(1e-3, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(
    f_c=st.floats(0.1, 50.0), q_int=st.one_of(st.just(math.inf), st.floats(10.0, 1e7)), q_ext=st.floats(10.0, 1e7),
    f_m=pos, mass=pos, q_m=st.floats(1.0, 1e8), temp=st.floats(0.0, 1e4), t_n=st.floats(0.0, 100.0),
    seed=st.integers(0, 2**62), engine=st.sampled_from(["spectral", "langevin"]),
    powers=st.lists(st.floats(1e-3, 1e6), max_size=6),
)
def test_serialize_round_trip(f_c, q_int, q_ext, f_m, mass, q_m, temp, t_n, seed, engine, powers):
    text = (
        f"[cavity]\nf_c_ghz = {f_c!r}\nq_int = {q_int!r}\nq_ext = {q_ext!r}\n"
        f"[mechanics]\nf_m_khz = {f_m!r}\nmass_pg = {mass!r}\nq_m = {q_m!r}\ntemperature_mk = {temp!r}\n"
        f"[noise]\nt_n_k = {t_n!r}\n"
        f"[run]\nseed = {seed}\nengine = {engine}\n"
        f"[sweep]\npowers_pw = {', '.join(repr(p) for p in powers)}\n"
    )
    scn = parse_scenario(text)
    again = parse_scenario(scn.serialize())
    assert again == scn
    assert again.serialize() == scn.serialize()


def test_per_point_overrides():
    sweep = "[sweep]\ntemperatures_mk = 100, 200, 300\nq_m_per_point = 2300, 2100, 1900\n"
    scn = parse_scenario(MINIMAL + sweep)
    assert scn.at_point(0).mode.q_m == 2300 and scn.at_point(2).mode.q_m == 1900
    assert scn.at_point(1).cavity == scn.cavity
    text = MINIMAL + "[sweep]\ntemperatures_mk = 100, 200\nq_int_per_point = 38000\n"
    with pytest.raises(ConfigError, match="has 1 values") as err:
        parse_scenario(text)
    assert err.value.line == _line_of(text, "q_int_per_point")
    with pytest.raises(ConfigError, match="point 1"):
        parse_scenario(MINIMAL + "[sweep]\ntemperatures_mk = 100, 200\nq_ext_per_point = 14000, -1\n")
    assert parse_scenario(scn.serialize()) == scn
