import csv
import json
from pathlib import Path

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from gainswitch.analysis.report import sha256_file
from gainswitch.errors import ConfigError
from gainswitch.experiments import PRESETS, load_config, regime_assertions, resolve, run_experiment, sweep
from gainswitch.experiments.cli import main
from gainswitch.experiments.config import DEFAULTS, validate_config
from gainswitch.experiments.runner import ARTIFACTS, EXIT_ASSERT, EXIT_CONFIG, EXIT_OK

SMALL = 2000


def flat(tree, prefix=""):
    out = {}
    for k, v in tree.items():
        if isinstance(v, dict):
            out.update(flat(v, f"{prefix}{k}."))
        else:
            out[prefix + k] = v
    return out


def small(preset="custom", **kw):
    extra = {"analysis.regime": "none", **kw}
    return resolve({"n_pulses": SMALL}, preset=preset, extra=extra)


# ---------------------------------------------------------------- configuration


def test_empty_file_echoes_every_default(tmp_path):
    f = tmp_path / "empty.yaml"
    f.write_text("")
    cfg = validate_config(f, preset="fig2a_1ghz")
    d = cfg.to_dict()
    assert set(d) == {"preset", "seed", "n_pulses", "output_dir", *DEFAULTS}
    for sec, vals in DEFAULTS.items():
        assert set(d[sec]) == set(vals)
    assert d["drive"]["rep_rate"] == 1e9 and d["analysis"]["regime"] == "A"
    assert d["n_pulses"] == 1_000_000 and d["seed"] == 0


def test_negative_photon_lifetime_names_the_invariant():
    with pytest.raises(ConfigError) as e:
        load_config("laser:\n  tau_p: -1.0e-12\n")
    (issue,) = e.value.issues
    assert issue.startswith("line 2: laser.tau_p:") and "LaserParams" in issue


def test_issues_are_itemized_with_lines():
    text = "seed: 3\nlaser:\n  tau_q: 1\ndrive:\n  rep_rate: fast\nbogus: {}\nanalysis:\n  max_lag: 0\n"
    with pytest.raises(ConfigError) as e:
        load_config(text)
    issues = e.value.issues
    assert any(i.startswith("line 3: laser.tau_q: unknown key") for i in issues)
    assert any(i.startswith("line 5: drive.rep_rate:") for i in issues)
    assert any(i.startswith("line 6: bogus: unknown section") for i in issues)
    assert any(i.startswith("line 8: analysis.max_lag:") for i in issues)


def test_bad_yaml_and_unknown_preset():
    with pytest.raises(ConfigError) as e:
        load_config("laser: [1,\n")
    assert "line" in e.value.issues[0]
    with pytest.raises(ConfigError):
        resolve({}, preset="fig9")
    with pytest.raises(ConfigError):
        resolve({"n_pulses": 10})
    with pytest.raises(ConfigError):
        resolve({}, extra={"laser.nope": 1})


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_resolution_round_trips(name):
    cfg = resolve({}, preset=name)
    again = load_config(cfg.to_yaml())
    assert again.to_dict() == cfg.to_dict()
    assert load_config(again.to_yaml()).to_yaml() == cfg.to_yaml()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), n=st.integers(1001, 10**7), tau=st.floats(0.2e-12, 5e-12),
       power=st.floats(0, 0.05))
def test_round_trip_property(seed, n, tau, power):
    cfg = resolve({"seed": seed, "n_pulses": n, "laser": {"tau_p": tau}, "ase": {"total_power": power}})
    assert load_config(cfg.to_yaml()).to_dict() == cfg.to_dict()


# documented differences of each preset from the plain defaults
DOCUMENTED = {
    "custom": set(),
    "fig2a_1ghz": {"drive.rep_rate", "drive.duty_cycle", "drive.high_level", "drive.low_level", "analysis.regime"},
    "fig2b_10ghz": {"analysis.regime"},
    "fig2c_10ghz_ase": {"ase.total_power", "analysis.regime"},
    "fig3_spectra": {"analysis.regime", "sweep.param", "sweep.values", "sweep.trend", "sweep.trend_key"},
    "table1_jitter_sweep": {"analysis.regime", "sweep.param", "sweep.values", "sweep.trend"},
    "appendix_5ghz": {"drive.rep_rate", "drive.duty_cycle", "sweep.param", "sweep.values"},
    "appendix_8ghz": {"drive.rep_rate", "drive.duty_cycle", "sweep.param", "sweep.values"},
}


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_differ_only_in_documented_paths(name):
    base = flat(resolve({}, preset="custom").params)
    mine = flat(resolve({}, preset=name).params)
    assert {k for k in base if base[k] != mine[k]} == DOCUMENTED[name]
    assert set(PRESETS[name]) >= DOCUMENTED[name]


def test_regime_resolution():
    assert resolve({}, preset="appendix_5ghz").regime() == "B"
    assert resolve({"ase": {"total_power": 0.019}}, preset="appendix_5ghz").regime() == "C"
    assert resolve({}, preset="fig3_spectra").regime() is None


def test_stability_warning():
    assert resolve({}, preset="fig2a_1ghz").warnings == []
    coarse = {"dt": 0.5e-12, "record_every": 5}
    w = resolve({"drive": {"low_level": 0.0}, "integrator": coarse}, preset="fig2a_1ghz").warnings
    assert len(w) == 1 and "integrator.dt" in w[0]
    for name in PRESETS:
        assert resolve({}, preset=name).warnings == []


def test_with_values_revalidates():
    cfg = resolve({})
    assert cfg.with_values(**{"ase.total_power": 0.005}).params["ase"]["total_power"] == 0.005
    with pytest.raises(ConfigError):
        cfg.with_values(**{"ase.total_power": -1.0})


def test_regime_assertions_table():
    a = DEFAULTS["analysis"]
    res = {"arcsine_gof": {"passed": True}, "autocorrelation": {"lag1_over_ci": 1.0, "max_over_ci": 3.0},
           "spectrum": {"comb_contrast_db": 0.5}}
    assert all(c["passed"] for c in regime_assertions("A", res, a))
    assert all(c["passed"] for c in regime_assertions("C", res, a))
    assert not any(c["passed"] for c in regime_assertions("B", res, a))
    assert regime_assertions(None, res, a) == []
    with pytest.raises(ValueError):
        regime_assertions("D", res, a)


# ---------------------------------------------------------------- runs


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return run_experiment(small(), out)


def test_run_writes_artifacts_and_manifest(small_run):
    out = Path(small_run.output_dir)
    for name in (*ARTIFACTS, "manifest.json"):
        assert (out / name).exists()
    man = json.loads((out / "manifest.json").read_text())
    for name, digest in man["files"].items():
        assert sha256_file(out / name) == digest
    rep = json.loads((out / "report.json").read_text())
    assert rep["content_hash"] == man["report_hash"]
    assert man["software"]["package"] == "gainswitch" and man["exit_status"] == EXIT_OK
    assert (out / "samples.u8").stat().st_size == SMALL
    with open(out / "autocorr.csv") as fh:
        assert len(list(csv.reader(fh))) == DEFAULTS["analysis"]["max_lag"] + 1


def test_rerun_from_echoed_config_is_bit_identical(small_run, tmp_path):
    out = Path(small_run.output_dir)
    cfg = validate_config(out / "config.yaml")
    again = run_experiment(cfg, tmp_path)
    assert again.report_hash == small_run.report_hash
    assert again.files["samples.u8"] == small_run.files["samples.u8"]
    other = run_experiment(cfg.with_values(seed=1), tmp_path / "s1")
    assert other.report_hash != small_run.report_hash


# ---------------------------------------------------------------- command line


def test_cli_validate(tmp_path, capsys):
    f = tmp_path / "c.yaml"
    f.write_text("preset: fig2c_10ghz_ase\nseed: 7\n")
    assert main(["validate", "--config", str(f)]) == EXIT_OK
    d = yaml.safe_load(capsys.readouterr().out)
    assert d["seed"] == 7 and d["ase"]["total_power"] == 0.019


def test_cli_config_error_exit_2(tmp_path, capsys):
    f = tmp_path / "c.yaml"
    f.write_text("laser:\n  tau_p: -1\n")
    assert main(["run", "--config", str(f), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "line 2: laser.tau_p" in err and "LaserParams" in err
    assert main(["validate", "--set", "nope.x=1"]) == EXIT_CONFIG
    assert main(["validate", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    assert not (tmp_path / "o").exists()


def test_cli_assertion_failure_exit_1(tmp_path, capsys):
    # too few pulses to resolve the lag-1 correlation of the correlated regime
    code = main(["run", "--preset", "fig2b_10ghz", "--pulses", str(SMALL), "--out", str(tmp_path)])
    assert code == EXIT_ASSERT
    assert "FAIL lag1_correlated" in capsys.readouterr().out
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["exit_status"] == EXIT_ASSERT


def test_cli_run_success_exit_0(tmp_path, capsys):
    code = main(["run", "--preset", "custom", "--pulses", str(SMALL), "--seed", "3", "--out", str(tmp_path),
                 "--set", "analysis.regime=none"])
    assert code == EXIT_OK
    assert "report:" in capsys.readouterr().out


def test_cli_empty_sweep(tmp_path):
    code = main(["sweep", "--param", "ase.total_power", "--values", "", "--out", str(tmp_path)])
    assert code == EXIT_OK
    rows = list(csv.reader(open(tmp_path / "summary.csv")))
    assert len(rows) == 1 and rows[0][0] == "value"


def test_cli_sweep_rejects_bad_values_before_running(tmp_path):
    code = main(["sweep", "--param", "ase.total_power", "--values", "0.0,-1", "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert not (tmp_path / "summary.csv").exists()


# ---------------------------------------------------------------- sweeps


def test_sweep_isolation_under_reordering(tmp_path):
    cfg = small()
    a = sweep(cfg, "ase.total_power", [0.0, 0.019], tmp_path / "a")
    b = sweep(cfg, "ase.total_power", [0.019, 0.0], tmp_path / "b")
    ha = dict(zip(a.values, (m.report_hash for m in a.manifests)))
    hb = dict(zip(b.values, (m.report_hash for m in b.manifests)))
    assert ha == hb and ha[0.0] != ha[0.019]
    assert a.exit_status == EXIT_OK
    rows = list(csv.DictReader(open(a.summary_path)))
    assert [float(r["value"]) for r in rows] == [0.0, 0.019]
    assert float(rows[1]["jitter_rms"]) > float(rows[0]["jitter_rms"])


def test_sweep_records_failures_and_continues(tmp_path):
    cfg = resolve({"n_pulses": 1200, "drive": {"low_level": 0.0}, "integrator": {"record_every": 5}},
                  preset="fig2a_1ghz", extra={"analysis.regime": "none"})
    # the coarse step diverges during the zero-bias off time; the recorded grid changes with it
    res = sweep(cfg, "integrator.dt", [0.5e-12, 0.25e-12], tmp_path)
    bad, good = res.manifests
    assert "IntegratorDivergence" in bad.error and not bad.passed
    assert good.passed and good.report_hash
    assert res.exit_status == EXIT_ASSERT
    rows = list(csv.DictReader(open(res.summary_path)))
    assert rows[0]["error"] and not rows[1]["error"]
