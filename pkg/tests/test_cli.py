import hashlib
import json

import pytest

from vpb_spectra import cli
from vpb_spectra.config import RunConfig, load_config

SMALL = """
[assembly]
degree = 6
samples = 262144
seed = 2
cache_dir = "{cache}"

[scan]
scan_re = 8
scan_im = 8
scan_s = 4
gap_points = 12
"""


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    d = tmp_path_factory.mktemp("cfg")
    path = d / "small.toml"
    path.write_text(SMALL.format(cache=d / "cache"))
    return path


def test_config_precedence(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("seed = 5\n[operator]\nfamily = 'E'\nb = 2\n")
    cfg = load_config(path, seed=9, family=None)
    assert cfg.seed == 9 and cfg.family == "E" and cfg.b == 2.0
    assert isinstance(cfg.b, float)
    assert load_config().as_dict() == RunConfig().as_dict()
    assert RunConfig().samples == 10_000_000 and RunConfig().degree == 10


def test_config_rejects_bad_input(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("colour = 'red'\n")
    with pytest.raises(ValueError, match="unknown"):
        load_config(path)
    path.write_text("seed = 1\n[x]\nseed = 2\n")
    with pytest.raises(ValueError, match="twice"):
        load_config(path)
    with pytest.raises(ValueError):
        RunConfig(family="C")
    with pytest.raises(ValueError):
        RunConfig(fit_lo=200.0)


def run(capsys, *args):
    code = cli.main(list(args))
    return code, capsys.readouterr()


def test_coeffs_deterministic(small_config, tmp_path, capsys):
    out = []
    for k in range(2):
        code, _ = run(capsys, "coeffs", "--config", str(small_config), "--out", str(tmp_path / f"r{k}"))
        assert code == 0
        out.append((tmp_path / f"r{k}" / "coeffs" / "coeffs.json").read_bytes())
    assert out[0] == out[1]
    report = json.loads(out[0])
    for key in ("a1", "a0", "a2", "kappa1", "kappa2", "kappa3", "mu"):
        assert report[key] > 0
    assert report["a2_minus_kappa1"] == 0
    assert abs(report["a0_minus_0.75kappa2"]) <= 1e-10
    assert report["manifest"] == "manifest.json"
    manifest = json.loads((tmp_path / "r0" / "coeffs" / "manifest.json").read_text())
    assert manifest["config"]["degree"] == 6 and manifest["config"]["seed"] == 2
    assert manifest["files"]["coeffs.json"] == hashlib.sha256(out[0]).hexdigest()
    assert "assembly" in manifest["wall_clock_seconds"]
    assert manifest["assembly_diagnostics"]["sample_count"] == 262144


def test_branches_and_gap(small_config, tmp_path, capsys):
    code, _ = run(capsys, "branches", "--config", str(small_config), "--out", str(tmp_path))
    assert code == 0
    header = (tmp_path / "branches" / "branches.csv").read_text().splitlines()[0]
    assert header == "s,re,im,branch,overlap"
    report = json.loads((tmp_path / "branches" / "branches.json").read_text())
    assert report["fits"]["1"]["c_imag"] == pytest.approx(1.63299, rel=0.02)

    code, _ = run(capsys, "gap", "--config", str(small_config), "--out", str(tmp_path),
                  "--family", "B")
    assert code == 0
    assert json.loads((tmp_path / "gap" / "gap.json").read_text())["a1_estimate"] > 0

    code, err = run(capsys, "branches", "--config", str(small_config), "--out", str(tmp_path),
                    "--family", "B")
    assert code == 2 and "family B" in err.err


def test_dispersion(small_config, tmp_path, capsys):
    code, _ = run(capsys, "dispersion", "--config", str(small_config), "--out", str(tmp_path))
    report = json.loads((tmp_path / "dispersion" / "dispersion.json").read_text())
    assert code == 0 and report["roots_in_region"] == 0


def test_decay_report(small_config, tmp_path, capsys):
    code, _ = run(capsys, "decay", "--config", str(small_config), "--out", str(tmp_path))
    report = json.loads((tmp_path / "decay" / "decay.json").read_text())
    fit = report["fits"]["macro_0_k0"]
    assert fit["model"] == "algebraic" and -0.9 < fit["exponent"] < -0.5
    # the [10, 100] exponents are pre-asymptotic; the verdict reports that honestly
    assert code == (0 if report["verdict"] else 1)


def test_validate_reduced_budget_fails(tmp_path, capsys):
    code, out = run(capsys, "validate", "--degree", "6", "--samples", "8192",
                    "--out", str(tmp_path), "--threads", "1")
    assert code == 1
    assert "increase the sample budget" in out.out
    report = json.loads((tmp_path / "validate" / "validate.json").read_text())
    assert report["verdict"] is False


def test_config_error_exit(capsys):
    code, out = run(capsys, "gap", "--a", "-1")
    assert code == 2 and "config error" in out.err
