import json

import numpy as np
import pytest

from tlnmf import io
from tlnmf.cli import main
from tlnmf.core import ConfigError, RealizationSet
from tlnmf.datagen import GcmSpec, gen_gcm
from tlnmf.experiments import GapRow

SMALL_FLAGS = ["--K", "2", "--J", "3", "--J-NMF", "2"]


def test_matrix_round_trip(tmp_path, rng):
    A = rng.standard_normal((4, 3)) * 10.0 ** rng.integers(-300, 300, size=(4, 3))
    io.write_matrix(tmp_path / "a.csv", A)
    np.testing.assert_array_equal(io.read_matrix(tmp_path / "a.csv"), A)
    text = (tmp_path / "a.csv").read_text()
    assert text.startswith("# 4 3\n") and "\r" not in text


def test_matrix_header_mismatch(tmp_path):
    (tmp_path / "b.csv").write_text("# 2 2\n1,2\n")
    with pytest.raises(ConfigError):
        io.read_matrix(tmp_path / "b.csv")
    (tmp_path / "c.csv").write_text("1,2\n")
    with pytest.raises(ConfigError):
        io.read_matrix(tmp_path / "c.csv")


def test_rows_round_trip(tmp_path):
    rows = [GapRow(10, 0.1, 0.2, 0.1, 1.0, 2.0, 0.9, 1.8, 0), GapRow(100, 1 / 3, 0.5, 1 / 6, 3.0, 4.0, 2.5, 3.5, 0)]
    io.write_rows(tmp_path / "g.csv", rows)
    back = io.read_rows(tmp_path / "g.csv")
    assert back[0]["S"] == "10"
    assert float(back[1]["I_star"]) == 1 / 3


def test_bundle_round_trip(tmp_path):
    spec = GcmSpec(M=4, N=5, K_bar=2, S=3, seed=1)
    data, truth = gen_gcm(spec)
    io.write_bundle(tmp_path, data, truth, spec)
    data2, truth2 = io.read_bundle(tmp_path)
    np.testing.assert_array_equal(data2.data, data.data)
    np.testing.assert_array_equal(truth2.sigmas_true, truth.sigmas_true)
    np.testing.assert_array_equal(truth2.phi_bar, truth.phi_bar)
    assert json.loads((tmp_path / "manifest.json").read_text())["spec"]["K_bar"] == 2


def test_bundle_without_truth(tmp_path, rng):
    data = RealizationSet(rng.standard_normal((2, 3, 4)))
    io.write_bundle(tmp_path, data)
    data2, truth = io.read_bundle(tmp_path)
    assert truth is None
    np.testing.assert_array_equal(data2.data, data.data)
    with pytest.raises(ConfigError):
        io.read_bundle(tmp_path / "missing")


def test_parse_config_text():
    cfg = io.parse_config_text("K = 3  # rank\n\neps0=1e-6\nfreqs = 440, 880\nenvelope = fixed\n")
    assert cfg == {"K": 3, "eps0": 1e-6, "freqs": (440, 880), "envelope": "fixed"}
    with pytest.raises(ConfigError):
        io.parse_config_text("just words")
    with pytest.raises(ConfigError):
        io.parse_config_text("= 3")
    with pytest.raises(ConfigError):
        io.parse_config("/nonexistent/config.txt")


def test_cli_tlnmf_run(tmp_path, capsys):
    code = main(["tlnmf", "--S", "2", "--out", str(tmp_path), *SMALL_FLAGS])
    assert code == 0
    assert "C=" in capsys.readouterr().out
    trace = io.read_rows(tmp_path / "trace.csv")
    assert list(trace[0]) == ["iter", "C", "L", "I"] and len(trace) == 4
    assert io.read_matrix(tmp_path / "phi.csv").shape == (10, 10)


def test_cli_gen_then_solve(tmp_path):
    bundle = tmp_path / "bundle"
    assert main(["gen", "--dataset", "gcm", "--S", "3", "--out", str(bundle)]) == 0
    out = tmp_path / "run"
    assert main(["jdnmf", "--data", str(bundle), "--out", str(out), *SMALL_FLAGS]) == 0
    assert io.read_matrix(out / "W.csv").shape == (10, 2)


def test_cli_multi_bit_reproducible(tmp_path):
    args = ["tlnmf", "--multi", "--P", "2", "--S", "2", *SMALL_FLAGS]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    for name in ("finals.csv", "phi.csv", "trace.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("K = 2\nJ = 2\nJ_NMF = 1\nM = 6\nN = 8\nK_bar = 2\n")
    assert main(["tlnmf", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert io.read_matrix(tmp_path / "H.csv").shape == (2, 8)


@pytest.mark.parametrize(
    "argv",
    [
        ["rate", "--grid", ""],
        ["tlnmf", "--eps0", "0"],
        ["gap", "--grid", ""],
        ["tlnmf", "--config", "/nonexistent.cfg"],
    ],
)
def test_cli_config_errors(tmp_path, argv, capsys):
    assert main([*argv, "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus = 1\n")
    assert main(["tlnmf", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_cli_numerical_failure(tmp_path, capsys):
    bundle = tmp_path / "bundle"
    data = RealizationSet(np.full((1, 3, 4), 1e200))
    io.write_bundle(bundle, data)
    with np.errstate(over="ignore", invalid="ignore"):
        code = main(["tlnmf", "--data", str(bundle), "--K", "2", "--out", str(tmp_path / "o")])
    assert code == 3
    assert "iteration 0" in capsys.readouterr().err


def test_cli_rate(tmp_path):
    assert main(["rate", "--grid", "100", "--trials", "2", "--out", str(tmp_path)]) == 0
    rows = io.read_rows(tmp_path / "rate.csv")
    assert rows[0]["S"] == "100" and rows[0]["violations"] == "0"


def test_cli_complexity(tmp_path):
    argv = ["complexity", "--S", "10", "--grid", "0,1,3", "--out", str(tmp_path), *SMALL_FLAGS]
    assert main(argv) == 0
    assert [r["J"] for r in io.read_rows(tmp_path / "complexity.csv")] == ["0", "1", "3"]
