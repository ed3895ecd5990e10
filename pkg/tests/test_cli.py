import csv
import json

import numpy as np
import pytest
from pydantic import ValidationError

from pinnspectral.cli import RunConfig, load_config, main, parse_r_list, resolve_ranks
from pinnspectral.network import init_network, load_network


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture
def cfg_file(tmp_path):
    def write(**kw):
        data = {"arch": [1, 8, 8, 1], "train": {"epochs": 200, "n_collocation": 200}, "out": str(tmp_path / "out")}
        data.update(kw)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(data))
        return path

    return write


def test_parse_r_list():
    assert parse_r_list("0:10:2") == [0, 2, 4, 6, 8, 10]
    assert parse_r_list("3:5") == [3, 4, 5]
    assert parse_r_list("1,4,7") == [1, 4, 7]
    assert parse_r_list([2, 3]) == [2, 3]
    assert parse_r_list(None) is None
    with pytest.raises(ValueError):
        parse_r_list("1:5:0")
    with pytest.raises(ValueError):
        parse_r_list("1:2:3:4")


def test_resolve_ranks():
    assert resolve_ranks(None, 4) == [0, 1, 2, 3]
    with pytest.warns(UserWarning, match="clipped"):
        assert resolve_ranks("0:10", 5) == [0, 1, 2, 3, 4]
    with pytest.raises(ValueError, match="empty"):
        resolve_ranks("", 5)
    with pytest.raises(ValueError):
        resolve_ranks("-1:2", 5)


def test_config_validation(tmp_path):
    cfg = load_config(None)
    assert cfg.problem == "poisson_1d" and cfg.arch == [1, 30, 30, 1]
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"problme": "poisson_1d"})
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"train": {"epochs": 10, "lr": 0.1}})
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"problem": "wave"})
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"arch": [1, 10, 2]})
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 3}))
    assert load_config(path, seed=None).seed == 3
    assert load_config(path, seed=5).seed == 5
    assert load_config(path).digest() == load_config(path).digest()
    assert load_config(path).digest() != load_config(path, seed=4).digest()


def test_train_writes_network_loss_and_manifest(cfg_file, tmp_path):
    path = cfg_file()
    assert main(["train", "--config", str(path)]) == 0
    out = tmp_path / "out"
    stem = out / "train_poisson_1d_1-8-8-1"
    net = load_network(f"{stem}.json")
    rows = _rows(f"{stem}.csv")
    assert rows[0] == ["epoch", "loss"] and len(rows) == 202
    assert float(rows[-1][1]) < float(rows[1][1])
    manifest = json.loads(open(f"{stem}.manifest.json").read())
    assert manifest["network_sha256"] == net.digest()
    assert manifest["seed"] == 0 and manifest["config_sha256"] == load_config(path).digest()
    assert {"numpy", "scipy", "python"} <= set(manifest["versions"])
    # a rerun reproduces the loss history exactly
    first = open(f"{stem}.csv").read()
    assert main(["train", "--config", str(path)]) == 0
    assert open(f"{stem}.csv").read() == first
    assert load_network(f"{stem}.json").digest() == net.digest()


def test_zero_epochs_saves_initialization(cfg_file, tmp_path):
    path = cfg_file(train={"epochs": 0, "n_collocation": 50}, seed=7)
    assert main(["train", "--config", str(path)]) == 0
    net = load_network(tmp_path / "out" / "train_poisson_1d_1-8-8-1.json")
    np.testing.assert_array_equal(net.get_flat_params(), init_network([1, 8, 8, 1], 7).get_flat_params())


def test_sweep_evolve_steady_with_trained_network(cfg_file, tmp_path, capsys):
    path = cfg_file()
    assert main(["train", "--config", str(path)]) == 0
    net = tmp_path / "out" / "train_poisson_1d_1-8-8-1.json"
    assert main(["sweep", "--config", str(path), "--network", str(net)]) == 0
    text = capsys.readouterr().out
    assert "r* =" in text and "baseline" in text
    rows = _rows(tmp_path / "out" / "sweep_poisson_1d_1-8-8-1.csv")
    assert rows[0] == ["r", "err_L2", "err_Linf", "res_L2", "res_Linf", "cond_flag"]
    manifest = json.loads((tmp_path / "out" / "sweep_poisson_1d_1-8-8-1.manifest.json").read_text())
    assert manifest["network_sha256"] == load_network(net).digest()
    assert 0 <= manifest["r_star"] < manifest["r_max"]

    assert main(["evolve", "--config", str(path), "--network", str(net), "--problem", "heat_1d",
                 "--r-list", "2:6:2"]) == 0
    rows = _rows(tmp_path / "out" / "evolve_heat_1d_1-8-8-1.csv")
    assert [r[0] for r in rows[1:]] == ["2", "4", "6"]
    assert (tmp_path / "out" / "evolve_heat_1d_1-8-8-1_traj.csv").exists()

    assert main(["steady", "--config", str(path), "--network", str(net), "--problem", "pb_steady",
                 "--r-list", "3,5"]) == 0
    manifest = json.loads((tmp_path / "out" / "steady_pb_steady_1-8-8-1.manifest.json").read_text())
    assert manifest["reference"] == "legendre48"
    assert set(manifest["runs"]) == {"3", "5"}


def test_oracle_mode(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["oracle", "--out", str(out), "--oracle-legendre", "20"]) == 0
    rows = _rows(out / "oracle_poisson_1d_legendre20.csv")
    assert len(rows) == 22
    assert min(float(r[2]) for r in rows[1:]) < 1e-9
    # the sweep command accepts the same flag and needs no network
    assert main(["sweep", "--out", str(out), "--oracle-legendre", "12", "--r-list", "0:12:4"]) == 0
    assert len(_rows(out / "sweep_poisson_1d_legendre12.csv")) == 5
    manifest = json.loads((out / "sweep_poisson_1d_legendre12.manifest.json").read_text())
    assert manifest["network_sha256"] is None and manifest["beta"] == 169.0


def test_error_exits(tmp_path, capsys):
    out = str(tmp_path / "x")
    assert main(["sweep", "--out", out]) == 2
    assert main(["sweep", "--out", out, "--network", str(tmp_path / "missing.json")]) == 2
    assert "not found" in capsys.readouterr().err
    assert main(["oracle", "--out", out, "--r-list", ""]) == 2
    assert main(["evolve", "--out", out, "--problem", "poisson_1d", "--oracle-legendre", "4"]) == 2
    assert main(["steady", "--out", out, "--problem", "heat_1d", "--oracle-legendre", "4"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"unknown_key": 1}))
    assert main(["train", "--config", str(bad)]) == 2
    with pytest.raises(SystemExit):
        main(["fly"])


def test_instability_surfaces_step_index(tmp_path, caplog, capsys):
    # an unstable rank inside a sweep is flagged and logged with its step
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": "burgers_steady", "time": {"dt": 0.1}, "out": str(tmp_path / "o"),
                               "oracle_legendre": 32, "beta": 1089.0}))
    with caplog.at_level("WARNING"):
        assert main(["steady", "--config", str(cfg), "--r-list", "32"]) == 0
    assert any("at step" in rec.getMessage() for rec in caplog.records)
    rows = _rows(tmp_path / "o" / "steady_burgers_steady_legendre32.csv")
    assert rows[1][-1] == "1"
    # an unstable reference solve aborts the command
    cfg.write_text(json.dumps({"problem": "pb_steady", "time": {"dt": 0.1}, "out": str(tmp_path / "o"),
                               "oracle_legendre": 20}))
    assert main(["steady", "--config", str(cfg), "--r-list", "20"]) == 3
    assert "at step" in capsys.readouterr().err
