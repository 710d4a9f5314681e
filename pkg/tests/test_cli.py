import json
from importlib.metadata import entry_points

import pytest

from tinyhr import cli, data, models
from tinyhr.bench import EvalReport
from tinyhr.errors import ConfigError

SMALL = {
    "data": {"n": 60, "abnormal_fraction": 0.3, "seed": 5},
    "train": {"upsampler": {"epochs": 20}, "classifier": {"epochs": 3}, "regressor": {"epochs": 3}},
}


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A small dataset and bundle produced through the CLI."""
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    assert cli.main(["--config", str(cfg), "gen", "--out", str(d / "data.csv")]) == 0
    assert cli.main(["--config", str(cfg), "train", "--data", str(d / "data.csv"), "--out", str(d / "b")]) == 0
    return d


class TestConfig:
    def test_defaults(self):
        cfg = cli.parse_config({})
        assert cfg.n == 5687 and cfg.gate_threshold == 0.5 and cfg.repeats == 10
        assert cfg.train == models.DEFAULT_CONFIGS

    def test_overrides(self):
        cfg = cli.parse_config({"train": {"classifier": {"learning_rate": 0.01}}, "filters": {"median_window": 5}})
        assert cfg.train["classifier"].learning_rate == 0.01
        assert cfg.train["classifier"].epochs == 1000
        assert cfg.filters.median_window == 5 and cfg.filters_given

    @pytest.mark.parametrize(
        "doc",
        [
            {"extra": {}},
            {"data": {"size": 3}},
            {"train": {"upsampler": {"seed": 3}}},
            {"data": {"abnormal_fraction": 1.5}},
            {"data": {"n": 5}},
            {"filters": {"median_window": 4}},
            {"pipeline": {"gate_threshold": 2}},
            {"bench": {"repeats": 3}},
            {"bench": {"power_mw": 0}},
            {"train": {"regressor": {"learning_rate": -1}}},
            {"train": {"regressor_variant": "lstm"}},
            {"data": {"n": "many"}},
        ],
    )
    def test_invalid(self, doc):
        with pytest.raises(ConfigError):
            cli.parse_config(doc)

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            cli.load_config(p)


class TestGen:
    def test_same_seed_same_files(self, tmp_path, capsys):
        for name in ("a", "b"):
            code, out, _ = run(capsys, "--seed", 3, "gen", "--out", tmp_path / f"{name}.csv")
            assert code == 0 and json.loads(out)["n"] == 5687
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert len((tmp_path / "a.csv").read_text().splitlines()) == 5688
        assert json.loads((tmp_path / "a.manifest.json").read_text())["seed"] == 3

    def test_invalid_fraction_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"data": {"abnormal_fraction": 1.5}}))
        code, _, err = run(capsys, "--config", cfg, "gen", "--out", tmp_path / "x.csv")
        assert code == cli.EXIT_CONFIG and "abnormal_fraction" in err
        assert not (tmp_path / "x.csv").exists()


class TestTrain:
    def test_three_model_files(self, workdir):
        for fname in models.MODEL_FILES.values():
            assert (workdir / "b" / fname).read_bytes()[:4] == b"THR1"
        manifest = json.loads((workdir / "b" / models.MANIFEST).read_text())
        assert "test_rmse" in manifest["metrics"]["upsampler"]
        assert manifest["seed"] == 5

    def test_retrain_is_byte_identical(self, workdir, tmp_path):
        cfg = workdir / "cfg.json"
        assert cli.main(["--config", str(cfg), "train", "--data", str(workdir / "data.csv"),
                         "--out", str(tmp_path / "b")]) == 0
        for fname in list(models.MODEL_FILES.values()) + [models.MANIFEST]:
            assert (tmp_path / "b" / fname).read_bytes() == (workdir / "b" / fname).read_bytes()

    def test_seeds_report_spread(self, workdir, tmp_path, capsys):
        code, out, _ = run(capsys, "--config", workdir / "cfg.json", "train", "--data", workdir / "data.csv",
                           "--out", tmp_path / "b", "--seeds", 2)
        assert code == 0
        manifest = json.loads((tmp_path / "b" / models.MANIFEST).read_text())
        assert manifest["seeds"] == [5, 6]
        assert set(manifest["seed_std"]["regressor"]) >= {"test_mae", "test_rmse"}
        assert json.loads(out)["seed_std"] == manifest["seed_std"]

    def test_divergence_exit_code(self, workdir, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"train": {"upsampler": {"learning_rate": 1e4, "epochs": 200}}}))
        code, _, err = run(capsys, "--config", cfg, "train", "--data", workdir / "data.csv", "--out", tmp_path / "b")
        assert code == cli.EXIT_TRAINING and "upsampler" in err

    def test_missing_dataset(self, tmp_path, capsys):
        code, _, _ = run(capsys, "train", "--data", tmp_path / "none.csv", "--out", tmp_path / "b")
        assert code == cli.EXIT_DATA


class TestEval:
    def test_all_pipelines(self, workdir, capsys, tmp_path):
        code, out, _ = run(capsys, "--config", workdir / "cfg.json", "eval", "--bundle", workdir / "b",
                           "--data", workdir / "data.csv", "--table", tmp_path / "t.md",
                           "--batch-csv", tmp_path / "batch.csv")
        assert code == 0
        doc = json.loads(out)
        assert set(doc["reports"]) == {"sp", "ml", "hybrid"}
        assert doc["timing"]["comparison_table"] == (tmp_path / "t.md").read_text()
        for r in doc["reports"].values():
            assert r == bench_round_trip(r)
        assert len((tmp_path / "batch.csv").read_text().splitlines()) == 1 + 3 * 9

    def test_deterministic_apart_from_timing(self, workdir, capsys):
        outs = []
        for _ in range(2):
            code, out, _ = run(capsys, "eval", "--bundle", workdir / "b", "--data", workdir / "data.csv")
            doc = json.loads(out)
            doc.pop("timing")
            for r in doc["reports"].values():
                r.pop("timing")
            outs.append(doc)
        assert outs[0] == outs[1]

    def test_sp_needs_no_bundle(self, workdir, capsys):
        code, out, _ = run(capsys, "eval", "--data", workdir / "data.csv", "--pipeline", "sp")
        assert code == 0 and list(json.loads(out)["reports"]) == ["sp"]

    def test_tampered_model(self, workdir, tmp_path, capsys):
        bad = tmp_path / "b"
        bad.mkdir()
        for fname in list(models.MODEL_FILES.values()) + [models.MANIFEST]:
            (bad / fname).write_bytes((workdir / "b" / fname).read_bytes())
        blob = bytearray((bad / "classifier.thr").read_bytes())
        blob[100] ^= 0x01
        (bad / "classifier.thr").write_bytes(bytes(blob))
        code, _, err = run(capsys, "eval", "--bundle", bad, "--data", workdir / "data.csv", "--pipeline", "ml")
        assert code == cli.EXIT_DATA and "ChecksumMismatch" in err


def bench_round_trip(d):
    return json.loads(EvalReport.from_dict(d).to_json())


@pytest.fixture(scope="module")
def frame(workdir):
    return data.read_frames(workdir / "data.csv")[0]


class TestInfer:
    def test_sp(self, frame, capsys):
        code, out, _ = run(capsys, "infer", "--pipeline", "sp", "--frame", ",".join(map(str, frame.samples)))
        doc = json.loads(out)
        assert code == 0 and len(doc["timing"]["stage_ns"]) == 8

    def test_ml(self, workdir, frame, capsys):
        x = ",".join(map(str, frame.samples[::2]))
        code, out, _ = run(capsys, "infer", "--bundle", workdir / "b", "--pipeline", "ml", "--frame", x)
        doc = json.loads(out)
        assert code == 0
        assert doc["rejected"] is True or isinstance(doc["estimate"], float)

    def test_dataset_row_file(self, workdir, frame, tmp_path, capsys):
        lines = (workdir / "data.csv").read_text().splitlines()
        (tmp_path / "row.csv").write_text(lines[0] + "\n" + lines[1] + "\n")
        code, out, _ = run(capsys, "infer", "--pipeline", "sp", "--frame-file", tmp_path / "row.csv")
        assert code == 0
        direct = cli.cmd_infer(cli.Config(), None, ",".join(map(str, frame.samples)), "sp")
        assert json.loads(out)["estimate"] == direct["estimate"]

    def test_rejection_is_success(self, capsys):
        code, out, _ = run(capsys, "infer", "--pipeline", "sp", "--frame", ",".join(["0"] * 69))
        assert code == 0 and json.loads(out)["rejected"] is True

    def test_wrong_length(self, workdir, capsys):
        code, _, _ = run(capsys, "infer", "--bundle", workdir / "b", "--pipeline", "ml", "--frame",
                         ",".join(["0.5"] * 69))
        assert code == cli.EXIT_DATA

    def test_ml_without_bundle(self, capsys):
        code, _, _ = run(capsys, "infer", "--pipeline", "ml", "--frame", ",".join(["0.5"] * 35))
        assert code == cli.EXIT_CONFIG

    def test_unknown_command(self, capsys):
        assert run(capsys, "fly")[0] == cli.EXIT_CONFIG


def test_console_script_installed():
    (ep,) = [e for e in entry_points(group="console_scripts") if e.name == "tinyhr"]
    assert ep.load() is cli.main
