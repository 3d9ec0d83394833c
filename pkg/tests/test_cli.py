import hashlib
import json
import subprocess
import sys

import pytest

from sceneforge.catalog import dump_catalog
from sceneforge.cli import main, split_setup
from sceneforge.sampler import DatasetManifest, SamplerConfig


def hashes(root):
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*.wav"))}


@pytest.fixture
def cache(fixture_tree, tmp_path):
    root, config = fixture_tree
    out = tmp_path / "catalog.jsonl"
    assert main(["scan", "--config", str(config), "--out", str(out), "--workers", "2"]) == 0
    return out


def test_scan_writes_cache(cache, fixture_catalog):
    lines = cache.read_text().splitlines()
    assert len(lines) == len(fixture_catalog) == 56
    run = json.loads(cache.with_name("catalog.jsonl.run.json").read_text())
    assert run["args"]["command"] == "scan"


def test_rescan_identical_bytes(cache, fixture_tree, tmp_path):
    again = tmp_path / "again.jsonl"
    assert main(["scan", "--config", str(fixture_tree[1]), "--out", str(again), "--workers", "1"]) == 0
    assert again.read_bytes() == cache.read_bytes()


def test_scan_bad_glob(tmp_path, capsys):
    config = tmp_path / "catalog.json"
    config.write_text(json.dumps({"entries": [{"id": "c", "kind": "speech", "root": ".", "include": ["[oops"]}]}))
    assert main(["scan", "--config", str(config), "--out", str(tmp_path / "c.jsonl")]) == 2
    assert "bracket" in capsys.readouterr().err


def test_scan_empty_corpus(tmp_path, capsys):
    (tmp_path / "speech").mkdir()
    config = tmp_path / "catalog.json"
    config.write_text(json.dumps({"entries": [{"id": "c", "kind": "speech", "root": "speech"}]}))
    assert main(["scan", "--config", str(config), "--out", str(tmp_path / "c.jsonl")]) == 3
    assert "no readable files" in capsys.readouterr().err


def test_usage_errors(tmp_path):
    assert main([]) == 2
    assert main(["plan", "--catalog", str(tmp_path / "missing.jsonl"), "--hours", "1", "--out", "m"]) == 2
    assert main(["plan", "--hours", "1"]) == 2
    assert main(["schedule", "--hours", "0"]) == 2
    assert main(["frobnicate"]) == 2


def test_plan_test_split(cache, tmp_path):
    out = tmp_path / "test.jsonl"
    assert main(["plan", "--catalog", str(cache), "--hours", "0.5", "--split", "test", "--out", str(out)]) == 0
    m = DatasetManifest.read(out)
    assert m.split == "test" and m.total_duration_s >= 1800
    assert (tmp_path / "test.jsonl.run.json").is_file()


def test_split_setup():
    cfg = SamplerConfig()
    assert split_setup("train", 7, cfg) == ("train", 7, "inverse-avg-length")
    side, seed, weighting = split_setup("val", 7, cfg)
    assert side == "train" and seed != 7 and weighting == "uniform"
    assert split_setup("test", 7, cfg) == ("test", 7, "uniform")


def test_plan_val_differs_from_train(cache, tmp_path):
    for split in ("train", "val"):
        assert main(["plan", "--catalog", str(cache), "--hours", "0.01", "--split", split,
                     "--out", str(tmp_path / f"{split}.jsonl")]) == 0
    train = DatasetManifest.read(tmp_path / "train.jsonl")
    val = DatasetManifest.read(tmp_path / "val.jsonl")
    assert train.pool_fingerprint == val.pool_fingerprint
    assert [s.speech_ref for s in train.scenes] != [s.speech_ref for s in val.scenes]


def test_plan_sampler_config(cache, tmp_path):
    cfg = tmp_path / "sampler.json"
    cfg.write_text(json.dumps({"snr_range": [0, 0], "n_sources": [2]}))
    out = tmp_path / "m.jsonl"
    assert main(["plan", "--catalog", str(cache), "--hours", "0.005", "--config", str(cfg), "--out", str(out)]) == 0
    assert all(s.snr_db == 0 and len(s.noise_refs) == 2 for s in DatasetManifest.read(out).scenes)
    cfg.write_text(json.dumps({"snr_range": [5, -5]}))
    assert main(["plan", "--catalog", str(cache), "--hours", "0.005", "--config", str(cfg), "--out", str(out)]) == 2


@pytest.fixture
def planned(cache, tmp_path):
    manifest = tmp_path / "m.jsonl"
    assert main(["plan", "--catalog", str(cache), "--hours", "0.003", "--seed", "4", "--out", str(manifest)]) == 0
    return manifest


def test_render_twice_identical(cache, planned, tmp_path, capsys):
    for name, workers in (("a", "1"), ("b", "4")):
        code = main(["render", "--catalog", str(cache), "--manifest", str(planned), "--workers", workers,
                     "--out", str(tmp_path / name), "--verify"])
        assert code == 0
    assert hashes(tmp_path / "a") == hashes(tmp_path / "b")
    assert len(hashes(tmp_path / "a")) == 3 * len(DatasetManifest.read(planned))
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["ok"] is True


def test_render_missing_assets(cache, planned, tmp_path, capsys):
    code = main(["render", "--catalog", str(cache), "--manifest", str(planned),
                 "--data-root", str(tmp_path / "nowhere"), "--out", str(tmp_path / "d"), "--workers", "1"])
    assert code == 5
    assert "AssetResolutionError" in capsys.readouterr().err


def test_verify_command(cache, planned, tmp_path):
    out = tmp_path / "d"
    assert main(["render", "--catalog", str(cache), "--manifest", str(planned), "--out", str(out), "--workers", "1"]) == 0
    assert main(["verify", "--dataset", str(out)]) == 0
    target = out / "audio" / "000000_target.wav"
    mixture = out / "audio" / "000000_mixture.wav"
    target.write_bytes(mixture.read_bytes())
    assert main(["verify", "--dataset", str(out)]) == 6


def test_eval_command(cache, planned, tmp_path, capsys):
    out = tmp_path / "d"
    assert main(["render", "--catalog", str(cache), "--manifest", str(planned), "--out", str(out), "--workers", "1"]) == 0
    enh = tmp_path / "enh"
    enh.mkdir()
    mixtures = sorted((out / "audio").glob("*_mixture.wav"))
    for p in mixtures[1:]:
        (enh / p.name).write_bytes(p.read_bytes())
    capsys.readouterr()
    args = ["eval", "--dataset", str(out), "--enhanced", str(enh), "--out", str(tmp_path / "ev"), "--csv"]
    assert main(args) == 5
    assert main(args + ["--allow-missing"]) == 0
    agg = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert agg["delta_snr_db"]["mean"] == 0.0
    assert (tmp_path / "ev" / "metrics.csv").is_file()


def test_stats_command(cache, planned, capsys):
    assert main(["stats", "--catalog", str(cache), "--manifest", str(planned)]) == 0
    result = json.loads(capsys.readouterr().out)
    assert set(result["speech"]) == {"alpha", "beta"}
    assert result["repetition"]["mode"] == "all"
    assert result["scenes"] == len(DatasetManifest.read(planned))


@pytest.mark.parametrize("hours, epochs", [("3", "1000"), ("300", "10"), ("30", "100")])
def test_schedule_command(hours, epochs, capsys):
    assert main(["schedule", "--hours", hours]) == 0
    assert capsys.readouterr().out.strip() == epochs


def test_rerun_reproduces_plan(cache, planned, tmp_path):
    original = planned.read_bytes()
    planned.unlink()
    assert main(["rerun", str(planned.with_name("m.jsonl.run.json"))]) == 0
    assert planned.read_bytes() == original


def test_rerun_reproduces_render(cache, planned, tmp_path):
    out = tmp_path / "d"
    assert main(["render", "--catalog", str(cache), "--manifest", str(planned), "--out", str(out), "--workers", "2"]) == 0
    before = hashes(out)
    for p in (out / "audio").glob("*.wav"):
        p.unlink()
    assert main(["rerun", str(out / "run_config.json")]) == 0
    assert hashes(out) == before


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sceneforge", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()


@pytest.mark.slow
def test_stats_on_300h_plan(published, tmp_path, capsys):
    cache = tmp_path / "published.jsonl"
    dump_catalog(published, cache)
    manifest = tmp_path / "m300.jsonl"
    assert main(["plan", "--catalog", str(cache), "--hours", "300", "--out", str(manifest)]) == 0
    assert main(["stats", "--catalog", str(cache), "--manifest", str(manifest), "--out", str(tmp_path / "s.json")]) == 0
    result = json.loads((tmp_path / "s.json").read_text())
    assert abs(result["repetition"]["total"] - 83) <= 3
    assert abs(result["repetition"]["per_corpus"]["timit"] - 20) <= 3


def test_data_root_env_overrides_scan_root(cache, planned, tmp_path, monkeypatch):
    monkeypatch.setenv("SCENEFORGE_DATA_ROOT", str(tmp_path / "elsewhere"))
    code = main(["render", "--catalog", str(cache), "--manifest", str(planned), "--out", str(tmp_path / "d"),
                 "--workers", "1"])
    assert code == 5
