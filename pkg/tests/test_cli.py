import hashlib
import json

import pytest

from fusepath.cli import main

SMALL = {
    "train.epochs_stage1": 2,
    "train.epochs_stage2": 1,
    "train.epochs_e2e": 1,
    "train.batch_size": 4,
    "seed": 5,
}


def _config(tmp_path, manifest, **extra):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({**SMALL, "paths.manifest": str(manifest), **extra}))
    return path


def _digest(paths):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in paths}


def _strip_wall_time(path):
    return [{k: v for k, v in json.loads(line).items() if k != "wall_time"}
            for line in path.read_text().splitlines()]


def _pipeline(cfg, out, capsys):
    s1t = ["train-stage1", "--path", "tdnn", "--config", str(cfg), "--out", str(out)]
    s1a = ["train-stage1", "--path", "acoustic", "--config", str(cfg), "--out", str(out)]
    s2 = ["train-stage2", "--config", str(cfg), "--out", str(out),
          "--tdnn-ckpt", str(out / "stage1_tdnn.fpck"), "--acoustic-ckpt", str(out / "stage1_acoustic.fpck")]
    for argv in (s1t, s1a, s2):
        assert main(argv) == 0, argv
    capsys.readouterr()
    assert main(["eval", "--ckpt", str(out / "stage2.fpck"), "--split", "test"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert main(["export-emb", "--ckpt", str(out / "stage2.fpck"), "--split", "test",
                 "--out", str(out / "emb.csv")]) == 0
    return report


def test_pipeline_chain_is_deterministic_and_leaves_inputs_alone(tiny_corpus_dir, tmp_path, capsys):
    manifest = tiny_corpus_dir / "manifest.jsonl"
    cfg = _config(tmp_path, manifest)
    inputs = sorted(tiny_corpus_dir.rglob("*")) + [cfg]
    before = _digest(p for p in inputs if p.is_file())

    report = _pipeline(cfg, tmp_path / "a", capsys)
    _pipeline(cfg, tmp_path / "b", capsys)
    assert 0.0 <= report["accuracy"] <= 1.0
    assert _digest(p for p in inputs if p.is_file()) == before

    a, b = tmp_path / "a", tmp_path / "b"
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert "stage2.eval_test.json" in names and "stage2.run.json" in names
    for name in names:
        if name.endswith(".log.jsonl"):
            assert _strip_wall_time(a / name) == _strip_wall_time(b / name), name
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert json.loads((a / "stage2.eval_test.json").read_text()) == report


def test_features_and_synth(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "c"), "--spec", str(_spec(tmp_path, 2))]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["clips"] == 4
    wav = sorted((tmp_path / "c").rglob("*.wav"))[0]
    assert main(["features", "--wav", str(wav), "--dump", str(tmp_path / "f.fmx")]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["features"] == 20 and stats["frame_rate"] == 100.0
    assert (tmp_path / "f.fmx").read_bytes()[:4] == b"FMX1"


def _spec(tmp_path, n, seed=1):
    path = tmp_path / "synth.json"
    path.write_text(json.dumps({"n_per_class": n, "seed": seed}))
    return path


def test_unknown_config_key_names_it(tmp_path, tiny_corpus_dir, capsys):
    cfg = _config(tmp_path, tiny_corpus_dir / "manifest.jsonl", learnin_rate=0.1)
    code = main(["train-stage1", "--path", "tdnn", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config" and err["key"] == "learnin_rate"
    assert "learnin_rate" in err["message"]


def test_missing_checkpoint_and_wav(tmp_path, capsys):
    assert main(["eval", "--ckpt", str(tmp_path / "none.fpck")]) == 4
    assert main(["features", "--wav", str(tmp_path / "none.wav")]) == 3
    for line in capsys.readouterr().err.strip().splitlines():
        assert set(json.loads(line)) >= {"error", "message"}


@pytest.mark.slow
def test_random_init_eval_is_chance_level(tmp_path, capsys):
    corpus = tmp_path / "big"
    assert main(["synth", "--out", str(corpus), "--spec", str(_spec(tmp_path, 500, seed=9))]) == 0
    cfg = _config(tmp_path, corpus / "manifest.jsonl", **{"train.epochs_e2e": 0})
    assert main(["train-e2e", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    capsys.readouterr()
    assert main(["eval", "--ckpt", str(tmp_path / "o" / "end_to_end.fpck"), "--split", "test"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert sum(map(sum, report["confusion"])) >= 100
    assert abs(report["accuracy"] - 0.5) <= 0.15
