import argparse
import json

import pytest

from camel.cli import RunConfig, main, resolve_config, resolve_devices, resolve_user, resolve_users
from camel.corpus import load_corpus
from camel.errors import ConfigurationError
from camel.records import iter_records


def _args(**kw):
    base = {"seed": None, "config": None, "scale": None, "jobs": None, "device": None}
    return argparse.Namespace(**{**base, **kw})


def test_seed_precedence(tmp_path):
    assert resolve_config(_args(), {}) == RunConfig()
    assert resolve_config(_args(), {"CAMEL_SEED": "7"}).seed == 7
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"seed": 3, "device": "pixel2"}))
    assert resolve_config(_args(config=str(conf)), {"CAMEL_SEED": "7"}).seed == 3
    cfg = resolve_config(_args(config=str(conf), seed=9), {"CAMEL_SEED": "7"})
    assert (cfg.seed, cfg.device) == (9, "pixel2")
    with pytest.raises(ConfigurationError):
        resolve_config(_args(), {"CAMEL_SEED": "x"})


def test_unknown_config_keys(tmp_path):
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"sed": 3}))
    with pytest.raises(ConfigurationError, match="sed"):
        resolve_config(_args(config=str(conf)), {})
    assert main(["corpus", "gen", "--config", str(conf), "--out", str(tmp_path / "c.jsonl")]) == 1


def test_presets():
    assert [d.name for d in resolve_devices("all")] == ["huaweip9", "odroidxu3", "pixel2", "xiaomi9"]
    assert [u.group for u in resolve_users("groups")] == ["low", "mod", "high"]
    assert len(resolve_users("all")) == 30 and len(resolve_users("mod")) == 14
    assert resolve_user("high").group == "high"
    with pytest.raises(ConfigurationError):
        resolve_user("nobody")


def test_bad_invocations(tmp_path, capsys):
    assert main(["fly"]) == 2
    assert main(["corpus", "gen"]) == 1
    assert "--out is required" in capsys.readouterr().err
    assert main(["corpus", "ingest", "--html", str(tmp_path), "--out", str(tmp_path / "x")]) == 1


def test_corpus_gen_uses_env_seed(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CAMEL_SEED", "5")
    out = tmp_path / "c.jsonl"
    assert main(["corpus", "gen", "--pages", "4", "--out", str(out)]) == 0
    assert json.loads(capsys.readouterr().out)["pages"] == 4
    corpus = load_corpus(out)
    assert len(corpus) == 4 and corpus.seed == 5


def test_small_pipeline(tmp_path, capsys):
    p = tmp_path
    run = lambda *argv: main([str(a) for a in argv])
    assert run("corpus", "gen", "--seed", 0, "--pages", 12, "--out", p / "c.jsonl") == 0
    assert run("frontier", "build", "--device", "pixel2", "--pages", 2, "--out", p / "f.jsonl") == 0
    assert run("train", "--kind", "fps", "--device", "xiaomi9", "--corpus", p / "c.jsonl", "--epochs", 1,
               "--out", p / "fps.jsonl") == 0
    assert run("train", "--kind", "qoe", "--user", "mod", "--corpus", p / "c.jsonl", "--epochs", 1,
               "--out", p / "qoe.jsonl") == 0
    assert run("adapt", "select", "--corpus", p / "c.jsonl", "--model", p / "fps.jsonl", "--kmax", 4,
               "--out", p / "reps.jsonl") == 0
    assert run("adapt", "transfer", "--corpus", p / "c.jsonl", "--base", p / "fps.jsonl", "--device", "pixel2",
               "--frontier", p / "f.jsonl", "--pages", p / "reps.jsonl", "--epochs", 1, "--out", p / "tl.jsonl") == 0
    assert run("cp", "fit", "--corpus", p / "c.jsonl", "--model", p / "qoe.jsonl", "--user", "mod",
               "--out", p / "cp.jsonl") == 0
    assert run("cp", "eval", "--corpus", p / "c.jsonl", "--cp", p / "cp.jsonl", "--user", "mod") == 0
    assert run("continuous", "--corpus", p / "c.jsonl", "--cp", p / "cp.jsonl", "--user", "mod", "--epochs", 1,
               "--log", p / "flags.jsonl", "--out", p / "cp2.jsonl") == 0
    lines = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert [x["verb"] for x in lines] == ["corpus gen", "frontier build", "train", "train", "adapt select",
                                          "adapt transfer", "cp fit", "cp eval", "continuous"]
    select = lines[4]
    reps = list(iter_records(p / "reps.jsonl", "camel-representatives"))
    assert len(reps) == select["k"] and 0 <= lines[7]["coverage"] <= 1
    assert lines[8]["flagged"] >= lines[8]["added"]
    assert run("adapt", "transfer", "--corpus", p / "c.jsonl", "--base", p / "qoe.jsonl", "--pages",
               p / "reps.jsonl", "--out", p / "bad.jsonl") == 1
