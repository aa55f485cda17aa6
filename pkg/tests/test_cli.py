import json

import numpy as np
import pytest
from PIL import Image

from scgan.cli import cli_main
from scgan.config import ConfigError, resolved_document, validate_config

TINY = {
    "seed": 0,
    "corpus": {"synthetic_sources": {"count": 8, "size": 32, "seed": 1}},
    "generator": {"depth": 3, "mid_channels": 4},
    "discriminator": {"channels": [4, 4, 4, 1]},
    "schedule": {"ep1": 1, "ep2": 1, "ep3": 2, "batch_size": 2},
    "denoiser": {"depth": 3, "channels": 4, "epochs": 1, "batch_size": 4, "patch_size": 32},
    "held_out": {"count": 2, "seed": 5},
}


def write_config(tmp_path, **overrides):
    doc = {**TINY, "out": str(tmp_path / "run"), **overrides}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_synth_creates_corpus(tmp_path):
    cfg = write_config(tmp_path)
    assert cli_main(["synth", "--config", cfg]) == 0
    out = tmp_path / "run"
    assert (out / "corpus" / "manifest.json").is_file()
    assert len(list((out / "corpus" / "noisy").glob("*.png"))) == 4
    run = json.loads((out / "run.json").read_text())
    assert run["seed"] == 0 and run["command"] == "synth" and "version" in run
    assert run["config"]["schedule"]["ep3"] == 2


def test_unknown_subcommand_is_usage_error(capsys):
    assert cli_main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err
    assert cli_main([]) == 2
    assert cli_main(["train"]) == 2  # --config is required


def test_train_without_corpus_names_path(tmp_path, capsys):
    cfg = write_config(tmp_path, corpus={**TINY["corpus"], "dir": str(tmp_path / "nowhere")})
    assert cli_main(["train", "--config", cfg]) == 3
    assert "nowhere" in capsys.readouterr().err

    cfg = write_config(tmp_path)
    assert cli_main(["train", "--config", cfg]) == 3
    assert "corpus" in capsys.readouterr().err


def test_missing_checkpoint(tmp_path):
    cfg = write_config(tmp_path)
    assert cli_main(["synth", "--config", cfg]) == 0
    assert cli_main(["extract", "--config", cfg]) == 4
    assert cli_main(["pairs", "--config", cfg, "--checkpoint", str(tmp_path / "none")]) == 4
    assert cli_main(["train", "--config", cfg, "--resume", str(tmp_path / "none")]) == 4


def test_invalid_config_exit_code(tmp_path):
    cfg = write_config(tmp_path, schedule={"ep1": 5, "ep2": 2, "ep3": 9})
    assert cli_main(["synth", "--config", cfg]) == 3
    assert cli_main(["synth", "--config", str(tmp_path / "absent.json")]) == 3


def test_full_flow(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    inputs = tmp_path / "inputs"
    inputs.mkdir()
    Image.fromarray(np.full((32, 32), 120, np.uint8)).save(inputs / "a.png")

    for cmd in ("synth", "train", "extract", "pairs", "denoise-train", "eval"):
        assert cli_main([cmd, "--config", cfg]) == 0, cmd
    assert (out / "train" / "metrics.csv").is_file()
    assert (out / "extract" / "stats.json").is_file()
    assert (out / "pairs" / "manifest.json").is_file()
    ev = json.loads((out / "eval" / "eval.json").read_text())
    assert "denoiser_gain_db" in ev and "generator" in ev

    cfg2 = write_config(tmp_path, input_dir=str(inputs))
    assert cli_main(["denoise", "--config", cfg2]) == 0
    assert (out / "denoised" / "a.png").is_file()
    assert cli_main(["ablate", "--config", cfg2]) == 0
    assert cli_main(["report", "--config", cfg2]) == 0
    assert (out / "report" / "summary.html").is_file()
    assert (out / "ablation" / "grid_net3.png").is_file()
    # every write stays under --out
    assert sorted(p.name for p in tmp_path.iterdir()) == ["c.json", "inputs", "run"]


def test_seed_and_out_overrides(tmp_path):
    cfg = write_config(tmp_path)
    assert cli_main(["synth", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "run.json").read_text())["seed"] == 7


def test_validate_minimal_config_applies_defaults():
    cfg = validate_config({"seed": 3})
    assert cfg.schedule.ep1 > 0 and cfg.schedule.batch_size > 0
    assert cfg.generator.depth == 7


def test_validate_collects_every_violation():
    with pytest.raises(ConfigError) as info:
        validate_config({"seed": 1, "schedule": {"ep1": 9, "ep2": 3, "ep3": 10,
                                                 "w1_target": -1.0}})
    text = "\n".join(info.value.errors)
    assert "ep1 <= ep2" in text
    assert "non-negative" in text
    assert len(info.value.errors) >= 2


def test_validate_requires_seed():
    with pytest.raises(ConfigError, match="seed"):
        validate_config({"seed": "x"})


def test_validation_is_idempotent():
    for preset in ("desk", "paper"):
        cfg = validate_config({"seed": 2, "preset": preset})
        doc = resolved_document(cfg)
        again = resolved_document(validate_config(doc))
        assert again == doc


def test_data_dir_prefix(tmp_path, monkeypatch):
    (tmp_path / "srcs").mkdir()
    Image.fromarray(np.full((32, 32), 90, np.uint8)).save(tmp_path / "srcs" / "0.png")
    Image.fromarray(np.full((32, 32), 30, np.uint8)).save(tmp_path / "srcs" / "1.png")
    monkeypatch.setenv("SCGAN_DATA_DIR", str(tmp_path))
    cfg = write_config(tmp_path, corpus={"sources_dir": "srcs", "synthetic_sources": None})
    assert cli_main(["synth", "--config", cfg]) == 0
