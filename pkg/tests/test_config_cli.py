import hashlib
import json
import warnings

import pytest

from gfoes.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from gfoes.config import (ABLATION_CELLS, DESK_CLIP, ExperimentConfig, config_from_dict, derive_seed,
                          load_config, parse_config)
from gfoes.errors import ConfigError


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.seed == 0 and cfg.split.forget_labels == (0,)
    assert cfg.unlearn.clip_norm == DESK_CLIP
    assert cfg.ablation_cells == ABLATION_CELLS
    assert config_from_dict({}) == cfg


def test_toml_overrides():
    cfg = parse_config("""
seed = 7
[dataset]
num_classes = 4
[split]
forget_labels = [1, 2]
[unlearn]
clip_norm = "none"
[baselines]
enabled = ["retrain"]
[baselines.neggrad]
epochs = 3
""")
    assert cfg.seed == 7 and cfg.dataset.num_classes == 4 and cfg.split.forget_labels == (1, 2)
    assert cfg.unlearn.clip_norm is None
    assert cfg.enabled_baselines == ("retrain",) and cfg.baselines["neggrad"].epochs == 3


def test_json_equals_toml(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"seed": 3, "train": {"epochs": 2}}))
    (tmp_path / "c.toml").write_text("seed = 3\n[train]\nepochs = 2\n")
    assert load_config(tmp_path / "c.json") == load_config(tmp_path / "c.toml")


@pytest.mark.parametrize("text,where", [
    ("[dataset]\nnum_clases = 4\n", "dataset.num_clases"),
    ("bogus = 1\n", "bogus"),
    ("[split]\nforget_labels = []\n", "split"),
    ("[split]\nforget_labels = [0, 1, 2, 3, 4]\n", "strict subset"),
    ("[baselines]\nenabled = [\"finetune\"]\n", "finetune"),
    ("[ablation]\ncells = [\"X\"]\n", "ablation.cells"),
    ("seed = -1\n", "seed"),
    ("[train\n", "line 1"),
])
def test_config_errors_name_the_problem(text, where):
    with pytest.raises(ConfigError, match=where.replace("[", r"\[")):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_derive_seed_is_blake2b():
    want = int.from_bytes(hashlib.blake2b(b"0\x1fgfoes\x1f", digest_size=8).digest(), "little")
    assert derive_seed(0, "gfoes") == want
    assert derive_seed(0, "gfoes") != derive_seed(1, "gfoes") != derive_seed(0, "neggrad")
    assert derive_seed(0, "gfoes", "a") != derive_seed(0, "gfoes", "b")


def test_to_dict_round_trips():
    cfg = parse_config("seed = 4\n[model]\nhidden = [8, 8]\n")
    d = cfg.to_dict()
    json.dumps(d)
    d.pop("output_dir")
    assert config_from_dict({k: d[k] for k in ("seed", "dataset", "model", "split", "train")}).model == cfg.model


# ---------------------------------------------------------------- CLI

def _small(tmp_path, extra=""):
    path = tmp_path / "c.toml"
    path.write_text("[dataset]\nn_per_class = 60\n[train]\nepochs = 5\n" + extra)
    return str(path)


def test_cli_unlearn_eval_audit(tmp_path, capsys):
    out = str(tmp_path / "run")
    cfg = _small(tmp_path, "[baselines]\nenabled = [\"retrain\"]\n")
    assert main(["unlearn", "--config", cfg, "--out", out]) == EXIT_OK
    text = capsys.readouterr().out
    assert "gfoes" in text and "retrain" in text and "neggrad" not in text
    record = json.loads((tmp_path / "run" / "run.json").read_text())
    assert set(record["methods"]) == {"gfoes", "retrain"}
    assert record["zero_glance"]["violations"] == 0
    assert main(["eval", "--out", out]) == EXIT_OK
    assert main(["audit", "--out", out]) == EXIT_OK


def test_cli_audit_detects_tampering(tmp_path):
    out = tmp_path / "run"
    assert main(["baseline", "--config", _small(tmp_path), "--out", str(out), "--methods", "neggrad"]) == EXIT_OK
    record = json.loads((out / "run.json").read_text())
    record["methods"]["neggrad"]["AD_f"] = 0.123
    (out / "run.json").write_text(json.dumps(record))
    assert main(["audit", "--out", str(out)]) == EXIT_CONFIG


def test_cli_config_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[train]\nlr = 1\n")
    assert main(["train", "--config", str(bad), "--out", str(tmp_path / "r")]) == EXIT_CONFIG
    assert main(["unlearn", "--methods", "bogus", "--out", str(tmp_path / "r")]) == EXIT_CONFIG
    assert main(["audit", "--out", str(tmp_path / "missing")]) == EXIT_CONFIG
    assert main(["train", "--seed", "-3", "--out", str(tmp_path / "r")]) == EXIT_CONFIG


def test_cli_numeric_abort(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[unlearn]\nerase_lr = 1e8\nclip_norm = \"none\"\n")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rc = main(["unlearn", "--config", str(cfg), "--out", str(tmp_path / "r"), "--methods", "gfoes,retrain"])
    assert rc == EXIT_NUMERIC
    record = json.loads((tmp_path / "r" / "run.json").read_text())
    assert record["status"] == "aborted"
    assert record["methods"]["gfoes"]["status"] == "aborted" and record["methods"]["retrain"]["status"] == "ok"


def test_cli_train_writes_splits(tmp_path):
    assert main(["train", "--config", _small(tmp_path), "--seed", "2", "--out", str(tmp_path / "t")]) == EXIT_OK
    assert (tmp_path / "t" / "models" / "theta0.bin").exists()
    assert (tmp_path / "t" / "data" / "split.json").exists()
