import csv

import pytest

from adda.cli import main
from adda.config import load_config, parse_config
from adda.errors import ConfigError

SMALL = """\
# tiny run
scenario = easy
data.classes = 4
data.per_class = 16
data.hw = 8x8
epochs = 2
batch_size = 32
queue_size = 64
hidden_dim = 16
embed_dim = 8
probe_epochs = 5
out_dir = out
"""


def write_config(tmp_path, text=SMALL, name="run.conf"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_parse_defaults_and_paths(tmp_path):
    cfg = parse_config(SMALL, base_dir=tmp_path)
    assert cfg.train.epochs == 2 and cfg.train.tau == 0.2
    assert len(cfg.train.compositions) == 3
    assert cfg.out_dir == tmp_path / "out"
    assert cfg.train.metrics_path == str(tmp_path / "out" / "metrics.csv")


def test_default_sweep_and_explicit_compositions():
    cfg = parse_config("epochs = 1")
    assert [c.frequency("jitter") for c in cfg.train.compositions] == [0.6, 0.7, 0.8]
    cfg = parse_config("comp.0.jitter_freq = 0.3\ncomp.1.gray_freq = 0\ncomp.1.crop_min = 0.5")
    c0, c1 = cfg.train.compositions
    assert c0.frequency("jitter") == 0.3 and c1.frequency("grayscale") == 0.0
    assert c1.crop.scale == (0.5, 1.0)


@pytest.mark.parametrize("text", [
    "bogus = 1",
    "comp.0.hue = 0.1",
    "epochs = two",
    "epochs = 1\nepochs = 2",
    "no equals sign",
    "comp.1.jitter_freq = 0.5",
    "scenario = hard",
    "epochs = 0",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_seed_override(tmp_path):
    cfg = load_config(write_config(tmp_path), overrides={"seed": 7})
    assert cfg.train.seed == 7


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.conf"
    assert main(["pretrain", "--config", str(missing)]) != 0
    assert str(missing) in capsys.readouterr().err
    with pytest.raises(ConfigError):
        load_config(missing)


def test_pretrain_probe_report(tmp_path, capsys):
    conf = write_config(tmp_path)
    assert main(["pretrain", "--config", str(conf)]) == 0
    out = tmp_path / "out"
    with open(out / "metrics.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2

    data = tmp_path / "data.adds"
    assert main(["gen-data", "--classes", "4", "--per-class", "16", "--hw", "8x8", "--out", str(data),
                 "--scenario", "easy"]) == 0
    assert (tmp_path / "data.adds.comps.conf").exists()
    args = ["probe", "--checkpoint", str(out / "checkpoint.adck"), "--dataset", str(data), "--probe-epochs", "5"]
    assert main(args) == 0
    assert main(args) == 0
    with open(out / "probe.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 and rows[0]["top1"] == rows[1]["top1"]

    assert main(["report", "--metrics", str(out / "metrics.csv"), "--out", str(tmp_path / "plots")]) == 0
    assert sorted(p.name for p in (tmp_path / "plots").iterdir()) == ["accuracy.svg", "p_std.svg", "probabilities.svg"]


def test_probe_errors(tmp_path, capsys):
    data = tmp_path / "data.adds"
    main(["gen-data", "--classes", "2", "--per-class", "4", "--hw", "8x8", "--out", str(data)])
    capsys.readouterr()
    assert main(["probe", "--checkpoint", str(tmp_path / "missing.adck"), "--dataset", str(data)]) != 0
    assert "missing.adck" in capsys.readouterr().err
    assert main(["probe", "--checkpoint", str(tmp_path / "x.adck"), "--dataset", str(data),
                 "--probe-epochs", "0"]) != 0
    assert "probe-epochs" in capsys.readouterr().err


def test_pretrain_seed_flag_changes_run(tmp_path):
    conf = write_config(tmp_path, SMALL.replace("epochs = 2", "epochs = 1"))
    main(["pretrain", "--config", str(conf)])
    first = (tmp_path / "out" / "metrics.csv").read_bytes()
    main(["pretrain", "--config", str(conf), "--seed", "3"])
    assert (tmp_path / "out" / "metrics.csv").read_bytes() != first


def test_ablate_rows_and_run_ids(tmp_path):
    conf = write_config(tmp_path, SMALL.replace("epochs = 2", "epochs = 1"))
    assert main(["ablate", "--config", str(conf)]) == 0
    assert main(["ablate", "--config", str(conf)]) == 0
    with open(tmp_path / "out" / "ablation.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    assert [r["method"] for r in rows[:4]] == ["adaptive", "fixed_0", "fixed_1", "fixed_2"]
    assert {r["run_id"] for r in rows[:4]} == {"1"} and {r["run_id"] for r in rows[4:]} == {"2"}
    for r in rows[1:4]:
        assert r["final_composition"] == r["method"].split("_")[1]
    assert (tmp_path / "out" / "ablate" / "run-2" / "fixed_1" / "metrics.csv").exists()


def test_gen_data_bad_hw(tmp_path):
    with pytest.raises(SystemExit):
        main(["gen-data", "--hw", "16", "--out", str(tmp_path / "d.adds")])
