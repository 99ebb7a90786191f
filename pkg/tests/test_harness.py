"""Config, checkpointing, training-loop, probe, and CLI behavior."""

import os

import numpy as np
import pytest

from svada import data as dat
from svada.checkpoint import load_checkpoint, save_checkpoint
from svada.cli import main
from svada.config import RunConfig, config_text, parse_config_text
from svada.probes import LinearProbe, probe_report
from svada.trainer import (Trainer, effective_weights, evaluate, load_trainer,
                           train)

from conftest import read_text, tiny_config


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

def test_config_round_trip_defaults():
    # [TRIVIAL] serialize/parse round trip
    cfg = RunConfig()
    assert parse_config_text(config_text(cfg)) == cfg


def test_config_round_trip_changed_values():
    cfg = RunConfig(lambda2=10.0, eta=0.8, no_pl=True, mode="feature")
    back = parse_config_text(config_text(cfg))
    assert back.lambda2 == 10.0 and back.eta == 0.8
    assert back.no_pl is True and back.mode == "feature"


def test_config_parser_accepts_comments_and_blanks():
    cfg = parse_config_text("# header\n\nseed = 5  # trailing\nepochs = 20\n")
    assert cfg.seed == 5 and cfg.epochs == 20


@pytest.mark.parametrize("text,msg", [
    ("bogus = 1", "unknown key"),
    ("seed", "expected"),
    ("eta = maybe", "bad value"),
    ("eta = 1.5", "eta"),
    ("warmup_epochs = 60", "warmup"),
    ("batch = 7", "batch"),
    ("lambda3 = -1", "lambda3"),
    ("mode = audio", "mode"),
])
def test_config_rejects_invalid(text, msg):
    with pytest.raises(ValueError, match=msg):
        parse_config_text(text)


def test_effective_weights_respect_ablation_flags():
    w = effective_weights(RunConfig(no_mi=True, no_ctc=True, lambda2=3.0))
    assert w.lambda1 == 0.0 and w.lambda3 == 0.0
    assert w.lambda2 == 3.0 and w.lambda4 == 1.0


# ---------------------------------------------------------------------------
# checkpoint format
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    params = [("a.W", rng.standard_normal((3, 4)).astype(np.float32)),
              ("b", rng.standard_normal(5).astype(np.float32))]
    m = [p[1] * 0.1 for p in params]
    v = [p[1] * 0.01 for p in params]
    path = tmp_path / "ck.bin"
    save_checkpoint(path, "seed = 1\n", 7, params, 123, m, v,
                    [("task.W", params[0][1])])
    back = load_checkpoint(path)
    assert back["epoch"] == 7 and back["adam_step"] == 123
    assert back["config_text"] == "seed = 1\n"
    for name, arr in params:
        assert np.array_equal(back["params"][name], arr)
        assert np.array_equal(back["adam_m"][name], dict(zip([n for n, _ in params], m))[name])
    assert np.array_equal(back["pseudo_head"]["task.W"], params[0][1])


def test_checkpoint_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"WRONG" + b"\x00" * 16)
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(p)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def test_metrics_csv_has_exactly_epochs_rows(tiny_run):
    lines = read_text(os.path.join(tiny_run, "metrics.csv")).strip().splitlines()
    assert len(lines) == 1 + tiny_config().epochs


def test_training_is_deterministic(tmp_path, small_data_dir, tiny_run):
    out = str(tmp_path / "again")
    train(tiny_config(), small_data_dir, out)
    assert read_text(os.path.join(out, "metrics.csv")) == \
        read_text(os.path.join(tiny_run, "metrics.csv"))


def test_training_seed_changes_metrics(tmp_path, small_data_dir, tiny_run):
    out = str(tmp_path / "seed1")
    train(tiny_config(seed=1), small_data_dir, out)
    assert read_text(os.path.join(out, "metrics.csv")) != \
        read_text(os.path.join(tiny_run, "metrics.csv"))


def test_resume_reproduces_uninterrupted_run(tmp_path, small_data_dir,
                                             monkeypatch):
    import svada.trainer as trainer_mod

    cfg = tiny_config(epochs=4, warmup_epochs=2)
    full = str(tmp_path / "full")
    train(cfg, small_data_dir, full)

    # Keep a copy of each intermediate checkpoint so we can restart from
    # the epoch-1 state as if the first run had been interrupted there.
    orig_save = trainer_mod.save_checkpoint

    def keep_copies(path, cfg_text, epoch, *args):
        orig_save(path, cfg_text, epoch, *args)
        orig_save(f"{path}.ep{epoch}", cfg_text, epoch, *args)

    monkeypatch.setattr(trainer_mod, "save_checkpoint", keep_copies)
    monkeypatch.setattr(trainer_mod, "CHECKPOINT_EVERY", 2)
    part = str(tmp_path / "part")
    train(cfg, small_data_dir, part)
    monkeypatch.undo()

    resumed = str(tmp_path / "resumed")
    train(cfg, small_data_dir, resumed,
          resume_from=os.path.join(part, "checkpoint.bin.ep1"))
    assert read_text(os.path.join(resumed, "metrics.csv")) == \
        read_text(os.path.join(full, "metrics.csv"))


def test_checkpoint_reload_preserves_accuracy(tiny_run, small_data_dir,
                                              small_datasets):
    tr = load_trainer(tiny_run)
    _, test_ds = small_datasets
    acc = evaluate(tiny_run, small_data_dir)
    assert acc["target_acc"] == pytest.approx(tr.accuracy(test_ds, 1))


def test_train_rejects_mismatched_T(tmp_path, small_data_dir):
    with pytest.raises(ValueError, match="T"):
        train(tiny_config(T=6), small_data_dir, str(tmp_path / "bad"))


def test_trainer_predicts_all_classes_shape(tiny_run, small_datasets):
    tr = load_trainer(tiny_run)
    train_ds, _ = small_datasets
    logits = tr.predict_logits(train_ds.frames[:10])
    assert logits.shape == (10, train_ds.n_classes)


def test_pseudo_labels_never_touch_target_labels(small_datasets):
    """The training path must reject direct use of target labels."""
    train_ds, _ = small_datasets
    for src, tgt in dat.batch_iter(train_ds, 8, seed=0, epoch=0):
        with pytest.raises(PermissionError):
            tgt.visible_labels()
        break


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------

def test_linear_probe_learns_separable_data():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((200, 4)).astype(np.float32)
    y = (X[:, 0] > 0).astype(np.int64)
    probe = LinearProbe(4, 2).fit(X, y)
    assert probe.accuracy(X, y) > 0.95


def test_probe_report_columns(tiny_run, small_datasets):
    tr = load_trainer(tiny_run)
    acc = probe_report(tr, *small_datasets)
    assert set(acc) == {"domain_from_zd", "domain_from_zt",
                        "class_from_zt", "class_from_zd"}
    assert all(0.0 <= v <= 1.0 for v in acc.values())


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_generate_eval_swap_roundtrip(tmp_path, capsys):
    data = str(tmp_path / "data")
    run = str(tmp_path / "run")
    cfg_path = str(tmp_path / "cfg.txt")
    with open(cfg_path, "w") as f:
        f.write(config_text(tiny_config(epochs=2, warmup_epochs=1)))

    assert main(["generate", "--out", data, "--seed", "0",
                 "--per-class", "10", "--T", "4"]) == 0
    assert main(["train", "--config", cfg_path, "--data", data,
                 "--out", run]) == 0
    assert main(["eval", "--run", run, "--data", data]) == 0
    out = capsys.readouterr().out
    assert "target_acc=" in out

    panels = str(tmp_path / "panels")
    assert main(["swap", "--run", run, "--data", data, "--out", panels,
                 "--pairs", "2"]) == 0
    written = sorted(os.listdir(panels))
    assert written == ["pair000_a.ppm", "pair000_b.ppm",
                       "pair001_a.ppm", "pair001_b.ppm"]


def test_cli_probe_prints_csv(tiny_run, small_data_dir, capsys):
    assert main(["probe", "--run", tiny_run, "--data", small_data_dir]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out[0].split(",")[0] == "domain_from_zd"
    assert len(out[1].split(",")) == 4


def test_cli_seed_flag_overrides_config(tmp_path, small_data_dir):
    run = str(tmp_path / "run")
    cfg_path = str(tmp_path / "cfg.txt")
    with open(cfg_path, "w") as f:
        f.write(config_text(tiny_config(epochs=2, warmup_epochs=1, seed=0)))
    assert main(["train", "--config", cfg_path, "--data", small_data_dir,
                 "--out", run, "--seed", "3"]) == 0
    assert "seed = 3" in read_text(os.path.join(run, "config.txt"))
