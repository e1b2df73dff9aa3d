import pytest

from sinpoint.config import (
    RunConfig,
    default_config_text,
    load_manifest,
    load_pairs,
    load_run_config,
)


def test_defaults_match_documented_values():
    cfg = RunConfig()
    assert cfg.learning_rate == 0.1
    assert cfg.momentum == 0.9
    assert cfg.batch_size == 16
    assert cfg.epochs == 100
    assert cfg.dropout_rate == 0.5
    assert cfg.width_divisor == 1
    assert (cfg.threshold, cfg.min_area, cfg.max_area, cfg.connectivity) == (0.5, 100, 800, 8)
    assert cfg.deterministic is True


def test_load_and_override(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("learning_rate = 0.01\nepochs = 5  # short run\nmax_steps = none\n")
    cfg = load_run_config(str(path))
    assert cfg.learning_rate == 0.01
    assert cfg.epochs == 5
    assert cfg.max_steps is None
    assert cfg.momentum == 0.9  # untouched default


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("learning_rat = 0.01\n")
    with pytest.raises(ValueError, match="unknown config key"):
        load_run_config(str(path))


def test_malformed_line_rejected(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("learning_rate 0.01\n")
    with pytest.raises(ValueError, match="key = value"):
        load_run_config(str(path))


def test_bool_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("deterministic = false\n")
    assert load_run_config(str(path)).deterministic is False
    path.write_text("deterministic = maybe\n")
    with pytest.raises(ValueError, match="boolean"):
        load_run_config(str(path))


def test_default_config_text_roundtrips(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(default_config_text())
    assert load_run_config(str(path)) == RunConfig()


def test_manifest_resolves_relative_paths(tmp_path):
    (tmp_path / "img.pgm").write_bytes(b"P5\n1 1\n255\n\x00")
    (tmp_path / "ann.txt").write_text("0 0 core\n")
    manifest = tmp_path / "m.tsv"
    manifest.write_text("img.pgm\tann.txt\n")
    entries = load_manifest(str(manifest))
    assert len(entries) == 1
    assert entries[0].image_path == str(tmp_path / "img.pgm")


def test_manifest_missing_file_rejected(tmp_path):
    manifest = tmp_path / "m.tsv"
    manifest.write_text("gone.pgm\tgone.txt\n")
    with pytest.raises(FileNotFoundError, match="missing"):
        load_manifest(str(manifest))


def test_pairs_malformed_line(tmp_path):
    manifest = tmp_path / "m.tsv"
    manifest.write_text("only_one_column\n")
    with pytest.raises(ValueError, match="tab-separated"):
        load_pairs(str(manifest))
