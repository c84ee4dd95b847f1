import json
import locale

import numpy as np
import pytest
from PIL import Image

from selfrep_nca.errors import CheckpointFormatError, InvalidArgument
from selfrep_nca.grid import Grid
from selfrep_nca.io import (CheckpointMeta, RunConfig, load_array, load_checkpoint, load_lineage, load_run_config,
                            load_target_image, place_image, read_csv, run_config_from_dict, save_array,
                            save_checkpoint, save_lineage, save_run_config, write_csv)
from selfrep_nca.lineage import LineageRecord
from selfrep_nca.rng import RngStream
from selfrep_nca.rule import UpdateNetwork

from conftest import random_net


def _png(path, rgba):
    Image.fromarray(np.asarray(rgba, np.uint8), "RGBA").save(path)
    return path


def test_target_centered_with_margins(tmp_path):
    path = _png(tmp_path / "sq.png", np.full((32, 32, 4), 255))
    spec = load_target_image(path, (72, 72))
    alpha = spec.target_image[..., 3]
    assert alpha[20:52, 20:52].all() and alpha.sum() == 32 * 32
    assert spec.initial.shape == (72, 72)


def test_transparent_target_is_zero(tmp_path):
    rgba = np.full((8, 8, 4), 200)
    rgba[..., 3] = 0
    spec = load_target_image(_png(tmp_path / "t.png", rgba), (16, 16))
    assert not spec.target_image.any()


def test_premultiplied(tmp_path):
    rgba = np.zeros((2, 2, 4))
    rgba[..., 0], rgba[..., 3] = 255, 51
    img = load_target_image(_png(tmp_path / "p.png", rgba), (2, 2)).target_image
    np.testing.assert_allclose(img[0, 0], (0.2, 0, 0, 0.2))


def test_oversized_and_missing_images(tmp_path):
    with pytest.raises(InvalidArgument):
        load_target_image(_png(tmp_path / "big.png", np.zeros((100, 100, 4))), (72, 72))
    with pytest.raises(FileNotFoundError, match="nowhere.png"):
        load_target_image(tmp_path / "nowhere.png", (8, 8))
    (tmp_path / "junk.png").write_bytes(b"not an image")
    with pytest.raises(InvalidArgument):
        load_target_image(tmp_path / "junk.png", (8, 8))


def test_place_with_offset():
    img = place_image(np.ones((2, 3, 4)), (6, 6), (4, 3))
    assert img[4:6, 3:6, 3].all() and img[..., 3].sum() == 6
    with pytest.raises(InvalidArgument):
        place_image(np.ones((2, 3, 4)), (6, 6), (5, 0))


def test_checkpoint_round_trip_bitwise(tmp_path):
    net = random_net(0, hidden=12)
    path = save_checkpoint(net, CheckpointMeta(1500, 42, (36, 36)), tmp_path / "a.ckpt")
    back, meta = load_checkpoint(path)
    assert back.flat().tobytes() == net.flat().tobytes()
    assert meta == CheckpointMeta(1500, 42, (36, 36))


def test_checkpoint_layout_is_documented_order(tmp_path):
    net = random_net(1, hidden=3)
    raw = save_checkpoint(net, CheckpointMeta(), tmp_path / "b.ckpt").read_bytes()
    payload = np.frombuffer(raw[8 + 32:-4], "<f4")
    np.testing.assert_array_equal(payload, net.flat())
    assert raw[:4] == b"SNCA"


def test_checkpoint_errors(tmp_path):
    path = save_checkpoint(UpdateNetwork.initialize(128, RngStream(0)), CheckpointMeta(), tmp_path / "c.ckpt")
    with pytest.raises(InvalidArgument, match="128"):
        load_checkpoint(path, hidden_size=64)
    raw = bytearray(path.read_bytes())
    bad = tmp_path / "magic.ckpt"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointFormatError, match="magic"):
        load_checkpoint(bad)
    trunc = tmp_path / "trunc.ckpt"
    trunc.write_bytes(raw[:100])
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(trunc)
    flipped = bytearray(raw)
    flipped[200] ^= 0xFF
    (tmp_path / "crc.ckpt").write_bytes(flipped)
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(tmp_path / "crc.ckpt")
    version = bytearray(raw)
    version[4] = 9
    (tmp_path / "v.ckpt").write_bytes(version)
    with pytest.raises(CheckpointFormatError, match="version"):
        load_checkpoint(tmp_path / "v.ckpt")
    with pytest.raises(CheckpointFormatError):
        load_array(path)


def test_array_round_trip(tmp_path):
    a = np.random.default_rng(0).normal(size=(3, 4, 16)).astype(np.float32)
    np.testing.assert_array_equal(load_array(save_array(a, tmp_path / "a.bin")), a)


def test_csv_is_locale_independent(tmp_path):
    try:
        locale.setlocale(locale.LC_NUMERIC, "de_DE.UTF-8")
    except locale.Error:
        pass
    try:
        path = write_csv(tmp_path / "x.csv", ["lag", "mean"], [[1, 0.5], [2, 1 / 3]])
    finally:
        locale.setlocale(locale.LC_NUMERIC, "C")
    text = path.read_text()
    assert text.splitlines()[0] == "lag,mean" and "0.5" in text and "0.33333333333333331" in text
    assert read_csv(path)[1]["mean"] == "0.33333333333333331"


def test_run_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(InvalidArgument, match="bogus"):
        run_config_from_dict({"bogus": 1})
    with pytest.raises(InvalidArgument, match="lineage"):
        run_config_from_dict({"lineage": {"n_gens": 3}})
    cfg = run_config_from_dict({"seed": 3, "lineage": {"n_generations": 5}, "targets": [{"image": "a.png"}]})
    path = save_run_config(cfg, tmp_path / "c.json")
    assert load_run_config(path) == cfg
    assert json.loads(path.read_text())["seed"] == 3
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(InvalidArgument):
        load_run_config(tmp_path / "bad.json")
    assert RunConfig().hidden_size == 128


def test_lineage_directory_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    recs = [LineageRecord(i, rng.normal(size=144).astype(np.float32),
                          Grid(rng.normal(size=(5, 5, 16)).astype(np.float32)), viable=i < 2) for i in range(3)]
    save_lineage(recs, tmp_path / "lin", {"seed": 4})
    back, manifest = load_lineage(tmp_path / "lin")
    assert manifest["seed"] == 4 and manifest["extinct"] is True
    assert sorted(p.name for p in (tmp_path / "lin").iterdir())[:2] == ["gen_000.adult.bin", "gen_000.dna.bin"]
    for a, b in zip(recs, back):
        assert a.generation == b.generation and a.viable == b.viable and a.phenotype == b.phenotype
        np.testing.assert_array_equal(a.dna, b.dna)
    with pytest.raises(FileNotFoundError):
        load_lineage(tmp_path)
