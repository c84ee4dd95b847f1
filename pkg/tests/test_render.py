import numpy as np
from PIL import Image

from selfrep_nca.grid import ALPHA, new_grid
from selfrep_nca.lineage import EggGeometry, LineageRecord, default_dna, make_egg_seed
from selfrep_nca.render import render_frames, render_heatmap, render_strip, to_rgb
from selfrep_nca.rng import RngStream
from selfrep_nca.rule import UpdateMode, UpdateNetwork, rollout


def test_dead_grid_is_white():
    assert (to_rgb(new_grid(4, 4).cells) == 1.0).all()


def test_colors_over_white_and_threshold():
    g = new_grid(1, 3)
    g.cells[0, 0, :4] = (0.5, 0.0, 0.0, 0.5)   # premultiplied half-transparent red
    g.cells[0, 1, :4] = (0.0, 0.0, 0.0, 1.0)   # opaque black
    g.cells[0, 2, :4] = (0.05, 0.0, 0.0, 0.05)  # dead: below threshold
    rgb = to_rgb(g.cells)
    np.testing.assert_allclose(rgb[0, 0], (1.0, 0.5, 0.5))
    np.testing.assert_allclose(rgb[0, 1], (0.0, 0.0, 0.0))
    np.testing.assert_allclose(rgb[0, 2], (1.0, 1.0, 1.0))


def test_rollout_frames_one_pixel_per_cell(tmp_path):
    g = new_grid(10, 12)
    g.cells[4:6, 4:6, ALPHA] = 1.0
    _, traj = rollout(g, UpdateNetwork.zeros(4), 96, UpdateMode(), RngStream(0), record=True)
    paths = render_frames(traj, tmp_path)
    assert len(paths) == 96
    with Image.open(paths[0]) as im:
        assert im.size == (12, 10)
    paths = render_frames(traj, tmp_path / "big", upscale=3)
    with Image.open(paths[-1]) as im:
        assert im.size == (36, 30)


def test_lineage_frames_and_strip(tmp_path):
    geo = EggGeometry((9, 9), (3, 3))
    recs = [LineageRecord(i, default_dna(geo), make_egg_seed(geo)) for i in range(100)]
    assert len(render_frames(recs, tmp_path, prefix="gen")) == 100
    assert (tmp_path / "gen_099.png").exists()
    strip = render_strip([r.phenotype.cells for r in recs[:3]], tmp_path / "s.png")
    with Image.open(strip) as im:
        assert im.size == (9 * 3 + 2, 9)


def test_heatmap_png(tmp_path):
    m = np.full((5, 5), np.nan)
    m[np.triu_indices(5, 1)] = np.arange(10)
    path = render_heatmap(m, tmp_path / "h.png", "dna drift")
    with Image.open(path) as im:
        assert im.size[0] > 100
