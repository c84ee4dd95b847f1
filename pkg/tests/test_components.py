import numpy as np

from selfrep_nca.components import components, count_components, label


def test_separate_blobs():
    m = np.zeros((8, 8), bool)
    m[1:3, 1:3] = True
    m[5:7, 5:7] = True
    assert count_components(m) == 2


def test_torus_wrap_merges_edges():
    m = np.zeros((6, 6), bool)
    m[2, 0] = m[2, 5] = True
    assert count_components(m, torus=True) == 1
    assert count_components(m, torus=False) == 2


def test_diagonal_contact_is_connected():
    m = np.zeros((4, 4), bool)
    m[0, 0] = m[1, 1] = True
    assert count_components(m) == 1


def test_min_size_filter_and_order():
    m = np.zeros((6, 6), bool)
    m[4, 4] = True
    m[0:2, 0:3] = True
    comps = components(m, torus=False)
    assert [c.size for c in comps] == [6, 1]
    assert count_components(m, torus=False, min_size=2) == 1


def test_bbox_across_seam():
    m = np.zeros((10, 10), bool)
    m[4, [9, 0, 1]] = True
    (comp,) = components(m)
    assert comp.bbox((10, 10)) == (4, 9, 1, 3)


def test_labels_cover_mask():
    m = np.random.default_rng(0).random((9, 9)) < 0.3
    labels, n = label(m)
    assert ((labels > 0) == m).all() and labels.max() == n
