import numpy as np
import pytest

from depthrefine.core_depth import DepthMap
from depthrefine.errors import DataError, DimensionMismatch, EmptyMask
from depthrefine.metrics import CannyConfig, EdgeMap, canny, dbe, depth_metrics, distance_transform, pdbe


def dm(v):
    return DepthMap(np.asarray(v, dtype=float))


def brute_force_edt(edges):
    ey, ex = np.nonzero(edges)
    yy, xx = np.mgrid[0:edges.shape[0], 0:edges.shape[1]]
    d2 = (yy[..., None] - ey) ** 2 + (xx[..., None] - ex) ** 2
    return np.sqrt(d2.min(axis=-1))


class TestDepthMetrics:
    def test_perfect(self):
        g = dm(np.random.default_rng(0).uniform(1, 5, (6, 6)))
        m = depth_metrics(g, g)
        assert (m.a_rel, m.rmse, m.si_log, m.delta1) == (0.0, 0.0, 0.0, 1.0)

    def test_doubled(self):
        g = dm(np.random.default_rng(0).uniform(1, 5, (6, 6)))
        m = depth_metrics(dm(2 * g.values), g)
        assert m.a_rel == pytest.approx(1.0, abs=1e-12)
        assert m.delta1 == 0.0
        assert m.si_log == pytest.approx(0.0, abs=1e-9)

    def test_two_pixel_hand_case(self):
        # pred (1, 4), gt (2, 2): a_rel = (0.5 + 1) / 2, rmse = sqrt((1 + 4) / 2)
        # log ratios -ln2, +ln2 -> si_log = 100 ln2; ratios 2, 2 -> delta1 0
        m = depth_metrics(dm([[1.0, 4.0]]), dm([[2.0, 2.0]]))
        assert abs(m.a_rel - 0.75) < 1e-12
        assert abs(m.rmse - np.sqrt(2.5)) < 1e-12
        assert abs(m.si_log - 100 * np.log(2)) < 1e-12
        assert m.delta1 == 0.0

    def test_threshold_is_strict(self):
        m = depth_metrics(dm([[1.25, 1.0]]), dm([[1.0, 1.0]]))
        assert m.delta1 == 0.5

    def test_mask_and_errors(self):
        g = dm([[1.0, 2.0]])
        with pytest.raises(EmptyMask):
            depth_metrics(g, g, mask=np.zeros((1, 2), bool))
        with pytest.raises(DimensionMismatch):
            depth_metrics(g, dm([[1.0]]))


class TestCanny:
    def test_constant_has_no_edges(self):
        assert not canny(np.full((16, 16), 3.0)).edges.any()

    def test_vertical_step_single_column(self):
        img = np.zeros((20, 20))
        img[:, 10:] = 1.0
        cols = canny(img).edges.sum(axis=0)
        # the step lies between columns 9 and 10; either side is a valid ridge
        assert cols.sum() == 20 and np.count_nonzero(cols) == 1
        assert np.argmax(cols) in (9, 10)

    def test_horizontal_step_single_row(self):
        img = np.zeros((20, 20))
        img[7:, :] = 1.0
        rows = canny(img).edges.sum(axis=1)
        assert rows.sum() == 20 and np.count_nonzero(rows) == 1
        assert np.argmax(rows) in (6, 7)

    def test_weak_gradients_below_low_threshold_vanish(self):
        # a strong step plus faint ripples well under the low threshold
        yy, xx = np.mgrid[0:32, 0:32]
        img = np.where(xx >= 16, 1.0, 0.0) + 0.005 * np.sin(xx * 1.3 + yy * 0.7)
        e = canny(img).edges
        assert set(np.nonzero(e)[1]) <= {15, 16}
        assert e.sum() == 32

    def test_hysteresis_keeps_weak_connected_to_strong(self):
        img = np.zeros((20, 30))
        img[:, 10:] = 1.0
        img[:, 20:] = 1.15  # weaker step, isolated from the strong one
        cfg = CannyConfig(low_threshold=0.1, high_threshold=0.2)
        e = canny(img, cfg).edges
        assert e[:, 10].all()
        assert not e[:, 19:22].any()
        loose = canny(img, CannyConfig(low_threshold=0.1, high_threshold=0.12)).edges
        assert loose[:, 20].all() or loose[:, 19].all()

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            canny(np.array([[np.nan, 1.0]]))


class TestDistanceTransform:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            edges = rng.random((24, 24)) < 0.03
            edges[rng.integers(24), rng.integers(24)] = True
            assert np.array_equal(distance_transform(EdgeMap(edges)), brute_force_edt(edges))

    def test_no_edges_is_infinite(self):
        assert np.all(np.isinf(distance_transform(EdgeMap(np.zeros((4, 4), bool)))))


class TestDbe:
    def test_identical_is_zero(self):
        e = np.zeros((10, 10), bool)
        e[:, 4] = True
        m = dbe(EdgeMap(e), EdgeMap(e))
        assert (m.acc, m.compl) == (0.0, 0.0)

    def test_truncation(self):
        a = np.zeros((5, 40), bool)
        b = np.zeros((5, 40), bool)
        a[:, 2] = True
        b[:, 35] = True
        m = dbe(EdgeMap(a), EdgeMap(b), truncation=10)
        assert m.acc == 10.0 and m.compl == 10.0

    def test_empty_sets_flagged(self):
        e = np.zeros((5, 5), bool)
        full = e.copy()
        full[2, 2] = True
        m = dbe(EdgeMap(e), EdgeMap(full))
        assert m.acc_undefined and not m.compl_undefined
        assert m.acc == 0.0 and m.compl == 10.0

    def test_pdbe_perfect(self):
        g = np.full((32, 32), 5.0)
        g[8:24, 8:24] = 2.0
        m = pdbe(dm(g), dm(g))
        assert (m.acc, m.compl) == (0.0, 0.0)
