import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modsep.mae import (SOURCE_KNEE, SOURCE_LEARNED, SOURCE_OVERRIDE,
                        compute_mae, dump_delta_curve, ensemble_threshold,
                        ensemble_thresholds, knee_w_star, pick_test_weight)

from .oracles import knee_ref, pairwise_flip_ref


class TestEnsembleThreshold:
    def test_hand_case_with_grid_check(self):
        y_v = np.array([2.0, 1.0])
        y_l = np.array([1.0, 1.5])
        delta = ensemble_threshold(y_v, y_l)
        assert delta == pytest.approx(1 / 3)
        # above the threshold the vision class wins, below it the text class
        for w, winner in ((0.4, 0), (0.2, 1)):
            ens = w * y_v + (1 - w) * y_l
            assert int(ens.argmax()) == winner

    def test_agreeing_heads_give_none(self):
        y = np.array([3.0, 1.0, 0.0])
        assert ensemble_threshold(y, y * 0.5) is None

    def test_dominated_text_clamps_to_zero(self):
        y_v = np.array([1.0, 2.0])
        y_l = np.array([1.0, 1.0])   # text tie, argmax index 0 != vision's 1
        delta = ensemble_threshold(y_v, y_l)
        assert delta == 0.0
        for w in (0.01, 0.5, 0.99):
            ens = w * y_v + (1 - w) * y_l
            assert int(ens.argmax()) == 1

    @given(st.integers(2, 6), st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=200, deadline=None)
    def test_grid_flip_matches_threshold(self, k, seed):
        rng = np.random.default_rng(seed)
        y_v = rng.standard_normal(k) * 3
        y_l = rng.standard_normal(k) * 3
        delta = ensemble_threshold(y_v, y_l)
        flip = pairwise_flip_ref(y_v, y_l)
        if delta is None:
            assert flip is None
        else:
            assert abs(flip - delta) <= 1.0 / 1000 + 1e-9

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(3)
        y_v = rng.standard_normal((40, 4))
        y_l = rng.standard_normal((40, 4))
        batch = ensemble_thresholds(y_v, y_l)
        for i in range(40):
            one = ensemble_threshold(y_v[i], y_l[i])
            if one is None:
                assert np.isnan(batch[i])
            else:
                assert batch[i] == pytest.approx(one)


class TestKnee:
    def test_collinear_tie_breaks_to_first(self):
        n = 8   # powers of two keep k/n exact in binary floats
        deltas = np.arange(1, n + 1) / n
        assert knee_w_star(deltas) == deltas[0]

    def test_two_segment_curve_knee_recovered(self):
        rng = np.random.default_rng(4)
        low = np.sort(rng.uniform(0.0, 0.2, 80))
        high = np.sort(rng.uniform(0.8, 1.0, 20))
        deltas = np.concatenate([low, high])
        w = knee_w_star(deltas)
        assert 0.15 <= w <= 0.25

    def test_singleton(self):
        assert knee_w_star(np.array([0.4])) == pytest.approx(0.4)

    def test_empty_falls_back(self):
        assert knee_w_star(np.array([])) == 0.5

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=60),
           st.integers(0, 1))
    @settings(max_examples=120, deadline=None)
    def test_matches_exhaustive_scan(self, raw, total_mode):
        deltas = np.sort(np.array(raw))
        n_total = deltas.size + 7
        got = knee_w_star(deltas, n_total=n_total,
                          use_total_slope=bool(total_mode))
        slope = n_total if total_mode else None
        assert got == knee_ref(deltas, slope=slope)

    def test_shift_equivariance_below_chord(self):
        # curves strictly below the reference line keep their knee under a
        # shift small enough not to cross it
        rng = np.random.default_rng(6)
        for _ in range(20):
            n = int(rng.integers(3, 30))
            ks = np.arange(1, n + 1)
            resid = rng.uniform(0.2, 0.9, n)      # distinct residuals, no ties
            deltas = (ks - resid) / n             # sorted, strictly below line
            margin = resid.min() / n
            c = margin * 0.5
            base = knee_w_star(deltas)
            shifted = knee_w_star(deltas + c)
            assert shifted == pytest.approx(base + c, abs=1e-9)


class TestComputeMae:
    def test_all_agreeing_heads_fall_back(self):
        y = np.random.default_rng(7).standard_normal((10, 3))
        state = compute_mae(y, y)
        assert state.n_points == 0
        assert state.w_star == 0.5
        assert state.source == SOURCE_OVERRIDE

    def test_deltas_sorted_and_clamped(self):
        rng = np.random.default_rng(8)
        state = compute_mae(rng.standard_normal((50, 4)),
                            rng.standard_normal((50, 4)))
        assert np.all(np.diff(state.deltas) >= 0)
        assert state.deltas.min() >= 0.0 and state.deltas.max() <= 1.0
        assert 0.0 <= state.w_star <= 1.0


class TestPickTestWeight:
    def _state(self):
        return compute_mae(np.array([[2.0, 1.0], [1.0, 2.0]]),
                           np.array([[1.0, 1.5], [1.4, 1.0]]))

    def test_epoch_zero_keeps_knee(self):
        s = self._state()
        knee = s.w_star
        out = pick_test_weight(s, epoch=0, learned_w_mean=0.9, late_start=45)
        assert out.w_star == knee and out.source == SOURCE_KNEE

    def test_late_every_third_epoch_uses_learned_mean(self):
        s = pick_test_weight(self._state(), epoch=48, learned_w_mean=0.77,
                             late_start=45)
        assert s.w_star == pytest.approx(0.77)
        assert s.source == SOURCE_LEARNED

    def test_late_non_multiple_keeps_knee(self):
        s = self._state()
        knee = s.w_star
        out = pick_test_weight(s, epoch=47, learned_w_mean=0.77, late_start=45)
        assert out.w_star == knee and out.source == SOURCE_KNEE

    def test_override_wins(self):
        s = pick_test_weight(self._state(), epoch=48, learned_w_mean=0.77,
                             late_start=45, override=0.3)
        assert s.w_star == 0.3 and s.source == SOURCE_OVERRIDE


def test_delta_curve_dump(tmp_path):
    state = compute_mae(np.array([[2.0, 1.0], [1.0, 2.0]]),
                        np.array([[1.0, 1.5], [1.4, 1.0]]))
    path = tmp_path / "curve.csv"
    dump_delta_curve(state, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == state.n_points
    assert [float(r["delta"]) for r in rows] == state.deltas.tolist()
