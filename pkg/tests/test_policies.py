import dataclasses

import numpy as np
import pytest

from acsim.policies import (AcceptAll, BlockAll, Clairvoyant, DecisionContext, ThresholdResource,
                            ThresholdUE, featurize, feature_length, threshold_resource,
                            threshold_ue)


def make_ctx(**kwargs):
    base = dict(
        ue_id=0, ue_type=0, n_types=2, candidate_cell=0, tentative_bi=0.05,
        cell_loads=(0.3, 0.1, 0.0, 0.2, 0.0, 0.6, 0.05),
        cell_counts=(4, 1, 0, 2, 0, 7, 1),
        cell_mean_rate=3.2, arrival_rate=0.071, time=12.5,
    )
    base.update(kwargs)
    return DecisionContext(**base)


class TestBaselines:
    def test_accept_all(self):
        assert AcceptAll().decide(make_ctx()) is True

    def test_block_all(self):
        assert BlockAll().decide(make_ctx()) is False

    def test_clairvoyant_accepts_and_is_flagged(self):
        pol = Clairvoyant()
        assert pol.decide(make_ctx()) is True
        assert pol.clairvoyant is True

    def test_decide_does_not_mutate_context(self):
        ctx = make_ctx()
        before = dataclasses.asdict(ctx)
        for pol in (AcceptAll(), BlockAll(), ThresholdUE(5), ThresholdResource(0.5, 1e7)):
            pol.decide(ctx)
        assert dataclasses.asdict(ctx) == before


class TestThresholdUE:
    def test_below_threshold_accepts(self):
        assert threshold_ue(make_ctx(cell_counts=(4, 0, 0, 0, 0, 0, 0)), 5) is True

    def test_at_threshold_blocks(self):
        assert threshold_ue(make_ctx(cell_counts=(5, 0, 0, 0, 0, 0, 0)), 5) is False

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError):
            threshold_ue(make_ctx(), -1)


class TestThresholdResource:
    def test_fits_within_threshold(self):
        ctx = make_ctx(cell_loads=(0.55, 0, 0, 0, 0, 0, 0), tentative_bi=0.04)
        assert threshold_resource(ctx, 6e6, 1e7) is True  # 5.5 + 0.4 <= 6 MHz

    def test_exceeds_threshold(self):
        ctx = make_ctx(cell_loads=(0.57, 0, 0, 0, 0, 0, 0), tentative_bi=0.04)
        assert threshold_resource(ctx, 6e6, 1e7) is False

    def test_full_bandwidth_threshold_accepts_feasible(self):
        ctx = make_ctx(cell_loads=(0.0,) * 7, tentative_bi=0.3125)
        assert threshold_resource(ctx, 1e7, 1e7) is True

    def test_zero_threshold_blocks_everything(self):
        ctx = make_ctx(cell_loads=(0.0,) * 7, tentative_bi=0.0132)
        assert threshold_resource(ctx, 0.0, 1e7) is False

    def test_rejects_threshold_outside_bandwidth(self):
        with pytest.raises(ValueError):
            threshold_resource(make_ctx(), 2e7, 1e7)


class TestFeaturize:
    def test_v1_empty_network(self):
        ctx = make_ctx(cell_loads=(0.0,) * 7, arrival_rate=0.1, ue_type=0, n_types=2)
        assert np.allclose(featurize(1, ctx), [0.0, 0.1, 1.0, 0.0])

    def test_v2_appends_demand(self):
        ctx = make_ctx(cell_loads=(0.0,) * 7, tentative_bi=1e6 / 7.6e7, arrival_rate=0.1)
        v = featurize(2, ctx)
        assert v[1] == pytest.approx(0.013158, abs=1e-5)

    def test_v3_adds_six_neighbor_loads_in_cell_order(self):
        ctx = make_ctx(candidate_cell=2)
        v = featurize(3, ctx)
        assert len(v) == len(featurize(2, ctx)) + 6
        loads = ctx.cell_loads
        expected = [loads[j] for j in (0, 1, 3, 4, 5, 6)]
        assert np.allclose(v[2:8], expected)

    def test_v4_adds_cell_quality(self):
        ctx = make_ctx(cell_mean_rate=5.5)
        assert featurize(4, ctx)[8] == 5.5

    def test_versions_are_prefix_monotone(self):
        ctx = make_ctx()
        tail = 1 + ctx.n_types  # arrival rate + one-hot, always last
        for v in (1, 2, 3):
            lo = featurize(v, ctx)
            hi = featurize(v + 1, ctx)
            assert np.allclose(lo[:-tail], hi[: len(lo) - tail])

    def test_lengths_match_helper(self):
        ctx = make_ctx()
        for v in (1, 2, 3, 4):
            assert len(featurize(v, ctx)) == feature_length(v, ctx.n_types)

    def test_one_hot_encodes_type(self):
        v = featurize(1, make_ctx(ue_type=1, n_types=2))
        assert tuple(v[-2:]) == (0.0, 1.0)

    def test_invalid_version(self):
        with pytest.raises(ValueError):
            featurize(5, make_ctx())
