"""Policy ladder, timers, fanout, predictor, and scoring tests."""

import json

import numpy as np
import pytest

from pctsim.messaging import DEFAULT_THRESHOLDS, RiskMessage
from pctsim.tracing import (
    BCT_FLAG_LEVEL,
    DEFAULT_PSI,
    ExternalPredictor,
    bct_fanout,
    evaluate_predictor,
    heuristic_assessment,
    policy_bct,
    policy_no_tracing,
    policy_pct,
    predict_noisy_oracle,
    predict_oracle,
)


def _msg(level, day=3, n=1):
    return [RiskMessage(sender_token=i, encounter_day=day, risk_level=level)
            for i in range(n)]


class TestHeuristicLadder:
    def test_no_evidence(self):
        assert heuristic_assessment(False, 0, 0) == (0.0, 1)

    def test_positive_test_dominates(self):
        assert heuristic_assessment(True, 0, 0) == (1.0, 4)
        assert heuristic_assessment(True, 3, 15) == (1.0, 4)

    def test_high_inbox_without_symptoms(self):
        assert heuristic_assessment(False, 0, 9) == (0.5, 2)

    def test_two_symptoms(self):
        assert heuristic_assessment(False, 2, 0) == (0.75, 3)

    def test_very_high_inbox(self):
        assert heuristic_assessment(False, 0, 12) == (0.75, 3)

    def test_single_symptom(self):
        assert heuristic_assessment(False, 1, 0) == (0.25, 2)

    def test_low_inbox_alone(self):
        assert heuristic_assessment(False, 0, 4) == (0.25, 1)
        assert heuristic_assessment(False, 0, 7) == (0.25, 1)

    def test_inbox_below_weak_threshold(self):
        assert heuristic_assessment(False, 0, 3) == (0.0, 1)

    def test_combined_rules_take_max(self):
        # two symptoms and a very high inbox agree on level 3
        assert heuristic_assessment(False, 2, 12) == (0.75, 3)
        # single symptom plus moderate inbox: level from inbox rule
        assert heuristic_assessment(False, 1, 8) == (0.5, 2)

    def test_monotone_in_inbox_level(self):
        levels = [heuristic_assessment(False, 0, m)[1] for m in range(16)]
        scores = [heuristic_assessment(False, 0, m)[0] for m in range(16)]
        assert levels == sorted(levels)
        assert scores == sorted(scores)


class TestNoTracing:
    def test_always_baseline(self):
        assert policy_no_tracing() == 1
        assert policy_no_tracing({"anything": 1}) == 1


class TestBctPolicy:
    def test_no_input_stays_baseline(self):
        agent = {}
        assert policy_bct(agent, [], 0) == 1

    def test_flag_starts_fourteen_day_quarantine(self):
        agent = {}
        assert policy_bct(agent, _msg(BCT_FLAG_LEVEL, day=10), 10) == 4
        for day in range(11, 24):
            assert policy_bct(agent, [], day) == 4
        assert policy_bct(agent, [], 24) == 1

    def test_own_positive_test_same_window(self):
        agent = {"positive_result_day": 10}
        assert policy_bct(agent, [], 10) == 4
        assert policy_bct(agent, [], 23) == 4
        assert policy_bct(agent, [], 24) == 1

    def test_lower_levels_ignored(self):
        agent = {}
        assert policy_bct(agent, _msg(BCT_FLAG_LEVEL - 1, day=5), 5) == 1

    def test_repeat_flag_extends_timer(self):
        agent = {}
        policy_bct(agent, _msg(BCT_FLAG_LEVEL, day=0), 0)
        policy_bct(agent, _msg(BCT_FLAG_LEVEL, day=5), 5)
        assert policy_bct(agent, [], 18) == 4
        assert policy_bct(agent, [], 19) == 1


class TestBctFanout:
    BOOK = {
        0: {101: 1},
        1: {101: 2, 202: 1},
        15: {303: 1},
        16: {404: 2},
        30: {505: 1},
    }

    def test_window_is_last_d_max_days_inclusive(self):
        out = bct_fanout(self.BOOK, result_day=30, d_max=14)
        days = {d for d, _ in out}
        assert days == {16, 30}
        assert (16, 404) in out and (30, 505) in out
        # day 15 == result_day - 15 is outside a 14-day lookback
        assert all(d != 15 for d, _ in out)

    def test_boundary_day_included(self):
        out = bct_fanout(self.BOOK, result_day=29, d_max=14)
        assert (15, 303) in out
        assert (16, 404) in out

    def test_distinct_pairs_sorted(self):
        book = {5: {7: 3, 2: 1}, 6: {7: 2}}
        out = bct_fanout(book, result_day=6, d_max=14)
        assert out == [(5, 2), (5, 7), (6, 7)]

    def test_empty_book(self):
        assert bct_fanout({}, result_day=10, d_max=14) == []


class TestOraclePredictors:
    def test_oracle_returns_equal_copy(self):
        y = np.linspace(0, 1, 14)
        out = predict_oracle(y)
        assert np.array_equal(out, y)
        out[0] = 0.5
        assert y[0] == 0.0

    def test_noisy_oracle_zero_sigma_is_identity(self):
        rng = np.random.default_rng(0)
        y = np.linspace(0, 1, 14)
        out = predict_noisy_oracle(y, 0.0, 0.0, rng)
        assert np.allclose(out, y)

    def test_noisy_oracle_clipped_to_unit_interval(self):
        rng = np.random.default_rng(1)
        y = np.full(14, 0.5)
        for _ in range(200):
            out = predict_noisy_oracle(y, 0.5, 0.5, rng)
            assert np.all(out >= 0.0) and np.all(out <= 1.0)

    def test_additive_noise_mean_after_clipping(self):
        # at ground truth 0 with additive sigma s, clipping a centered
        # gaussian at zero leaves mean s / sqrt(2 pi)
        rng = np.random.default_rng(2)
        y = np.zeros(100_000)
        out = predict_noisy_oracle(y, 0.1, 0.0, rng)
        assert out.mean() == pytest.approx(0.1 / np.sqrt(2 * np.pi), abs=2e-3)


class TestPctPolicy:
    def test_recommendation_table_monotone(self):
        recs = [DEFAULT_PSI[q] for q in range(16)]
        assert recs == sorted(recs)
        assert recs[0] >= 1 and recs[-1] == 4

    def test_floor_and_ceiling(self):
        y_low = np.zeros(14)
        y_high = np.ones(14)
        _, rec = policy_pct(None, y_low, DEFAULT_THRESHOLDS, DEFAULT_PSI)
        assert rec == 1
        _, rec = policy_pct(None, y_high, DEFAULT_THRESHOLDS, DEFAULT_PSI)
        assert rec == 4

    def test_today_slot_drives_recommendation(self):
        y = np.zeros(14)
        y[0] = 0.99
        _, rec = policy_pct(None, y, DEFAULT_THRESHOLDS, DEFAULT_PSI)
        assert rec == 4

    def test_returns_estimate_unchanged(self):
        y = np.linspace(0, 0.9, 14)
        y_out, _ = policy_pct(None, y, DEFAULT_THRESHOLDS, DEFAULT_PSI)
        assert np.array_equal(y_out, y)


def _record(run_id, agent_id, day, targets):
    return {"run_id": run_id, "agent_id": agent_id, "day": day,
            "targets": list(targets)}


def _prediction(run_id, agent_id, day, y_hat):
    return {"run_id": run_id, "agent_id": agent_id, "day": day,
            "y_hat": list(y_hat)}


class TestEvaluatePredictor:
    def test_exact_predictions_score_zero(self):
        recs = [_record("r0", 1, 3, [0.2] * 14), _record("r0", 2, 3, [0.0] * 14)]
        preds = [_prediction("r0", 1, 3, [0.2] * 14),
                 _prediction("r0", 2, 3, [0.0] * 14)]
        assert evaluate_predictor(recs, preds) == 0.0

    def test_constant_half_against_zero(self):
        recs = [_record("r0", 1, 0, [0.0] * 14)]
        preds = [_prediction("r0", 1, 0, [0.5] * 14)]
        assert evaluate_predictor(recs, preds) == pytest.approx(0.25)

    def test_missing_prediction_raises(self):
        recs = [_record("r0", 1, 0, [0.0] * 14)]
        with pytest.raises(ValueError):
            evaluate_predictor(recs, [])

    def test_shape_mismatch_raises(self):
        recs = [_record("r0", 1, 0, [0.0] * 14)]
        preds = [_prediction("r0", 1, 0, [0.0] * 13)]
        with pytest.raises(ValueError):
            evaluate_predictor(recs, preds)

    def test_zero_records_raises(self):
        with pytest.raises(ValueError):
            evaluate_predictor([], [])


class TestExternalPredictor:
    def test_load_call_and_miss(self, tmp_path):
        path = tmp_path / "preds.jsonl"
        rows = [
            {"agent_id": 5, "day": 2, "y_hat": [0.1] * 14},
            {"agent_id": 5, "day": 3, "y_hat": [0.2] * 14},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        pred = ExternalPredictor(str(path))
        assert np.allclose(pred(5, 3), 0.2)
        assert np.allclose(pred(5, 2), 0.1)
        with pytest.raises(KeyError):
            pred(5, 4)
        with pytest.raises(KeyError):
            pred(6, 2)
