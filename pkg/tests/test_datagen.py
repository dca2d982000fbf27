"""Domain randomization, uptake, splits, and training-record export."""

import json

import numpy as np
import pytest

from pctsim.core import SimConfig, run
from pctsim.datagen import (
    DR_RANGES,
    adoption_to_uptake,
    export_training_records,
    iter_training_records,
    make_split,
    read_records,
    sample_dr_config,
)
from pctsim.tracing import evaluate_predictor


class TestDomainRandomization:
    def test_draws_stay_in_range(self):
        base = SimConfig()
        rng = np.random.default_rng(0)
        sums = {name: 0.0 for name in DR_RANGES}
        n = 2000
        for _ in range(n):
            cfg = sample_dr_config(base, rng)
            for name, (lo, hi) in DR_RANGES.items():
                v = getattr(cfg, name)
                assert lo <= v <= hi
                sums[name] += v
        # uniform sampling: means sit near the midpoints
        for name, (lo, hi) in DR_RANGES.items():
            mid = (lo + hi) / 2
            assert sums[name] / n == pytest.approx(mid, abs=0.05 * (hi - lo) + 1e-9)

    def test_unlisted_fields_copied_from_base(self):
        base = SimConfig(population_size=777, num_days=33, policy="pct",
                         predictor="noisy_oracle", rng_seed=5)
        cfg = sample_dr_config(base, np.random.default_rng(1))
        assert cfg.population_size == 777
        assert cfg.num_days == 33
        assert cfg.policy == "pct"
        assert cfg.rng_seed == 5

    def test_seeded_draws_reproducible(self):
        base = SimConfig()
        a = sample_dr_config(base, np.random.default_rng(9))
        b = sample_dr_config(base, np.random.default_rng(9))
        assert a == b


class TestUptake:
    def test_examples(self):
        assert adoption_to_uptake(0.30, 0.712) == pytest.approx(0.4213, abs=1e-4)
        assert adoption_to_uptake(0.60, 0.712) == pytest.approx(0.8427, abs=1e-4)
        assert adoption_to_uptake(0.0, 0.712) == 0.0

    def test_rejects_more_apps_than_phones(self):
        with pytest.raises(ValueError):
            adoption_to_uptake(0.8, 0.712)
        with pytest.raises(ValueError):
            adoption_to_uptake(-0.1, 0.712)


class TestMakeSplit:
    def test_default_fraction(self):
        runs = [f"r{i}" for i in range(240)]
        train, valid = make_split(runs)
        assert len(train) == 200 and len(valid) == 40

    def test_six_runs_split_five_one(self):
        runs = [f"r{i}" for i in range(6)]
        train, valid = make_split(runs)
        assert len(train) == 5 and len(valid) == 1

    def test_disjoint_and_complete(self):
        runs = [f"r{i}" for i in range(17)]
        train, valid = make_split(runs, seed=3)
        assert set(train) & set(valid) == set()
        assert sorted(train + valid) == sorted(runs)

    def test_deterministic_in_seed(self):
        runs = [f"r{i}" for i in range(10)]
        assert make_split(runs, seed=1) == make_split(runs, seed=1)
        assert make_split(runs, seed=1) != make_split(runs, seed=2)

    def test_needs_two_runs(self):
        with pytest.raises(ValueError):
            make_split(["only"])


@pytest.fixture(scope="module")
def pct_trace():
    cfg = SimConfig(population_size=200, num_days=12, rng_seed=11,
                    policy="pct", predictor="oracle",
                    global_mobility_scale=3.7, initial_exposed_fraction=0.05)
    return run(cfg)


class TestExport:
    def test_record_count_is_agents_times_days(self, pct_trace, tmp_path):
        path = tmp_path / "records.jsonl"
        n = export_training_records(pct_trace, path)
        assert n == pct_trace.app_ids.size * pct_trace.num_days
        assert len(read_records(path)) == n

    def test_record_schema(self, pct_trace):
        rec = next(iter_training_records(pct_trace))
        assert set(rec) == {"schema_version", "run_id", "agent_id", "day",
                            "profile", "health", "encounters", "targets"}
        window = int(pct_trace.config["d_max"]) + 1
        assert len(rec["health"]) == window
        assert len(rec["encounters"]) == window
        assert len(rec["targets"]) == window
        assert set(rec["profile"]) == {"age_band", "sex", "conditions",
                                       "has_app"}

    def test_targets_match_ground_truth(self, pct_trace):
        for rec in iter_training_records(pct_trace):
            agent, day = rec["agent_id"], rec["day"]
            for k, target in enumerate(rec["targets"]):
                d = day - k
                expected = 0.0 if d < 0 else float(pct_trace.y_hist[agent, d])
                assert target == expected

    def test_privacy_no_partner_identities(self, pct_trace):
        saw_encounter = False
        for rec in iter_training_records(pct_trace):
            for slot in rec["encounters"]:
                if not slot:
                    continue
                for entry in slot:
                    saw_encounter = True
                    assert isinstance(entry, list) and len(entry) == 2
                    level, count = entry
                    assert 0 <= level <= 15 and count >= 1
        assert saw_encounter

    def test_pre_enrollment_slots_null_with_zero_targets(self, pct_trace):
        first = next(iter_training_records(pct_trace))
        assert first["day"] == 0
        assert all(h is None for h in first["health"][1:])
        assert all(e is None for e in first["encounters"][1:])
        assert all(t == 0.0 for t in first["targets"][1:])

    def test_never_infected_targets_all_zero(self, pct_trace):
        infected = {ev.infectee for ev in pct_trace.events}
        clean = [a for a in pct_trace.app_ids.tolist() if a not in infected]
        assert clean
        target_sums = {a: 0.0 for a in clean}
        for rec in iter_training_records(pct_trace):
            if rec["agent_id"] in target_sums:
                target_sums[rec["agent_id"]] += sum(rec["targets"])
        assert all(v == 0.0 for v in target_sums.values())

    def test_roundtrip_self_prediction_mse_zero(self, pct_trace, tmp_path):
        path = tmp_path / "records.jsonl"
        export_training_records(pct_trace, path)
        records = read_records(path)
        predictions = [{"run_id": r["run_id"], "agent_id": r["agent_id"],
                        "day": r["day"], "y_hat": r["targets"]}
                       for r in records]
        assert evaluate_predictor(records, predictions) == 0.0

    def test_json_roundtrip_preserves_target_bits(self, pct_trace, tmp_path):
        path = tmp_path / "records.jsonl"
        export_training_records(pct_trace, path)
        for rec in read_records(path):
            agent, day = rec["agent_id"], rec["day"]
            for k, target in enumerate(rec["targets"]):
                d = day - k
                if d >= 0:
                    assert target == float(pct_trace.y_hist[agent, d])

    def test_observables_required(self):
        cfg = SimConfig(population_size=60, num_days=3, policy="pct",
                        predictor="oracle", record_observables=False)
        tr = run(cfg)
        with pytest.raises(ValueError):
            list(iter_training_records(tr))

    def test_truncated_trace_rejected(self, pct_trace):
        class Hollow:
            config = pct_trace.config
            num_days = pct_trace.num_days
            app_ids = pct_trace.app_ids
            enc_windows = {}
            run_id = pct_trace.run_id
            profiles = pct_trace.profiles
            symptom_hist = pct_trace.symptom_hist
            test_hist = pct_trace.test_hist
            y_hist = pct_trace.y_hist

        with pytest.raises(ValueError) as err:
            list(iter_training_records(Hollow()))
        assert "truncated" in str(err.value)

    def test_records_are_valid_json_lines(self, pct_trace, tmp_path):
        path = tmp_path / "records.jsonl"
        export_training_records(pct_trace, path)
        with open(path) as fh:
            for line in fh:
                json.loads(line)
