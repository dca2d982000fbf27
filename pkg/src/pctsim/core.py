"""World state, configuration, and the daily simulation loop.

A run is strictly sequential: one day at a time, six phases per day in a
fixed order (disease progression, encounter generation, transmission
trials, testing, app pass, recommendation-level update). All randomness
flows from named generator streams spawned from the config seed, so equal
(config, seed) pairs reproduce byte-identical traces.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import messaging, mobility, tracing, virology
from .metrics import EXTERNAL_SEED, STATE_E, STATE_I, STATE_R, STATE_S, config_hash
from .virology import TEST_NEGATIVE, TEST_NONE, TEST_PENDING, TEST_POSITIVE

POLICIES = ("no_tracing", "bct", "heuristic", "pct")
PREDICTORS = ("oracle", "noisy_oracle", "external")

_NAME_ALIASES = {
    "notracing": "no_tracing", "no-tracing": "no_tracing", "nt": "no_tracing",
    "noisyoracle": "noisy_oracle", "noisy-oracle": "noisy_oracle",
}

STATE_NAMES = ("susceptible", "exposed", "infectious", "recovered")

# Demographic defaults (documented constants; the profile fields are
# exported but do not modulate disease dynamics).
HOUSEHOLD_SIZE_DIST = ((1, 0.22), (2, 0.33), (3, 0.17), (4, 0.18), (5, 0.10))
AGE_BAND_NAMES = ("child", "adult", "senior")
AGE_BAND_DIST = (0.20, 0.62, 0.18)
SCHOOL_SIZE = 30
WORKPLACE_SIZE = 20
CONDITION_NAMES = ("diabetes", "heart_disease", "immunosuppressed", "asthma")
# P(condition) per age band (child, adult, senior).
CONDITION_PREVALENCE = (
    (0.01, 0.08, 0.20),
    (0.005, 0.05, 0.15),
    (0.03, 0.03, 0.03),
    (0.10, 0.10, 0.10),
)

QUARANTINE_DAYS = 14
TRACE_SCHEMA_VERSION = 1

_RNG_STREAMS = (
    "demographics", "disease", "mobility", "transmission",
    "testing", "behavior", "messaging", "predictor",
)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _fraction(name, value):
    if not 0.0 <= float(value) <= 1.0:
        raise ConfigError(f"{name}: must be in [0, 1], got {value!r}")
    return float(value)


@dataclass
class SimConfig:
    """All tunables for one run. Field names match the config file keys."""

    population_size: int = 3000
    num_days: int = 50
    adoption_rate: float = 0.60
    smartphone_rate: float = 0.712
    global_mobility_scale: float = 1.0
    initial_exposed_fraction: float = 0.004
    carefulness: float = 0.65
    symptom_dropout: float = 0.25
    symptom_dropin: float = 0.0005
    quarantine_dropout_test: float = 0.02
    quarantine_dropout_household: float = 0.035
    all_levels_dropout: float = 0.03
    test_delay_days: int = 2
    test_false_negative_rate: float = 0.10
    d_max: int = 14
    policy: str = "no_tracing"
    predictor: str = "oracle"
    predictor_add_sigma: float = 0.10
    predictor_mul_sigma: float = 0.50
    external_predictions: str | None = None
    rng_seed: int = 0
    # Documented extras beyond the core parameter set.
    transmission_base_rate: float = 0.066
    bct_quarantine_level: int = 4
    psi_table: tuple = tracing.DEFAULT_PSI
    risk_thresholds: tuple | None = None
    record_observables: bool = True
    record_estimates: bool = True
    record_encounter_log: bool = False

    def __post_init__(self):
        self.policy = _NAME_ALIASES.get(str(self.policy).lower(), str(self.policy).lower())
        self.predictor = _NAME_ALIASES.get(str(self.predictor).lower(), str(self.predictor).lower())
        self.psi_table = tuple(int(v) for v in self.psi_table)
        if self.risk_thresholds is not None:
            self.risk_thresholds = tuple(float(v) for v in self.risk_thresholds)

    def validate(self) -> "SimConfig":
        if int(self.population_size) < 2:
            raise ConfigError(f"population_size: must be >= 2, got {self.population_size}")
        if int(self.num_days) < 0:
            raise ConfigError(f"num_days: must be >= 0, got {self.num_days}")
        for name in ("adoption_rate", "smartphone_rate", "initial_exposed_fraction",
                     "carefulness", "symptom_dropout", "symptom_dropin",
                     "quarantine_dropout_test", "quarantine_dropout_household",
                     "all_levels_dropout", "test_false_negative_rate",
                     "transmission_base_rate"):
            _fraction(name, getattr(self, name))
        if self.adoption_rate > self.smartphone_rate:
            raise ConfigError(
                f"adoption_rate: {self.adoption_rate} exceeds smartphone_rate "
                f"{self.smartphone_rate}; app users are a subset of smartphone owners")
        if float(self.global_mobility_scale) < 0:
            raise ConfigError(f"global_mobility_scale: must be >= 0, got {self.global_mobility_scale}")
        if int(self.test_delay_days) < 0:
            raise ConfigError(f"test_delay_days: must be >= 0, got {self.test_delay_days}")
        if int(self.d_max) < 1:
            raise ConfigError(f"d_max: must be >= 1, got {self.d_max}")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy: unknown value {self.policy!r}, expected one of {POLICIES}")
        if self.predictor not in PREDICTORS:
            raise ConfigError(f"predictor: unknown value {self.predictor!r}, expected one of {PREDICTORS}")
        for name in ("predictor_add_sigma", "predictor_mul_sigma"):
            if float(getattr(self, name)) < 0:
                raise ConfigError(f"{name}: must be >= 0")
        if self.predictor == "external" and self.policy == "pct" and not self.external_predictions:
            raise ConfigError("external_predictions: required when predictor is 'external'")
        if not 0 <= int(self.bct_quarantine_level) <= 4:
            raise ConfigError(f"bct_quarantine_level: must be in 0..4, got {self.bct_quarantine_level}")
        if len(self.psi_table) != messaging.N_RISK_LEVELS:
            raise ConfigError(f"psi_table: needs {messaging.N_RISK_LEVELS} entries")
        if any(not 0 <= v <= 4 for v in self.psi_table):
            raise ConfigError("psi_table: entries must be recommendation levels 0..4")
        if self.risk_thresholds is not None:
            cuts = np.asarray(self.risk_thresholds, dtype=np.float64)
            if cuts.shape != (messaging.N_RISK_LEVELS - 1,):
                raise ConfigError(f"risk_thresholds: needs {messaging.N_RISK_LEVELS - 1} cut points")
            if not np.all(np.diff(cuts) > 0):
                raise ConfigError("risk_thresholds: cut points must be strictly increasing")
        return self

    def replace(self, **kwargs) -> "SimConfig":
        return dataclasses.replace(self, **kwargs)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["psi_table"] = list(self.psi_table)
        if self.risk_thresholds is not None:
            out["risk_thresholds"] = list(self.risk_thresholds)
        return out

    @classmethod
    def from_mapping(cls, mapping) -> "SimConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**mapping)


def load_config(path) -> SimConfig:
    """Read a flat key-value config file (YAML or JSON) into a SimConfig."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a flat mapping")
    return SimConfig.from_mapping(data)


@dataclass
class InfectionEvent:
    day: int
    infector: int  # EXTERNAL_SEED (-1) for seeded cases
    infectee: int
    location: str

    def astuple(self):
        return (self.day, self.infector, self.infectee, self.location)


@dataclass
class DayReport:
    day: int
    s: int
    e: int
    i: int
    r: int
    new_cases: int
    cum_cases: int
    encounters: int
    quarantined: int
    quarantined_healthy: int
    tests_ordered: int
    positives: int
    messages: int


class SimulationTrace:
    """Immutable record of one completed run."""

    def __init__(self, *, config, run_id, population, num_days, app_ids,
                 profiles, initial_counts, day_reports, events, epi_hist,
                 level_hist, y_hist, symptom_hist, test_hist,
                 encounters_per_day, final_epi_state, enc_windows=None,
                 yhat_hist=None, encounter_log=None):
        self.config = config
        self.run_id = run_id
        self.population = population
        self.num_days = num_days
        self.app_ids = app_ids
        self.profiles = profiles
        self.initial_counts = initial_counts
        self.day_reports = day_reports
        self.events = events
        self.epi_hist = epi_hist
        self.level_hist = level_hist
        self.y_hist = y_hist
        self.symptom_hist = symptom_hist
        self.test_hist = test_hist
        self.encounters_per_day = encounters_per_day
        self.final_epi_state = final_epi_state
        self.enc_windows = enc_windows
        self.yhat_hist = yhat_hist
        self.encounter_log = encounter_log

    def recovered_ids(self):
        return set(np.flatnonzero(self.final_epi_state == STATE_R).tolist())

    def day_record(self, report: DayReport) -> dict:
        rec = {
            "kind": "day",
            "day": report.day,
            "s": report.s, "e": report.e, "i": report.i, "r": report.r,
            "new_cases": report.new_cases,
            "cum_cases": report.cum_cases,
            "encounters": report.encounters,
            "quarantined": report.quarantined,
            "quarantined_healthy": report.quarantined_healthy,
            "tests_ordered": report.tests_ordered,
            "positives": report.positives,
            "messages": report.messages,
        }
        if self.yhat_hist is not None:
            rec["y_hat"] = {
                str(a): [round(float(v), 6) for v in self.yhat_hist[a, report.day]]
                for a in self.app_ids.tolist()
            }
        return rec

    def header_record(self) -> dict:
        return {
            "kind": "header",
            "schema_version": TRACE_SCHEMA_VERSION,
            "run_id": self.run_id,
            "population": self.population,
            "num_days": self.num_days,
            "initial_counts": self.initial_counts,
            "config": self.config,
        }

    def write(self, trace_path, events_path):
        """Persist the trace as day-record JSONL plus an event JSONL."""

        def dump(obj):
            return json.dumps(obj, sort_keys=True, separators=(",", ":"))

        with open(trace_path, "w") as fh:
            fh.write(dump(self.header_record()) + "\n")
            for report in self.day_reports:
                fh.write(dump(self.day_record(report)) + "\n")
        with open(events_path, "w") as fh:
            for ev in self.events:
                fh.write(dump({"day": ev.day, "infector": ev.infector,
                               "infectee": ev.infectee, "location": ev.location}) + "\n")


class WorldState:
    """Mutable state of a running simulation (one logical thread)."""

    def __init__(self, cfg: SimConfig):
        cfg.validate()
        self.cfg = cfg
        self.n = int(cfg.population_size)
        self.window = int(cfg.d_max) + 1
        self.day = 0
        seq = np.random.SeedSequence(int(cfg.rng_seed))
        self.rng = {name: np.random.default_rng(child)
                    for name, child in zip(_RNG_STREAMS, seq.spawn(len(_RNG_STREAMS)))}
        self.thresholds = np.asarray(
            cfg.risk_thresholds if cfg.risk_thresholds is not None
            else messaging.DEFAULT_THRESHOLDS, dtype=np.float64)
        self.psi = np.asarray(cfg.psi_table, dtype=np.int8)

        self._build_population()
        self._init_epi()
        self._init_app_state()
        self._init_trace_buffers()

    # ------------------------------------------------------------------
    # initialization

    def _build_population(self):
        rng = self.rng["demographics"]
        n = self.n

        sizes, probs = zip(*HOUSEHOLD_SIZE_DIST)
        members_left = n
        hh_sizes = []
        while members_left > 0:
            s = int(rng.choice(sizes, p=probs))
            hh_sizes.append(min(s, members_left))
            members_left -= hh_sizes[-1]
        perm = rng.permutation(n)
        self.households = []
        self.household_id = np.zeros(n, dtype=np.int64)
        offset = 0
        for hid, s in enumerate(hh_sizes):
            members = np.sort(perm[offset:offset + s])
            self.households.append(members)
            self.household_id[members] = hid
            offset += s

        self.age_band = rng.choice(3, size=n, p=AGE_BAND_DIST).astype(np.int8)
        self.sex = rng.integers(0, 2, n, dtype=np.int8)
        self.conditions = np.zeros(n, dtype=np.uint8)
        for bit, prevalence in enumerate(CONDITION_PREVALENCE):
            p = np.asarray(prevalence)[self.age_band]
            self.conditions |= (rng.random(n) < p).astype(np.uint8) << bit

        def partition(ids, group_size):
            ids = rng.permutation(ids)
            return [np.sort(ids[i:i + group_size]) for i in range(0, ids.size, group_size)]

        kids = np.flatnonzero(self.age_band == 0)
        adults = np.flatnonzero(self.age_band == 1)
        self.schools = partition(kids, SCHOOL_SIZE)
        self.workplaces = partition(adults, WORKPLACE_SIZE)
        self.group_id = np.full(n, -1, dtype=np.int64)
        for gid, members in enumerate(self.schools + self.workplaces):
            self.group_id[members] = gid

        n_phone = int(round(self.cfg.smartphone_rate * n))
        phones = rng.choice(n, size=n_phone, replace=False)
        self.has_phone = np.zeros(n, dtype=bool)
        self.has_phone[phones] = True
        n_app = int(round(self.cfg.adoption_rate * n))
        app = rng.choice(np.sort(phones), size=n_app, replace=False) if n_app else np.zeros(0, dtype=np.int64)
        self.has_app = np.zeros(n, dtype=bool)
        self.has_app[app] = True
        self.app_ids = np.sort(app.astype(np.int64))

        self.loc_indexes = {
            "household": mobility.LocationIndex(self.households, n),
            "workplace": mobility.LocationIndex(self.workplaces, n),
            "school": mobility.LocationIndex(self.schools, n),
            "other": mobility.LocationIndex([np.arange(n)], n),
        }

    def _init_epi(self):
        n = self.n
        self.epi_state = np.full(n, STATE_S, dtype=np.int8)
        self.exposure_day = np.full(n, -1, dtype=np.int64)
        self.onset = np.full(n, np.nan)
        self.symptom_onset = np.full(n, np.nan)
        self.peak = np.full(n, np.nan)
        self.recovery = np.full(n, np.nan)
        self.peak_evl = np.full(n, np.nan)
        self.asymptomatic = np.zeros(n, dtype=bool)
        self.symptom_mask = np.zeros(n, dtype=np.uint8)
        self.rec_level = np.ones(n, dtype=np.int8)
        self.events: list[InfectionEvent] = []

        n_seed = int(round(self.cfg.initial_exposed_fraction * n))
        seeds = np.sort(self.rng["disease"].choice(n, size=n_seed, replace=False)) if n_seed else np.zeros(0, dtype=np.int64)
        self._expose(seeds, day=0, infectors=None, locations=None)

        # testing state (symptoms and tests are modeled for app agents)
        self.test_code = np.full(n, TEST_NONE, dtype=np.int8)
        self.order_day = np.full(n, -1, dtype=np.int64)
        self.result_day = np.full(n, -1, dtype=np.int64)
        self.infected_at_order = np.zeros(n, dtype=bool)
        self.episode_attempted = np.zeros(n, dtype=bool)
        self.reported_any_prev = np.zeros(n, dtype=bool)
        self.new_positive_today = np.zeros(n, dtype=bool)

        # escalation timers (values are the last day the timer governs)
        self.iso_until = np.full(n, -1, dtype=np.int64)
        self.iso_active = np.zeros(n, dtype=bool)
        self.hh_until = np.full(n, -1, dtype=np.int64)
        self.hh_active = np.zeros(n, dtype=bool)
        self.bct_until = np.full(n, -1, dtype=np.int64)
        self.bct_active = np.zeros(n, dtype=bool)
        self.bct_broadcast_done = np.zeros(n, dtype=bool)

    def _init_app_state(self):
        cfg = self.cfg
        self.app_active = cfg.policy != "no_tracing" and self.app_ids.size > 0
        self.yhat_prev = np.zeros((self.n, self.window), dtype=np.float64)
        self.shared_qlevel = np.zeros(self.n, dtype=np.int8)
        self.tokens_today = np.zeros(self.n, dtype=np.uint64)
        self.token_owner: dict[int, dict[int, int]] = {}
        self.own_tokens = [dict() if ok else None for ok in self.has_app]
        self.contact_book = [dict() if ok else None for ok in self.has_app]
        self.received = [dict() if ok else None for ok in self.has_app]
        self.inbox = [[] for _ in range(self.n)]
        self.outbox_accum = [[] for _ in range(self.n)]
        self.external = (tracing.ExternalPredictor(cfg.external_predictions)
                         if cfg.policy == "pct" and cfg.predictor == "external" else None)

    def _init_trace_buffers(self):
        n, days = self.n, int(self.cfg.num_days)
        self.epi_hist = np.zeros((n, days), dtype=np.int8)
        self.level_hist = np.zeros((n, days), dtype=np.int8)
        self.y_hist = np.zeros((n, days), dtype=np.float32)
        self.symptom_hist = np.zeros((n, days), dtype=np.uint8)
        self.test_hist = np.zeros((n, days), dtype=np.int8)
        self.encounters_per_day = np.zeros(days, dtype=np.int64)
        self.day_reports: list[DayReport] = []
        self.enc_windows = {} if (self.cfg.record_observables and self.app_active) else None
        record_estimates = (self.cfg.record_estimates
                            and self.cfg.policy in ("pct", "heuristic") and days > 0)
        self.yhat_hist = (np.zeros((n, days, self.window), dtype=np.float32)
                          if record_estimates else None)
        self.encounter_log = [] if self.cfg.record_encounter_log else None
        counts = np.bincount(self.epi_state, minlength=4)
        self.initial_counts = {"s": int(counts[STATE_S]), "e": int(counts[STATE_E]),
                               "i": int(counts[STATE_I]), "r": int(counts[STATE_R])}

    # ------------------------------------------------------------------
    # helpers

    def _expose(self, agents, day, infectors, locations):
        """Mark agents Exposed at ``day`` and sample their disease courses."""
        agents = np.asarray(agents, dtype=np.int64)
        if agents.size == 0:
            return
        if np.any(self.epi_state[agents] != STATE_S):
            raise RuntimeError("infection event targets a non-susceptible agent")
        courses = virology.sample_disease_courses(agents.size, self.rng["disease"])
        self.epi_state[agents] = STATE_E
        self.exposure_day[agents] = day
        self.onset[agents] = courses["infectiousness_onset_day"]
        self.symptom_onset[agents] = courses["symptom_onset_day"]
        self.peak[agents] = courses["peak_day"]
        self.recovery[agents] = courses["recovery_day"]
        self.peak_evl[agents] = courses["peak_evl"]
        self.asymptomatic[agents] = courses["is_asymptomatic"]
        self.symptom_mask[agents] = courses["symptom_mask"]
        for i, agent in enumerate(agents.tolist()):
            if infectors is None:
                self.events.append(InfectionEvent(day, EXTERNAL_SEED, agent, "external"))
            else:
                self.events.append(InfectionEvent(
                    day, int(infectors[i]), agent, mobility.LOCATION_TYPES[int(locations[i])]))

    def ground_truth_window(self, day) -> np.ndarray:
        """(n, window) matrix of y values, newest-first, zero before day 0."""
        out = np.zeros((self.n, self.window), dtype=np.float64)
        for k in range(self.window):
            d = day - k
            if d < 0:
                break
            out[:, k] = self.y_hist[:, d]
        return out

    def observables_for(self, agent: int, day: int) -> tracing.Observables:
        """Assemble one agent's observables window as of ``day``."""
        profile = agent_profile(self, agent)
        health, encounters = [], []
        ledger = self.received[agent] or {}
        for k in range(self.window):
            d = day - k
            if d < 0:
                health.append(None)
                encounters.append(None)
                continue
            health.append({
                "symptoms": tuple(virology.symptom_names_from_mask(int(self.symptom_hist[agent, d]))),
                "test": virology.TEST_CODE_NAMES[int(self.test_hist[agent, d])],
            })
            per_day = ledger.get(d, {})
            encounters.append(tuple(sorted((int(lvl), int(cnt)) for lvl, cnt in per_day.values())))
        return tracing.Observables(profile=profile, health=tuple(health), encounters=tuple(encounters))

    # ------------------------------------------------------------------
    # the six daily phases

    def _phase_progression(self, day):
        infected = self.exposure_day >= 0
        t_mid = np.where(infected, day + 0.5 - self.exposure_day, 0.0)
        state = self.epi_state.copy()
        state[infected & (t_mid >= self.onset)] = STATE_I
        state[infected & (t_mid >= self.recovery)] = STATE_R
        # forward-only transitions: t_mid grows with day, thresholds fixed
        self.epi_state = state
        y = np.zeros(self.n)
        y[infected] = virology.evl_tent(
            t_mid[infected], self.onset[infected], self.peak[infected],
            self.recovery[infected], self.peak_evl[infected])
        self.y_today = y
        self.y_hist[:, day] = y

    def _phase_encounters(self, day):
        self.level_hist[:, day] = self.rec_level
        a, b, loc = mobility.generate_encounters(
            self.loc_indexes, self.rec_level, self.cfg.global_mobility_scale,
            self.rng["mobility"])
        self.encounters_per_day[day] = a.size
        if self.encounter_log is not None:
            self.encounter_log.append((a.copy(), b.copy(), loc.copy()))
        if self.app_active:
            self._register_app_contacts(a, b, day)
        return a, b, loc

    def _register_app_contacts(self, a, b, day):
        """Token rotation plus symmetric contact-book/ledger recording."""
        app_ids = self.app_ids
        tokens = self.rng["messaging"].integers(1, 1 << 63, size=app_ids.size, dtype=np.uint64)
        self.tokens_today[:] = 0
        self.tokens_today[app_ids] = tokens
        owner_today = {}
        for agent, token in zip(app_ids.tolist(), tokens.tolist()):
            owner_today[token] = agent
            self.own_tokens[agent][day] = token
        self.token_owner[day] = owner_today

        horizon = day - self.cfg.d_max
        for d in [d for d in self.token_owner if d < horizon]:
            del self.token_owner[d]
        for agent in app_ids.tolist():
            for book in (self.contact_book[agent], self.received[agent], self.own_tokens[agent]):
                for d in [d for d in book if d < horizon]:
                    del book[d]

        pair_mask = self.has_app[a] & self.has_app[b]
        shared = self.shared_qlevel
        for x, y in zip(a[pair_mask].tolist(), b[pair_mask].tolist()):
            tx, ty = int(self.tokens_today[x]), int(self.tokens_today[y])
            for me, other, other_token in ((x, y, ty), (y, x, tx)):
                book_day = self.contact_book[me].setdefault(day, {})
                book_day[other_token] = book_day.get(other_token, 0) + 1
                entry = self.received[me].setdefault(day, {}).setdefault(other_token, [0, 0])
                entry[0] = int(shared[other])
                entry[1] += 1

    def _phase_transmission(self, day, a, b, loc):
        cfg = self.cfg
        rng = self.rng["transmission"]
        new_cases = 0
        cand_infectee, cand_infector, cand_loc = [], [], []
        for src, dst in ((a, b), (b, a)):
            mask = (self.epi_state[src] == STATE_I) & (self.epi_state[dst] == STATE_S)
            if not mask.any():
                continue
            p = virology.transmission_probability(
                self.y_today[src[mask]], cfg.transmission_base_rate, 1.0, cfg.carefulness)
            hit = rng.random(p.size) < p
            cand_infectee.append(dst[mask][hit])
            cand_infector.append(src[mask][hit])
            cand_loc.append(loc[mask][hit])
        if cand_infectee:
            infectees = np.concatenate(cand_infectee)
            infectors = np.concatenate(cand_infector)
            locs = np.concatenate(cand_loc)
            # one infection per agent per day: the first successful trial wins
            _, first = np.unique(infectees, return_index=True)
            first.sort()
            self._expose(infectees[first], day, infectors[first], locs[first])
            new_cases = first.size
        return new_cases

    def _phase_testing(self, day):
        cfg = self.cfg
        rng = self.rng["testing"]
        n = self.n
        self.new_positive_today[:] = False

        t_mid = np.where(self.exposure_day >= 0, day + 0.5 - self.exposure_day, -1.0)
        symptomatic = (self.has_app & (self.y_today > 0) & ~self.asymptomatic
                       & (t_mid >= self.symptom_onset))
        reported = np.zeros(n, dtype=np.uint8)
        idx = np.flatnonzero(symptomatic)
        if idx.size:
            keep = rng.random((idx.size, len(virology.SYMPTOM_NAMES))) >= cfg.symptom_dropout
            masks = self.symptom_mask[idx]
            out = np.zeros(idx.size, dtype=np.uint8)
            for bit in range(len(virology.SYMPTOM_NAMES)):
                out |= (((masks >> bit) & 1).astype(bool) & keep[:, bit]).astype(np.uint8) << bit
            reported[idx] = out
        app_idx = self.app_ids
        if app_idx.size and cfg.symptom_dropin > 0:
            draws = rng.random(app_idx.size) < cfg.symptom_dropin
            flags = rng.integers(0, len(virology.SYMPTOM_NAMES), app_idx.size)
            hit = app_idx[draws]
            if hit.size:
                reported[hit] |= (np.uint8(1) << flags[draws].astype(np.uint8))
        self.symptom_hist[:, day] = reported

        reported_any = reported != 0
        self.episode_attempted[~reported_any] = False
        new_episode = reported_any & ~self.reported_any_prev & ~self.episode_attempted
        can_test = np.isin(self.test_code, (TEST_NONE, TEST_NEGATIVE))
        candidates = np.flatnonzero(new_episode & can_test)
        ordered = np.zeros(0, dtype=np.int64)
        if candidates.size:
            take = rng.random(candidates.size) < cfg.carefulness
            ordered = candidates[take]
            self.test_code[ordered] = TEST_PENDING
            self.order_day[ordered] = day
            self.result_day[ordered] = day + cfg.test_delay_days
            self.infected_at_order[ordered] = np.isin(self.epi_state[ordered], (STATE_E, STATE_I))
        self.episode_attempted[new_episode] = True
        self.reported_any_prev = reported_any

        due = np.flatnonzero((self.test_code == TEST_PENDING) & (self.result_day == day))
        n_positive = 0
        if due.size:
            true_pos = self.infected_at_order[due] & (rng.random(due.size) >= cfg.test_false_negative_rate)
            pos = due[true_pos]
            self.test_code[pos] = TEST_POSITIVE
            self.test_code[due[~true_pos]] = TEST_NEGATIVE
            n_positive = pos.size
            if pos.size:
                self.new_positive_today[pos] = True
                self.iso_until[pos] = day + QUARANTINE_DAYS
                self.iso_active[pos] = True
                for agent in pos.tolist():
                    mates = self.households[self.household_id[agent]]
                    mates = mates[mates != agent]
                    self.hh_until[mates] = np.maximum(self.hh_until[mates], day + QUARANTINE_DAYS)
                    self.hh_active[mates] = True
        self.test_hist[:, day] = self.test_code
        return ordered.size, n_positive

    def _phase_app_pass(self, day):
        """Drain inboxes, run the active policy, queue outgoing messages."""
        policy = self.cfg.policy
        self.policy_level = np.ones(self.n, dtype=np.int8)
        messages_out = 0
        if not self.app_active:
            return 0
        if policy == "bct":
            messages_out = self._app_pass_bct(day)
        elif policy in ("pct", "heuristic"):
            self._apply_inbox_updates(day)
            if policy == "pct":
                messages_out = self._app_pass_pct(day)
            else:
                messages_out = self._app_pass_heuristic(day)
        if self.enc_windows is not None:
            self._snapshot_enc_windows(day)
        self.inbox = self.outbox_accum
        self.outbox_accum = [[] for _ in range(self.n)]
        return messages_out

    def _route(self, recipient_token, msg, day):
        owner = self.token_owner.get(msg.encounter_day, {}).get(recipient_token)
        if owner is not None:
            self.outbox_accum[owner].append(msg)
            return 1
        return 0

    def _app_pass_bct(self, day):
        cfg = self.cfg
        sent = 0
        for agent in self.app_ids.tolist():
            if self.inbox[agent]:
                self.bct_until[agent] = max(self.bct_until[agent], day + QUARANTINE_DAYS)
                self.bct_active[agent] = True
                self.inbox[agent] = []
        flaggers = np.flatnonzero(self.new_positive_today & self.has_app & ~self.bct_broadcast_done)
        for agent in flaggers.tolist():
            self.bct_broadcast_done[agent] = True
            fanout = tracing.bct_fanout(self.contact_book[agent], day, cfg.d_max)
            for enc_day, partner_token in fanout:
                msg = messaging.RiskMessage(self.own_tokens[agent][enc_day], enc_day,
                                            tracing.BCT_FLAG_LEVEL)
                sent += self._route(partner_token, msg, day)
        # the flag quarantine itself is applied by the escalation layer via
        # bct_until, so the daily quarantine dropout can act on it
        return sent

    def _apply_inbox_updates(self, day):
        horizon = day - self.cfg.d_max
        for agent in self.app_ids.tolist():
            box = self.inbox[agent]
            if not box:
                continue
            ledger = self.received[agent]
            for msg in box:
                if msg.encounter_day < horizon:
                    continue
                entry = ledger.setdefault(msg.encounter_day, {}).setdefault(msg.sender_token, [0, 1])
                entry[0] = msg.risk_level
            self.inbox[agent] = []

    def _predict(self, day):
        """(n_app, window) predictions plus a per-agent failure mask."""
        cfg = self.cfg
        app = self.app_ids
        y = self.ground_truth_window(day)[app]
        failed = np.zeros(app.size, dtype=bool)
        if cfg.predictor == "oracle":
            y_hat = y
        elif cfg.predictor == "noisy_oracle":
            y_hat = np.clip(
                y * (1.0 + self.rng["predictor"].normal(0.0, cfg.predictor_mul_sigma, y.shape))
                + self.rng["predictor"].normal(0.0, cfg.predictor_add_sigma, y.shape),
                0.0, 1.0)
        else:
            y_hat = self.yhat_prev[app].copy()
            for i, agent in enumerate(app.tolist()):
                try:
                    pred = self.external(agent, day)
                except KeyError:
                    failed[i] = True
                    continue
                if pred.shape != (self.window,):
                    failed[i] = True
                    continue
                y_hat[i] = np.clip(pred, 0.0, 1.0)
        return y_hat, failed

    def _emit_updates(self, day, app, y_hat, changed_agents):
        """Diff each changed agent's estimate and route update messages."""
        sent = 0
        for i in changed_agents:
            agent = int(app[i])
            book = self.contact_book[agent]
            if not book:
                continue
            prev = self.yhat_prev[agent]
            prev_aligned = np.empty(self.window)
            prev_aligned[0] = prev[0]
            prev_aligned[1:] = prev[:-1]
            out = messaging.diff_and_emit(
                prev_aligned, y_hat[i], book, self.thresholds,
                day=day, own_tokens=self.own_tokens[agent])
            for recipient_token, msg in out:
                sent += self._route(recipient_token, msg, day)
        return sent

    def _app_pass_pct(self, day):
        app = self.app_ids
        y_hat, failed = self._predict(day)
        qlev = np.searchsorted(self.thresholds, y_hat, side="left")
        prev = self.yhat_prev[app]
        prev_aligned = np.concatenate([prev[:, :1], prev[:, :-1]], axis=1)
        prev_qlev = np.searchsorted(self.thresholds, prev_aligned, side="left")
        changed = np.flatnonzero(np.any(qlev != prev_qlev, axis=1) & ~failed)
        sent = self._emit_updates(day, app, y_hat, changed)
        levels = self.psi[qlev[:, 0]]
        levels[failed] = 1
        self.policy_level[app] = levels
        keep = ~failed
        self.yhat_prev[app[keep]] = y_hat[keep]
        self.shared_qlevel[app[keep]] = qlev[keep, 0].astype(np.int8)
        if self.yhat_hist is not None:
            self.yhat_hist[app, day] = y_hat
        return sent

    def _app_pass_heuristic(self, day):
        app = self.app_ids
        y_hat_all = np.zeros((app.size, self.window))
        active = []
        for i, agent in enumerate(app.tolist()):
            ledger = self.received[agent]
            has_msg = any(any(e[0] > 0 for e in per_day.values()) for per_day in ledger.values())
            if (self.symptom_hist[agent, day] or self.test_code[agent] != TEST_NONE
                    or has_msg or self.yhat_prev[agent, 0] > 0):
                active.append(i)
        levels = np.ones(app.size, dtype=np.int8)
        for i in active:
            agent = int(app[i])
            obs = self.observables_for(agent, day)
            y_hat, level = tracing.policy_heuristic(obs)
            y_hat_all[i] = y_hat
            levels[i] = level
        sent = self._emit_updates(day, app, y_hat_all, active)
        self.policy_level[app] = levels
        self.yhat_prev[app] = y_hat_all
        self.shared_qlevel[app] = np.searchsorted(
            self.thresholds, y_hat_all[:, 0], side="left").astype(np.int8)
        if self.yhat_hist is not None:
            self.yhat_hist[app, day] = y_hat_all
        return sent

    def _snapshot_enc_windows(self, day):
        for agent in self.app_ids.tolist():
            rows = []
            ledger = self.received[agent]
            for d, per_day in ledger.items():
                k = day - d
                if 0 <= k <= self.cfg.d_max:
                    for lvl, cnt in per_day.values():
                        rows.append((k, lvl, min(cnt, 65535)))
            rows.sort()
            self.enc_windows[(agent, day)] = np.asarray(rows, dtype=np.uint16).reshape(-1, 3)

    def _phase_levels(self, day):
        cfg = self.cfg
        rng = self.rng["behavior"]

        def drop_out(active, until, p):
            live = active & (day + 1 <= until)
            idx = np.flatnonzero(live)
            if idx.size and p > 0:
                quit_ = rng.random(idx.size) < p
                active[idx[quit_]] = False
                live[idx[quit_]] = False
            return live

        iso_live = drop_out(self.iso_active, self.iso_until, cfg.quarantine_dropout_test)
        hh_live = drop_out(self.hh_active, self.hh_until, cfg.quarantine_dropout_household)
        bct_live = drop_out(self.bct_active, self.bct_until, cfg.quarantine_dropout_test)

        levels = self.policy_level.copy()
        levels[iso_live] = np.maximum(levels[iso_live], 4)
        levels[hh_live] = np.maximum(levels[hh_live], 4)
        levels[bct_live] = np.maximum(levels[bct_live], cfg.bct_quarantine_level)
        ignore = rng.random(self.n) < cfg.all_levels_dropout
        levels[ignore] = 0
        self.rec_level = levels


def init_world(config: SimConfig) -> WorldState:
    """Validate the config and build a ready-to-run world."""
    return WorldState(config)


def step_day(world: WorldState) -> DayReport:
    """Advance the world by one day and return the day's counters."""
    cfg = world.cfg
    day = world.day
    if day >= cfg.num_days:
        raise RuntimeError(f"step_day past num_days={cfg.num_days}")
    world._phase_progression(day)
    a, b, loc = world._phase_encounters(day)
    new_cases = world._phase_transmission(day, a, b, loc)
    tests_ordered, positives = world._phase_testing(day)
    messages = world._phase_app_pass(day)
    world._phase_levels(day)

    world.epi_hist[:, day] = world.epi_state
    counts = np.bincount(world.epi_state, minlength=4)
    q_mask = world.level_hist[:, day] == 4
    healthy = (world.epi_state == STATE_S) | (world.epi_state == STATE_R)
    report = DayReport(
        day=day,
        s=int(counts[STATE_S]), e=int(counts[STATE_E]),
        i=int(counts[STATE_I]), r=int(counts[STATE_R]),
        new_cases=int(new_cases),
        cum_cases=len(world.events),
        encounters=int(world.encounters_per_day[day]),
        quarantined=int(q_mask.sum()),
        quarantined_healthy=int((q_mask & healthy).sum()),
        tests_ordered=int(tests_ordered),
        positives=int(positives),
        messages=int(messages),
    )
    world.day_reports.append(report)
    world.day += 1
    return report


def run(config: SimConfig) -> SimulationTrace:
    """Run a full simulation and return its immutable trace."""
    world = init_world(config)
    for _ in range(int(config.num_days)):
        step_day(world)
    cfg_dict = config.to_dict()
    run_id = f"{config_hash(cfg_dict)}-s{config.rng_seed}"
    return SimulationTrace(
        config=cfg_dict,
        run_id=run_id,
        population=world.n,
        num_days=int(config.num_days),
        app_ids=world.app_ids,
        profiles={a: agent_profile(world, a) for a in world.app_ids.tolist()},
        initial_counts=world.initial_counts,
        day_reports=world.day_reports,
        events=world.events,
        epi_hist=world.epi_hist,
        level_hist=world.level_hist,
        y_hist=world.y_hist,
        symptom_hist=world.symptom_hist,
        test_hist=world.test_hist,
        encounters_per_day=world.encounters_per_day,
        final_epi_state=world.epi_state.copy(),
        enc_windows=world.enc_windows,
        yhat_hist=world.yhat_hist,
        encounter_log=world.encounter_log,
    )


def agent_profile(world, agent: int) -> dict:
    """Exportable demographic profile g for one agent."""
    return {
        "age_band": AGE_BAND_NAMES[int(world.age_band[agent])],
        "sex": "mf"[int(world.sex[agent])],
        "conditions": [name for bit, name in enumerate(CONDITION_NAMES)
                       if int(world.conditions[agent]) >> bit & 1],
        "has_app": bool(world.has_app[agent]),
    }
