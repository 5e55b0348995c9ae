"""Synthetic grade-group cohorts with planted risk effects.

Basic and behavioural features are sampled per schema; the three network
features are computed from generated dormitory and learning-team layers.
Risk follows a logistic model whose logit is a calibrated intercept plus the
planted effects, so a fitted model's attributions can be checked against a
known ground truth.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .cohort import Cohort
from .errors import DomainError
from .network import build_layer, centrality_triples, synthesize
from .schema import FeatureSchema, default_schema

# team-layer generator: students per class section, share of students placed
# in a random section's teams, Beta parameters of section stability and of
# individual team participation; Dirichlet concentration of dormitory sizes
SECTION_SIZE = 24
STRAY_RATE = 0.15
STABILITY_AB = (1.0, 3.0)
ENGAGEMENT_AB = (0.8, 1.2)
DORM_CONCENTRATION = 50.0

SHAPES = ("linear", "threshold", "step")

# Little-correlation variables from the original study; generated with zero effect.
WEAK_FEATURES = ("NonRsdnt", "WrkStdy", "Lpstck", "Leader", "Lover", "Smk")

# (mean, sd, max) of entrance-exam sub-scores
EXAM_SCORES = {
    "ExamCnN": (81.7, 18.3, 150.0),
    "ExamEnN": (66.7, 25.8, 150.0),
    "ExamMatN": (55.4, 32.0, 150.0),
    "ExamProN": (179.2, 46.5, 300.0),
}

CATEGORY_WEIGHTS = {
    "Seat": (0.15, 0.45, 0.40),
    "DrmStyle": (0.15, 0.35, 0.35, 0.15),
    "Truant": (0.40, 0.30, 0.20, 0.10),
    "Game": (0.25, 0.30, 0.25, 0.20),
}


@dataclass(frozen=True)
class PlantedEffect:
    """One additive logit term.

    ``linear`` adds ``direction * strength * z`` with ``z`` the cohort-standardised
    value; ``threshold`` adds ``direction * strength`` when value > cut;
    ``step`` adds it when value >= cut (meant for category codes).
    """

    feature: str
    shape: str
    strength: float
    direction: int = 1
    cut: float = 0.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise DomainError(f"unknown effect shape {self.shape!r}")
        if self.direction not in (-1, 1):
            raise DomainError("direction must be +1 or -1")
        if self.strength < 0:
            raise DomainError("strength must be non-negative")

    def contribution(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if self.shape == "linear":
            sd = values.std()
            z = (values - values.mean()) / sd if sd > 0 else np.zeros_like(values)
            return self.direction * self.strength * z
        hit = values > self.cut if self.shape == "threshold" else values >= self.cut
        return self.direction * self.strength * hit.astype(np.float64)


def default_effects() -> tuple:
    """The eight planted predictors, strongest first."""
    return (
        PlantedEffect("EgnCnt", "threshold", 5.0, -1, 0.03),
        PlantedEffect("Seat", "step", 3.2, 1, 3),
        PlantedEffect("DrmStyle", "step", 3.0, -1, 2),
        PlantedEffect("ExamEnN", "linear", 2.0, -1),
        PlantedEffect("DgrCnt", "linear", 1.8, -1),
        PlantedEffect("Game", "linear", 1.8, 1),
        PlantedEffect("BtwnCnt", "linear", 1.6, -1),
        PlantedEffect("Truant", "linear", 1.6, 1),
    )


@dataclass(frozen=True)
class NetworkSpec:
    n_dorms: int = 0  # 0: one dormitory per four students
    teams_per_student: int = 4
    team_size: int = 5


@dataclass(frozen=True)
class SynthSpec:
    n_students: int = 96
    schema: FeatureSchema = field(default_factory=default_schema)
    planted_effects: tuple = field(default_factory=default_effects)
    noise_features: tuple = WEAK_FEATURES
    network: NetworkSpec = NetworkSpec()
    target_positive_rate: float = 0.155
    seed: int = 0

    def __post_init__(self):
        planted = {e.feature for e in self.planted_effects}
        if planted & set(self.noise_features):
            raise DomainError(f"features both planted and noise: {sorted(planted & set(self.noise_features))}")
        if not 0 < self.target_positive_rate < 1:
            raise DomainError("target_positive_rate must lie in (0, 1)")
        if self.n_students < 4:
            raise DomainError("need at least four students")
        active = set(self.schema.active_names)
        unknown = (planted | set(self.noise_features)) - active
        if unknown:
            raise DomainError(f"planted/noise features not among model features: {sorted(unknown)}")

    def to_dict(self) -> dict:
        return {
            "n_students": self.n_students,
            "planted_effects": [asdict(e) for e in self.planted_effects],
            "noise_features": list(self.noise_features),
            "network": asdict(self.network),
            "target_positive_rate": self.target_positive_rate,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict, schema: FeatureSchema | None = None) -> "SynthSpec":
        kw = {}
        if "planted_effects" in d:
            kw["planted_effects"] = tuple(PlantedEffect(**e) for e in d["planted_effects"])
        if "noise_features" in d:
            kw["noise_features"] = tuple(d["noise_features"])
        if "network" in d:
            kw["network"] = NetworkSpec(**d["network"])
        for key in ("n_students", "target_positive_rate", "seed"):
            if key in d:
                kw[key] = d[key]
        if schema is not None:
            kw["schema"] = schema
        return cls(**kw)


@dataclass
class GroundTruth:
    planted_set: frozenset
    per_sample_logit: np.ndarray
    realized_positive_rate: float
    intercept: float
    gpa: np.ndarray

    def to_dict(self) -> dict:
        return {"planted_set": sorted(self.planted_set),
                "per_sample_logit": self.per_sample_logit.tolist(),
                "realized_positive_rate": self.realized_positive_rate,
                "intercept": self.intercept}


def _network_layers(n, net: NetworkSpec, rng):
    """Dormitory layer plus team layers with uneven participation.

    In each team layer a student joins a team with probability equal to their
    individual engagement and otherwise stays alone.  Teams form mostly
    within a class section and vary in size around ``team_size``.
    """
    n_dorms = net.n_dorms or max(1, n // 4)
    # mildly uneven room sizes give degree some variation of its own
    dorm = rng.choice(n_dorms, size=n, p=rng.dirichlet(np.full(n_dorms, DORM_CONCENTRATION)))
    layers = [build_layer(dorm.tolist(), n, "dormitory")]
    n_sections = max(1, n // SECTION_SIZE)
    section = rng.permutation(np.arange(n) % n_sections)
    # Stable sections keep the same teammates from layer to layer, building
    # heavy repeated ties (partner quality); fluid sections reshuffle, giving
    # the same weighted degree spread over more distinct partners (mobility).
    stability = rng.beta(STABILITY_AB[0], STABILITY_AB[1], size=n_sections)
    slot = rng.random(n)
    engagement = rng.beta(ENGAGEMENT_AB[0], ENGAGEMENT_AB[1], size=n)
    for t in range(net.teams_per_student):
        joins = rng.random(n) < engagement
        keeps = rng.random(n) < stability[section]
        strays = (rng.random(n) < STRAY_RATE) * rng.integers(0, n_sections, size=n)
        key = section + strays + np.where(keeps, slot, rng.random(n))
        members = np.nonzero(joins)[0]
        members = members[np.argsort(key[members], kind="stable")]
        groups = [("solo", i) for i in range(n)]
        start, team = 0, 0
        while start < len(members):
            size = max(2, int(rng.integers(net.team_size - 2, net.team_size + 3)))
            for student in members[start:start + size]:
                groups[student] = ("team", team)
            start += size
            team += 1
        layers.append(build_layer(groups, n, f"team{t + 1}"))
    return layers


def _sample_features(spec: SynthSpec, rng) -> dict:
    n = spec.n_students
    cols = {}
    for name, (mean, sd, top) in EXAM_SCORES.items():
        cols[name] = np.clip(np.round(rng.normal(mean, sd, size=n)), 0.0, top)
    cols["ExmSumN"] = sum(cols[k] for k in EXAM_SCORES)
    for s in spec.schema.active:
        if not s.is_categorical:
            continue
        p = CATEGORY_WEIGHTS.get(s.name)
        idx = rng.choice(len(s.codes), size=n, p=p)
        cols[s.name] = np.asarray(s.codes, dtype=np.float64)[idx]
    return cols


def _calibrate(eta, noise, target, n):
    """Intercept by bisection so the realised positive rate hits ``target``."""
    lo, hi = -50.0, 50.0

    def rate(b):
        return float(np.mean(b + eta + noise > 0))

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if rate(mid) < target:
            lo = mid
        else:
            hi = mid
    best = min((lo, hi), key=lambda b: abs(rate(b) - target))
    if abs(rate(best) - target) > 0.01 + 0.5 / n:
        raise DomainError(f"cannot calibrate positive rate {target} with {n} students")
    return best


def generate(spec: SynthSpec = SynthSpec()):
    """Return ``(cohort, layers, truth)`` for a synthetic grade group."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_students
    layers = _network_layers(n, spec.network, rng)
    ids = [f"S{spec.seed:03d}-{i:04d}" for i in range(n)]
    graph = synthesize(layers, node_ids=ids)
    cols = _sample_features(spec, rng)
    net = centrality_triples(graph)
    cols.update(DgrCnt=net[:, 0], BtwnCnt=net[:, 1], EgnCnt=net[:, 2])

    eta = np.zeros(n)
    for effect in spec.planted_effects:
        eta += effect.contribution(cols[effect.feature])
    # Latent-logistic form: label = 1[b + eta + u > 0] with u ~ Logistic(0, 1)
    # gives P(label = 1) = sigmoid(b + eta) for every student.
    u = rng.logistic(size=n)
    intercept = _calibrate(eta, u, spec.target_positive_rate, n)
    y = (intercept + eta + u > 0).astype(np.int64)
    gpa = np.where(y == 1, rng.uniform(0.8, 1.99, size=n), rng.uniform(2.0, 4.6, size=n))
    gpa = np.round(gpa, 2)

    X = np.column_stack([cols[name] for name in spec.schema.active_names])
    cohort = Cohort(spec.schema, ids, X, y, f"synthetic-seed{spec.seed}")
    truth = GroundTruth(frozenset(e.feature for e in spec.planted_effects if e.strength > 0),
                        intercept + eta, float(y.mean()), float(intercept), gpa)
    return cohort, layers, truth


def recovery_score(ranking, truth: GroundTruth, k: int) -> float:
    """Share of planted features among the top ``k`` of a global importance ranking."""
    planted = truth.planted_set
    if k < len(planted):
        raise DomainError(f"k={k} is smaller than the {len(planted)} planted features")
    if not planted:
        return 1.0
    top = set(ranking.top(k)) if hasattr(ranking, "top") else {name for name, _ in list(ranking)[:k]}
    return len(planted & top) / len(planted)


def load_spec(path, schema: FeatureSchema | None = None) -> SynthSpec:
    with open(path, encoding="utf-8") as fh:
        return SynthSpec.from_dict(json.load(fh), schema)
