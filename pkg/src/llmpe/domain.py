"""Course catalog, student valuations, GUI mistakes and exact allocation.

Bundles are represented two ways: as :class:`Bundle` objects (sorted tuples
of 1-based course ids) at API boundaries, and as 0/1 incidence matrices of
shape ``(n_bundles, num_courses)`` wherever values are computed in bulk.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

SUBSTITUTE = "substitute"
COMPLEMENT = "complement"
TIERS = ("high", "medium", "low")

INSTANCE_SCHEMA_VERSION = 1


class InvalidBundleError(ValueError):
    """Raised when a bundle does not fit the catalog."""


@dataclass(frozen=True)
class CourseCatalog:
    num_courses: int = 25
    max_bundle_size: int = 5

    def __post_init__(self):
        if self.max_bundle_size < 1 or self.num_courses < self.max_bundle_size:
            raise ValueError(
                f"need num_courses >= max_bundle_size >= 1, got "
                f"{self.num_courses}, {self.max_bundle_size}"
            )

    @property
    def course_ids(self) -> range:
        return range(1, self.num_courses + 1)

    @property
    def num_bundles(self) -> int:
        return sum(math.comb(self.num_courses, k) for k in range(self.max_bundle_size + 1))

    def validate(self, X) -> np.ndarray:
        """Return ``X`` as a 2-D float incidence matrix, raising on invalid rows."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.num_courses:
            raise InvalidBundleError(
                f"bundle has {X.shape[1]} entries, catalog has {self.num_courses} courses"
            )
        if not np.all((X == 0) | (X == 1)):
            raise InvalidBundleError("bundle incidence must be 0/1")
        sizes = X.sum(axis=1)
        if np.any(sizes > self.max_bundle_size):
            raise InvalidBundleError(
                f"bundle of size {int(sizes.max())} exceeds max {self.max_bundle_size}"
            )
        return X


@dataclass(frozen=True, order=True)
class Bundle:
    """A set of courses, stored as sorted 1-based ids."""

    courses: tuple[int, ...] = ()

    def __post_init__(self):
        courses = tuple(sorted(int(c) for c in self.courses))
        if len(set(courses)) != len(courses):
            raise InvalidBundleError(f"duplicate course in bundle {courses}")
        if courses and courses[0] < 1:
            raise InvalidBundleError("course ids are 1-based")
        object.__setattr__(self, "courses", courses)

    @classmethod
    def from_incidence(cls, row) -> "Bundle":
        return cls(tuple(int(i) + 1 for i in np.flatnonzero(np.asarray(row))))

    def incidence(self, num_courses: int) -> np.ndarray:
        x = np.zeros(num_courses)
        if self.courses:
            if self.courses[-1] > num_courses:
                raise InvalidBundleError(
                    f"course {self.courses[-1]} outside catalog of {num_courses}"
                )
            x[np.asarray(self.courses) - 1] = 1.0
        return x

    def __len__(self):
        return len(self.courses)

    def __str__(self):
        return ", ".join(f"Course {c}" for c in self.courses) or "(empty)"


def bundles_to_matrix(bundles: Sequence[Bundle], num_courses: int) -> np.ndarray:
    X = np.zeros((len(bundles), num_courses))
    for i, b in enumerate(bundles):
        X[i] = b.incidence(num_courses)
    return X


@dataclass(frozen=True)
class InteractionGroup:
    members: frozenset
    kind: str
    strength: float = 0.40

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(int(m) for m in self.members))
        if len(self.members) < 2:
            raise ValueError("an interaction group needs at least two courses")
        if self.kind not in (SUBSTITUTE, COMPLEMENT):
            raise ValueError(f"unknown group kind {self.kind!r}")
        if not 0.0 < self.strength < 1.0:
            raise ValueError(f"strength must lie in (0, 1), got {self.strength}")

    def factor(self, k):
        """Multiplier applied to each member when ``k`` members are taken."""
        base = 1.0 - self.strength if self.kind == SUBSTITUTE else 1.0 + self.strength
        k = np.asarray(k)
        return np.where(k >= 2, base ** np.maximum(k - 1, 0), 1.0)


@dataclass(frozen=True)
class StudentProfile:
    """Ground-truth valuation. ``base_values[c - 1]`` is the value of course ``c``."""

    base_values: tuple[float, ...]
    groups: tuple[InteractionGroup, ...] = ()
    tier_labels: dict = field(default_factory=dict, compare=True, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "base_values", tuple(float(v) for v in self.base_values))
        object.__setattr__(self, "groups", tuple(self.groups))
        if any(v < 0 for v in self.base_values):
            raise ValueError("base values must be nonnegative")
        m = len(self.base_values)
        for g in self.groups:
            if min(g.members) < 1 or max(g.members) > m:
                raise ValueError(f"group {sorted(g.members)} outside catalog of {m}")
        subs = {g.members for g in self.groups if g.kind == SUBSTITUTE}
        comps = {g.members for g in self.groups if g.kind == COMPLEMENT}
        if subs & comps:
            raise ValueError("a complement group and a substitute group share the same members")

    @property
    def num_courses(self) -> int:
        return len(self.base_values)

    def value(self, X) -> np.ndarray:
        """Vectorised valuation of an incidence matrix."""
        return _group_value(np.asarray(self.base_values), self.groups, np.atleast_2d(X))


# A GUI report has exactly the shape of a profile.
GuiReport = StudentProfile


def _group_value(base: np.ndarray, groups, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    multiplier = np.ones_like(X)
    for g in groups:
        idx = np.asarray(sorted(g.members)) - 1
        k = X[:, idx].sum(axis=1)
        multiplier[:, idx] *= g.factor(k)[:, None]
    return (X * multiplier) @ base


def _check_one(catalog: CourseCatalog | None, x: np.ndarray, num_courses: int) -> CourseCatalog:
    catalog = catalog or CourseCatalog(num_courses, min(5, num_courses))
    catalog.validate(x)
    return catalog


def _as_matrix(bundle, num_courses: int) -> tuple[np.ndarray, bool]:
    if isinstance(bundle, Bundle):
        return bundle.incidence(num_courses)[None, :], True
    X = np.asarray(bundle, dtype=float)
    return np.atleast_2d(X), X.ndim == 1


def true_value(profile: StudentProfile, bundle, catalog: CourseCatalog | None = None):
    """Value of a bundle (or rows of an incidence matrix) under ``profile``.

    Each member of a triggered group (``k >= 2`` of its members taken) has its
    base value scaled by ``(1 - s) ** (k - 1)`` for substitutes and
    ``(1 + s) ** (k - 1)`` for complements; factors from different groups
    multiply.
    """
    X, scalar = _as_matrix(bundle, profile.num_courses)
    _check_one(catalog, X, profile.num_courses)
    v = profile.value(X)
    return float(v[0]) if scalar else v


def reported_value(report: GuiReport, bundle, catalog: CourseCatalog | None = None):
    return true_value(report, bundle, catalog)


@dataclass(frozen=True)
class MistakeProfile:
    value_noise_std: float = 0.15
    group_omission_prob: float = 0.5
    strength_noise_std: float = 0.1
    gamma: float = 1.0

    def __post_init__(self):
        if min(self.value_noise_std, self.strength_noise_std, self.gamma) < 0:
            raise ValueError("mistake parameters must be nonnegative")
        if not 0.0 <= self.group_omission_prob <= 1.0:
            raise ValueError("group_omission_prob must be a probability")

    @property
    def effective_value_noise(self) -> float:
        return self.gamma * self.value_noise_std

    @property
    def effective_omission_prob(self) -> float:
        return min(1.0, self.gamma * self.group_omission_prob)

    @property
    def effective_strength_noise(self) -> float:
        return self.gamma * self.strength_noise_std


_STRENGTH_BOUNDS = (0.01, 0.99)


def corrupt(profile: StudentProfile, mistakes: MistakeProfile, rng_seed) -> GuiReport:
    """Produce the student's GUI report of ``profile``.

    Base values get multiplicative log-normal noise, each group is dropped
    with the (clamped) omission probability, and surviving strengths get
    additive Gaussian noise. ``gamma == 0`` returns an identical profile.
    """
    rng = np.random.default_rng(rng_seed)
    base = np.asarray(profile.base_values)
    sigma = mistakes.effective_value_noise
    noise = rng.standard_normal(base.shape)
    reported_base = base * np.exp(sigma * noise) if sigma > 0 else base.copy()

    p_omit = mistakes.effective_omission_prob
    s_std = mistakes.effective_strength_noise
    groups = []
    for g in profile.groups:
        omitted = rng.random() < p_omit
        eps = rng.standard_normal()
        if omitted:
            continue
        if s_std > 0:
            strength = float(np.clip(g.strength + s_std * eps, *_STRENGTH_BOUNDS))
            g = replace(g, strength=strength)
        groups.append(g)
    return StudentProfile(tuple(reported_base), tuple(groups), dict(profile.tier_labels))


@lru_cache(maxsize=8)
def _bundle_matrix(num_courses: int, max_bundle_size: int) -> np.ndarray:
    rows = []
    for k in range(max_bundle_size + 1):
        for combo in combinations(range(num_courses), k):
            r = np.zeros(num_courses, dtype=np.int8)
            r[list(combo)] = 1
            rows.append(r)
    X = np.array(rows, dtype=np.int8)
    order = np.lexsort(X.T[::-1])
    X = X[order]
    X.setflags(write=False)
    return X


def bundle_matrix(catalog: CourseCatalog) -> np.ndarray:
    """All valid bundles as an int8 incidence matrix, lexicographically ascending."""
    return _bundle_matrix(catalog.num_courses, catalog.max_bundle_size)


def enumerate_bundles(catalog: CourseCatalog) -> Iterator[Bundle]:
    for row in bundle_matrix(catalog):
        yield Bundle.from_incidence(row)


def best_bundle(value_fn: Callable[[np.ndarray], np.ndarray], catalog: CourseCatalog,
                chunk_size: int = 20000) -> tuple[Bundle, float]:
    """Exact argmax of ``value_fn`` over every valid bundle.

    ``value_fn`` maps an ``(n, num_courses)`` float matrix to ``n`` values.
    Ties go to the lexicographically smallest incidence vector.
    """
    X = bundle_matrix(catalog)
    best_i, best_v = -1, -np.inf
    for start in range(0, len(X), chunk_size):
        v = np.asarray(value_fn(X[start:start + chunk_size].astype(float)), dtype=float)
        i = int(np.argmax(v))
        if v[i] > best_v:
            best_i, best_v = start + i, float(v[i])
    return Bundle.from_incidence(X[best_i]), best_v


def sample_bundles(catalog: CourseCatalog, n: int, rng, replace_: bool = False) -> np.ndarray:
    """Uniform sample of ``n`` valid bundles (distinct unless ``replace_``)."""
    X = bundle_matrix(catalog)
    idx = rng.choice(len(X), size=n, replace=replace_ or n > len(X))
    return X[idx].astype(float)


def generate_profile(catalog: CourseCatalog, rng_seed, n_substitute: int = 2,
                     n_complement: int = 2, strength: float = 0.40) -> StudentProfile:
    """Draw a three-tier student with complement and substitute groups.

    Two high-priority courses near 115, zero to three medium courses, the
    rest between 40 and 60. Every group is anchored on a high or medium
    course so interactions touch the bundles that matter.
    """
    rng = np.random.default_rng(rng_seed)
    m = catalog.num_courses
    courses = rng.permutation(np.arange(1, m + 1))
    n_high = min(2, m)
    n_med = int(rng.integers(0, 4)) if m > n_high + 3 else 0
    base = np.empty(m)
    tiers = {}
    for pos, c in enumerate(courses):
        if pos < n_high:
            base[c - 1], tiers[int(c)] = rng.uniform(110.0, 120.0), "high"
        elif pos < n_high + n_med:
            base[c - 1], tiers[int(c)] = rng.uniform(65.0, 95.0), "medium"
        else:
            base[c - 1], tiers[int(c)] = rng.uniform(40.0, 60.0), "low"
    anchors = courses[: n_high + n_med]

    groups: list[InteractionGroup] = []
    seen: set = set()
    for kind, count in ((SUBSTITUTE, n_substitute), (COMPLEMENT, n_complement)):
        made = 0
        while made < count:
            size = int(rng.integers(2, min(5, m) + 1))
            anchor = int(rng.choice(anchors))
            others = rng.choice([c for c in range(1, m + 1) if c != anchor], size=size - 1,
                                replace=False)
            members = frozenset([anchor, *map(int, others)])
            if members in seen:
                continue
            seen.add(members)
            groups.append(InteractionGroup(members, kind, strength))
            made += 1
    return StudentProfile(tuple(np.round(base, 2)), tuple(groups), tiers)


def profile_to_dict(profile: StudentProfile) -> dict:
    return {
        "base_values": list(profile.base_values),
        "groups": [
            {"members": sorted(g.members), "kind": g.kind, "strength": g.strength}
            for g in profile.groups
        ],
        "tier_labels": {str(k): v for k, v in sorted(profile.tier_labels.items())},
    }


def profile_from_dict(d: dict) -> StudentProfile:
    return StudentProfile(
        tuple(d["base_values"]),
        tuple(InteractionGroup(frozenset(g["members"]), g["kind"], g["strength"])
              for g in d["groups"]),
        {int(k): v for k, v in d.get("tier_labels", {}).items()},
    )


def save_instance(path, profile: StudentProfile, mistakes: MistakeProfile, seed: int,
                  student_id: int = 0) -> None:
    """Write one student instance as an indented JSON document."""
    doc = {
        "schema_version": INSTANCE_SCHEMA_VERSION,
        "student_id": student_id,
        "seed": seed,
        "profile": profile_to_dict(profile),
        "mistakes": {
            "value_noise_std": mistakes.value_noise_std,
            "group_omission_prob": mistakes.group_omission_prob,
            "strength_noise_std": mistakes.strength_noise_std,
            "gamma": mistakes.gamma,
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_instance(path) -> tuple[StudentProfile, MistakeProfile, int, int]:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != INSTANCE_SCHEMA_VERSION:
        raise ValueError(f"unsupported instance schema {doc.get('schema_version')!r}")
    return (profile_from_dict(doc["profile"]), MistakeProfile(**doc["mistakes"]),
            doc["seed"], doc.get("student_id", 0))
