from __future__ import annotations

import numpy as np

from ..domain import Bundle, StudentProfile, true_value
from .records import ComparisonRecord


def simulated_answer(profile: StudentProfile, bundle_a: Bundle, bundle_b: Bundle,
                     accuracy: float, rng) -> ComparisonRecord:
    """Answer a comparison correctly with probability ``accuracy``, i.i.d.

    Exact value ties are broken uniformly at random and count as correct.
    """
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError(f"accuracy must lie in [0, 1], got {accuracy}")
    if bundle_a == bundle_b:
        raise ValueError("a comparison needs two different bundles")
    va = true_value(profile, bundle_a)
    vb = true_value(profile, bundle_b)
    if va == vb:
        answer = "A" if rng.random() < 0.5 else "B"
        return ComparisonRecord(bundle_a, bundle_b, answer, "simulated", correct=True)
    better = "A" if va > vb else "B"
    correct = bool(rng.random() < accuracy)
    answer = better if correct else ("B" if better == "A" else "A")
    return ComparisonRecord(bundle_a, bundle_b, answer, "simulated", correct=correct)


def simulated_labels(values_a: np.ndarray, values_b: np.ndarray, accuracy: float,
                     rng) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised form: labels (1 = A chosen) and correctness flags."""
    values_a, values_b = np.asarray(values_a), np.asarray(values_b)
    u = rng.random(len(values_a))
    tie = values_a == values_b
    correct = np.where(tie, True, u < accuracy)
    a_better = values_a > values_b
    label = np.where(tie, u < 0.5, np.where(correct, a_better, ~a_better))
    return label.astype(int), correct
