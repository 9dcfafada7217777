"""Prompt templates and answer parsing.

Templates live as text files next to this module and use ``str.format``
placeholders, so they can be edited without touching code.
"""
from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

from ..domain import COMPLEMENT, SUBSTITUTE, Bundle, StudentProfile

CQ_TAGS = ("PREFERENCES", "COMPLEMENTS", "SUBSTITUTES", "REASONING", "CHOICE")

BREVITY_WORDS = {"baseline": None, "moderate": 180, "brief": 80}


class ParseError(ValueError):
    """The response did not contain a usable CHOICE tag."""


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files(__package__).joinpath("templates", f"{name}.txt").read_text()


def format_bundle(bundle: Bundle) -> str:
    return ", ".join(f"Course {c}" for c in bundle.courses) or "(no courses)"


def render_cq_prompt(narrative: str, bundle_a: Bundle, bundle_b: Bundle,
                     cot_enabled: bool = True) -> str:
    if not narrative or not narrative.strip():
        raise ValueError("narrative must be nonempty")
    template = load_template("cq_cot" if cot_enabled else "cq_plain")
    return template.format(student_preferences_text=narrative.strip(),
                           bundle_a=format_bundle(bundle_a), bundle_b=format_bundle(bundle_b))


_CHOICE_RE = re.compile(r"<\s*choice\s*>(.*?)<\s*/\s*choice\s*>", re.IGNORECASE | re.DOTALL)
_LABEL_RE = re.compile(r"^\s*bundle\s+([a-z])\s*\.?\s*$", re.IGNORECASE)


def parse_choice(text: str) -> str:
    """Return ``"A"`` or ``"B"`` from the last well-formed CHOICE tag.

    Raises :class:`ParseError` when no tag is present, the last tag does not
    read ``Bundle <letter>``, or the letter is not A or B.
    """
    matches = _CHOICE_RE.findall(text or "")
    if not matches:
        raise ParseError("no <CHOICE>...</CHOICE> tag in response")
    m = _LABEL_RE.match(matches[-1])
    if m is None:
        raise ParseError(f"malformed choice {matches[-1]!r}")
    label = m.group(1).upper()
    if label not in ("A", "B"):
        raise ParseError(f"choice names unknown bundle {label!r}")
    return label


def _tier_lines(profile: StudentProfile, tier: str, with_values: bool = True) -> str:
    courses = [c for c, t in profile.tier_labels.items() if t == tier]
    courses.sort(key=lambda c: -profile.base_values[c - 1])
    lines = []
    for i, c in enumerate(courses, 1):
        v = f" (value: {profile.base_values[c - 1]:.2f})" if with_values else ""
        lines.append(f"   {i}. Course {c}{v}")
    return "\n".join(lines)


def _group_line(members, kind: str, strength: float) -> str:
    ids = ", ".join(str(c) for c in members)
    pct = round(100 * strength)
    if kind == SUBSTITUTE:
        return f"- Courses {ids} overlap in content. Taking any two reduces their combined value by {pct}%"
    return f"- Courses {ids} complement each other. Taking any two increases their combined value by {pct}%"


def group_members_ordered(group) -> list[int]:
    return sorted(group.members)


def render_narrative_prompt(profile: StudentProfile, brevity: str = "baseline",
                            budget: float = 1.0) -> str:
    """Prompt asking a surrogate-student model to describe ``profile`` in prose."""
    if brevity not in BREVITY_WORDS:
        raise ValueError(f"brevity must be one of {tuple(BREVITY_WORDS)}")
    words = BREVITY_WORDS[brevity]
    subs = [_group_line(group_members_ordered(g), g.kind, g.strength)
            for g in profile.groups if g.kind == SUBSTITUTE]
    comps = [_group_line(group_members_ordered(g), g.kind, g.strength)
             for g in profile.groups if g.kind == COMPLEMENT]
    return load_template("narrative").format(
        high_courses=_tier_lines(profile, "high"),
        medium_courses=_tier_lines(profile, "medium"),
        low_courses=_tier_lines(profile, "low"),
        substitute_groups="\n".join(subs),
        complement_groups="\n".join(comps),
        budget=f"{budget:.2f}",
        brevity_instruction=(f"\nLimit your response to approximately {words} words."
                             if words else ""),
    )
