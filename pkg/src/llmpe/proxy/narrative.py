"""Free-text preference narratives written from a student's point of view."""
from __future__ import annotations

from dataclasses import dataclass

from ..domain import COMPLEMENT, SUBSTITUTE, StudentProfile
from .prompts import BREVITY_WORDS, render_narrative_prompt


@dataclass(frozen=True)
class Narrative:
    text: str
    brevity: str = "baseline"
    student_id: int | None = None

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError("a narrative must be nonempty")
        if self.brevity not in BREVITY_WORDS:
            raise ValueError(f"brevity must be one of {tuple(BREVITY_WORDS)}")

    def __str__(self):
        return self.text


def _join(ids) -> str:
    names = [str(c) for c in ids]
    if len(names) == 1:
        return names[0]
    return ", ".join(names[:-1]) + " and " + names[-1]


def _courses(ids) -> str:
    ids = list(ids)
    return ("Course " if len(ids) == 1 else "Courses ") + _join(ids)


class RuleBasedNarrator:
    """Deterministic offline narrator that verbalises a profile without values.

    Course ids are the only digits that appear. Each interaction group gets
    exactly one sentence naming all of its members.
    """

    def narrate(self, profile: StudentProfile, brevity: str = "baseline") -> str:
        if brevity not in BREVITY_WORDS:
            raise ValueError(f"brevity must be one of {tuple(BREVITY_WORDS)}")
        by_tier = {t: sorted((c for c, lab in profile.tier_labels.items() if lab == t),
                             key=lambda c: -profile.base_values[c - 1])
                   for t in ("high", "medium", "low")}
        first = []
        if by_tier["high"]:
            first.append(f"My top priorities are {_courses(by_tier['high'])}, in that order.")
        if by_tier["medium"]:
            first.append(f"I am also fairly keen on {_courses(by_tier['medium'])}.")
        if by_tier["low"]:
            if brevity == "brief":
                first.append("Everything else matters much less to me.")
            else:
                first.append(f"{_courses(by_tier['low'])} would be nice extras, "
                             "roughly in that order, but matter much less.")

        second = []
        for g in profile.groups:
            members = sorted(g.members)
            if g.kind == SUBSTITUTE:
                s = f"{_courses(members)} overlap in content"
                if brevity != "brief":
                    s += ", so each extra one I take from that set is worth less"
            else:
                s = f"{_courses(members)} complement each other"
                if brevity != "brief":
                    s += ", so each extra one I take from that set adds more"
            if brevity == "baseline":
                s += (", and the effect grows the more of them I take" if g.kind == COMPLEMENT
                      else ", and taking several of them together should really be avoided")
            second.append(s + ".")

        paragraphs = [" ".join(first), " ".join(second)]
        if brevity != "brief":
            paragraphs.append("Overall I want my strongest interests first and I will build "
                              "around the combinations that work well together.")
        return "\n\n".join(p for p in paragraphs if p)


def generate_narrative(profile: StudentProfile, brevity: str = "baseline", backend=None,
                       student_id: int | None = None) -> Narrative:
    """Narrative for ``profile`` from a chat backend or a local narrator.

    ``backend`` may be anything with ``narrate(profile, brevity)`` (such as
    :class:`RuleBasedNarrator`, the default) or a chat backend with
    ``complete(messages)``, which receives the rendered narrative prompt.
    """
    backend = backend if backend is not None else RuleBasedNarrator()
    if hasattr(backend, "narrate"):
        text = backend.narrate(profile, brevity)
    else:
        prompt = render_narrative_prompt(profile, brevity)
        text = backend.complete([{"role": "user", "content": prompt}]).text
    return Narrative(text.strip(), brevity, student_id)
