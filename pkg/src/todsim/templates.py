"""Template realization of dialogue acts and its inverse.

Each act realizes to one clause; an utterance is the space-joined clause
list. Patterns are chosen so realization is injective over ontology-valid
act lists and exactly invertible: `parse_acts(role, realize(role, acts))`
returns `acts`. Values may span several words but never contain clause
punctuation (. ? !), which the toy ontology guarantees.
"""

from __future__ import annotations

import re

from .domain import BOOKING_SLOT, DialogueAct, NAME_SLOT, REFERENCE_SLOT

USER = "user"
SYSTEM = "system"

# Realized when an agent produced no acts at all; parses back to [].
NULL_UTTERANCE = "well ."

_D = r"(?P<domain>[a-z0-9]+)"
_S = r"(?P<slot>[a-z0-9]+)"
_V = r"(?P<value>[a-z0-9' -]*?)"

# (pattern name, clause template, regex). Order matters for parsing: more
# specific patterns (fixed slots) come before the generic form of the same
# act type.
_RULES: dict[str, list[tuple[str, str, str]]] = {
    USER: [
        ("inform_booking", "please book the {domain} for me .",
         rf"please book the {_D} for me \."),
        ("inform", "i am looking for a {domain} whose {slot} is {value} .",
         rf"i am looking for a {_D} whose {_S} is {_V} \."),
        ("request", "what is the {slot} of the {domain} ?",
         rf"what is the {_S} of the {_D} \?"),
        ("offer", "how about the {domain} with {slot} {value} ?",
         rf"how about the {_D} with {_S} {_V} \?"),
        ("book", "i booked the {domain} under reference {value} .",
         rf"i booked the {_D} under reference {_V} \."),
        ("nooffer_slot", "no {domain} with {slot} {value} works for me .",
         rf"no {_D} with {_S} {_V} works for me \."),
        ("nooffer", "no {domain} works for me .",
         rf"no {_D} works for me \."),
        ("bye", "thank you, goodbye.", r"thank you, goodbye\."),
        ("thank", "thanks a lot !", r"thanks a lot !"),
        ("greet", "hello .", r"hello \."),
    ],
    SYSTEM: [
        ("inform", "the {slot} of that {domain} is {value} .",
         rf"the {_S} of that {_D} is {_V} \."),
        ("request", "what {slot} would you like for the {domain} ?",
         rf"what {_S} would you like for the {_D} \?"),
        ("offer_name", "there is a {domain} called {value} that matches .",
         rf"there is a {_D} called {_V} that matches \."),
        ("offer", "there is a {domain} with {slot} {value} available .",
         rf"there is a {_D} with {_S} {_V} available \."),
        ("book", "your {domain} booking is confirmed , reference {value} .",
         rf"your {_D} booking is confirmed , reference {_V} \."),
        ("book_slot", "your {domain} {slot} is booked , code {value} .",
         rf"your {_D} {_S} is booked , code {_V} \."),
        ("nooffer_slot", "i am sorry , no {domain} has {slot} {value} .",
         rf"i am sorry , no {_D} has {_S} {_V} \."),
        ("nooffer", "i am sorry , there is no matching {domain} .",
         rf"i am sorry , there is no matching {_D} \."),
        ("bye", "you are welcome , goodbye .", r"you are welcome , goodbye \."),
        ("thank", "thank you !", r"thank you !"),
        ("greet", "hello , how can i help ?", r"hello , how can i help \?"),
    ],
}

_COMPILED = {
    role: [(name, tmpl, re.compile(rf"^{rx}$")) for name, tmpl, rx in rules]
    for role, rules in _RULES.items()
}


def _pattern_name(role: str, act: DialogueAct) -> str:
    t = act.act_type
    if t == "inform" and role == USER and act.slot == BOOKING_SLOT:
        return "inform_booking"
    if t == "offer" and role == SYSTEM:
        return "offer_name" if act.slot == NAME_SLOT else "offer"
    if t == "book" and role == SYSTEM:
        return "book" if act.slot == REFERENCE_SLOT else "book_slot"
    if t == "nooffer":
        return "nooffer_slot" if act.slot else "nooffer"
    return t


def realize_act(role: str, act: DialogueAct) -> str:
    name = _pattern_name(role, act)
    for pname, tmpl, _ in _COMPILED[role]:
        if pname == name:
            return tmpl.format(domain=act.domain, slot=act.slot, value=act.value)
    raise KeyError(f"no template for {role} act {act.act_type!r}")


def realize(role: str, acts: list[DialogueAct] | tuple[DialogueAct, ...]) -> str:
    """Deterministic utterance for an act list; NULL_UTTERANCE when empty."""
    if not acts:
        return NULL_UTTERANCE
    return " ".join(realize_act(role, a) for a in acts)


def _act_from_match(name: str, groups: dict[str, str]) -> DialogueAct:
    domain = groups.get("domain", "")
    slot = groups.get("slot", "")
    value = groups.get("value", "")
    if name == "inform_booking":
        return DialogueAct("inform", domain, BOOKING_SLOT, "yes")
    if name == "offer_name":
        return DialogueAct("offer", domain, NAME_SLOT, value)
    if name in ("book", "book_slot"):
        return DialogueAct("book", domain, slot or REFERENCE_SLOT, value)
    if name in ("nooffer", "nooffer_slot"):
        return DialogueAct("nooffer", domain, slot, value)
    base = name.split("_")[0]
    return DialogueAct(base, domain, slot, value)


_CLAUSE_SPLIT = re.compile(r"(?<=[.?!])\s+")


def parse_acts(role: str, utterance: str) -> list[DialogueAct]:
    """Invert realization. Unparseable clauses are dropped; an utterance with
    no parseable clause yields an empty act list."""
    acts: list[DialogueAct] = []
    for clause in _CLAUSE_SPLIT.split(utterance.strip().lower()):
        clause = clause.strip()
        if not clause:
            continue
        for name, _, rx in _COMPILED[role]:
            m = rx.match(clause)
            if m:
                try:
                    acts.append(_act_from_match(name, m.groupdict()))
                except Exception:
                    pass
                break
    return acts
