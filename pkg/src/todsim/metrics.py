"""Task metrics: inform rate, success rate, corpus BLEU, combined score.

Tokenization for BLEU is defined here once (lowercase, split on whitespace
and punctuation) and reused by the scorers.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .domain import NAME_SLOT, REFERENCE_SLOT, Session, VenueDatabase
from .errors import PreconditionError

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z0-9]+)?")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation; punctuation is dropped."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class MetricResult:
    inform: int
    success: int
    offered_entity: str | None
    answered_requestables: frozenset[tuple[str, str]]

    def __post_init__(self):
        if self.success and not self.inform:
            raise PreconditionError("success requires inform")


def inform_success(session: Session, db: VenueDatabase) -> MetricResult:
    """Goal-achievement bits for one session.

    inform: every goal domain with informable constraints got an offer or
    inform of a name whose database record satisfies all of that domain's
    constraints (domains whose records carry no name slot are credited for
    any constraint-consistent inform instead). success: inform, plus every
    requested slot answered by the system, plus a booking reference for
    every domain that needed booking.
    """
    offered: dict[str, list[str]] = {}
    answered: set[tuple[str, str]] = set()
    booked: set[str] = set()
    plain_informs: dict[str, list[tuple[str, str]]] = {}
    for turn in session.turns:
        for a in turn.system_acts:
            if a.act_type in ("inform", "offer") and a.value:
                if a.slot == NAME_SLOT:
                    offered.setdefault(a.domain, []).append(a.value)
                answered.add((a.domain, a.slot))
                if a.act_type == "inform":
                    plain_informs.setdefault(a.domain, []).append((a.slot, a.value))
            if a.act_type == "book" and a.slot == REFERENCE_SLOT and a.value:
                booked.add(a.domain)

    inform_ok = True
    offered_entity: str | None = None
    for dom, g in session.goal.domains.items():
        if not g.informable:
            continue
        satisfying = db.query(dom, g.informable)
        domain_has_names = any(NAME_SLOT in rec for rec in db.entities(dom))
        if domain_has_names:
            names = {rec[NAME_SLOT] for rec in satisfying}
            hit = next((n for n in offered.get(dom, []) if n in names), None)
            if hit is None:
                inform_ok = False
            elif offered_entity is None:
                offered_entity = hit
        else:
            consistent = {(s, rec[s]) for rec in satisfying for s in rec}
            if not any(pair in consistent for pair in plain_informs.get(dom, [])):
                inform_ok = False

    success_ok = inform_ok
    for dom, g in session.goal.domains.items():
        for slot in g.requestable:
            if (dom, slot) not in answered:
                success_ok = False
        if g.needs_booking and dom not in booked:
            success_ok = False

    goal_requests = {(d, s) for d, g in session.goal.domains.items() for s in g.requestable}
    return MetricResult(
        inform=int(inform_ok),
        success=int(success_ok),
        offered_entity=offered_entity if inform_ok else None,
        answered_requestables=frozenset(answered & goal_requests),
    )


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: Sequence[Sequence[str]],
                references: Sequence[Sequence[str]]) -> float:
    """Corpus BLEU-4, uniform weights, brevity penalty, scaled to [0, 100].

    Smoothing: a zero n-gram precision for n >= 2 with a positive denominator
    becomes 1/(2*denominator); an n with zero denominator contributes a
    neutral precision of 1; a zero 1-gram precision yields 0.
    """
    if not hypotheses:
        raise PreconditionError("corpus_bleu needs at least one hypothesis")
    if len(hypotheses) != len(references):
        raise PreconditionError("hypothesis/reference counts differ")

    matches = [0, 0, 0, 0]
    totals = [0, 0, 0, 0]
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp = list(hyp)
        ref = list(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, 5):
            hyp_counts = _ngram_counts(hyp, n)
            ref_counts = _ngram_counts(ref, n)
            totals[n - 1] += sum(hyp_counts.values())
            matches[n - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())

    if totals[0] == 0 or matches[0] == 0:
        return 0.0
    log_sum = 0.0
    for n in range(4):
        if totals[n] == 0:
            precision = 1.0
        elif matches[n] == 0:
            if n == 0:
                return 0.0
            precision = 1.0 / (2.0 * totals[n])
        else:
            precision = matches[n] / totals[n]
        log_sum += 0.25 * math.log(precision)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_sum)


def combined_score(inform_pct: float, success_pct: float, bleu: float) -> float:
    """(inform + success) / 2 + BLEU, all on the 0-100 scale."""
    return (inform_pct + success_pct) / 2.0 + bleu
