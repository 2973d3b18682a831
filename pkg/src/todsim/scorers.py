"""Automatic quality scores.

Sentence level: mean negative log-likelihood of a response under a language
model (lower is better), computed here over an interpolated
additive-smoothing n-gram model. Session level: mean confidence of a binary
coherence classifier over all adjacent utterance/response pairs, trained on
positives from real sessions and negatives built by swapping in random
responses from other sessions.

Both scorers sit behind small protocols (score_text / score_pair) so an
external neural scorer can be attached over the wire protocol instead.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .domain import Session
from .errors import PreconditionError, SchemaError
from .metrics import tokenize
from .templates import SYSTEM, USER, parse_acts

UNK = "<unk>"
EOS = "</s>"
BOS = "<s>"

TokenSequence = Sequence[str]


class SentenceScorer(Protocol):
    def score_text(self, text: str) -> float: ...


class PairScorer(Protocol):
    def score_pair(self, left: str, right: str) -> float: ...


class LanguageModel:
    """Interpolated additive-smoothing n-gram model.

    Every conditional distribution sums to one and assigns positive mass to
    every vocabulary token; an unseen context backs off exactly to the next
    lower order. The vocabulary always contains the unknown and
    end-of-sequence tokens; the begin sentinel conditions but is never
    predicted.
    """

    def __init__(self, order: int, smoothing: float, vocab: Sequence[str],
                 counts: dict[int, dict[tuple[str, ...], Counter]],
                 fingerprint: str = ""):
        if order < 1:
            raise PreconditionError("order must be >= 1")
        if smoothing <= 0:
            raise PreconditionError("smoothing must be > 0")
        self.order = order
        self.smoothing = smoothing
        self.vocab = tuple(vocab)
        self._vocab_set = set(self.vocab)
        if UNK not in self._vocab_set or EOS not in self._vocab_set:
            raise PreconditionError("vocabulary must contain the unk and eos tokens")
        self.counts = counts
        self._totals = {
            k: {ctx: sum(c.values()) for ctx, c in by_ctx.items()}
            for k, by_ctx in counts.items()
        }
        self.fingerprint = fingerprint

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @classmethod
    def uniform(cls, vocab: Sequence[str]) -> "LanguageModel":
        """Model with no observations: exactly 1/V for every token."""
        return cls(1, 1.0, vocab, {1: {}}, fingerprint="uniform")

    def _map(self, token: str) -> str:
        return token if token in self._vocab_set else UNK

    def _p(self, k: int, token: str, context: tuple[str, ...]) -> float:
        v = self.vocab_size
        d = self.smoothing
        by_ctx = self.counts.get(k, {})
        if k == 1:
            uni = by_ctx.get((), None)
            total = self._totals.get(1, {}).get((), 0)
            count = uni.get(token, 0) if uni else 0
            return (count + d) / (total + d * v)
        lower = self._p(k - 1, token, context[1:])
        ctx_counts = by_ctx.get(context)
        if ctx_counts is None:
            return lower
        total = self._totals[k][context]
        return (ctx_counts.get(token, 0) + d * v * lower) / (total + d * v)

    def prob(self, token: str, context: Sequence[str] = ()) -> float:
        """p(token | last order-1 context tokens); always > 0."""
        tok = self._map(token)
        ctx = tuple(BOS if t == BOS else self._map(t) for t in context)
        if self.order > 1:
            ctx = (BOS,) * max(0, self.order - 1 - len(ctx)) + ctx[-(self.order - 1):]
        else:
            ctx = ()
        return self._p(self.order, tok, ctx)

    def score_text(self, text: str) -> float:
        return sentence_score(self, tokenize(text))

    def to_json_obj(self) -> dict:
        counts_obj: dict[str, dict[str, dict[str, int]]] = {}
        for k, by_ctx in sorted(self.counts.items()):
            counts_obj[str(k)] = {
                " ".join(ctx): {t: int(n) for t, n in sorted(c.items())}
                for ctx, c in sorted(by_ctx.items())
            }
        return {
            "format": "todsim-lm",
            "version": 1,
            "order": self.order,
            "smoothing": self.smoothing,
            "vocab": list(self.vocab),
            "counts": counts_obj,
            "fingerprint": self.fingerprint,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "LanguageModel":
        if obj.get("format") != "todsim-lm" or obj.get("version") != 1:
            raise SchemaError("not a todsim-lm v1 document", source="lm")
        counts: dict[int, dict[tuple[str, ...], Counter]] = {}
        for k, by_ctx in obj["counts"].items():
            counts[int(k)] = {
                tuple(ctx.split(" ")) if ctx else (): Counter(c)
                for ctx, c in by_ctx.items()
            }
        return cls(obj["order"], obj["smoothing"], obj["vocab"], counts,
                   obj.get("fingerprint", ""))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_obj(), sort_keys=True, indent=1),
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LanguageModel":
        return cls.from_json_obj(json.loads(Path(path).read_text(encoding="utf-8")))


def train_lm(corpus: Sequence[TokenSequence], order: int = 3,
             smoothing: float = 0.1) -> LanguageModel:
    """Count n-grams of every order up to `order` over the corpus.

    Each sentence contributes one prediction event per token plus one for the
    end sentinel. Deterministic given its inputs.
    """
    sentences = [list(seq) for seq in corpus if len(seq)]
    if not sentences:
        raise PreconditionError("training corpus is empty")
    if order < 1:
        raise PreconditionError("order must be >= 1")
    if smoothing <= 0:
        raise PreconditionError("smoothing must be > 0")

    vocab = sorted({t for sent in sentences for t in sent} - {UNK, EOS}) + [UNK, EOS]
    counts: dict[int, dict[tuple[str, ...], Counter]] = {
        k: {} for k in range(1, order + 1)
    }
    for sent in sentences:
        padded = [BOS] * (order - 1) + sent + [EOS]
        for pos in range(order - 1, len(padded)):
            token = padded[pos]
            for k in range(1, order + 1):
                ctx = tuple(padded[pos - k + 1:pos])
                counts[k].setdefault(ctx, Counter())[token] += 1

    body = "\n".join(" ".join(s) for s in sentences).encode("utf-8")
    fingerprint = hashlib.blake2b(body, digest_size=16).hexdigest()
    return LanguageModel(order, smoothing, vocab, counts, fingerprint)


def sentence_score(lm: LanguageModel, seq: TokenSequence) -> float:
    """Mean negative natural-log likelihood of the tokens under the model.

    Sentinels condition the distribution but are never scored themselves.
    """
    tokens = list(seq)
    if not tokens:
        raise PreconditionError("cannot score an empty token sequence")
    total = 0.0
    for i, tok in enumerate(tokens):
        total += math.log(lm.prob(tok, tokens[:i]))
    return -total / len(tokens)


@dataclass(frozen=True)
class PairSample:
    left: str
    right: str
    label: str  # "coherent" | "incoherent"

    def __post_init__(self):
        if self.label not in ("coherent", "incoherent"):
            raise PreconditionError(f"unknown label {self.label!r}")
        if not self.left or not self.right:
            raise PreconditionError("pair texts must be non-empty")


def _session_pairs(session: Session) -> list[tuple[str, str]]:
    """All adjacent (utterance, response) and (response, next utterance) pairs."""
    pairs = []
    for i, turn in enumerate(session.turns):
        pairs.append((turn.user_utterance, turn.system_utterance))
        if i + 1 < len(session.turns):
            pairs.append((turn.system_utterance, session.turns[i + 1].user_utterance))
    return pairs


def make_pair_samples(corpus: Sequence[Session], negative_ratio: float = 1.0,
                      seed: int = 0) -> list[PairSample]:
    """Positives are every adjacent pair; negatives replace the right element
    with a response drawn uniformly from a different session."""
    if len(corpus) < 2:
        raise PreconditionError("need at least two sessions for cross-session negatives")
    positives: list[tuple[int, str, str]] = []
    responses: list[tuple[int, str]] = []
    for si, session in enumerate(corpus):
        for left, right in _session_pairs(session):
            positives.append((si, left, right))
        for turn in session.turns:
            responses.append((si, turn.system_utterance))
    if not positives:
        raise PreconditionError("corpus has no turns")

    samples = [PairSample(left, right, "coherent") for _, left, right in positives]
    n_neg = round(negative_ratio * len(positives))
    rng = np.random.default_rng(seed)
    for i in range(n_neg):
        si, left, _ = positives[i % len(positives)]
        donors = [r for sj, r in responses if sj != si and r]
        if not donors:
            raise PreconditionError("corpus too small for cross-session negatives")
        samples.append(PairSample(left, donors[int(rng.integers(len(donors)))],
                                  "incoherent"))
    return samples


_PAIR_FEATURES = (
    "token_jaccard",
    "len_right",
    "len_gap",
    "domain_overlap",
    "domain_disjoint",
    "request_answered",
    "request_ignored",
    "value_overlap",
    "booking_followup",
    "offer_then_engage",
    "farewell_followup",
    "farewell_dropped",
    "sys_farewell_unprompted",
    "roles_alternate",
    "roles_clash",
)

_FAREWELLS = {"bye", "thank"}


def _parse_pair_side(text: str):
    """(acts, role) for one side; role is user/system/'' by template parse."""
    acts = parse_acts(USER, text)
    if acts:
        return acts, USER
    acts = parse_acts(SYSTEM, text)
    if acts:
        return acts, SYSTEM
    return [], ""


def pair_features(left: str, right: str) -> np.ndarray:
    """Features over an adjacent utterance pair: lexical overlap, act-template
    indicator overlaps, lengths, shared slot-value mentions, and whether the
    right side plausibly follows the left (answers its requests, keeps its
    domain, books on request, alternates speaker roles)."""
    lt, rt = tokenize(left), tokenize(right)
    ls, rs = set(lt), set(rt)
    union = ls | rs
    la, l_role = _parse_pair_side(left)
    ra, r_role = _parse_pair_side(right)
    l_types = {a.act_type for a in la}
    r_types = {a.act_type for a in ra}
    l_domains = {a.domain for a in la if a.domain}
    r_domains = {a.domain for a in ra if a.domain}
    l_values = {a.value for a in la if a.value}
    r_values = {a.value for a in ra if a.value}
    requested = {(a.domain, a.slot) for a in la if a.act_type == "request"}
    answers = {(a.domain, a.slot) for a in ra
               if a.act_type in ("inform", "offer") and a.value}
    l_farewell = bool(l_types & _FAREWELLS)
    r_farewell = bool(r_types & _FAREWELLS)
    feats = np.array([
        len(ls & rs) / len(union) if union else 0.0,
        min(len(rt), 20) / 20.0,
        min(abs(len(lt) - len(rt)), 20) / 20.0,
        1.0 if l_domains & r_domains else 0.0,
        1.0 if l_domains and r_domains and not l_domains & r_domains else 0.0,
        1.0 if requested & answers else 0.0,
        1.0 if requested and not requested & answers else 0.0,
        min(len(l_values & r_values), 3) / 3.0,
        1.0 if any(a.act_type == "inform" and a.slot == "booking" for a in la)
        and any(a.act_type == "book" for a in ra) else 0.0,
        1.0 if any(a.act_type == "offer" for a in la)
        and any(a.act_type in ("request", "inform") for a in ra)
        and l_domains & r_domains else 0.0,
        1.0 if l_farewell and r_farewell else 0.0,
        1.0 if l_farewell and not r_farewell else 0.0,
        1.0 if not l_farewell and r_role == SYSTEM
        and any(a.act_type == "bye" for a in ra) else 0.0,
        1.0 if l_role and r_role and l_role != r_role else 0.0,
        1.0 if l_role and r_role and l_role == r_role else 0.0,
    ])
    return feats


@dataclass
class CoherenceClassifier:
    """Binary logistic model over pair features; outputs the positive-class
    probability, strictly inside (0, 1)."""

    feature_names: tuple[str, ...]
    weights: np.ndarray
    bias: float
    meta: dict = field(default_factory=dict)

    def score_pair(self, left: str, right: str) -> float:
        z = float(self.weights @ pair_features(left, right)) + self.bias
        return 1.0 / (1.0 + math.exp(-z))

    def to_json_obj(self) -> dict:
        return {
            "format": "todsim-pair-scorer",
            "version": 1,
            "feature_names": list(self.feature_names),
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "meta": self.meta,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "CoherenceClassifier":
        if obj.get("format") != "todsim-pair-scorer" or obj.get("version") != 1:
            raise SchemaError("not a todsim-pair-scorer v1 document", source="classifier")
        return cls(tuple(obj["feature_names"]), np.asarray(obj["weights"], dtype=float),
                   float(obj["bias"]), dict(obj.get("meta", {})))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_obj(), sort_keys=True, indent=1),
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CoherenceClassifier":
        return cls.from_json_obj(json.loads(Path(path).read_text(encoding="utf-8")))


def train_session_scorer(samples: Sequence[PairSample], seed: int = 0,
                         learning_rate: float = 2.0, max_steps: int = 10_000,
                         tolerance: float = 1e-6) -> CoherenceClassifier:
    """Fit the logistic pair model by full-batch gradient descent.

    Runs until the max-abs gradient drops below `tolerance` or `max_steps`
    is reached. Training is deterministic; the seed is only recorded in the
    model metadata alongside the sample composition.
    """
    labels = {s.label for s in samples}
    if labels != {"coherent", "incoherent"}:
        raise PreconditionError("training needs both coherent and incoherent samples")
    x = np.stack([pair_features(s.left, s.right) for s in samples])
    y = np.array([1.0 if s.label == "coherent" else 0.0 for s in samples])
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    steps = 0
    for steps in range(1, max_steps + 1):
        z = x @ w + b
        p = 1.0 / (1.0 + np.exp(-z))
        err = p - y
        gw = x.T @ err / n
        gb = float(err.mean())
        w -= learning_rate * gw
        b -= learning_rate * gb
        if max(float(np.abs(gw).max()), abs(gb)) < tolerance:
            break
    z = x @ w + b
    accuracy = float((np.where(z >= 0, 1.0, 0.0) == y).mean())
    meta = {
        "negative_ratio": round(float((y == 0).sum()) / max(float((y == 1).sum()), 1.0), 6),
        "seed": seed,
        "steps": steps,
        "train_accuracy": round(accuracy, 6),
    }
    return CoherenceClassifier(_PAIR_FEATURES, w, b, meta)


def session_score(clf: PairScorer, session: Session) -> float:
    """Mean pair confidence over all adjacent pairs of the session."""
    if not session.turns:
        raise PreconditionError("cannot score an empty session")
    pairs = _session_pairs(session)
    return sum(clf.score_pair(left, right) for left, right in pairs) / len(pairs)
