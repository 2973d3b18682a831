"""Model backends: the echo test double, a table-driven toy causal LM, and
lazily imported transformers wrappers for real checkpoints."""

from __future__ import annotations

import json
import math
import re
from pathlib import Path

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z0-9]+)?")

BOS = "<s>"
EOS = "</s>"


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class ModelError(Exception):
    """Generation or scoring failed; reported as a protocol error reply."""


class EchoModel:
    """Test double: mirrors the request content back."""

    def generate_turn(self, request: dict) -> dict:
        return {
            "acts": request.get("user_acts", []),
            "utterance": request.get("user_utterance", ""),
        }

    def score_text(self, text: str) -> float:
        return 0.0


class TableCausalLM:
    """Causal LM defined by an explicit conditional-probability table.

    The table maps a context key (previous token, or <s> at the start) to a
    distribution over the vocabulary plus </s>. Unknown tokens and unseen
    contexts fall back to the uniform distribution, so every sequence has
    positive probability. The fluency score is the mean negative natural-log
    likelihood of the tokens (end sentinel not scored).
    """

    def __init__(self, path: str | Path, max_length: int = 12):
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        if obj.get("format") != "toy-causal-lm" or obj.get("version") != 1:
            raise ValueError(f"{path}: not a toy-causal-lm v1 document")
        self.vocab: list[str] = list(obj["vocab"])
        self.table: dict[str, dict[str, float]] = obj["contexts"]
        self.max_length = max_length
        self._support = len(self.vocab) + 1  # vocabulary plus </s>
        for ctx, dist in self.table.items():
            total = sum(dist.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"context {ctx!r} sums to {total}, not 1")

    def prob(self, token: str, previous: str | None) -> float:
        context = previous if previous is not None else BOS
        dist = self.table.get(context)
        if dist is None:
            return 1.0 / self._support
        return dist.get(token, dist.get("<other>", 1.0 / self._support))

    def score_text(self, text: str) -> float:
        tokens = tokenize(text)
        if not tokens:
            raise ModelError("cannot score empty text")
        total = 0.0
        previous: str | None = None
        for tok in tokens:
            total += math.log(self.prob(tok, previous))
            previous = tok
        return -total / len(tokens)

    def generate_turn(self, request: dict) -> dict:
        tokens: list[str] = []
        previous: str | None = None
        for _ in range(self.max_length):
            dist = self.table.get(previous if previous is not None else BOS)
            if not dist:
                break
            best = max(sorted(dist), key=lambda t: dist[t])
            if best == EOS or best == "<other>":
                break
            tokens.append(best)
            previous = best
        return {"utterance": " ".join(tokens) + " ."}


class TransformersSeq2Seq:
    """Wraps a local sequence-to-sequence checkpoint. Imported lazily so the
    bridge itself has no heavyweight dependencies."""

    def __init__(self, model_path: str, max_length: int = 64,
                 num_beams: int = 1, device: str = "cpu"):
        try:
            from transformers import AutoModelForSeq2SeqLM, AutoTokenizer
        except ImportError as exc:
            raise ValueError(f"transformers backend unavailable: {exc}")
        self.tokenizer = AutoTokenizer.from_pretrained(model_path)
        self.model = AutoModelForSeq2SeqLM.from_pretrained(model_path).to(device)
        self.model.eval()
        self.max_length = max_length
        self.num_beams = num_beams
        self.device = device

    def _context(self, request: dict) -> str:
        parts = []
        goal_state = request.get("goal_state")
        if goal_state:
            parts.append("goal: " + json.dumps(goal_state, sort_keys=True))
        for turn in request.get("history", []):
            parts.append("user: " + turn.get("user_utterance", ""))
            parts.append("system: " + turn.get("system_utterance", ""))
        if request.get("user_utterance"):
            parts.append("user: " + request["user_utterance"])
        return "\n".join(parts)

    def generate_turn(self, request: dict) -> dict:
        import torch

        inputs = self.tokenizer(self._context(request), return_tensors="pt",
                                truncation=True).to(self.device)
        with torch.no_grad():
            output = self.model.generate(**inputs, max_length=self.max_length,
                                         num_beams=self.num_beams)
        text = self.tokenizer.decode(output[0], skip_special_tokens=True)
        return {"utterance": text}

    def score_text(self, text: str) -> float:
        raise ModelError("seq2seq backend does not score text")


class TransformersCausalLM:
    """Causal-LM fluency scorer over a local checkpoint."""

    def __init__(self, model_path: str, device: str = "cpu"):
        try:
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as exc:
            raise ValueError(f"transformers backend unavailable: {exc}")
        self.tokenizer = AutoTokenizer.from_pretrained(model_path)
        self.model = AutoModelForCausalLM.from_pretrained(model_path).to(device)
        self.model.eval()
        self.device = device

    def generate_turn(self, request: dict) -> dict:
        raise ModelError("causal-lm backend does not take dialogue turns")

    def score_text(self, text: str) -> float:
        import torch

        ids = self.tokenizer(text, return_tensors="pt").input_ids.to(self.device)
        if ids.shape[1] < 2:
            raise ModelError("text too short to score")
        with torch.no_grad():
            logits = self.model(ids).logits
        logprobs = torch.log_softmax(logits[0, :-1], dim=-1)
        picked = logprobs.gather(1, ids[0, 1:].unsqueeze(1))
        return float(-picked.mean())


def load_model(backend: str, model_path: str | None, max_length: int,
               num_beams: int, device: str):
    if backend == "echo":
        return EchoModel()
    if backend == "table":
        if not model_path:
            model_path = str(Path(__file__).parent / "data" / "toy_causal_lm.json")
        return TableCausalLM(model_path, max_length=max_length)
    if backend == "seq2seq":
        if not model_path:
            raise ValueError("seq2seq backend needs --model PATH")
        return TransformersSeq2Seq(model_path, max_length, num_beams, device)
    if backend == "causal-lm":
        if not model_path:
            raise ValueError("causal-lm backend needs --model PATH")
        return TransformersCausalLM(model_path, device)
    raise ValueError(f"unknown backend {backend!r}")
