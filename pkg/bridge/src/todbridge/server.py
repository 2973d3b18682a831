"""Single-threaded request loop speaking the harness wire protocol."""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass

from . import PROTOCOL_VERSION
from .models import ModelError, load_model

ROLES = ("system", "simulator", "lm_scorer", "pair_scorer")


@dataclass(frozen=True)
class BridgeConfig:
    backend: str = "echo"  # echo | table | seq2seq | causal-lm
    model: str | None = None
    role: str = "system"
    max_length: int = 64
    num_beams: int = 1
    device: str = "cpu"
    act_mode: str = "parse"  # parse: harness template-parses the utterance;
    #                          model: the model's own act annotations pass through

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.act_mode not in ("parse", "model"):
            raise ValueError(f"unknown act mode {self.act_mode!r}")


def _emit(writer, obj: dict) -> None:
    writer.write(json.dumps(obj, sort_keys=True, ensure_ascii=False,
                            separators=(",", ":")) + "\n")
    writer.flush()


def bridge_serve(cfg: BridgeConfig, reader=None, writer=None) -> int:
    """Answer hello, then turn/score requests until bye or EOF.

    The model loads before any message is read: a load failure exits
    nonzero without ever handshaking. Generation failures after that become
    error replies and the process stays alive.
    """
    reader = reader if reader is not None else sys.stdin
    writer = writer if writer is not None else sys.stdout
    try:
        model = load_model(cfg.backend, cfg.model, cfg.max_length, cfg.num_beams,
                           cfg.device)
    except Exception as exc:
        print(f"model load failed: {exc}", file=sys.stderr)
        return 2

    for line in reader:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
            kind = msg["kind"]
        except Exception:
            _emit(writer, {"kind": "error",
                           "message": f"malformed request line: {line!r}"})
            continue
        if kind == "hello":
            _emit(writer, {"kind": "hello", "version": PROTOCOL_VERSION,
                           "role": cfg.role})
        elif kind == "bye":
            return 0
        elif kind == "turn_request":
            try:
                reply = model.generate_turn(msg)
                if cfg.act_mode == "parse" and cfg.backend != "echo":
                    reply.pop("acts", None)
                _emit(writer, {"kind": "turn_reply", "utterance": "", **reply})
            except Exception as exc:
                _emit(writer, {"kind": "error", "message": f"generation failed: {exc}"})
        elif kind == "score_request":
            try:
                if "text" in msg:
                    value = model.score_text(msg["text"])
                elif "pair" in msg:
                    left, right = msg["pair"]
                    value = model.score_text(f"{left} {right}")
                else:
                    raise ModelError("score_request carries neither text nor pair")
                _emit(writer, {"kind": "score_reply", "value": float(value)})
            except Exception as exc:
                _emit(writer, {"kind": "error", "message": f"scoring failed: {exc}"})
        else:
            _emit(writer, {"kind": "error", "message": f"unexpected kind {kind!r}"})
    return 0
