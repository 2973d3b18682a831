"""Protocol test double, runnable as ``python -m todsim.protocol_stub``.

Behaviors:
  echo      system: mirror the request's user acts and utterance
  agenda    simulator: act off the request's unfinished goal items
  fixed     reply a fixed act list (--acts JSON)
  uniform   lm_scorer/pair_scorer: constant score (--value)
  silent    never reply to requests (timeout testing)
  malformed reply a non-JSON line
  badact    reply an act with an unknown act type
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from .protocol import PROTOCOL_VERSION, serve_forever
from .serialize import act_from_obj, act_to_obj, goal_state_from_obj
from .templates import SYSTEM, USER, realize


class StubHandler:
    def __init__(self, role: str, behavior: str, acts: list[dict], value: float):
        self.role = role
        self.behavior = behavior
        self.acts = acts
        self.value = value

    def on_turn(self, request: dict) -> dict:
        if self.behavior == "fixed":
            acts = [act_from_obj(a) for a in self.acts]
            template_role = USER if self.role == "simulator" else SYSTEM
            return {"acts": [act_to_obj(a) for a in acts],
                    "utterance": realize(template_role, acts)}
        if self.behavior == "agenda":
            state = goal_state_from_obj(request.get("goal_state", {}))
            from .agents import agenda_user_turn

            out = agenda_user_turn(state, (), k=2)
            return {"acts": [act_to_obj(a) for a in out.acts],
                    "utterance": out.utterance}
        # echo: mirror what the harness sent
        return {"acts": request.get("user_acts", []),
                "utterance": request.get("user_utterance", "")}

    def on_score(self, request: dict) -> float:
        return self.value


class SilentHandler:
    def on_turn(self, request):
        time.sleep(3600)

    def on_score(self, request):
        time.sleep(3600)


def _raw_loop(reply_line: str) -> None:
    """Answer hello properly, then reply with a fixed raw line forever."""
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            msg = {}
        if msg.get("kind") == "hello":
            out = json.dumps({"kind": "hello", "version": PROTOCOL_VERSION,
                              "role": msg.get("role", "system")})
        elif msg.get("kind") == "bye":
            return
        else:
            out = reply_line
        sys.stdout.write(out + "\n")
        sys.stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="todsim.protocol_stub")
    parser.add_argument("--role", default="system",
                        choices=["system", "simulator", "lm_scorer", "pair_scorer"])
    parser.add_argument("--behavior", default="echo",
                        choices=["echo", "agenda", "fixed", "uniform", "silent",
                                 "malformed", "badact"])
    parser.add_argument("--acts", default="[]", help="JSON act list for --behavior fixed")
    parser.add_argument("--value", type=float, default=1.0,
                        help="score for scorer roles")
    parser.add_argument("--version", type=int, default=PROTOCOL_VERSION,
                        help="protocol version to claim (mismatch testing)")
    args = parser.parse_args(argv)

    if args.behavior == "malformed":
        _raw_loop("this is not json {")
        return 0
    if args.behavior == "badact":
        _raw_loop(json.dumps({"kind": "turn_reply", "utterance": "hello .",
                              "acts": [{"act": "frobnicate", "domain": "restaurant",
                                        "slot": "food"}]}))
        return 0
    if args.behavior == "silent":
        serve_forever(SilentHandler(), args.role, version=args.version)
        return 0
    handler = StubHandler(args.role, args.behavior, json.loads(args.acts), args.value)
    serve_forever(handler, args.role, version=args.version)
    return 0


if __name__ == "__main__":
    sys.exit(main())
