"""Newline-delimited JSON agent protocol.

Messages are UTF-8 JSON objects, one per line, over the stdio of a child
process or a TCP stream. Kinds: hello {version, role}, turn_request,
turn_reply, score_request, score_reply, bye, and error (an agent-side
failure report; the connection stays usable). Exactly one request is in
flight per channel.

The harness side connects, sends its hello naming the role it expects, and
validates the peer's hello; version and role mismatches raise distinct
errors. Agents serve with `serve_forever`, which answers hello with the
agent's own version/role and never validates the peer, keeping external
agents trivial to implement.
"""

from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import sys
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

from .agents import AgentTurnOutput, absorb_user_informs
from .domain import BeliefState, DialogueAct, GoalState, Turn
from .errors import (
    AgentUnresponsiveError,
    ProtocolError,
    RoleMismatchError,
    TransportError,
    VersionMismatchError,
)
from .serialize import (
    act_from_obj,
    act_to_obj,
    belief_from_obj,
    canonical_json,
    goal_state_to_obj,
    turn_to_obj,
)
from .templates import SYSTEM, USER, parse_acts

PROTOCOL_VERSION = 1
ROLES = ("system", "simulator", "lm_scorer", "pair_scorer")
DEFAULT_TIMEOUT = 30.0

MESSAGE_KINDS = ("hello", "turn_request", "turn_reply", "score_request",
                 "score_reply", "bye", "error")


def encode_message(obj: dict) -> str:
    if obj.get("kind") not in MESSAGE_KINDS:
        raise ProtocolError(f"unknown message kind {obj.get('kind')!r}")
    return canonical_json(obj)


def decode_message(line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        raise ProtocolError("message is not valid JSON", payload=line)
    if not isinstance(obj, dict) or obj.get("kind") not in MESSAGE_KINDS:
        raise ProtocolError("message has no valid kind", payload=line)
    return obj


class _SubprocessTransport:
    """Line transport over a child process's stdin/stdout."""

    def __init__(self, argv: Sequence[str]):
        try:
            self.proc = subprocess.Popen(
                list(argv), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, encoding="utf-8", bufsize=1,
            )
        except OSError as exc:
            raise TransportError(f"cannot spawn agent process: {exc}")
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        try:
            for line in self.proc.stdout:
                self._lines.put(line.rstrip("\n"))
        except ValueError:
            pass
        self._lines.put(None)

    def send_line(self, line: str) -> None:
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise TransportError(f"agent pipe closed: {exc}")

    def recv_line(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise AgentUnresponsiveError(f"no reply within {timeout} s")
        if line is None:
            raise TransportError("agent closed its output stream")
        return line

    def close(self) -> None:
        # close stdin first (EOF for well-behaved agents), then reap; the
        # reader thread exits on the EOF that follows process death, and
        # stdout is only closed after it does (closing a buffered pipe while
        # a thread is blocked reading it deadlocks).
        try:
            self.proc.stdin.close()
        except Exception:
            pass
        try:
            self.proc.wait(timeout=2)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()
        self._reader.join(timeout=5)
        try:
            self.proc.stdout.close()
        except Exception:
            pass


class _TcpTransport:
    """Line transport over a TCP socket."""

    def __init__(self, host: str, port: int, sock: socket.socket | None = None):
        if sock is None:
            try:
                sock = socket.create_connection((host, port), timeout=DEFAULT_TIMEOUT)
            except OSError as exc:
                raise TransportError(f"cannot connect to {host}:{port}: {exc}")
        self.sock = sock
        self._file = sock.makefile("r", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self.sock.sendall((line + "\n").encode("utf-8"))
        except OSError as exc:
            raise TransportError(f"socket send failed: {exc}")

    def recv_line(self, timeout: float) -> str:
        self.sock.settimeout(timeout)
        try:
            line = self._file.readline()
        except socket.timeout:
            raise AgentUnresponsiveError(f"no reply within {timeout} s")
        except OSError as exc:
            raise TransportError(f"socket read failed: {exc}")
        if line == "":
            raise TransportError("peer closed the connection")
        return line.rstrip("\n")

    def close(self) -> None:
        for closer in (self._file.close, self.sock.close):
            try:
                closer()
            except Exception:
                pass


@dataclass(frozen=True)
class Endpoint:
    """Parsed endpoint: tcp:host:port or a child-process command line."""

    kind: str  # "tcp" | "cmd"
    argv: tuple[str, ...] = ()
    host: str = ""
    port: int = 0

    @staticmethod
    def parse(spec: str) -> "Endpoint":
        spec = spec.strip()
        if spec.startswith("tcp:"):
            rest = spec[4:]
            host, _, port = rest.rpartition(":")
            if not host or not port.isdigit():
                raise ProtocolError(f"bad tcp endpoint {spec!r}")
            return Endpoint("tcp", host=host, port=int(port))
        if spec.startswith("cmd:"):
            spec = spec[4:]
        argv = tuple(shlex.split(spec))
        if not argv:
            raise ProtocolError("empty agent command")
        return Endpoint("cmd", argv=argv)


class AgentChannel:
    """Harness-side handle on one external agent; one request in flight."""

    def __init__(self, transport, role: str, timeout: float = DEFAULT_TIMEOUT):
        if role not in ROLES:
            raise ProtocolError(f"unknown role {role!r}")
        self.transport = transport
        self.role = role
        self.timeout = timeout
        self._closed = False
        self._handshake()

    def _handshake(self) -> None:
        self.transport.send_line(encode_message(
            {"kind": "hello", "version": PROTOCOL_VERSION, "role": self.role}))
        reply = decode_message(self.transport.recv_line(self.timeout))
        if reply["kind"] != "hello":
            raise ProtocolError("expected hello", payload=canonical_json(reply))
        if reply.get("version") != PROTOCOL_VERSION:
            raise VersionMismatchError(
                f"peer speaks version {reply.get('version')!r}, "
                f"expected {PROTOCOL_VERSION}")
        if reply.get("role") != self.role:
            raise RoleMismatchError(
                f"peer role {reply.get('role')!r} where {self.role!r} expected")

    def request(self, message: dict) -> dict:
        if self._closed:
            raise ProtocolError("channel already closed")
        self.transport.send_line(encode_message(message))
        reply = decode_message(self.transport.recv_line(self.timeout))
        if reply["kind"] == "error":
            raise ProtocolError(f"agent error: {reply.get('message', '')}",
                                payload=canonical_json(reply))
        return reply

    def request_turn(self, message: dict) -> AgentTurnOutput:
        reply = self.request(message)
        if reply["kind"] != "turn_reply":
            raise ProtocolError("expected turn_reply", payload=canonical_json(reply))
        return decode_turn_reply(reply, self.role)

    def request_score(self, *, text: str | None = None,
                      pair: tuple[str, str] | None = None) -> float:
        msg: dict = {"kind": "score_request"}
        if text is not None:
            msg["text"] = text
        if pair is not None:
            msg["pair"] = [pair[0], pair[1]]
        reply = self.request(msg)
        if reply["kind"] != "score_reply" or not isinstance(
                reply.get("value"), (int, float)):
            raise ProtocolError("expected score_reply with a numeric value",
                                payload=canonical_json(reply))
        return float(reply["value"])

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self.transport.send_line(encode_message({"kind": "bye"}))
        except ProtocolError:
            pass
        self.transport.close()


def decode_turn_reply(reply: dict, role: str) -> AgentTurnOutput:
    """Validate and convert a turn_reply. Acts are optional: an utterance-only
    reply is parsed with the template-inverse parser (unparseable text becomes
    an empty act list)."""
    utterance = reply.get("utterance", "")
    if not isinstance(utterance, str):
        raise ProtocolError("turn_reply utterance must be a string",
                            payload=canonical_json(reply))
    raw_acts = reply.get("acts")
    if raw_acts is None:
        template_role = USER if role == "simulator" else SYSTEM
        acts = tuple(parse_acts(template_role, utterance))
    else:
        if not isinstance(raw_acts, list):
            raise ProtocolError("turn_reply acts must be a list",
                                payload=canonical_json(reply))
        try:
            acts = tuple(act_from_obj(a) for a in raw_acts)
        except Exception as exc:
            raise ProtocolError(f"bad act in turn_reply: {exc}",
                                payload=canonical_json(reply))
    return AgentTurnOutput(acts, utterance)


def external_agent_turn(channel: AgentChannel, request: dict) -> AgentTurnOutput:
    """Send one turn_request over the channel and decode the reply."""
    return channel.request_turn(request)


def connect_protocol(endpoint: str | Endpoint, role: str,
                     timeout: float = DEFAULT_TIMEOUT) -> AgentChannel:
    """Open a channel to an external agent (spawning it when the endpoint is
    a command) and complete the handshake."""
    ep = Endpoint.parse(endpoint) if isinstance(endpoint, str) else endpoint
    if ep.kind == "tcp":
        transport = _TcpTransport(ep.host, ep.port)
    else:
        transport = _SubprocessTransport(ep.argv)
    return AgentChannel(transport, role, timeout)


class _ThreadChannels:
    """One channel per worker thread; a session never shares its channel."""

    def __init__(self, endpoint: str, role: str, timeout: float):
        self.endpoint = endpoint
        self.role = role
        self.timeout = timeout
        self._local = threading.local()
        self._all: list[AgentChannel] = []
        self._lock = threading.Lock()

    def get(self) -> AgentChannel:
        channel = getattr(self._local, "channel", None)
        if channel is None:
            channel = connect_protocol(self.endpoint, self.role, self.timeout)
            self._local.channel = channel
            with self._lock:
                self._all.append(channel)
        return channel

    def close_all(self) -> None:
        with self._lock:
            channels, self._all = self._all, []
        for ch in channels:
            try:
                ch.close()
            except Exception:
                pass


class ExternalUserAgent:
    """Engine adapter driving an external simulator over the protocol."""

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        self._channels = _ThreadChannels(endpoint, "simulator", timeout)
        self._counter = 0
        self._lock = threading.Lock()

    def user_turn(self, state: GoalState, history, seed: int) -> AgentTurnOutput:
        if len(history) == 0:
            with self._lock:
                self._counter += 1
        request = {
            "kind": "turn_request",
            "session_id": f"sim-{self._counter}",
            "turn_index": len(history),
            "goal_state": goal_state_to_obj(state),
            "history": [turn_to_obj(t) for t in history],
        }
        return self._channels.get().request_turn(request)

    def close(self) -> None:
        self._channels.close_all()


class ExternalSystemAgent:
    """Engine adapter driving an external dialogue system over the protocol."""

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        self._channels = _ThreadChannels(endpoint, "system", timeout)
        self._counter = 0
        self._lock = threading.Lock()

    def system_turn(self, belief: BeliefState, history, user_utterance: str,
                    user_acts, seed: int) -> tuple[BeliefState, AgentTurnOutput]:
        if len(history) == 0:
            with self._lock:
                self._counter += 1
        request = {
            "kind": "turn_request",
            "session_id": f"sys-{self._counter}",
            "turn_index": len(history),
            "history": [turn_to_obj(t) for t in history],
            "user_utterance": user_utterance,
            "user_acts": [act_to_obj(a) for a in user_acts],
        }
        reply = self._channels.get().request(request)
        if reply["kind"] != "turn_reply":
            raise ProtocolError("expected turn_reply", payload=canonical_json(reply))
        out = decode_turn_reply(reply, "system")
        if "belief_state" in reply and isinstance(reply["belief_state"], dict):
            belief = belief_from_obj(reply["belief_state"])
        else:
            belief = absorb_user_informs(belief, user_acts)
        return belief, out

    def close(self) -> None:
        self._channels.close_all()


class RemoteScorer:
    """score_text / score_pair over an external scorer channel."""

    def __init__(self, endpoint: str, role: str, timeout: float = DEFAULT_TIMEOUT):
        if role not in ("lm_scorer", "pair_scorer"):
            raise ProtocolError(f"not a scorer role: {role!r}")
        self._channel = connect_protocol(endpoint, role, timeout)

    def score_text(self, text: str) -> float:
        return self._channel.request_score(text=text)

    def score_pair(self, left: str, right: str) -> float:
        return self._channel.request_score(pair=(left, right))

    def close(self) -> None:
        self._channel.close()


def serve_forever(handler, role: str, *, version: int = PROTOCOL_VERSION,
                  reader=None, writer=None) -> None:
    """Agent-side request loop over stdio (or injected streams).

    `handler` provides on_turn(request_obj) -> reply dict fields and/or
    on_score(request_obj) -> float. Handler exceptions become error replies;
    the loop keeps running until bye or EOF.
    """
    reader = reader if reader is not None else sys.stdin
    writer = writer if writer is not None else sys.stdout

    def emit(obj: dict) -> None:
        writer.write(canonical_json(obj) + "\n")
        writer.flush()

    for line in reader:
        line = line.strip()
        if not line:
            continue
        try:
            msg = decode_message(line)
        except ProtocolError as exc:
            emit({"kind": "error", "message": str(exc)})
            continue
        kind = msg["kind"]
        if kind == "hello":
            emit({"kind": "hello", "version": version, "role": role})
        elif kind == "bye":
            return
        elif kind == "turn_request":
            try:
                reply = handler.on_turn(msg)
                emit({"kind": "turn_reply", **reply})
            except Exception as exc:
                emit({"kind": "error", "message": f"turn failed: {exc}"})
        elif kind == "score_request":
            try:
                value = handler.on_score(msg)
                emit({"kind": "score_reply", "value": float(value)})
            except Exception as exc:
                emit({"kind": "error", "message": f"scoring failed: {exc}"})
        else:
            emit({"kind": "error", "message": f"unexpected {kind} from harness"})


def serve_tcp(handler, role: str, host: str, port: int, *,
              version: int = PROTOCOL_VERSION, ready: threading.Event | None = None,
              once: bool = True) -> int:
    """Serve the protocol on a TCP socket (one connection at a time).

    Returns the bound port (useful with port 0 in tests).
    """
    srv = socket.create_server((host, port))
    bound = srv.getsockname()[1]
    if ready is not None:
        ready.set()
    try:
        while True:
            conn, _ = srv.accept()
            reader = conn.makefile("r", encoding="utf-8", newline="\n")
            writer = conn.makefile("w", encoding="utf-8", newline="\n")
            try:
                serve_forever(handler, role, version=version,
                              reader=reader, writer=writer)
            finally:
                for c in (reader, writer, conn):
                    try:
                        c.close()
                    except Exception:
                        pass
            if once:
                return bound
    finally:
        srv.close()


# --- conformance -----------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def run_conformance(make_channel: Callable[[], AgentChannel],
                    role: str) -> list[CheckResult]:
    """Protocol-conformance suite for an external agent.

    The same checks the built-in protocol stub passes: handshake, schema-valid
    replies (with unicode payloads), strict request/reply sequencing, and a
    clean shutdown on bye.
    """
    results: list[CheckResult] = []

    def check(name: str, fn) -> bool:
        try:
            fn()
            results.append(CheckResult(name, True))
            return True
        except Exception as exc:
            results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
            return False

    channel: AgentChannel | None = None

    def open_channel():
        nonlocal channel
        channel = make_channel()

    if not check("handshake_version_and_role", open_channel):
        return results

    if role in ("system", "simulator"):
        turn_req = {
            "kind": "turn_request",
            "session_id": "conformance-1",
            "turn_index": 0,
            "history": [],
        }
        if role == "system":
            turn_req["user_utterance"] = "i am looking for a café ☃ ."
            turn_req["user_acts"] = [act_to_obj(DialogueAct("greet"))]
        else:
            turn_req["goal_state"] = {"unfinished": [], "finished": []}

        def turn_round_trip():
            out = channel.request_turn(dict(turn_req))
            assert isinstance(out.utterance, str)
            for act in out.acts:
                assert act.act_type in ("inform", "request", "offer", "book",
                                        "nooffer", "bye", "thank", "greet")

        check("turn_reply_schema_valid", turn_round_trip)

        def sequencing():
            for i in range(3):
                channel.request_turn({**turn_req, "turn_index": i})

        check("one_in_flight_sequencing", sequencing)
    else:
        def score_round_trip():
            if role == "lm_scorer":
                value = channel.request_score(text="hello there ☃")
            else:
                value = channel.request_score(pair=("hello ☃", "hi"))
            assert isinstance(value, float)

        check("score_reply_schema_valid", score_round_trip)

        def sequencing():
            for _ in range(3):
                if role == "lm_scorer":
                    channel.request_score(text="again")
                else:
                    channel.request_score(pair=("again", "again"))

        check("one_in_flight_sequencing", sequencing)

    check("bye_clean_shutdown", channel.close)
    return results
