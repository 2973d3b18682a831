"""Reference external agent for the todsim wire protocol.

Wraps a dialogue model (and optionally a causal-LM sentence scorer) behind
newline-delimited JSON over stdio. The bridge never imports the harness and
never computes evaluation metrics; everything it knows about the other side
is the protocol itself.
"""

__version__ = "0.1.0"

PROTOCOL_VERSION = 1
