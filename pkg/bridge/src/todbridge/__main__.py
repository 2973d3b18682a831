"""Launcher: ``python -m todbridge`` or the ``todsim-bridge`` script."""

import argparse
import sys

from .server import BridgeConfig, bridge_serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="todsim-bridge",
        description="Serve a dialogue model or causal-LM scorer over the "
                    "todsim wire protocol (stdio).",
    )
    parser.add_argument("--backend", default="echo",
                        choices=["echo", "table", "seq2seq", "causal-lm"])
    parser.add_argument("--model", help="model path (table JSON or checkpoint dir)")
    parser.add_argument("--role", default="system",
                        choices=["system", "simulator", "lm_scorer", "pair_scorer"])
    parser.add_argument("--max-length", type=int, default=64)
    parser.add_argument("--num-beams", type=int, default=1)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--act-mode", default="parse", choices=["parse", "model"])
    args = parser.parse_args(argv)
    cfg = BridgeConfig(backend=args.backend, model=args.model, role=args.role,
                       max_length=args.max_length, num_beams=args.num_beams,
                       device=args.device, act_mode=args.act_mode)
    return bridge_serve(cfg)


if __name__ == "__main__":
    sys.exit(main())
