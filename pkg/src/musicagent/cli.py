"""Command line entry point: `musicagent [--config PATH] (--serve | --repl)
[--mock-script PATH]`.
"""

from __future__ import annotations

import argparse

from .gateway import Config, MusicAgent
from .llm import MockLlm


def build_agent(config_path=None, mock_script=None, clock=None) -> MusicAgent:
    config = Config.load(config_path) if config_path else Config()
    backend = MockLlm.from_file(mock_script) if mock_script else None
    kwargs = {"llm_backend": backend}
    if clock is not None:
        kwargs["clock"] = clock
    return MusicAgent(config, **kwargs)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="musicagent")
    parser.add_argument("--config", help="path to a JSON config file")
    parser.add_argument("--serve", action="store_true", help="run the HTTP service")
    parser.add_argument("--repl", action="store_true", help="run the interactive chat loop")
    parser.add_argument("--mock-script", help="path to a scripted mock LLM (JSON)")
    parser.add_argument("--static-dir", help="static assets directory for the web console")
    args = parser.parse_args(argv)

    agent = build_agent(args.config, args.mock_script)

    if args.serve:
        from .server import serve

        serve(agent, static_dir=args.static_dir)
        return 0

    from .repl import repl

    repl(agent)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
