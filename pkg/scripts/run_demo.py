#!/usr/bin/env python3
"""Offline end-to-end demo: a scripted mock LLM plans a three-step workflow
(lyrics -> melody -> preview audio -> classification) over the stub tools,
then the plan, trace, response, and artifact paths are printed.

Usage: python3 scripts/run_demo.py [--workdir DIR]
"""

import argparse
import itertools
import json
import tempfile

from musicagent.gateway import Config, MusicAgent
from musicagent.llm import MockLlm
from musicagent.registry import Adapter, ToolDescriptor
from musicagent.taxonomy import Modality, TaskCategory, TaskSpec

LYRICS = "city lights fading over the harbor"

PLAN = [
    {"id": "t1", "task": "lyric-to-melody", "args": {"input": LYRICS}},
    {"id": "t2", "task": "score-rendering", "deps": ["t1"],
     "args": {"input": {"from": "t1"}}},
    {"id": "t3", "task": "music-classification", "deps": ["t2"],
     "args": {"input": {"from": "t2"}}},
]

SCRIPT = [
    {"match": LYRICS, "reply": PLAN},
    {"match": "*", "reply": "Here is your melody, a rendered preview, and its genre."},
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", help="where to write artifacts/sessions "
                                          "(default: a temp directory)")
    args = parser.parse_args()
    workdir = args.workdir or tempfile.mkdtemp(prefix="musicagent-demo-")

    config = Config()
    config.paths.artifacts_dir = f"{workdir}/artifacts"
    config.paths.sessions_dir = f"{workdir}/sessions"
    counter = itertools.count(1)
    agent = MusicAgent(config, llm_backend=MockLlm(SCRIPT),
                       clock=lambda: float(next(counter)))

    # The preview step is a custom task registered through the extension API.
    agent.register_task(TaskSpec("score-rendering", Modality.SYMBOLIC,
                                 Modality.AUDIO, TaskCategory.GENERATION,
                                 "Render a score to preview audio"))
    agent.register_tool(ToolDescriptor(
        id="stub-previewer", display_name="Preview renderer (stub)",
        supported_tasks={"score-rendering"},
        adapter=Adapter(kind="builtin", entry="score_previewer")))

    result = agent.chat("demo", f"write a song from these lyrics and tell me "
                                f"its genre: {LYRICS}")

    print("plan:")
    print(json.dumps(result.plan.to_json(), indent=2))
    print("\ntrace:")
    for event in result.trace:
        print(f"  t={event.at:4.1f} {event.subtask_id:3} {event.status:8} {event.detail}")
    print("\nresponse:")
    print(result.response)
    print("\nartifacts:")
    for view in result.artifacts:
        extra = view.get("preview", view.get("duration_seconds", ""))
        print(f"  {view['id']} ({view['modality']}) {view['path']}")
        if extra:
            print(f"      {extra!r}" if isinstance(extra, str) else f"      {extra}s")
    print(f"\nworkdir: {workdir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
