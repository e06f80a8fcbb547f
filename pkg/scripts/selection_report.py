#!/usr/bin/env python3
"""Print the deterministic tool-selection scoring for every seeded task:
candidates, raw attributes, min-max normalized weighted scores, winner.

Usage: python3 scripts/selection_report.py [--weights JSON]
"""

import argparse
import json

from musicagent.registry import SelectionPolicy, ToolRegistry
from musicagent.taxonomy import TaskRegistry


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--weights",
                        help='weight dict, e.g. \'{"downloads": 1.0}\'')
    args = parser.parse_args()

    tasks = TaskRegistry.seeded()
    tools = ToolRegistry.seeded(tasks)
    policy = (SelectionPolicy(weights=json.loads(args.weights))
              if args.weights else SelectionPolicy())
    print(f"weights: {policy.weights}\n")

    for spec in tasks.specs():
        candidates = tools.candidates_for(spec.name)
        if not candidates:
            print(f"{spec.name}: (no candidates)")
            continue
        selection = tools.select_tool(spec.name, policy)
        print(f"{spec.name} -> {selection.tool_id}")
        for tool in candidates:
            mark = "*" if tool.id == selection.tool_id else " "
            attrs = {k: tool.attributes.get(k) for k in sorted(policy.weights)}
            print(f"  {mark} {tool.id:18} score={selection.scores[tool.id]:.3f} {attrs}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
