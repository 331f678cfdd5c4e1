"""Regenerate the bundled golden event logs and frozen metrics.

Run from the repository root after a deliberate behavior change:

    python3 scripts/regen_goldens.py

The golden logs are byte-compared in tests, so regenerating them is a
statement that the new transcripts are the intended behavior.
"""

from __future__ import annotations

import json
from pathlib import Path

from stageflow.detector import CueLexicon
from stageflow.harness import default_personas_dir, load_personas, run_ablation

GOLDEN_DIR = Path(__file__).resolve().parent.parent / "src" / "stageflow" / "data" / "golden"


def main() -> None:
    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    for old in GOLDEN_DIR.glob("*"):
        old.unlink()
    lexicon = CueLexicon.load_default()
    personas = load_personas(default_personas_dir())
    report = run_ablation(personas, GOLDEN_DIR, lexicon)
    # Ablation-mode logs are scratch output; only full-mode logs are golden.
    for path in GOLDEN_DIR.glob("*.events.jsonl"):
        if "." in path.name[: -len(".events.jsonl")]:
            path.unlink()
    metrics_path = GOLDEN_DIR / "metrics.json"
    metrics_path.write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    for path in sorted(GOLDEN_DIR.iterdir()):
        print(f"wrote {path.name} ({path.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
