"""On-disk campaign datasets: manifest plus newline-delimited step records.

Layout, one directory per campaign::

    <out>/manifest.json            accounting, config echo, episode index
    <out>/episodes/ep_00000.jsonl  one JSON object per control step

Serialization is canonical (sorted keys, no whitespace variance, floats via
repr) so identical campaigns produce byte-identical directories.
"""

from __future__ import annotations

import json
from pathlib import Path

from .sim import Dataset, EpisodeRecord, StepRecord
from .tasks import TaskKind

DATASET_FORMAT_VERSION = 1


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, compact separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _step_to_dict(step: StepRecord, goals) -> dict:
    return {
        "t": step.time,
        "obs": {
            "ee": list(step.ee_pos),
            "gripper": step.gripper,
            "blocks": [list(p) for p in step.block_positions],
            "held": list(step.block_held),
            "goals": [list(g) for g in goals],
        },
        "action": {"pos": list(step.action_pos), "gripper": step.action_gripper},
    }


def episode_lines(episode: EpisodeRecord) -> list[str]:
    return [canonical_json(_step_to_dict(s, episode.goals)) for s in episode.steps]


def write_dataset(dataset: Dataset, out_dir, run_config: dict | None = None) -> Path:
    """Write a campaign dataset; returns the manifest path."""
    out = Path(out_dir)
    episodes_dir = out / "episodes"
    episodes_dir.mkdir(parents=True, exist_ok=True)

    index = []
    for i, ep in enumerate(dataset.episodes):
        name = f"ep_{i:05d}.jsonl"
        path = episodes_dir / name
        path.write_text("\n".join(episode_lines(ep)) + "\n", encoding="utf-8")
        index.append({
            "file": f"episodes/{name}",
            "steps": len(ep.steps),
            "success": ep.success,
            "provenance": ep.provenance,
        })

    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "task": dataset.task.value,
        "root_seed": dataset.root_seed,
        "attempts": dataset.attempts,
        "successes": dataset.successes,
        "discard_rate": dataset.discard_rate,
        "complete": dataset.complete,
        "episodes": index,
    }
    if run_config is not None:
        manifest["run_config"] = run_config
    manifest_path = out / "manifest.json"
    manifest_path.write_text(canonical_json(manifest) + "\n", encoding="utf-8")
    return manifest_path


def read_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir)
    if path.name == "manifest.json":
        path = path.parent
    with open(path / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != DATASET_FORMAT_VERSION:
        raise ValueError(f"unknown dataset format_version {manifest.get('format_version')}")
    return manifest


def read_episode_steps(dataset_dir, entry: dict) -> list[dict]:
    path = Path(dataset_dir) / entry["file"]
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
