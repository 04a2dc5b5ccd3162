"""Demonstration files and their conversion to training episodes.

A demo file is gzip-compressed JSON lines: one header object, one row per
20 Hz command carrying the observation and the command as sent, and one
footer with the episode outcome.  A header-only file is a legal aborted
recording.  Conversion to training arrays turns absolute hand setpoints
into per-step deltas in the previous setpoint's frame — the quantity the
policy's mixture head models — and carries grasp flags forward the same
way the command pipeline persists them.
"""

from __future__ import annotations

import gzip
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .command import TaskSpaceCommand
from .policy.core import SIDES, delta_between

DEMO_KIND = "locodesk-demo"
DEMO_VERSION = 1


class DemoSchemaError(ValueError):
    pass


@dataclass
class DemoRecord:
    """One recorded episode: header metadata, command rows, outcome."""

    header: dict
    rows: list[dict] = field(default_factory=list)
    outcome: dict | None = None

    @property
    def aborted(self) -> bool:
        return not self.rows or self.outcome is None


def make_header(task: str, seed: int, model_hash: str,
                initial_hands: dict, command_rate_hz: float = 20.0,
                control_rate_hz: float = 100.0, source: str = "scripted"
                ) -> dict:
    return {"kind": DEMO_KIND, "version": DEMO_VERSION, "task": task,
            "seed": int(seed), "model": model_hash,
            "command_rate_hz": command_rate_hz,
            "control_rate_hz": control_rate_hz,
            "initial_hands": initial_hands, "source": source}


def record_from_episode(result, task_name: str, model_hash: str,
                        source: str = "scripted") -> DemoRecord:
    """Package a recorded ``run_episode`` result as a demo record."""
    header = make_header(task_name, result.seed, model_hash,
                         result.initial_hands, source=source)
    outcome = {"outcome": result.outcome, "ticks": result.ticks,
               "time": result.time, "state_hash": result.state_hash,
               "goal": result.goal}
    return DemoRecord(header=header, rows=list(result.records),
                      outcome=outcome)


def save_demo(path: str | Path, record: DemoRecord):
    with gzip.open(path, "wt", encoding="utf-8") as fh:
        fh.write(json.dumps(record.header) + "\n")
        for row in record.rows:
            fh.write(json.dumps(row) + "\n")
        if record.outcome is not None:
            fh.write(json.dumps({"footer": record.outcome}) + "\n")


def load_demo(path: str | Path) -> DemoRecord:
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines:
        raise DemoSchemaError(f"{path}: empty file")
    header, rows, outcome = lines[0], [], None
    for obj in lines[1:]:
        if "footer" in obj:
            outcome = obj["footer"]
        else:
            rows.append(obj)
    record = DemoRecord(header=header, rows=rows, outcome=outcome)
    validate_demo(record)
    return record


def validate_demo(record: DemoRecord):
    """Schema check; raises ``DemoSchemaError`` with the offending field."""
    h = record.header
    if h.get("kind") != DEMO_KIND:
        raise DemoSchemaError(f"not a demo file (kind={h.get('kind')!r})")
    if h.get("version") != DEMO_VERSION:
        raise DemoSchemaError(f"unsupported version {h.get('version')!r}")
    for key in ("task", "seed", "model", "initial_hands"):
        if key not in h:
            raise DemoSchemaError(f"header missing {key!r}")
    obs_dim = None
    last_t = -np.inf
    for i, row in enumerate(record.rows):
        for key in ("t", "obs", "command"):
            if key not in row:
                raise DemoSchemaError(f"row {i} missing {key!r}")
        if row["t"] < last_t:
            raise DemoSchemaError(f"row {i} time goes backwards")
        last_t = row["t"]
        obs = row["obs"]
        if obs_dim is None:
            obs_dim = len(obs)
        elif len(obs) != obs_dim:
            raise DemoSchemaError(f"row {i} observation dim {len(obs)} != "
                                  f"{obs_dim}")
        if not np.all(np.isfinite(obs)):
            raise DemoSchemaError(f"row {i} has non-finite observations")
        try:
            cmd = TaskSpaceCommand.from_dict(row["command"])
        except Exception as exc:
            raise DemoSchemaError(f"row {i} command: {exc}") from exc
        if set(cmd.hands) != set(SIDES):
            raise DemoSchemaError(f"row {i} must command both hands")


# --- training conversion ------------------------------------------------------

def training_episode(record: DemoRecord) -> dict:
    """Arrays for one episode: obs [T,D], delta [T,14], grasp [T,2],
    trigger [T], loco [T]."""
    if record.aborted:
        raise DemoSchemaError("aborted recording has no training steps")
    T = len(record.rows)
    obs = np.array([row["obs"] for row in record.rows], dtype=float)
    delta = np.zeros((T, 7 * len(SIDES)))
    grasp = np.zeros((T, len(SIDES)))
    trigger = np.zeros(T)
    loco = np.zeros(T, dtype=np.int64)
    prev = {side: (np.array(h["pos"], dtype=float),
                   np.array(h["quat"], dtype=float))
            for side, h in record.header["initial_hands"].items()}
    held = {side: False for side in SIDES}
    for t, row in enumerate(record.rows):
        cmd = TaskSpaceCommand.from_dict(row["command"])
        for i, side in enumerate(SIDES):
            sp = cmd.hands[side]
            p0, q0 = prev[side]
            delta[t, 7 * i:7 * i + 7] = delta_between(p0, q0, sp.pos, sp.quat)
            prev[side] = (sp.pos, sp.quat)
        held.update(cmd.grasp)
        grasp[t] = [float(held[side]) for side in SIDES]
        trigger[t] = float(cmd.trigger)
        loco[t] = int(cmd.locomotion)
    return {"obs": obs, "delta": delta, "grasp": grasp, "trigger": trigger,
            "loco": loco}


def load_dataset(paths: list[str | Path], skip_aborted: bool = True
                 ) -> list[dict]:
    """Load demo files into training episodes, consistency-checked."""
    episodes = []
    model_hash = None
    for path in paths:
        record = load_demo(path)
        if record.aborted:
            if skip_aborted:
                continue
            raise DemoSchemaError(f"{path}: aborted recording")
        if model_hash is None:
            model_hash = record.header["model"]
        elif record.header["model"] != model_hash:
            raise DemoSchemaError(f"{path}: model mismatch")
        episodes.append(training_episode(record))
    if not episodes:
        raise DemoSchemaError("no usable episodes")
    return episodes


def split_episodes(episodes: list, holdout_fraction: float, seed: int = 0
                   ) -> tuple[list, list]:
    """Deterministic train/holdout split by episode."""
    if not 0.0 <= holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must be in [0, 1)")
    order = np.random.default_rng(seed).permutation(len(episodes))
    n_hold = int(round(holdout_fraction * len(episodes)))
    hold = {int(i) for i in order[:n_hold]}
    train = [ep for i, ep in enumerate(episodes) if i not in hold]
    return train, [episodes[i] for i in sorted(hold)]
