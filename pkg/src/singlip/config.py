"""Analysis configuration: one small knob set shared by every stage.

Defaults live here; a JSON config file replaces fields wholesale and
command-line flags override the file.  The effective configuration is
echoed into every report so a run can be reproduced from its output.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .arcs import SampleSchedule


class BadConfig(RuntimeError):
    """The config file is unreadable or names an unknown option."""


@dataclass(frozen=True)
class AnalysisConfig:
    sweep_angles: int = 360        # ray sweep resolution
    schedule_start: float = 0.1    # geometric sample ladder: start
    schedule_ratio: float = 0.7    # ... decay ratio
    schedule_count: int = 25       # ... rung count
    separation_tol: float = 0.05   # wedge well-separation slack
    squeeze_c: float = 0.5         # vertical squeeze constant
    n_pairs: int = 10_000          # distortion sample pairs
    seed: int = 0                  # RNG seed for sampling stages

    def schedule(self) -> SampleSchedule:
        return SampleSchedule(self.schedule_start, self.schedule_ratio,
                              self.schedule_count)

    def echo(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path: str | Path) -> AnalysisConfig:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise BadConfig(f"cannot read config {p}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise BadConfig(f"config {p} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise BadConfig(f"config {p} must be a JSON object")
    known = {f.name for f in dataclasses.fields(AnalysisConfig)}
    unknown = set(data) - known
    if unknown:
        raise BadConfig(f"unknown config options: {sorted(unknown)}")
    return dataclasses.replace(AnalysisConfig(), **data)


def apply_flags(cfg: AnalysisConfig, **flags) -> AnalysisConfig:
    """Override config fields with any non-None flag values."""
    updates = {k: v for k, v in flags.items() if v is not None}
    return dataclasses.replace(cfg, **updates) if updates else cfg
