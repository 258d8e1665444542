"""Runtime configuration: tolerances, parallelism, output placement.

Every geometric tolerance that influences network abstraction is carried
here and echoed into output metadata, so that a fact file can always be
traced back to the parameters that produced it.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

__all__ = ["Config", "load_config", "DEFAULTS"]


@dataclass
class Config:
    #: centerline sampling interval in meters
    sampling_step: float = 0.5
    #: max distance between centerlines for a crossing to register, meters
    intersection_tolerance: float = 0.05
    #: overlap corridor half-width as a fraction of the narrower lane width
    overlap_corridor_factor: float = 0.5
    #: minimum arclength of a corridor window to count as an overlap, meters
    min_overlap_length: float = 1.0
    #: max heading deviation from (anti)parallel inside a corridor, degrees
    overlap_heading_tolerance_deg: float = 30.0
    #: extra lateral reach of a vehicle beyond the lane edge, meters
    occupancy_halfwidth: float = 0.9
    #: worker processes for generation (1 = in-process)
    workers: int = 1
    #: output directory for artifact files (None = alongside input / stdout)
    outdir: str | None = None
    #: seed for randomized fixtures; never consulted by the core pipeline
    seed: int = 0

    def __post_init__(self) -> None:
        for name in (
            "sampling_step",
            "intersection_tolerance",
            "overlap_corridor_factor",
            "min_overlap_length",
            "overlap_heading_tolerance_deg",
            "occupancy_halfwidth",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def metadata(self) -> dict[str, str]:
        """Tolerances as strings, for echoing into output files."""
        keys = (
            "sampling_step",
            "intersection_tolerance",
            "overlap_corridor_factor",
            "min_overlap_length",
            "overlap_heading_tolerance_deg",
            "occupancy_halfwidth",
        )
        return {k: repr(getattr(self, k)) for k in keys}


DEFAULTS = Config()

_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def load_config(path: str | Path) -> Config:
    """Read a flat ``key=value`` config file; '#' starts a comment."""
    values: dict[str, object] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        if key in ("workers", "seed"):
            values[key] = int(val)
        elif key == "outdir":
            values[key] = val
        else:
            values[key] = float(val)
    return Config(**values)  # type: ignore[arg-type]
