"""JSON run configurations for the command line tools."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .camera import CameraConfig


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


@dataclass(frozen=True)
class GridConfig:
    n_x: int = 32
    n_y: int = 32
    n_z: int = 32
    delta_x_mm: float = 0.5
    delta_y_mm: float = 0.5
    delta_z_mm: float = 0.5

    @property
    def shape_xyz(self):
        return (self.n_x, self.n_y, self.n_z)

    @property
    def delta(self):
        return (self.delta_x_mm, self.delta_y_mm, self.delta_z_mm)


@dataclass(frozen=True)
class PhantomConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    shapes: list | None = None          # None selects the built-in pronged phantom
    supersample: int = 2

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomConfig":
        return cls(GridConfig(**d.get("grid", {})), d.get("shapes"), int(d.get("supersample", 2)))


@dataclass(frozen=True)
class CameraEntry:
    camera: CameraConfig
    data_path: str
    weights_path: str | None = None


@dataclass(frozen=True)
class ReconConfig:
    cameras: list[CameraEntry]
    grid: GridConfig
    beta: float = 0.0
    nu: float = 0.0
    n_subset: int = 1
    iters: int = 100
    init: str | float = "zero"
    output_path: str = "recon.raw"
    log_every: int = 1
    weighting: str = "none"             # "none" | "balanced"

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "ReconConfig":
        base = base or Path(".")
        entries = []
        for c in d["cameras"]:
            c = dict(c)
            data = c.pop("data_path")
            weights = c.pop("weights_path", None)
            entries.append(CameraEntry(CameraConfig.from_dict(c), str(base / data),
                                       str(base / weights) if weights else None))
        known = {"cameras", "volume", "beta", "nu", "n_subset", "iters", "init",
                 "output_path", "log_every", "weighting"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown recon config keys {sorted(extra)}")
        weighting = d.get("weighting", "none")
        if weighting not in ("none", "balanced"):
            raise ValueError(f"unknown weighting {weighting!r}")
        init = d.get("init", "zero")
        if isinstance(init, str) and init not in ("zero",):
            init = str(base / init)
        return cls(entries, GridConfig(**d.get("volume", {})), float(d.get("beta", 0.0)),
                   float(d.get("nu", 0.0)), int(d.get("n_subset", 1)), int(d.get("iters", 100)),
                   init, str(base / d.get("output_path", "recon.raw")), int(d.get("log_every", 1)), weighting)
