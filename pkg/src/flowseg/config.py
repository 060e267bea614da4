"""Run configuration: every pipeline threshold and training parameter, stored
as a flat ``key=value`` file (diff-able, no parser dependency).

Default values: tau_static 0.5 (1.7 for
road-scene footage with faster ego motion), tau_fg 2.5, tau_grad 20,
r_bg 0.2, tau_drop 0.99, stage-1 lr 4e-6 over 15 epochs, stage-2 lr 4e-5
over 1 epoch, batch size 8.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .clustering import HdbscanParams
from .errors import ConfigError
from .losses import LossConfig
from .pseudo_label import PseudoLabelConfig


@dataclass(frozen=True)
class RunConfig:
    # quasi-static retrieval
    tau_static: float = 0.5
    patch_fraction: float = 0.15
    # pseudo-labeling
    tau_fg: float = 2.5
    tau_grad: float = 20.0
    min_component_px: int = 25
    connectivity: int = 8
    # clustering
    min_cluster_size: int = 25
    min_samples: int = 10
    spatial_weight: float = 0.5
    # losses
    eps: float = 1e-7
    r_bg: float = 0.2
    tau_drop: float = 0.99
    # training
    stage1_lr: float = 4e-6
    stage1_epochs: int = 15
    stage2_lr: float = 4e-5
    stage2_epochs: int = 1
    batch_size: int = 8
    seed: int = 0

    def pseudo_config(self) -> PseudoLabelConfig:
        return PseudoLabelConfig(
            tau_fg=self.tau_fg,
            tau_grad=self.tau_grad,
            min_component_px=self.min_component_px,
            connectivity=self.connectivity,
            clustering=HdbscanParams(min_cluster_size=self.min_cluster_size, min_samples=self.min_samples),
            spatial_weight=self.spatial_weight,
        )

    def loss_config(self) -> LossConfig:
        return LossConfig(eps=self.eps, r_bg=self.r_bg, tau_drop=self.tau_drop)

    def to_text(self) -> str:
        lines = [f"{f.name}={getattr(self, f.name)!r}" if isinstance(getattr(self, f.name), str)
                 else f"{f.name}={getattr(self, f.name)}" for f in dataclasses.fields(self)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        casts = {f.name: (int if f.type in ("int", int) else float) for f in dataclasses.fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            try:
                values[key] = casts[key](value)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
        return cls(**values)

    def write(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="ascii")

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text(encoding="ascii"))
