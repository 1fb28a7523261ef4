"""Flat key=value run configuration.

One field per tunable threshold of the pipeline, with the stock defaults.
The text form is one `key=value` line per field; parsing coerces values by
field type and round-trips exactly (floats are written with repr).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import get_type_hints

from .filtering import FilterParams
from .mser import MserParams


@dataclass(frozen=True)
class RunConfig:
    saliency_threshold: float = 0.2
    min_block_area: int = 20
    mser_delta: int = 5
    mser_t1: float = 0.005
    mser_t2: float = 3.0
    mser_max_area_ratio: float = 0.25
    area_basis: str = "block"
    angle_step: float = math.pi / 180
    pair_angle_gate: float = math.pi / 12
    min_centroids: int = 2
    min_avg_score: float = 0.6
    max_mu: float = math.pi / 32
    max_sigma: float = math.pi / 16
    nms_overlap: float = 0.5
    peak_floor: float = 0.3
    peak_radius_fraction: float = 0.25
    scale_heights: tuple[int, ...] = (200, 500, 1000)

    def __post_init__(self):
        object.__setattr__(self, "scale_heights", tuple(int(v) for v in self.scale_heights))
        if not 0.0 < self.saliency_threshold < 1.0:
            raise ValueError("saliency_threshold must lie in (0, 1)")
        if self.min_block_area < 1:
            raise ValueError("min_block_area must be positive")
        if not self.angle_step > 0:
            raise ValueError("angle_step must be positive")
        if not 0.0 < self.pair_angle_gate < math.pi / 2:
            raise ValueError("pair_angle_gate must lie in (0, pi/2)")
        if self.area_basis not in ("block", "image"):
            raise ValueError("area_basis must be 'block' or 'image'")
        if not self.scale_heights or any(v <= 0 for v in self.scale_heights):
            raise ValueError("scale_heights must be positive")
        # the parameter bundles run their own range checks
        self.mser_params()
        self.filter_params()

    def mser_params(self) -> MserParams:
        return MserParams(
            delta=self.mser_delta,
            t1_min_area_ratio=self.mser_t1,
            t2_max_aspect=self.mser_t2,
            max_area_ratio=self.mser_max_area_ratio,
        )

    def filter_params(self) -> FilterParams:
        return FilterParams(
            min_centroids=self.min_centroids,
            min_avg_score=self.min_avg_score,
            max_mu=self.max_mu,
            max_sigma=self.max_sigma,
            nms_overlap=self.nms_overlap,
            peak_floor=self.peak_floor,
            peak_radius_fraction=self.peak_radius_fraction,
        )


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def coerce_kv(cls, text: str):
    """Parse `key=value` lines into constructor arguments for `cls`.

    Blank lines and lines starting with '#' are skipped. Unknown keys and
    uncoercible values raise ValueError naming the offender.
    """
    hints = get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in names:
            raise ValueError(f"unknown config key: {key}")
        hint = hints[key]
        try:
            if hint is float:
                kwargs[key] = float(value)
            elif hint is int:
                kwargs[key] = int(value)
            elif hint is str:
                kwargs[key] = value
            elif hint is bool:
                kwargs[key] = bool(int(value))
            else:  # tuple shaped fields
                parts = [p for p in value.split(",") if p.strip()]
                inner = getattr(hint, "__args__", (float,))[0]
                kwargs[key] = tuple(inner(p) for p in parts)
        except ValueError as exc:
            raise ValueError(f"bad value for {key}: {exc}") from None
    return kwargs


def config_to_text(config: RunConfig) -> str:
    return "".join(
        f"{f.name}={_format_value(getattr(config, f.name))}\n" for f in fields(config)
    )


def config_from_text(text: str) -> RunConfig:
    return RunConfig(**coerce_kv(RunConfig, text))


def save_config(config: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_to_text(config))


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_text(fh.read())
