"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .detect import DetectConfig
from .sampler import LangevinConfig, NoiseSchedule


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # detection
    bandwidth: float = 0.15
    radius: float = math.inf
    offset_weight: float = 1.0
    vote_budget: int = 0  # 0 means min(50000, N^2 / 2)
    n_seeds: int = 8
    merge_radius: float = 0.05
    top_k: int = 6
    max_iter: int = 100
    tol: float = 1e-4
    hough_cell: float = 0.04
    hough_min_length: float = 0.2
    hough_cells: int = 48
    refine_iters: int = 10
    cover_tol: float = 2e-3
    max_order: int = 128
    # sampling
    langevin_steps: int = 10
    tau: int = 50
    gamma_min: float = 0.01
    gamma_max: float = 1.0
    slot_threshold: float = 0.5
    max_retries: int = 8
    # metrics
    emd_cap: int = 1024

    def detect_config(self) -> DetectConfig:
        return DetectConfig(
            bandwidth=self.bandwidth,
            radius=self.radius,
            offset_weight=self.offset_weight,
            vote_budget=self.vote_budget or None,
            n_seeds=self.n_seeds,
            merge_radius=self.merge_radius,
            top_k=self.top_k,
            max_iter=self.max_iter,
            tol=self.tol,
            hough_cell=self.hough_cell,
            hough_min_length=self.hough_min_length,
            hough_cells=self.hough_cells,
            refine_iters=self.refine_iters,
            cover_tol=self.cover_tol,
            max_order=self.max_order,
            seed=self.seed,
        )

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule.geometric(self.tau, self.gamma_min, self.gamma_max)

    def langevin(self) -> LangevinConfig:
        return LangevinConfig(self.langevin_steps)

    def to_dict(self) -> dict:
        return {k: (format_value(v) if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _coerce(key: str, text: str, typ):
    try:
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {typ.__name__}") from None
    return text


def parse_config(text: str, source: str = "<config>", base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` lines; '#' starts a comment; unknown keys are errors."""
    types = {f.name: (int if f.type in ("int", int) else float) for f in fields(RunConfig)}
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in updates:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        updates[key] = _coerce(key, value, types[key])
    return replace(base or RunConfig(), **updates)


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def format_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in asdict(cfg).items())
