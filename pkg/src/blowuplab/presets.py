"""Frozen initial-data presets.

Gaussian amplitudes were calibrated with ``blowup_threshold`` (bisection on
blowup vs. dispersal at n_nodes=257, stop at max|u_r| = 1e6) and then set
above the threshold; the thresholds found are kept next to each preset.
"""
from __future__ import annotations

from dataclasses import dataclass

from .evolve import EvolutionConfig, EvolutionError, evolve, make_initial_data
from .model import ModelSpec


@dataclass(frozen=True)
class Preset:
    name: str
    kind: str
    d: int
    family: str = "gauss"
    A: float = 0.0
    sigma: float = 0.5
    r0: float = 0.0
    T0: float = 1.0
    threshold: float | None = None

    @property
    def model(self) -> ModelSpec:
        return ModelSpec.parse(self.kind, self.d)

    def config(self, **overrides) -> EvolutionConfig:
        kw = dict(model=self.model, family=self.family, A=self.A, sigma=self.sigma, r0=self.r0, T0=self.T0)
        kw.update(overrides)
        return EvolutionConfig(**kw)


# shape A: centred narrow bump; B: off-centre shell; C: broad bump
_SHAPES = {
    "A": dict(sigma=0.5, r0=0.0),
    "B": dict(sigma=0.3, r0=0.6),
    "C": dict(sigma=1.0, r0=0.0),
}

# (kind, d, shape) -> (amplitude, calibrated threshold)
_AMPLITUDES = {
    ("wm", 4, "A"): (10.0, 7.03),
    ("wm", 4, "B"): (6.0, 1.24),
    ("wm", 4, "C"): (6.0, 3.75),
    ("wm", 5, "A"): (10.0, 5.84),
    ("wm", 5, "B"): (6.0, 0.92),
    ("wm", 5, "C"): (6.0, 3.23),
    ("ym", 5, "A"): (20.0, 10.8),
    ("ym", 5, "B"): (12.0, 1.58),
    ("ym", 5, "C"): (4.0, 2.81),
    ("ym", 6, "A"): (20.0, 9.91),
    ("ym", 6, "B"): (12.0, 1.22),
    ("ym", 6, "C"): (4.0, 2.58),
}


def _build() -> dict[str, Preset]:
    out = {}
    for (kind, d, shape), (A, thr) in _AMPLITUDES.items():
        name = f"{kind}{d}-gauss-{shape}"
        out[name] = Preset(name, kind, d, "gauss", A, threshold=thr, **_SHAPES[shape])
    for kind, d in {(k, d) for k, d, _ in _AMPLITUDES}:
        name = f"{kind}{d}-selfsimilar"
        out[name] = Preset(name, kind, d, "selfsimilar", T0=1.0)
        name = f"{kind}{d}-zero"
        out[name] = Preset(name, kind, d, "gauss", 0.0)
        name = f"{kind}{d}-small"
        out[name] = Preset(name, kind, d, "gauss", 0.01)
    return out


PRESETS = _build()

ATTRACTOR_CELLS = [("wm", 4), ("wm", 5), ("ym", 5), ("ym", 6)]


def get(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}") from None


def blows_up(config: EvolutionConfig, t_max: float = 5.0) -> bool:
    cfg = config.with_(stop_threshold=1e6, t_max=t_max, snapshot_stride=10**9)
    try:
        traj, _ = evolve(make_initial_data(cfg), cfg)
    except EvolutionError:
        return True
    return traj.blowup


def blowup_threshold(config: EvolutionConfig, lo: float, hi: float, rtol: float = 1e-2) -> float:
    """Bisect the Gaussian amplitude between dispersal (lo) and blowup (hi)."""
    if blows_up(config.with_(A=lo)) or not blows_up(config.with_(A=hi)):
        raise ValueError(f"[{lo}, {hi}] does not bracket the blowup threshold")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if blows_up(config.with_(A=mid)):
            hi = mid
        else:
            lo = mid
    return hi
