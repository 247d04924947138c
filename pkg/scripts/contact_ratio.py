"""Ratio of the weighted sphere integral of W to its closed-form contact limit
along an s ladder, for several grid spacings (disk touching the sphere at one point)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from _common import parse_config, write_rows
from isothermic.asympt import grid_ladder, thm42_lhs, thm42_rhs
from isothermic.domain import standard_shapes
from isothermic.modelspace import ModelSpace, principal_curvatures
from isothermic.pde import build_grid


@dataclass
class Config:
    center: list = field(default_factory=lambda: [0.25, 0.0])
    R: float = 1.5
    contact: list = field(default_factory=lambda: [1.0, 0.0])
    hs: list = field(default_factory=lambda: [1 / 128, 1 / 256])
    sqrt_s: list = field(default_factory=lambda: [16.0, 32.0, 45.25, 64.0, 90.5, 128.0])
    resolution: float = 0.5


def main(argv=None):
    cfg, out = parse_config(Config, __doc__, argv)
    sp = ModelSpace(0)
    disk = standard_shapes(sp, "coordinate-ball", {"radius": 1.0})
    p = np.asarray(cfg.contact, float)
    rhs = thm42_rhs(sp, cfg.R, [(p, principal_curvatures(sp, disk, p))], 1.0)
    rows = []
    for h in cfg.hs:
        s = np.asarray(cfg.sqrt_s, float) ** 2
        s = s[np.sqrt(s) * h <= cfg.resolution]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            series = thm42_lhs(grid_ladder(build_grid(disk, h), s), 1.0, np.asarray(cfg.center, float), cfg.R)
        for sv, lhs in zip(series.s, series.values):
            rows.append({"h": h, "s": sv, "sqrt_s_h": sv**0.5 * h, "lhs": lhs, "rhs": rhs, "ratio": lhs / rhs})
    write_rows(rows, out)


if __name__ == "__main__":
    main()
