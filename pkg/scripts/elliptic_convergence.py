"""Centre value of the elliptic solve against the radial oracle under h-halving."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from _common import parse_config, write_rows
from isothermic.domain import standard_shapes
from isothermic.modelspace import ModelSpace
from isothermic.pde import build_grid, elliptic_solve, radial_oracle


@dataclass
class Config:
    ks: list = field(default_factory=lambda: [-1.0, 0.0, 1.0])
    radius: float = 1.0
    s_values: list = field(default_factory=lambda: [1.0, 10.0, 100.0])
    hs: list = field(default_factory=lambda: [1 / 32, 1 / 64, 1 / 128, 1 / 256])


def main(argv=None):
    cfg, out = parse_config(Config, __doc__, argv)
    rows = []
    for k in cfg.ks:
        sp = ModelSpace(k)
        dom = standard_shapes(sp, "geodesic-ball", {"radius": cfg.radius})
        grids = [build_grid(dom, h) for h in cfg.hs]
        for s in cfg.s_values:
            exact = radial_oracle(sp, cfg.radius, s).center
            prev = None
            for h, g in zip(cfg.hs, grids):
                t0 = time.perf_counter()
                W = elliptic_solve(g, s)
                elapsed = time.perf_counter() - t0
                err = abs(W.interpolate(np.zeros((1, 2)), log=False)[0] - exact) / exact
                rows.append({"k": k, "s": s, "h": h, "nodes": g.size, "rel_error": err,
                             "ratio": "" if prev is None else prev / err, "seconds": elapsed})
                prev = err
    write_rows(rows, out)


if __name__ == "__main__":
    main()
