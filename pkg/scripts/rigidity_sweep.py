"""Rigidity verdicts across fixtures: geodesic balls for each curvature sign, the
ellipse, and perturbed disks of increasing amplitude."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from _common import parse_config, write_rows
from isothermic.domain import standard_shapes
from isothermic.modelspace import ModelSpace
from isothermic.rigidity import run_rigidity


@dataclass
class Config:
    h: float = 1 / 128
    dt: float = 1e-3
    t_end: float = 1.0
    ks: list = field(default_factory=lambda: [-1.0, 0.0, 1.0])
    perturbations: list = field(default_factory=lambda: [0.0, 0.02, 0.05, 0.1])
    r0: float = 0.5
    mode: int = 3


def main(argv=None):
    cfg, out = parse_config(Config, __doc__, argv)
    fixtures = [(k, "geodesic-ball", {"radius": 1.0}) for k in cfg.ks]
    fixtures.append((0.0, "ellipse", {"a": 1.0, "b": 0.6}))
    fixtures += [(0.0, "perturbed-ball", {"r0": cfg.r0, "eps": e, "m": cfg.mode}) for e in cfg.perturbations]
    rows = []
    for k, name, params in fixtures:
        sp = ModelSpace(k)
        t0 = time.perf_counter()
        rep = run_rigidity(sp, standard_shapes(sp, name, params), h=cfg.h, dt=cfg.dt, t_end=cfg.t_end)
        rows.append({"k": k, "shape": name, "params": ";".join(f"{a}={b}" for a, b in params.items()),
                     "verdict": rep.verdict, **rep.checks, "R": rep.R_true, "R_hat": rep.R_fit["R"],
                     "seconds": time.perf_counter() - t0})
    write_rows(rows, out)


if __name__ == "__main__":
    main()
