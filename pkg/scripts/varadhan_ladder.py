"""Distance estimates -log W / sqrt(s) at a probe on the grid and oracle paths,
with the extrapolated limit under both fit models."""
from __future__ import annotations

from dataclasses import dataclass, field

from _common import parse_config, write_rows
from isothermic.asympt import geometric_s, grid_ladder, oracle_ladder, varadhan_extract
from isothermic.domain import dist_to_boundary, standard_shapes
from isothermic.errors import FitDiagnosticError
from isothermic.modelspace import ModelSpace
from isothermic.pde import build_grid


@dataclass
class Config:
    k: float = 0.0
    radius: float = 1.0
    probe: list = field(default_factory=lambda: [0.0, 0.0])
    h: float = 1 / 256
    s0: float = 16.0
    factor: float = 2.0
    count: int = 7


def main(argv=None):
    cfg, out = parse_config(Config, __doc__, argv)
    sp = ModelSpace(cfg.k)
    dom = standard_shapes(sp, "geodesic-ball", {"radius": cfg.radius})
    s = geometric_s(cfg.s0, cfg.count, cfg.factor)
    truth = float(dist_to_boundary(dom, cfg.probe))
    ladders = {"grid": grid_ladder(build_grid(dom, cfg.h), s), "oracle": oracle_ladder(sp, cfg.radius, s, dom)}
    rows = []
    for path, lad in ladders.items():
        for n_last in range(3, len(s) + 1):
            sub = lad.__class__(lad.s[:n_last], lad.fields[:n_last], lad.h, lad.space, lad.meta)
            row = {"path": path, "s_top": float(s[n_last - 1]), "sqrt_s_h": float(s[n_last - 1]) ** 0.5 * cfg.h,
                   "truth": truth, "estimate": "", "F_richardson": "", "F_log": ""}
            for model in ("richardson", "log"):
                try:
                    fit = varadhan_extract(sub, cfg.probe, model=model)
                    row["estimate"] = fit.estimates[-1]
                    row[f"F_{model}"] = fit.extrapolated
                except FitDiagnosticError:
                    row[f"F_{model}"] = "non-monotone"
            rows.append(row)
    write_rows(rows, out)


if __name__ == "__main__":
    main()
