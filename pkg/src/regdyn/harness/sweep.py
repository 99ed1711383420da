"""One-axis sweeps over ``h`` or ``eps`` for either experiment."""
from __future__ import annotations

import os
from dataclasses import dataclass

from .csvio import write_rows


@dataclass(frozen=True)
class SweepSpec:
    experiment: str
    axis: str
    values: tuple
    fixed: float

    def __post_init__(self):
        if self.experiment not in ("lv", "dw"):
            raise ValueError("experiment must be 'lv' or 'dw'")
        if self.axis not in ("h", "eps"):
            raise ValueError("axis must be 'h' or 'eps'")
        if not self.values or any(not v > 0 for v in self.values):
            raise ValueError("sweep values must be positive")
        if list(self.values) != sorted(self.values):
            raise ValueError("sweep values must be sorted")
        if not self.fixed > 0:
            raise ValueError("the fixed knob must be positive")

    @classmethod
    def from_config(cls, cfg: dict) -> "SweepSpec":
        sw = cfg["sweep"]
        values = sw["values"] or cfg[sw["experiment"]][sw["axis"]]
        return cls(sw["experiment"], sw["axis"], tuple(sorted(values)), sw["fixed"])

    def pairs(self, T: float) -> list:
        """``(eps, h)`` per value; a fixed step count ``N >= 1`` means ``h = T / N``."""
        if self.axis == "h":
            return [(self.fixed, h) for h in self.values]
        h = T / self.fixed if self.fixed >= 1 else self.fixed
        return [(e, h) for e in self.values]


def run_sweep(cfg: dict, out_dir: str, threads: int = 1, seed: int | None = None) -> dict:
    """Rows of the chosen experiment along ``spec.axis``; ``sweep.csv`` and ``sweep.svg`` in ``out_dir``."""
    from .parallel import map_points
    from .plot import PlotSpec, emit_plot

    spec = SweepSpec.from_config(cfg)
    seed = cfg["run"]["seed"] if seed is None else seed
    os.makedirs(out_dir, exist_ok=True)
    if spec.experiment == "lv":
        from .lv import LV_COLUMNS, add_time_errors, identity_params, lv_points, run_lv_point

        L = cfg["lv"]
        q0, _ = identity_params(cfg, out_dir, seed)
        rows = map_points(run_lv_point, lv_points(L, q0, seed, spec.pairs(L["T"])), threads)
        for r in rows:
            r["time_error"] = float("nan")
        if spec.axis == "h":
            from .lv import build_model

            add_time_errors(rows, build_model(L)[1].space)
        columns, y = LV_COLUMNS, "error"
    else:
        from .dw import DW_COLUMNS, add_reference_errors, dw_points, run_dw_point

        D = cfg["dw"]
        pairs = spec.pairs(D["T"])
        extra_pairs = [(e, 0.5 * h) for e, h in pairs]
        results = map_points(run_dw_point, dw_points(D, pairs, seed) + dw_points(D, extra_pairs, seed), threads)
        rows, extra = results[:len(pairs)], results[len(pairs):]
        add_reference_errors(rows, extra, D)
        columns, y = DW_COLUMNS, "energy_error"
    csv_path = os.path.join(out_dir, "sweep.csv")
    write_rows(csv_path, columns, rows)
    emit_plot(csv_path, PlotSpec(spec.axis, y, title=f"{spec.experiment} sweep over {spec.axis}"),
              os.path.join(out_dir, "sweep.svg"))
    return {"spec": spec, "rows": rows}
