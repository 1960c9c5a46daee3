"""Uniform verdict carrier for every inequality check."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TOLERANCE = 5e-3


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class EstimateReport:
    """Margin data for one estimate; ``margin >= 0`` means the inequality holds.

    ``margin`` and ``locations`` are flat: one entry per checked node or pair.
    ``mask`` marks the entries that take part in the verdict.
    """

    name: str
    params: dict
    margin: np.ndarray
    locations: np.ndarray
    mask: np.ndarray
    tolerance: float = DEFAULT_TOLERANCE
    observed: np.ndarray | None = None
    bound: object = None
    excluded: dict = field(default_factory=dict)

    def __post_init__(self):
        self.margin = np.asarray(self.margin, float).ravel()
        self.mask = np.asarray(self.mask, bool).ravel()
        self.locations = np.asarray(self.locations, float).reshape(self.margin.size, -1)
        if self.observed is not None:
            self.observed = np.asarray(self.observed, float).ravel()
        if self.mask.shape != self.margin.shape:
            raise ValueError("mask and margin differ in size")

    @property
    def checked(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def excluded_count(self) -> int:
        return int(self.margin.size - self.checked)

    @property
    def min_margin(self) -> float:
        if not self.checked:
            return float("nan")
        return float(np.min(self.margin[self.mask]))

    @property
    def max_abs_margin(self) -> float:
        if not self.checked:
            return float("nan")
        return float(np.max(np.abs(self.margin[self.mask])))

    @property
    def argmin(self) -> int:
        return int(np.argmin(np.where(self.mask, self.margin, np.inf)))

    @property
    def argmin_location(self) -> list:
        return self.locations[self.argmin].tolist() if self.checked else []

    @property
    def passed(self) -> bool:
        return bool(self.checked) and self.min_margin >= -self.tolerance

    def scaled(self, factor: float, name: str | None = None) -> "EstimateReport":
        """Same check with every margin multiplied by ``factor > 0``."""
        obs = None if self.observed is None else self.observed * factor
        bound = None if self.bound is None else np.asarray(self.bound) * factor
        return EstimateReport(name or self.name, dict(self.params, scale=factor), self.margin * factor,
                              self.locations, self.mask, self.tolerance * factor, obs, bound,
                              dict(self.excluded))

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "params": _plain(self.params),
            "tolerance": self.tolerance,
            "min_margin": _plain(self.min_margin),
            "max_abs_margin": _plain(self.max_abs_margin),
            "argmin": self.argmin_location,
            "pass": self.passed,
            "checked": self.checked,
            "excluded": self.excluded_count,
            "excluded_by": _plain(self.excluded),
        }

    def to_json(self, path=None, **kw) -> str:
        text = json.dumps(self.as_dict(), indent=2, **kw)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def write_csv(self, path):
        d = self.locations.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(d)] + ["observed", "margin", "checked"])
            obs = self.observed if self.observed is not None else np.full(self.margin.size, np.nan)
            for loc, o, m, c in zip(self.locations, obs, self.margin, self.mask):
                w.writerow([repr(float(v)) for v in loc] + [repr(float(o)), repr(float(m)), int(c)])

    def summary_line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: min margin {self.min_margin:.3e} (tol {self.tolerance:.1e}, {self.checked} checked)"


def field_report(name, params, margin_field, mask, tolerance=DEFAULT_TOLERANCE, observed=None, bound=None,
                 excluded=None) -> EstimateReport:
    """Report over grid nodes: ``margin_field`` is a nodal array on ``grid``."""
    grid = margin_field.grid
    obs = None if observed is None else np.asarray(observed)
    return EstimateReport(name, params, margin_field.values, grid.points(), mask, tolerance, obs, bound,
                          excluded or {})
