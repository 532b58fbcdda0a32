"""Monte-Carlo power studies over deviation exponents and neighbor schedules.

A plan fixes a parametric family, a base parameter ``theta1`` and a
direction ``h``. Each cell of the grid pairs a deviation exponent ``b`` with
a neighbor count and compares ``f = p(. | theta1)`` against
``g = p(. | theta1 + h N^b)`` over independent Poissonized replicates.

Every replicate draws from its own stream keyed by (seed, schedule index,
b index, replicate), so results do not depend on how work is split across
processes.
"""

from __future__ import annotations

import csv
import math
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from .errors import NumericalError, DegenerateInputError, ValidationError
from .graph import build_knn_graph
from .sampling import SampleDesign, SphericalNormalFamily, replicate_rng, sample_poissonized
from .statistic import TestConfig, run_test
from .theory import (
    PowerPrediction,
    classify_regime,
    family_coefficients,
    predicted_power_one_sided,
    predicted_power_two_sided,
)

__all__ = [
    "FAMILIES",
    "make_family",
    "ExperimentPlan",
    "plan_values",
    "parse_plan",
    "load_plan",
    "TrialResult",
    "run_single_trial",
    "PowerEstimate",
    "PowerSurface",
    "estimate_power",
    "ComparisonRow",
    "predict_surface",
    "compare_empirical_vs_predicted",
    "CSV_HEADER",
    "emit_csv",
    "read_power_csv",
]

FAMILIES: dict[str, Callable] = {"sph-normal": SphericalNormalFamily}


def make_family(name: str, d: int):
    try:
        return FAMILIES[name](d)
    except KeyError:
        raise ValidationError(f"unknown family {name!r}; known: {sorted(FAMILIES)}") from None


def _tuple(values, cast=float):
    if values is None:
        return None
    if np.isscalar(values):
        values = [values]
    return tuple(cast(v) for v in values)


@dataclass(frozen=True)
class ExperimentPlan:
    """One grid of power experiments.

    Exactly one of ``k_values`` and ``delta_values`` is given; with
    ``delta_values`` the neighbor count is ``max(1, round(N^delta))`` where
    ``N = n1 + n2``.
    """

    d: int
    n1: int
    n2: int
    b_values: tuple
    k_values: Optional[tuple] = None
    delta_values: Optional[tuple] = None
    family: str = "sph-normal"
    theta1: tuple = (20.0,)
    h: tuple = (19.0,)
    alpha: float = 0.1
    sides: tuple = ("one", "two")
    replicates: int = 500
    seed: int = 0

    def __post_init__(self):
        set_ = lambda name, v: object.__setattr__(self, name, v)  # noqa: E731
        set_("b_values", _tuple(self.b_values))
        set_("theta1", _tuple(self.theta1))
        set_("h", _tuple(self.h))
        set_("k_values", _tuple(self.k_values, int) if self.k_values is not None else None)
        set_("delta_values", _tuple(self.delta_values))
        set_("sides", tuple(TestConfig(1, 0.5, s).side for s in _tuple(self.sides, str)))
        if (self.k_values is None) == (self.delta_values is None):
            raise ValidationError("give exactly one of k_values and delta_values")
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise ValidationError("replicates must be a positive integer")
        if self.k_values is not None and any(k < 1 for k in self.k_values):
            raise ValidationError("all k must be >= 1")
        if self.delta_values is not None and any(not 0 <= x < 1 for x in self.delta_values):
            raise ValidationError("delta values must lie in [0, 1)")
        if not self.b_values or any(not -1 < b < 0 for b in self.b_values):
            raise ValidationError("b values must lie in (-1, 0)")
        for name in ("b_values", "k_values", "delta_values", "sides"):
            vals = getattr(self, name)
            if vals is not None and len(set(vals)) != len(vals):
                raise ValidationError(f"{name} contains duplicates")
        if not self.sides:
            raise ValidationError("at least one side is required")
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        self.design  # validates n1, n2
        fam = make_family(self.family, self.d)
        fam.check_theta(self.theta1)
        if len(self.h) != fam.param_dim:
            raise ValidationError(f"h must have {fam.param_dim} components")

    @property
    def design(self) -> SampleDesign:
        return SampleDesign(self.n1, self.n2)

    @property
    def schedule(self) -> tuple:
        return self.k_values if self.k_values is not None else self.delta_values

    def k_at(self, j: int) -> int:
        if self.k_values is not None:
            return self.k_values[j]
        return max(1, round(self.design.n ** self.delta_values[j]))

    def theta_at(self, b: float) -> np.ndarray:
        return np.asarray(self.theta1) + np.asarray(self.h) * self.design.n ** b

    def cells(self):
        """``(schedule index, b index)`` pairs in output order."""
        order_s = sorted(range(len(self.schedule)), key=lambda j: self.schedule[j])
        order_b = sorted(range(len(self.b_values)), key=lambda i: self.b_values[i])
        return [(j, i) for j in order_s for i in order_b]


# -- plan files ------------------------------------------------------------

_KEYS = {
    "family": "family", "theta1": "theta1", "theta": "theta1", "h": "h",
    "b": "b_values", "b_values": "b_values", "k": "k_values", "k_values": "k_values",
    "delta": "delta_values", "delta_values": "delta_values", "n1": "n1", "n2": "n2",
    "d": "d", "alpha": "alpha", "sides": "sides", "side": "sides",
    "replicates": "replicates", "reps": "replicates", "seed": "seed",
}
_SCALAR = {"family": str, "n1": int, "n2": int, "d": int, "alpha": float,
           "replicates": int, "seed": int}
_LINSPACE = re.compile(r"^linspace\(\s*([^,]+),\s*([^,]+),\s*([^,)]+)\)$")


def _parse_number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_value(text: str):
    """A scalar, ``a, b, c``, ``[a, b, c]`` or ``linspace(lo, hi, n)``."""
    text = text.strip()
    m = _LINSPACE.match(text)
    if m:
        lo, hi, n = float(m.group(1)), float(m.group(2)), int(m.group(3))
        return [float(v) for v in np.linspace(lo, hi, n)]
    if text.startswith("[") and text.endswith("]"):
        text = text[1:-1]
    parts = [p.strip() for p in text.split(",") if p.strip()]
    out = []
    for part in parts:
        try:
            out.append(_parse_number(part))
        except ValueError:
            out.append(part)
    return out[0] if len(out) == 1 and "," not in text else out


def plan_values(text: str) -> dict:
    """Raw ``key = value`` pairs of a plan file, keyed by plan field name."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ValidationError(f"line {lineno}: unknown key {key!r}")
        raw[_KEYS[key]] = parse_value(value)
    return raw


def parse_plan(text: str, overrides: Optional[Mapping] = None) -> ExperimentPlan:
    """Build a plan from ``key = value`` lines; ``overrides`` win over the file."""
    raw = plan_values(text)
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[_KEYS.get(key, key)] = value
    kwargs = {}
    for name, value in raw.items():
        if name in _SCALAR:
            if isinstance(value, list):
                raise ValidationError(f"{name} takes a single value")
            try:
                kwargs[name] = _SCALAR[name](value)
            except (TypeError, ValueError):
                raise ValidationError(f"bad value for {name}: {value!r}") from None
        else:
            kwargs[name] = value
    missing = {"d", "n1", "n2", "b_values"} - kwargs.keys()
    if missing:
        raise ValidationError(f"plan is missing {sorted(missing)}")
    try:
        return ExperimentPlan(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(str(exc)) from None


def load_plan(path, overrides=None) -> ExperimentPlan:
    with open(path) as fh:
        return parse_plan(fh.read(), overrides)


# -- trials ----------------------------------------------------------------


@dataclass(frozen=True)
class TrialResult:
    """Decisions of one replicate, or the reason it failed."""

    rejects: Optional[dict]
    error: Optional[str] = None
    seconds: float = 0.0

    @property
    def failed(self) -> bool:
        return self.rejects is None


def run_single_trial(plan: ExperimentPlan, cell: tuple, replicate: int) -> TrialResult:
    """Sample one dataset for ``cell = (schedule index, b index)`` and test it."""
    j, i = cell
    start = time.perf_counter()
    rng = replicate_rng(plan.seed, j, i, replicate)
    fam = make_family(plan.family, plan.d)
    k = plan.k_at(j)
    try:
        f = fam.at(plan.theta1)
        g = fam.at(plan.theta_at(plan.b_values[i]))
        labeled = sample_poissonized(plan.design, f, g, rng)
        graph = build_knn_graph(labeled.cloud, k)
        rejects = {}
        for side in plan.sides:
            out = run_test(labeled, TestConfig(k, plan.alpha, side), graph)
            if out.decision is None:
                raise DegenerateInputError(f"no decision with {len(labeled)} points")
            rejects[side] = bool(out.decision)
    except (NumericalError, DegenerateInputError) as exc:
        return TrialResult(None, f"{type(exc).__name__}: {exc}", time.perf_counter() - start)
    return TrialResult(rejects, None, time.perf_counter() - start)


@dataclass(frozen=True)
class PowerEstimate:
    """Rejection frequency with a 95% Wilson score interval."""

    rejects: int
    reps: int
    failures: int = 0
    mean_runtime: float = field(default=0.0, compare=False)

    @property
    def power(self) -> float:
        return self.rejects / self.reps if self.reps else math.nan

    @property
    def ci(self) -> tuple:
        if not self.reps:
            return 0.0, 1.0
        lo, hi = proportion_confint(self.rejects, self.reps, alpha=0.05, method="wilson")
        # clip rounding so the interval always contains the estimate
        return float(min(lo, self.power)), float(max(hi, self.power))


@dataclass(frozen=True)
class PowerSurface:
    """Power estimates over ``sides x schedule x b``.

    ``cells[(side, schedule_value, b)]`` holds a :class:`PowerEstimate`.
    ``schedule_kind`` is ``"k"`` or ``"delta"``.
    """

    d: int
    n1: int
    n2: int
    h: tuple
    alpha: float
    seed: int
    schedule_kind: str
    schedule: tuple
    b_values: tuple
    sides: tuple
    cells: dict

    def __post_init__(self):
        want = {(s, x, b) for s in self.sides for x in self.schedule for b in self.b_values}
        if set(self.cells) != want:
            raise ValidationError("power surface grid is incomplete")

    def k_for(self, x) -> int:
        if self.schedule_kind == "k":
            return int(x)
        return max(1, round((self.n1 + self.n2) ** x))

    def keys(self):
        """Cell keys ordered by side, schedule value, then b."""
        return sorted(self.cells, key=lambda c: (c[0], c[1], c[2]))


def _run_cell_chunk(args):
    plan, cell, reps = args
    return cell, [run_single_trial(plan, cell, r) for r in reps]


def _default_threads() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def estimate_power(plan: ExperimentPlan, threads: Optional[int] = None,
                   progress: bool = False, chunk: int = 10) -> PowerSurface:
    """Run every replicate of every cell and reduce in a fixed order."""
    threads = threads or _default_threads()
    tasks = [(plan, cell, range(s, min(s + chunk, plan.replicates)))
             for cell in plan.cells() for s in range(0, plan.replicates, chunk)]
    results: dict = {}
    total = len(tasks)

    def collect(done, item):
        cell, trials = item
        results.setdefault(cell, []).extend(trials)
        if progress:
            print(f"[power] {done}/{total} chunks", file=sys.stderr, flush=True)

    if threads <= 1 or total <= 1:
        for n, task in enumerate(tasks, 1):
            collect(n, _run_cell_chunk(task))
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for n, item in enumerate(pool.map(_run_cell_chunk, tasks), 1):
                collect(n, item)

    cells = {}
    for (j, i), trials in results.items():
        # chunks arrive in submission order, so trials are in replicate order
        ok = [t for t in trials if not t.failed]
        runtime = sum(t.seconds for t in trials) / len(trials)
        x = plan.schedule[j]
        b = plan.b_values[i]
        for side in plan.sides:
            rej = sum(t.rejects[side] for t in ok)
            cells[(side, x, b)] = PowerEstimate(rej, len(ok), len(trials) - len(ok), runtime)
        if progress and len(ok) < len(trials):
            print(f"[power] cell k/delta={x} b={b}: {len(trials) - len(ok)} failed replicates",
                  file=sys.stderr)
    kind = "k" if plan.k_values is not None else "delta"
    return PowerSurface(plan.d, plan.n1, plan.n2, plan.h, plan.alpha, plan.seed, kind,
                        tuple(sorted(set(plan.schedule))), tuple(sorted(set(plan.b_values))),
                        tuple(sorted(set(plan.sides))), cells)


# -- theory comparison -----------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    side: str
    k: int
    b: float
    empirical: float
    ci_lo: float
    ci_hi: float
    predicted: Optional[float]
    label: str
    gap: Optional[float]
    consistent: Optional[bool]


def predict_surface(surface: PowerSurface, family, theta1, h, p: float,
                    beta: Optional[float] = None, coeffs=None) -> dict:
    """Limiting-power predictions for every cell of ``surface``.

    The neighbor schedule enters through ``gamma = delta`` for delta grids
    and ``gamma = log k / log N`` for explicit k lists.
    """
    if coeffs is None:
        coeffs = family_coefficients(family, theta1, h, p)
    n = surface.n1 + surface.n2
    out = {}
    for side, x, b in surface.keys():
        gamma = x if surface.schedule_kind == "delta" else math.log(x) / math.log(n)
        report = classify_regime(surface.d, gamma, b)
        predict = predicted_power_one_sided if side != "two" else predicted_power_two_sided
        out[(side, x, b)] = predict(coeffs, report, surface.alpha, beta)
    return out


def _consistent(pred: PowerPrediction, est: PowerEstimate, alpha: float) -> Optional[bool]:
    if pred.value is None:
        return None
    lo, hi = est.ci
    if pred.label == "1":
        return est.power >= 0.8
    if pred.label == "0":
        return est.power <= 0.2
    return lo <= pred.value <= hi


def compare_empirical_vs_predicted(surface: PowerSurface, predictions: Mapping) -> list:
    """Join predictions onto the grid; rows follow :meth:`PowerSurface.keys`.

    Cells predicted to have power 1 (or 0) are flagged consistent when the
    empirical power is at least 0.8 (at most 0.2); other predictions must
    fall inside the empirical score interval.
    """
    if not predictions:
        raise ValidationError("no theory predictions given")
    if set(predictions) != set(surface.cells):
        raise ValidationError("prediction grid does not match the power surface")
    rows = []
    for key in surface.keys():
        est = surface.cells[key]
        pred = predictions[key]
        if not isinstance(pred, PowerPrediction):
            pred = PowerPrediction(float(pred), f"{float(pred):.6g}", "given")
        lo, hi = est.ci
        gap = None if pred.value is None else abs(est.power - pred.value)
        rows.append(ComparisonRow(key[0], surface.k_for(key[1]), key[2], est.power, lo, hi,
                                  pred.value, pred.label, gap,
                                  _consistent(pred, est, surface.alpha)))
    return rows


# -- CSV -------------------------------------------------------------------

CSV_HEADER = ("side", "d", "N1", "N2", "k", "delta", "b", "h", "alpha", "reps",
              "rejects", "power", "ci_lo", "ci_hi", "seed")


def _fmt(x) -> str:
    return repr(float(x))


def emit_csv(surface: PowerSurface, path) -> None:
    """Write one row per cell in the order of :meth:`PowerSurface.keys`.

    ``path`` may also be an open text stream.
    """
    if hasattr(path, "write"):
        _write_rows(surface, path)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(surface, fh)


def _write_rows(surface, fh):
    h = ";".join(_fmt(v) for v in surface.h)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for side, x, b in surface.keys():
        est = surface.cells[(side, x, b)]
        lo, hi = est.ci
        delta = _fmt(x) if surface.schedule_kind == "delta" else ""
        w.writerow([side, surface.d, surface.n1, surface.n2, surface.k_for(x), delta,
                    _fmt(b), h, _fmt(surface.alpha), est.reps, est.rejects,
                    _fmt(est.power), _fmt(lo), _fmt(hi), surface.seed])


def read_power_csv(path) -> PowerSurface:
    """Parse a file written by :func:`emit_csv` back into a surface.

    Failure counts and runtimes are not stored in the file and come back
    as zero.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            raise ValidationError(f"{path}: unexpected header {header}")
        rows = [dict(zip(CSV_HEADER, r)) for r in reader if r]
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    first = rows[0]
    kind = "delta" if first["delta"] else "k"
    cells = {}
    for r in rows:
        x = float(r["delta"]) if kind == "delta" else int(r["k"])
        cells[(r["side"], x, float(r["b"]))] = PowerEstimate(int(r["rejects"]), int(r["reps"]))
    return PowerSurface(int(first["d"]), int(first["N1"]), int(first["N2"]),
                        tuple(float(v) for v in first["h"].split(";")), float(first["alpha"]),
                        int(first["seed"]), kind,
                        tuple(sorted({c[1] for c in cells})), tuple(sorted({c[2] for c in cells})),
                        tuple(sorted({c[0] for c in cells})), cells)
