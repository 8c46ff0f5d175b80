"""Monte-Carlo sweeps over problem dimensions, CSV persistence and threshold fits.

A sweep is a grid of cells (one value per swept parameter), each run for
``trials`` independent trials. Trial seeds are derived from the base seed,
the resolved cell coordinates and the trial index, so a row does not depend
on which worker ran it or when.

Rows are written in canonical (cell, trial) order: completed trials wait in
a reorder buffer until every earlier trial has been written. An interrupted
sweep therefore always leaves a prefix of the full CSV, and ``resume``
continues it to the same bytes an uninterrupted run produces.
"""
import csv
import io
import itertools
import json
import math
import os
import re
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .metrics import SUCCESS_THRESHOLD
from .model import MODES, ProblemConfig, derive_seed
from .pipeline import TrialOptions, run_trial

CSV_COLUMNS = (
    "experiment_id", "mode", "L", "K", "N", "S", "R", "tau", "trial", "seed",
    "matrix_resid_max", "matrix_err_max", "transform_converged", "transform_resid",
    "max_vec_err", "avg_vec_err", "success", "failure_category", "wall_ms",
)
AXIS_NAMES = ("L", "K", "N", "S", "R", "tau")

_R_RULE = re.compile(r"^\s*(?:(\d+)\s*\*?\s*)?S\s*(?:([+-])\s*(\d+))?\s*$")


def resolve_R(rule, S):
    """Receiver count from an int or a rule such as ``"S"``, ``"S+1"``, ``"2S"``."""
    if isinstance(rule, (int, np.integer)) and not isinstance(rule, bool):
        return int(rule)
    text = str(rule)
    if text.strip().isdigit():
        return int(text)
    m = _R_RULE.match(text)
    if not m:
        raise ConfigurationError(f"cannot parse receiver rule {rule!r}")
    mult = int(m.group(1)) if m.group(1) else 1
    off = int(m.group(3)) if m.group(3) else 0
    if m.group(2) == "-":
        off = -off
    return mult * int(S) + off


@dataclass
class SweepConfig:
    """A grid of problem dimensions plus run settings.

    ``axes`` maps parameter names (L, K, N, S, R, tau) to value lists and
    ``fixed`` holds the remaining ones. R values may be rules like "S+1".
    Wall time goes to the CSV only when ``record_wall_time`` is set, since
    timings would otherwise break byte-for-byte reproducibility.
    """

    experiment_id: str
    mode: str = "two_sided"
    axes: dict = field(default_factory=dict)
    fixed: dict = field(default_factory=dict)
    trials: int = 10
    base_seed: int = 0
    threshold: float = SUCCESS_THRESHOLD
    output: str = None
    jobs: int = None
    record_wall_time: bool = False
    solver: dict = field(default_factory=dict)
    long_running: bool = False

    def __post_init__(self):
        if not self.experiment_id:
            raise ConfigurationError("experiment_id must be non-empty")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")
        if not self.axes:
            raise ConfigurationError("at least one axis is required")
        for name, values in self.axes.items():
            if name not in AXIS_NAMES:
                raise ConfigurationError(f"unknown axis {name!r}")
            if not isinstance(values, (list, tuple)) or len(values) == 0:
                raise ConfigurationError(f"axis {name!r} must be a non-empty list")
        for name in self.fixed:
            if name not in AXIS_NAMES:
                raise ConfigurationError(f"unknown fixed parameter {name!r}")
            if name in self.axes:
                raise ConfigurationError(f"{name!r} is both swept and fixed")
        missing = [n for n in ("L", "K", "N", "S") if n not in self.axes and n not in self.fixed]
        if missing:
            raise ConfigurationError(f"parameters without a value: {missing}")
        if int(self.trials) < 1:
            raise ConfigurationError("trials must be >= 1")
        if not self.threshold > 0:
            raise ConfigurationError("threshold must be positive")
        if self.jobs is not None and int(self.jobs) < 1:
            raise ConfigurationError("jobs must be >= 1")
        unknown = set(self.solver) - {"matrix", "transform", "rank_slack", "r0", "oracle_restarts", "random_basis"}
        if unknown:
            raise ConfigurationError(f"unknown solver options {sorted(unknown)}")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)

    def cells(self):
        """Resolved cell parameter dicts in canonical (row-major axes) order."""
        names = list(self.axes)
        out = []
        for combo in itertools.product(*(self.axes[n] for n in names)):
            p = {"R": "S", "tau": 0.0}
            p.update(self.fixed)
            p.update(zip(names, combo))
            cell = {n: int(p[n]) for n in ("L", "K", "N", "S")}
            cell["R"] = resolve_R(p["R"], cell["S"])
            cell["tau"] = float(p["tau"])
            out.append(cell)
        return out

    def problem(self, cell):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return ProblemConfig(mode=self.mode, **cell)

    def trial_options(self):
        opts = dict(self.solver)
        return TrialOptions(threshold=self.threshold, **opts)


def trial_seed(base_seed, mode, cell, trial):
    coords = [mode] + [f"{n}={cell[n]!r}" for n in AXIS_NAMES]
    return derive_seed(base_seed, *coords, trial)


def _fmt_float(x):
    return repr(float(x))


def record_to_row(experiment_id, rec, record_wall_time=False):
    """CSV row (list of strings) for a TrialRecord."""
    return [
        experiment_id, rec.mode, str(rec.L), str(rec.K), str(rec.N), str(rec.S), str(rec.R),
        _fmt_float(rec.tau), str(rec.trial), str(rec.seed),
        _fmt_float(rec.matrix_resid_max), _fmt_float(rec.matrix_err_max),
        "true" if rec.transform_converged else "false", _fmt_float(rec.transform_resid),
        _fmt_float(rec.max_vec_err), _fmt_float(rec.avg_vec_err),
        "true" if rec.success else "false", rec.failure_category,
        _fmt_float(round(rec.wall_ms, 3) if record_wall_time else 0.0),
    ]


def _row_key(row):
    d = dict(zip(CSV_COLUMNS, row))
    return (
        d["experiment_id"], d["mode"], int(d["L"]), int(d["K"]), int(d["N"]), int(d["S"]),
        int(d["R"]), float(d["tau"]), int(d["trial"]),
    )


def _task_key(sweep, cell, trial):
    return (
        sweep.experiment_id, sweep.mode, cell["L"], cell["K"], cell["N"], cell["S"],
        cell["R"], cell["tau"], trial,
    )


def _line(row):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(row)
    return buf.getvalue()


def _read_existing(path):
    """Complete rows of an existing CSV; a truncated last line is cut off the file."""
    with open(path, "r", newline="") as fh:
        text = fh.read()
    if not text:
        return []
    if not text.endswith("\n"):
        text = text[: text.rfind("\n") + 1]
        with open(path, "w", newline="") as fh:
            fh.write(text)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return []
    if tuple(rows[0]) != CSV_COLUMNS:
        raise ConfigurationError(f"{path} does not have the expected CSV header")
    good = [r for r in rows[1:] if len(r) == len(CSV_COLUMNS)]
    return good


def _run_task(args):
    cfg, seed, trial, options = args
    return run_trial(cfg, seed=seed, trial=trial, options=options)


def default_jobs():
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


@dataclass
class CellSummary:
    coords: dict
    n: int
    successes: int
    fraction: float
    mean_max_err: float
    mean_avg_err: float
    mean_wall_ms: float
    failures: dict


@dataclass
class SweepResult:
    """Per-cell statistics of a sweep, in canonical cell order."""

    experiment_id: str
    mode: str
    axes: tuple
    cells: list
    records: list = field(default_factory=list, repr=False)

    def fractions(self):
        return np.array([c.fraction for c in self.cells])

    def cell(self, **coords):
        for c in self.cells:
            if all(c.coords[k] == v for k, v in coords.items()):
                return c
        raise KeyError(coords)

    @classmethod
    def from_rows(cls, rows, axes=None):
        """Summaries from CSV-style dict rows (strings or native values)."""
        groups = {}
        meta = None
        for row in rows:
            coords = {n: (float(row[n]) if n == "tau" else int(row[n])) for n in AXIS_NAMES}
            key = tuple(coords[n] for n in AXIS_NAMES)
            groups.setdefault(key, (coords, []))[1].append(row)
            meta = meta or (row["experiment_id"], row["mode"])
        cells = []
        for coords, grp in groups.values():
            succ = [_parse_bool(r["success"]) for r in grp]
            max_err = np.array([float(r["max_vec_err"]) for r in grp])
            avg_err = np.array([float(r["avg_vec_err"]) for r in grp])
            wall = np.array([float(r["wall_ms"]) for r in grp])
            failures = {}
            for r in grp:
                failures[r["failure_category"]] = failures.get(r["failure_category"], 0) + 1
            finite = np.isfinite(max_err)
            cells.append(CellSummary(
                coords=coords,
                n=len(grp),
                successes=int(sum(succ)),
                fraction=sum(succ) / len(grp),
                mean_max_err=float(max_err[finite].mean()) if finite.any() else float("inf"),
                mean_avg_err=float(avg_err[finite].mean()) if finite.any() else float("inf"),
                mean_wall_ms=float(wall.mean()),
                failures=failures,
            ))
        if axes is None:
            axes = tuple(n for n in AXIS_NAMES if len({c.coords[n] for c in cells}) > 1)
        exp_id, mode = meta if meta else ("", "")
        return cls(experiment_id=exp_id, mode=mode, axes=tuple(axes), cells=cells)


def _parse_bool(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    return str(v).strip().lower() in ("true", "1")


def load_csv(path):
    """Rows of a sweep CSV as dicts of strings."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ConfigurationError(f"{path} does not have the expected CSV header")
        return list(reader)


def run_sweep(sweep, output=None, resume=False, jobs=None, progress=None):
    """Run every (cell, trial) of ``sweep`` and return a :class:`SweepResult`.

    ``output`` (or ``sweep.output``) names the CSV; with ``resume`` rows
    already present are kept and skipped. ``jobs`` > 1 spreads trials over
    worker processes. ``progress`` is called with each written record.
    """
    output = output if output is not None else sweep.output
    jobs = int(jobs or sweep.jobs or default_jobs())
    cells = sweep.cells()
    problems = [sweep.problem(c) for c in cells]  # validates the whole grid up front
    options = sweep.trial_options()

    existing = {}
    fh = None
    if output is not None:
        path = Path(output)
        if resume and path.exists():
            for row in _read_existing(path):
                existing[_row_key(row)] = row
            fh = open(path, "a", newline="")
            if path.stat().st_size == 0:
                fh.write(_line(CSV_COLUMNS))
        else:
            fh = open(path, "w", newline="")
            fh.write(_line(CSV_COLUMNS))
        fh.flush()

    tasks = []
    for cell, cfg in zip(cells, problems):
        for t in range(int(sweep.trials)):
            seed = trial_seed(sweep.base_seed, sweep.mode, cell, t)
            tasks.append((_task_key(sweep, cell, t), (cfg, seed, t, options)))

    summary_rows = []
    records = []
    try:
        pending = [(i, key, args) for i, (key, args) in enumerate(tasks) if key not in existing]
        done = {}
        next_out = 0
        order = [key for key, _ in tasks]

        def flush():
            nonlocal next_out
            while next_out < len(order):
                key = order[next_out]
                if key in existing:
                    summary_rows.append(dict(zip(CSV_COLUMNS, existing[key])))
                elif next_out in done:
                    rec = done.pop(next_out)
                    row = record_to_row(sweep.experiment_id, rec, sweep.record_wall_time)
                    # the summary keeps measured timings even when the CSV omits them
                    summary_rows.append(dict(zip(CSV_COLUMNS, record_to_row(sweep.experiment_id, rec, True))))
                    records.append(rec)
                    if fh is not None:
                        fh.write(_line(row))
                        fh.flush()
                    if progress is not None:
                        progress(rec)
                else:
                    break
                next_out += 1

        flush()
        if jobs <= 1 or len(pending) <= 1:
            for i, _, args in pending:
                done[i] = _run_task(args)
                flush()
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = {pool.submit(_run_task, args): i for i, _, args in pending}
                for fut in as_completed(futures):
                    done[futures[fut]] = fut.result()
                    flush()
        flush()
    finally:
        if fh is not None:
            fh.close()

    result = SweepResult.from_rows(summary_rows, axes=tuple(sweep.axes))
    result.experiment_id = sweep.experiment_id
    result.mode = sweep.mode
    result.records = records
    return result


@dataclass
class ThresholdFit:
    axis: str
    slice_by: tuple
    level: float
    thresholds: dict  # slice value -> threshold or None
    slope: float = float("nan")
    intercept: float = float("nan")
    r2: float = float("nan")

    def present(self):
        return {k: v for k, v in self.thresholds.items() if v is not None}

    def strictly_increasing(self):
        vals = [self.thresholds[k] for k in sorted(self.thresholds)]
        if any(v is None for v in vals):
            return False
        return all(b > a for a, b in zip(vals, vals[1:]))


def sustained_threshold(values, fractions, level=0.9):
    """Smallest value whose fraction, and every larger value's, is >= level."""
    order = np.argsort(values)
    v = np.asarray(values, dtype=float)[order]
    f = np.asarray(fractions, dtype=float)[order]
    found = None
    for i in range(len(v) - 1, -1, -1):
        if f[i] >= level:
            found = v[i]
        else:
            break
    return found


def linear_fit(x, y):
    """Least-squares line ``y = slope * x + intercept`` and its R^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        return float("nan"), float("nan"), float("nan")
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return float(slope), float(intercept), r2


def _default_slices(result, axis):
    """Swept axes other than ``axis``, minus any that a kept axis determines.

    With ``R = S + 1`` swept alongside S, R adds no information and slicing
    by S alone keeps the threshold fit one-dimensional.
    """
    kept = []
    for a in result.axes:
        if a == axis:
            continue
        determined = False
        for k in kept:
            seen = {}
            for c in result.cells:
                seen.setdefault(c.coords[k], set()).add(c.coords[a])
            if all(len(v) == 1 for v in seen.values()):
                determined = True
                break
        if not determined:
            kept.append(a)
    return tuple(kept)


def detect_threshold(result, axis="L", level=0.9, slice_by=None):
    """Per-slice sustained-success thresholds along ``axis`` plus a linear fit.

    Slices are the distinct combinations of the other swept parameters
    (``slice_by`` overrides which). The fit regresses thresholds on the
    slice parameter and needs a single numeric slice parameter.
    """
    if slice_by is None:
        slice_by = _default_slices(result, axis)
    elif isinstance(slice_by, str):
        slice_by = (slice_by,)
    if axis not in AXIS_NAMES:
        raise ConfigurationError(f"unknown axis {axis!r}")
    groups = {}
    for c in result.cells:
        key = tuple(c.coords[s] for s in slice_by)
        groups.setdefault(key, []).append(c)
    thresholds = {}
    for key, cells in groups.items():
        label = key[0] if len(key) == 1 else key
        t = sustained_threshold([c.coords[axis] for c in cells], [c.fraction for c in cells], level)
        thresholds[label] = None if t is None else (int(t) if float(t).is_integer() else float(t))
    fit = ThresholdFit(axis=axis, slice_by=tuple(slice_by), level=level, thresholds=thresholds)
    present = fit.present()
    if len(slice_by) == 1 and len(present) >= 2:
        xs = sorted(present)
        fit.slope, fit.intercept, fit.r2 = linear_fit(xs, [present[x] for x in xs])
    return fit


def monotonicity_violations(result, axis="L", slice_by=None):
    """Drops of the success fraction along ``axis`` within each slice.

    Returns ``{slice: [drop, ...]}`` with the size of every decrease.
    """
    if slice_by is None:
        slice_by = _default_slices(result, axis)
    groups = {}
    for c in result.cells:
        groups.setdefault(tuple(c.coords[s] for s in slice_by), []).append(c)
    out = {}
    for key, cells in groups.items():
        cells = sorted(cells, key=lambda c: c.coords[axis])
        f = [c.fraction for c in cells]
        out[key[0] if len(key) == 1 else key] = [a - b for a, b in zip(f, f[1:]) if b < a]
    return out


def is_statistically_monotone(result, axis="L", slice_by=None, max_inversions=1, max_drop=0.2):
    """At most ``max_inversions`` drops per slice, each no larger than ``max_drop``."""
    for drops in monotonicity_violations(result, axis, slice_by).values():
        if len(drops) > max_inversions or any(d > max_drop + 1e-12 for d in drops):
            return False
    return True


_SHADES = " .:-=+*#%@"


def format_report(result, axis="L", level=0.9):
    """Text report: per-cell table, ASCII heatmap and threshold fit."""
    lines = [f"experiment {result.experiment_id} ({result.mode})", ""]
    head = f"{'L':>5} {'K':>4} {'N':>4} {'S':>3} {'R':>3} {'tau':>9} {'n':>4} {'frac':>5} {'mean_max_err':>12}  failures"
    lines.append(head)
    for c in result.cells:
        k = c.coords
        fails = ", ".join(f"{name}={cnt}" for name, cnt in sorted(c.failures.items()) if name != "none")
        lines.append(
            f"{k['L']:>5} {k['K']:>4} {k['N']:>4} {k['S']:>3} {k['R']:>3} {k['tau']:>9.3g} "
            f"{c.n:>4} {c.fraction:>5.2f} {c.mean_max_err:>12.3e}  {fails}"
        )
    others = list(_default_slices(result, axis))
    if axis in result.axes and len(others) == 1:
        other = others[0]
        xs = sorted({c.coords[axis] for c in result.cells})
        ys = sorted({c.coords[other] for c in result.cells})
        grid = {(c.coords[other], c.coords[axis]): c.fraction for c in result.cells}
        lines += ["", f"success fraction heatmap ({other} rows, {axis} columns; ' '=0 .. '@'=1)"]
        width = max(len(str(x)) for x in xs)
        for y in reversed(ys):
            cells = []
            for x in xs:
                f = grid.get((y, x))
                ch = "?" if f is None else _SHADES[min(int(f * (len(_SHADES) - 1) + 0.5), len(_SHADES) - 1)]
                cells.append(ch * width)
            lines.append(f"{other}={y!s:>4} |" + " ".join(cells) + "|")
        lines.append(" " * (len(other) + 6) + " ".join(f"{x!s:>{width}}" for x in xs))
    if axis in result.axes:
        fit = detect_threshold(result, axis=axis, level=level)
        lines += ["", f"thresholds along {axis} (sustained fraction >= {level}):"]
        for key in sorted(fit.thresholds, key=str):
            t = fit.thresholds[key]
            lines.append(f"  {'/'.join(fit.slice_by) or '-'}={key}: {axis}* = {'absent' if t is None else t}")
        if not math.isnan(fit.r2):
            lines.append(f"  linear fit: {axis}* = {fit.slope:.3f} * {fit.slice_by[0]} {'-' if fit.intercept < 0 else '+'} {abs(fit.intercept):.3f}, R^2 = {fit.r2:.4f}")
    return "\n".join(lines)
