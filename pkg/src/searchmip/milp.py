"""Thin facade over a mixed-integer linear solver (HiGHS through scipy).

HiGHS exposes no candidate-incumbent callback, so registered lazy-row sources
run in a solve / check-at-incumbent / append / re-solve loop.  That keeps the
same semantics (the final incumbent violates no withheld row and the reported
bound stays valid) at the cost of restarting the tree after each batch.
"""

from __future__ import annotations

import math
import os
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

INTEGRALITY_TOL = 1e-6

#: engines selectable through SEARCHMIP_ENGINE; highs is the only one wired up
SUPPORTED_ENGINES = ("highs",)
ENGINE_ENV_VAR = "SEARCHMIP_ENGINE"

#: a lazy source maps incumbent values to violated rows (cols, coefs, lo, hi)
LazyRow = tuple[list[int], list[float], float, float]
LazySource = Callable[[np.ndarray], list[LazyRow]]


def selected_engine() -> str:
    name = os.environ.get(ENGINE_ENV_VAR, "highs").lower()
    if name not in SUPPORTED_ENGINES:
        raise ModelError(
            f"{ENGINE_ENV_VAR}={name!r} is not a registered engine; supported: {', '.join(SUPPORTED_ENGINES)}"
        )
    return name


class ModelError(ValueError):
    """Malformed model description (bad bounds, NaN/inf coefficients, ...)."""


@dataclass
class SolveControls:
    """Termination parameters mirroring the experimental protocol defaults.

    The absolute gap is pinned to zero so the relative tolerance alone
    decides termination; the engine's nonzero default would otherwise floor
    provable bounds around 1e-6.
    """

    rel_gap: float = 1e-4
    time_limit: float = 900.0
    threads: int = 1
    abs_gap: float = 0.0

    def __post_init__(self):
        if self.rel_gap < 0 or self.abs_gap < 0:
            raise ModelError("gap tolerances must be nonnegative")
        if self.time_limit <= 0:
            raise ModelError("time limit must be positive")


@dataclass
class SolveOutcome:
    status: str  # optimal | feasible_time_limit | infeasible | no_incumbent | unbounded | error
    values: np.ndarray | None
    objective: float | None
    bound: float | None
    rel_gap: float | None
    wall_seconds: float
    message: str = ""
    lazy_rounds: int = 0
    lazy_added: int = 0
    lazy_clean: bool = True
    lazy_history: list = field(default_factory=list)  # per round: objective, bound, rows added

    @property
    def has_incumbent(self) -> bool:
        return self.values is not None


def relative_gap(objective: float | None, bound: float | None) -> float | None:
    """(incumbent - bound) / bound; +inf when the bound is not positive."""
    if objective is None or bound is None:
        return None
    if bound <= 0:
        return math.inf
    return (objective - bound) / bound


class MilpModel:
    """Sparse minimize-objective model with integer/continuous columns."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.obj: list[float] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[bool] = []
        self.col_names: list[str] = []
        self.rows: list[tuple[list[int], list[float]]] = []
        self.row_lo: list[float] = []
        self.row_hi: list[float] = []
        self.row_names: list[str] = []
        self.objective_constant: float = 0.0
        self.lazy_source: LazySource | None = None

    # -- construction ------------------------------------------------------
    def add_variable(
        self,
        lb: float = 0.0,
        ub: float = math.inf,
        *,
        integer: bool = False,
        objective: float = 0.0,
        name: str | None = None,
    ) -> int:
        for v in (lb, ub, objective):
            if math.isnan(v):
                raise ModelError("NaN in variable definition")
        if math.isinf(objective):
            raise ModelError("infinite objective coefficient")
        if lb > ub:
            raise ModelError(f"variable lower bound {lb} above upper bound {ub}")
        self.obj.append(float(objective))
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.integer.append(bool(integer))
        self.col_names.append(name or f"x{len(self.obj) - 1}")
        return len(self.obj) - 1

    def add_binary(self, *, objective: float = 0.0, name: str | None = None) -> int:
        return self.add_variable(0.0, 1.0, integer=True, objective=objective, name=name)

    def add_row(
        self,
        cols: Sequence[int],
        coefs: Sequence[float],
        lo: float,
        hi: float,
        name: str | None = None,
    ) -> int:
        if len(cols) != len(coefs):
            raise ModelError("row index/coefficient length mismatch")
        for c in coefs:
            if math.isnan(c) or math.isinf(c):
                raise ModelError("NaN/inf row coefficient")
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            raise ModelError("malformed row bounds")
        n = len(self.obj)
        for idx in cols:
            if not (0 <= idx < n):
                raise ModelError(f"row references unknown column {idx}")
        self.rows.append((list(map(int, cols)), list(map(float, coefs))))
        self.row_lo.append(float(lo))
        self.row_hi.append(float(hi))
        self.row_names.append(name or f"c{len(self.rows) - 1}")
        return len(self.rows) - 1

    def fix_variable(self, col: int, value: float) -> None:
        self.lb[col] = self.ub[col] = float(value)

    def set_integer(self, col: int, flag: bool) -> None:
        self.integer[col] = bool(flag)

    def clone(self, name: str | None = None) -> "MilpModel":
        other = MilpModel(name or self.name)
        other.obj = list(self.obj)
        other.lb = list(self.lb)
        other.ub = list(self.ub)
        other.integer = list(self.integer)
        other.col_names = list(self.col_names)
        other.rows = [(list(c), list(v)) for c, v in self.rows]
        other.row_lo = list(self.row_lo)
        other.row_hi = list(self.row_hi)
        other.row_names = list(self.row_names)
        other.objective_constant = self.objective_constant
        other.lazy_source = self.lazy_source
        return other

    @property
    def num_variables(self) -> int:
        return len(self.obj)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def integer_columns(self) -> list[int]:
        return [i for i, f in enumerate(self.integer) if f]


def _round_integers(model: MilpModel, values: np.ndarray) -> np.ndarray:
    out = values.copy()
    for i in model.integer_columns():
        snapped = round(out[i])
        if abs(out[i] - snapped) <= INTEGRALITY_TOL:
            out[i] = snapped
    np.clip(out, model.lb, model.ub, out=out)
    return out


_STATUS = {0: "optimal", 1: "feasible_time_limit", 2: "infeasible", 3: "unbounded", 4: "error"}


def _solve_once(model: MilpModel, controls: SolveControls) -> SolveOutcome:
    selected_engine()
    start = time.perf_counter()
    n = model.num_variables
    if n == 0:
        return SolveOutcome("optimal", np.zeros(0), model.objective_constant, model.objective_constant, 0.0, 0.0)
    constraints = []
    if model.rows:
        data, ri, ci = [], [], []
        for r, (cols, coefs) in enumerate(model.rows):
            ri.extend([r] * len(cols))
            ci.extend(cols)
            data.extend(coefs)
        A = sparse.csr_matrix((data, (ri, ci)), shape=(model.num_rows, n))
        constraints.append(LinearConstraint(A, np.array(model.row_lo), np.array(model.row_hi)))
    options = {
        "disp": False,
        "presolve": True,
        "time_limit": max(controls.time_limit, 0.01),
        "mip_rel_gap": controls.rel_gap,
        "mip_abs_gap": controls.abs_gap,
        # default integer slack (1e-6) lets bounds undershoot piecewise-linear
        # envelopes by the same order; keep integers honest to ~1e-9
        "mip_feasibility_tolerance": 1e-9,
    }
    with warnings.catch_warnings():
        # scipy flags pass-through engine options (mip_abs_gap) with a warning
        warnings.filterwarnings("ignore", message="Unrecognized options", category=RuntimeWarning)
        res = milp(
            c=np.array(model.obj),
            constraints=constraints,
            integrality=np.array(model.integer, dtype=np.int64),
            bounds=Bounds(np.array(model.lb), np.array(model.ub)),
            options=options,
        )
    wall = time.perf_counter() - start
    status = _STATUS.get(res.status, "error")
    values = None
    objective = None
    if res.x is not None:
        values = _round_integers(model, np.asarray(res.x, dtype=np.float64))
        objective = float(np.dot(model.obj, values)) + model.objective_constant
    elif status == "feasible_time_limit":
        status = "no_incumbent"
    bound = getattr(res, "mip_dual_bound", None)
    if bound is not None:
        bound = float(bound) + model.objective_constant
    elif status == "optimal" and objective is not None:
        bound = objective  # pure LP: HiGHS reports no MIP bound
    gap = relative_gap(objective, bound)
    return SolveOutcome(status, values, objective, bound, gap, wall, message=str(res.message))


def solve(model: MilpModel, controls: SolveControls | None = None) -> SolveOutcome:
    """Solve the model; when a lazy source is attached, loop until clean.

    Each round solves the current row set, asks the source for rows violated
    at the incumbent, appends them, and re-solves.  A nonempty return thus
    rejects the candidate exactly as a callback would, just less incrementally.
    """
    controls = controls or SolveControls()
    if model.lazy_source is None:
        return _solve_once(model, controls)

    start = time.perf_counter()
    work = model.clone()
    work.lazy_source = None
    rounds = 0
    added = 0
    out = None
    history: list[dict] = []
    while True:
        remaining = controls.time_limit - (time.perf_counter() - start)
        if out is not None and remaining <= 0:
            out = replace(out, status="feasible_time_limit", lazy_clean=False)
            break
        out = _solve_once(work, replace(controls, time_limit=max(remaining, 0.01)))
        if not out.has_incumbent:
            break
        violated = model.lazy_source(out.values)
        history.append(
            {
                "round": rounds,
                "objective": out.objective,
                "bound": out.bound,
                "rows_added": len(violated),
                "at_seconds": time.perf_counter() - start,
            }
        )
        if not violated:
            break
        for cols, coefs, lo, hi in violated:
            work.add_row(cols, coefs, lo, hi)
        added += len(violated)
        rounds += 1
    wall = time.perf_counter() - start
    return replace(out, wall_seconds=wall, lazy_rounds=rounds, lazy_added=added, lazy_history=history)


def write_lp(model: MilpModel, path) -> None:
    """Dump the model as LP-format text with 17 significant digits."""

    def num(v: float) -> str:
        return f"{v:.17g}"

    def terms(cols, coefs) -> str:
        parts = []
        for c, v in zip(cols, coefs):
            sign = "-" if v < 0 else "+"
            parts.append(f"{sign} {num(abs(v))} {model.col_names[c]}")
        text = " ".join(parts) if parts else "0 " + (model.col_names[0] if model.col_names else "x0")
        return text.lstrip("+ ")

    lines = [f"\\ {model.name}", "Minimize"]
    obj_cols = [i for i, v in enumerate(model.obj) if v]
    lines.append(" obj: " + terms(obj_cols, [model.obj[i] for i in obj_cols]))
    lines.append("Subject To")
    for r, (cols, coefs) in enumerate(model.rows):
        lo, hi = model.row_lo[r], model.row_hi[r]
        name = model.row_names[r]
        body = terms(cols, coefs)
        if lo == hi:
            lines.append(f" {name}: {body} = {num(lo)}")
        else:
            if hi != math.inf:
                lines.append(f" {name}_u: {body} <= {num(hi)}")
            if lo != -math.inf:
                lines.append(f" {name}_l: {body} >= {num(lo)}")
    lines.append("Bounds")
    for i in range(model.num_variables):
        lo, ub = model.lb[i], model.ub[i]
        nm = model.col_names[i]
        if lo == -math.inf and ub == math.inf:
            lines.append(f" {nm} free")
        else:
            left = "-inf" if lo == -math.inf else num(lo)
            right = "+inf" if ub == math.inf else num(ub)
            lines.append(f" {left} <= {nm} <= {right}")
    generals = [model.col_names[i] for i in model.integer_columns()]
    if generals:
        lines.append("Generals")
        lines.extend(" " + g for g in generals)
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
