"""Instance documents, plan text, and run artifacts.

Instance files are JSON with a mandatory ``version`` field and sections
``motion``, ``classes``, ``detection``, ``limits``, ``target``.  Counts are
integers, probabilities decimal reals.  Plan files list one searcher per
line with one token per period (t = 1..T): ``s+``/``s-`` for the start and
terminal states, ``(row,col)`` on grid instances, a bare state index
otherwise, and ``*`` for periods in transit.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re

import numpy as np

from .generators import cell_index, cell_name
from .model import (
    DetectionModel,
    MotionGraph,
    OperationalLimits,
    SearcherClass,
    SearchInstance,
    SearchPlan,
    plan_from_trajectories,
    plan_trajectories,
)
from .targets import ConditionalTargetModel, MarkovTargetModel

SCHEMA_VERSION = 1


class FileFormatError(ValueError):
    """Document or plan text does not match the schema."""


# ---------------------------------------------------------------------------
# instance documents


def instance_to_document(inst: SearchInstance) -> dict:
    motion = {
        "state_count": inst.state_count,
        "s_plus": inst.motion.s_plus,
        "s_minus": inst.motion.s_minus,
        "arcs": [[[s, s2, d] for s, s2, d in cls_arcs] for cls_arcs in inst.motion.arcs],
    }
    classes = []
    for l, cls in enumerate(inst.classes):
        values, counts = np.unique(cls.weight, return_counts=True)
        default = int(values[np.argmax(counts)])
        overrides = [
            [int(ai), int(t) + 1, int(cls.weight[ai, t])]
            for ai, t in zip(*np.nonzero(cls.weight != default))
        ]
        classes.append(
            {"count": cls.count, "endurance": cls.endurance, "weights": {"default": default, "overrides": overrides}}
        )
    if inst.limits.cap is None:
        limits = {"cap": None}
    else:
        limits = {"cap": [[int(s), int(t), int(v)] for (s, t), v in np.ndenumerate(inst.limits.cap)]}
    doc = {
        "version": SCHEMA_VERSION,
        "name": inst.name,
        "grid_side": inst.grid_side,
        "horizon": inst.horizon,
        "motion": motion,
        "classes": classes,
        "detection": {"base_rate": inst.detection.base_rate},
        "limits": limits,
        "target": _target_to_document(inst.target),
    }
    return doc


def _target_to_document(target) -> dict:
    if isinstance(target, ConditionalTargetModel):
        return {
            "conditional": {
                "paths": [
                    [[int(s), int(c)] for s, c in zip(row_s, row_c)]
                    for row_s, row_c in zip(target.states, target.modes)
                ],
                "weights": [float(w) for w in target.weights],
            }
        }
    if isinstance(target, MarkovTargetModel):
        initial = [[int(s), int(c), float(p)] for (s, c), p in np.ndenumerate(target.initial) if p]
        trans = target.transitions
        stationary = trans.shape[0] > 0 and all(np.array_equal(trans[0], trans[t]) for t in range(trans.shape[0]))
        def slice_entries(mat):
            return [
                [int(k1) >> 1, int(k1) & 1, int(k2) >> 1, int(k2) & 1, float(v)]
                for (k1, k2), v in np.ndenumerate(mat)
                if v
            ]
        if stationary:
            body = {"stationary": slice_entries(trans[0])}
        else:
            body = {"per_period": [slice_entries(trans[t]) for t in range(trans.shape[0])]}
        return {"markov": {"initial": initial, "transitions": body}}
    raise FileFormatError(f"unsupported target model {type(target).__name__}")


def document_to_instance(doc: dict) -> SearchInstance:
    try:
        if doc.get("version") != SCHEMA_VERSION:
            raise FileFormatError(f"unsupported or missing schema version {doc.get('version')!r}")
        horizon = int(doc["horizon"])
        m = doc["motion"]
        arcs = [[(int(a), int(b), int(d)) for a, b, d in cls_arcs] for cls_arcs in m["arcs"]]
        motion = MotionGraph(int(m["state_count"]), int(m["s_plus"]), m.get("s_minus"), arcs)
        classes = []
        for l, c in enumerate(doc["classes"]):
            w = c["weights"]
            weight = np.full((len(arcs[l]), horizon), int(w["default"]), dtype=np.int64)
            for ai, t, v in w.get("overrides", []):
                weight[int(ai), int(t) - 1] = int(v)
            classes.append(SearcherClass(int(c["count"]), int(c["endurance"]), weight))
        cap_doc = doc["limits"]["cap"]
        if cap_doc is None:
            limits = OperationalLimits(None)
        else:
            cap = np.zeros((motion.state_count, horizon + 1), dtype=np.int64)
            for s, t, v in cap_doc:
                cap[int(s), int(t)] = int(v)
            limits = OperationalLimits(cap)
        detection = DetectionModel(float(doc["detection"]["base_rate"]))
        target = _document_to_target(doc["target"], motion.state_count, horizon)
        return SearchInstance(
            motion,
            classes,
            detection,
            limits,
            horizon,
            target,
            name=str(doc.get("name", "")),
            grid_side=doc.get("grid_side"),
        )
    except FileFormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FileFormatError(f"malformed instance document: {exc}") from exc


def _document_to_target(doc: dict, state_count: int, horizon: int):
    if "conditional" in doc:
        body = doc["conditional"]
        paths = body["paths"]
        states = np.array([[sc[0] for sc in path] for path in paths], dtype=np.int32).reshape(
            len(paths), horizon
        )
        modes = np.array([[sc[1] for sc in path] for path in paths], dtype=np.int8).reshape(len(paths), horizon)
        return ConditionalTargetModel(states, modes, np.array(body["weights"], dtype=np.float64))
    if "markov" in doc:
        body = doc["markov"]
        initial = np.zeros((state_count, 2))
        for s, c, p in body["initial"]:
            initial[int(s), int(c)] = float(p)
        K = 2 * state_count
        trans_doc = body["transitions"]
        transitions = np.zeros((max(horizon - 1, 0), K, K))
        if "stationary" in trans_doc:
            step = np.zeros((K, K))
            for s, c, s2, c2, v in trans_doc["stationary"]:
                step[2 * int(s) + int(c), 2 * int(s2) + int(c2)] = float(v)
            transitions[:] = step
        else:
            slices = trans_doc["per_period"]
            if len(slices) != max(horizon - 1, 0):
                raise FileFormatError("per_period transitions must have horizon-1 slices")
            for t, entries in enumerate(slices):
                for s, c, s2, c2, v in entries:
                    transitions[t, 2 * int(s) + int(c), 2 * int(s2) + int(c2)] = float(v)
        return MarkovTargetModel(initial, transitions, horizon)
    raise FileFormatError("target section must contain 'conditional' or 'markov'")


def write_instance(inst: SearchInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_document(inst), fh, indent=1)
        fh.write("\n")


def read_instance(path) -> SearchInstance:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FileFormatError("instance document must be a JSON object")
    return document_to_instance(doc)


# ---------------------------------------------------------------------------
# plan text


def _state_token(inst: SearchInstance, s: int | None) -> str:
    if s is None:
        return "*"
    if s == inst.motion.s_plus:
        return "s+"
    if inst.motion.s_minus is not None and s == inst.motion.s_minus:
        return "s-"
    if inst.grid_side:
        r, c = cell_name(inst.grid_side, s)
        return f"({r},{c})"
    return str(s)


_CELL_RE = re.compile(r"^\((\d+),(\d+)\)$")


def _token_state(inst: SearchInstance, token: str) -> int | None:
    token = token.strip()
    if token == "*":
        return None
    if token == "s+":
        return inst.motion.s_plus
    if token == "s-":
        if inst.motion.s_minus is None:
            raise FileFormatError("plan uses s- but the instance has no terminal state")
        return inst.motion.s_minus
    m = _CELL_RE.match(token)
    if m:
        if not inst.grid_side:
            raise FileFormatError("(row,col) tokens need a grid instance")
        return cell_index(inst.grid_side, int(m.group(1)), int(m.group(2)))
    try:
        return int(token)
    except ValueError as exc:
        raise FileFormatError(f"unreadable plan token {token!r}") from exc


def render_plan(plan: SearchPlan, inst: SearchInstance) -> str:
    lines = ["# searchmip plan v1", f"# periods 1..{inst.horizon}; period 0 is s+ for every searcher"]
    for l, traces in enumerate(plan_trajectories(plan, inst)):
        for occ in traces:
            body = ", ".join(_state_token(inst, s) for s in occ[1:])
            lines.append(f"{l + 1}: {body}")
    return "\n".join(lines) + "\n"


def parse_plan(text: str, inst: SearchInstance) -> SearchPlan:
    traces: list[list[tuple[int | None, ...]]] = [[] for _ in range(inst.class_count)]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise FileFormatError(f"line {lineno}: expected '<class>: tokens'")
        head, body = line.split(":", 1)
        try:
            cls = int(head) - 1
        except ValueError as exc:
            raise FileFormatError(f"line {lineno}: bad class label {head!r}") from exc
        if not (0 <= cls < inst.class_count):
            raise FileFormatError(f"line {lineno}: class {head} out of range")
        tokens = [tok for tok in re.split(r",\s*(?![0-9]+\))", body.strip()) if tok]
        if len(tokens) != inst.horizon:
            raise FileFormatError(f"line {lineno}: {len(tokens)} tokens, expected {inst.horizon}")
        occ = [inst.motion.s_plus] + [_token_state(inst, tok) for tok in tokens]
        traces[cls].append(tuple(occ))
    for l, cls in enumerate(inst.classes):
        if len(traces[l]) != cls.count:
            raise FileFormatError(f"class {l + 1} lists {len(traces[l])} searchers, expected {cls.count}")
    try:
        return plan_from_trajectories(inst, traces)
    except Exception as exc:
        raise FileFormatError(f"plan is not realisable on this instance: {exc}") from exc


# ---------------------------------------------------------------------------
# run artifacts


def trace_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def run_record_to_json(record: dict) -> str:
    return json.dumps({k: _json_safe(v) for k, v in record.items()}, indent=1, default=str) + "\n"
