"""Reading and writing histories, distance matrices, routings, matrices and records.

History files are JSON documents::

    {"depot": "0", "drift_t": 14, "stops": ["0", "1", ...],
     "instances": [{"t": 1, "weekday": 0, "m": 2, "Q": 10,
                    "demands": {"1": 2, "2": 1}, "tours": [["1"], ["2"]]}]}

``stops`` (all names, depot first) and ``drift_t`` are optional; without
``stops`` names are sorted naturally and numbered from 1.  An instance
without ``demands`` is read in capacity-free mode (unit demands, capacity n).
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import warnings
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .core import DEPOT, HistoryDataset, HistoryInstance, Routing, validate_routing
from .evaluation import EvalRecord
from .learn import DistanceMatrix, SecondOrderTensor, TransitionMatrix


class DataError(ValueError):
    """Malformed input file; the message names the offending field."""


def natural_key(name: str):
    return (0, int(name), "") if name.isdigit() else (1, 0, name)


def _write_text(path, text: str):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _read_json(path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})") from None


def _expect(cond: bool, where: str, msg: str):
    if not cond:
        raise DataError(f"{where}: {msg}")


def _int_field(rec: dict, key: str, where: str, minimum: int = 1) -> int:
    _expect(key in rec, where, f"missing field '{key}'")
    v = rec[key]
    _expect(isinstance(v, int) and not isinstance(v, bool) and v >= minimum, f"{where}.{key}",
            f"expected an integer >= {minimum}, got {v!r}")
    return v


def load_history(path) -> HistoryDataset:
    doc = _read_json(path)
    src = str(path)
    _expect(isinstance(doc, dict), src, "top level must be an object")
    _expect(isinstance(doc.get("instances"), list) and doc["instances"], src,
            "field 'instances' must be a non-empty list")
    depot = str(doc.get("depot", "0"))
    records = doc["instances"]

    names_given = doc.get("stops")
    if names_given is not None:
        _expect(isinstance(names_given, list) and all(isinstance(n, str) for n in names_given), f"{src}.stops",
                "expected a list of names")
        _expect(len(set(names_given)) == len(names_given), f"{src}.stops", "names must be unique")
        _expect(bool(names_given) and names_given[0] == depot, f"{src}.stops", "the depot must come first")
        names = list(names_given)
    else:
        seen: set[str] = set()
        for k, rec in enumerate(records):
            for tour in rec.get("tours", []) if isinstance(rec, dict) else []:
                if isinstance(tour, list):
                    seen.update(str(s) for s in tour)
        seen.discard(depot)
        names = [depot] + sorted(seen, key=natural_key)
    ids = {n: i for i, n in enumerate(names)}

    instances = []
    stamps: dict[int, int] = {}
    for k, rec in enumerate(records):
        where = f"{src}: instances[{k}]"
        _expect(isinstance(rec, dict), where, "expected an object")
        t = _int_field(rec, "t", where)
        if t in stamps:
            raise DataError(f"{where}.t: duplicate timestamp {t} (also at instances[{stamps[t]}])")
        stamps[t] = k
        m = _int_field(rec, "m", where)
        weekday = rec.get("weekday")
        _expect(weekday is None or (isinstance(weekday, int) and not isinstance(weekday, bool)),
                f"{where}.weekday", f"expected an integer or null, got {weekday!r}")
        tours_raw = rec.get("tours")
        _expect(isinstance(tours_raw, list) and tours_raw, where, "field 'tours' must be a non-empty list")
        tours = []
        for a, tour in enumerate(tours_raw):
            tw = f"{where}.tours[{a}]"
            _expect(isinstance(tour, list) and tour, tw, "a tour must be a non-empty list of stop names")
            ids_tour = []
            for b, s in enumerate(tour):
                s = str(s)
                _expect(s != depot, f"{tw}[{b}]", f"the depot '{depot}' cannot appear inside a tour")
                _expect(s in ids, f"{tw}[{b}]", f"unknown stop '{s}'")
                ids_tour.append(ids[s])
            tours.append(ids_tour)
        try:
            routing = Routing(tours)
        except ValueError as exc:
            raise DataError(f"{where}.tours: {exc}") from None
        stops = routing.stop_set
        if "demands" in rec:
            dem_raw = rec["demands"]
            _expect(isinstance(dem_raw, dict), f"{where}.demands", "expected an object of stop: quantity")
            demands = {}
            for s, qv in dem_raw.items():
                _expect(s in ids and ids[s] in stops, f"{where}.demands", f"stop '{s}' is not routed")
                _expect(isinstance(qv, int) and not isinstance(qv, bool) and qv >= 1, f"{where}.demands.{s}",
                        f"expected a positive integer, got {qv!r}")
                demands[ids[s]] = qv
            missing = sorted(names[s] for s in stops - demands.keys())
            _expect(not missing, f"{where}.demands", f"no demand for stops {missing}")
            capacity = _int_field(rec, "Q", where)
            inst = HistoryInstance(t, stops, m, demands, capacity, routing, weekday)
        else:
            capacity = rec.get("Q", len(stops))
            _expect(capacity == len(stops), f"{where}.Q", "without demands the capacity must equal the stop count")
            inst = HistoryInstance(t, stops, m, {s: 1 for s in stops}, len(stops), routing, weekday, True)
        report = validate_routing(routing, m, inst.demands, inst.capacity)
        _expect(report.fleet_ok, f"{where}.tours", f"{report.n_tours} tours exceed the fleet of {m}")
        if not report.capacity_ok:
            warnings.warn(f"{where}: tours {report.overloaded} exceed capacity {inst.capacity}; kept as observed",
                          stacklevel=2)
        instances.append(inst)

    order = [i.timestamp for i in instances]
    if order != sorted(order):
        warnings.warn(f"{src}: timestamps are out of order; instances were re-sorted", stacklevel=2)
    drift = doc.get("drift_t")
    _expect(drift is None or (isinstance(drift, int) and drift in stamps), f"{src}.drift_t",
            f"expected null or the timestamp of an instance, got {drift!r}")
    return HistoryDataset.from_instances(instances, tuple(names), drift)


def history_to_dict(ds: HistoryDataset) -> dict:
    names = list(ds.names) if ds.names else [str(i) for i in range(max(ds.all_stops, default=0) + 1)]
    out = {"depot": names[DEPOT], "drift_t": ds.drift_t, "stops": names, "instances": []}
    for inst in ds:
        rec: dict[str, Any] = {"t": inst.timestamp, "weekday": inst.weekday, "m": inst.fleet}
        if not inst.capacity_free:
            rec["Q"] = inst.capacity
            rec["demands"] = {names[s]: inst.demands[s] for s in sorted(inst.stops)}
        rec["tours"] = [[names[s] for s in t] for t in inst.routing.tours]
        out["instances"].append(rec)
    return out


def save_history(ds: HistoryDataset, path) -> None:
    _write_text(path, json.dumps(history_to_dict(ds), ensure_ascii=False, indent=1) + "\n")


def _fmt_float(x: float) -> str:
    return repr(float(x))


def square_csv(m: np.ndarray, names: Sequence[str], corner: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([corner, *names])
    w.writerows([n, *(_fmt_float(v) for v in row)] for n, row in zip(names, m))
    return buf.getvalue()


def _load_square_csv(path) -> tuple[np.ndarray, tuple[str, ...]]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    _expect(bool(rows), str(path), "empty file")
    names = tuple(rows[0][1:])
    _expect(len(set(names)) == len(names), f"{path}: line 1", "duplicate stop names in the header")
    _expect(len(rows) - 1 == len(names), str(path),
            f"matrix is not square: {len(rows) - 1} rows for {len(names)} columns")
    m = np.empty((len(names), len(names)))
    for i, row in enumerate(rows[1:]):
        where = f"{path}: line {i + 2}"
        _expect(len(row) == len(names) + 1, where, f"expected {len(names) + 1} cells, got {len(row)}")
        _expect(row[0] == names[i], where, f"row name '{row[0]}' does not match column '{names[i]}'")
        try:
            m[i] = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise DataError(f"{where}: {exc}") from None
    return m, names


def save_distance_matrix(d: DistanceMatrix, path) -> None:
    _write_text(path, square_csv(d.dist, d.names, "km"))


def load_distance_matrix(path) -> DistanceMatrix:
    m, names = _load_square_csv(path)
    if np.any(m < 0):
        i, j = np.argwhere(m < 0)[0]
        raise DataError(f"{path}: negative distance {m[i, j]} from '{names[i]}' to '{names[j]}'")
    if not np.all(np.isfinite(m)):
        raise DataError(f"{path}: distances must be finite")
    return DistanceMatrix(m, names)


def transition_matrix_csv(p: TransitionMatrix, names: Sequence[str] | None = None) -> str:
    labels = [names[s] for s in p.stops] if names else [str(s) for s in p.stops]
    return square_csv(p.probs, labels, "p")


def save_transition_matrix(p: TransitionMatrix, path, names: Sequence[str] | None = None) -> None:
    _write_text(path, transition_matrix_csv(p, names))


def load_transition_matrix(path, names: Sequence[str] | None = None) -> TransitionMatrix:
    """Inverse of save_transition_matrix; ``names`` maps labels back to stop ids."""
    m, labels = _load_square_csv(path)
    ids = {n: i for i, n in enumerate(names)} if names else None
    try:
        stops = tuple(ids[n] if ids else int(n) for n in labels)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: unknown stop label {exc}") from None
    return TransitionMatrix(m, stops)


def save_tensor(t: SecondOrderTensor, path, names: Sequence[str] | None = None) -> None:
    labels = [names[s] for s in t.stops] if names else [str(s) for s in t.stops]
    doc = {"stops": labels, "depot_row": t.depot_row.tolist(), "probs": t.probs.tolist()}
    _write_text(path, json.dumps(doc, ensure_ascii=False) + "\n")


def load_tensor(path, names: Sequence[str] | None = None) -> SecondOrderTensor:
    doc = _read_json(path)
    ids = {n: i for i, n in enumerate(names)} if names else None
    stops = tuple(ids[n] if ids else int(n) for n in doc["stops"])
    return SecondOrderTensor(np.array(doc["probs"]), np.array(doc["depot_row"]), stops)


def save_routing(r: Routing, path, names: Sequence[str] | None = None) -> None:
    tours = [[names[s] if names else str(s) for s in t] for t in r.tours]
    _write_text(path, json.dumps({"tours": tours}, ensure_ascii=False) + "\n")


def load_routing(path, names: Sequence[str] | None = None) -> Routing:
    doc = _read_json(path)
    _expect(isinstance(doc, dict) and isinstance(doc.get("tours"), list), str(path), "expected {\"tours\": [...]}")
    ids = {n: i for i, n in enumerate(names)} if names else None
    tours = []
    for a, tour in enumerate(doc["tours"]):
        try:
            tours.append([ids[str(s)] if ids else int(s) for s in tour])
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: tours[{a}]: unknown stop {exc}") from None
    try:
        return Routing(tours)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


RECORD_COLUMNS = ("timestamp", "scheme", "order", "lambda", "beta", "alpha", "rd_pct", "ad_pct",
                  "predicted_km", "actual_km", "solve_s")
EXTRA_COLUMNS = ("group", "mode", "drift_index")
_FIELD_OF = {"lambda": "lam"}


def records_to_csv(records: Iterable[EvalRecord], timing: bool = True) -> str:
    """Header plus one row per record; ``timing=False`` writes nan for solve_s."""
    records = list(records)
    extras = [c for c in EXTRA_COLUMNS if any(getattr(r, c) is not None for r in records)]
    cols = list(RECORD_COLUMNS) + extras
    rows = [cols]
    for r in records:
        row = []
        for c in cols:
            v = getattr(r, _FIELD_OF.get(c, c))
            if c == "solve_s" and not timing:
                v = math.nan
            if v is None:
                row.append("")
            elif isinstance(v, float):
                row.append(_fmt_float(v))
            else:
                row.append(str(v))
        rows.append(row)
    return "\n".join(",".join(r) for r in rows) + "\n"


def save_records(records: Iterable[EvalRecord], path, timing: bool = True) -> None:
    _write_text(path, records_to_csv(records, timing))


def load_records(path) -> list[EvalRecord]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    _expect(bool(rows), str(path), "empty file")
    header = rows[0]
    _expect(tuple(header[:len(RECORD_COLUMNS)]) == RECORD_COLUMNS, f"{path}: line 1",
            f"expected columns {','.join(RECORD_COLUMNS)}")
    types = {f.name: f.type for f in dataclasses.fields(EvalRecord)}
    out = []
    for k, row in enumerate(rows[1:], start=2):
        _expect(len(row) == len(header), f"{path}: line {k}", f"expected {len(header)} cells")
        kw: dict[str, Any] = {}
        for c, v in zip(header, row):
            name = _FIELD_OF.get(c, c)
            ty = types[name]
            if v == "":
                kw[name] = None
            elif "int" in ty:
                kw[name] = int(v)
            elif "float" in ty:
                kw[name] = float(v)
            else:
                kw[name] = v
        out.append(EvalRecord(**kw))
    return out


def ensure_parent(path) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
