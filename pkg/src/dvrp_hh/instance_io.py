"""Reading and writing problem instances.

Two text formats are understood, told apart by their header lines:

canonical
    ``NAME <text>``, ``CAPACITY <r>``, ``SPEED <r>`` (default 1),
    ``VEHICLES <int>`` (default: one per request), ``WORKDAY <r>``,
    ``CUTOFF <r>`` (default WORKDAY/2), ``BOUNDS <x0> <y0> <x1> <y1>``
    (optional), ``DEPOT <x> <y>`` and one
    ``REQUEST <id> <x> <y> <volume> <service> <arrival>`` per request.
    ``#`` starts a comment.

cvrp-with-arrivals
    A TSPLIB-style CVRP listing (``KEY : value`` headers and ``*_SECTION``
    blocks) extended with per-request service durations and arrival times,
    as in the dynamic benchmark family derived from classic CVRP sets.
    Node coordinates come from ``NODE_COORD_SECTION`` or from
    ``LOCATION_COORD_SECTION`` with ``DEPOT_LOCATION_SECTION`` /
    ``VISIT_LOCATION_SECTION``; arrivals from ``TIME_AVAIL_SECTION``;
    durations from ``DURATION_SECTION``; the working day from ``WORKDAY`` or
    ``DEPOT_TIME_WINDOW_SECTION``.  Demands that are all non-positive are
    read as magnitudes.  Requests arriving after the cut-off are, by the
    benchmark convention, known at the start of the day
    (``late_arrivals="advance"``).
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .domain import FleetSpec, ProblemInstance, Request, ValidationError


class InstanceFormatError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


_HEADER = re.compile(r"^\s*([A-Z_]+)\s*:")
_SECTION = re.compile(r"^\s*([A-Z_]+_SECTION)\s*:?\s*$")


def detect_format(content: str) -> str:
    for raw in content.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if _HEADER.match(line) or _SECTION.match(line):
            return "cvrp-with-arrivals"
        return "canonical"
    return "canonical"


def parse_instance(content: str, late_arrivals: str | None = None,
                   workday: float | None = None) -> ProblemInstance:
    if content.startswith("﻿"):
        content = content[1:]
    content = content.replace("\r\n", "\n").replace("\r", "\n")
    if detect_format(content) == "canonical":
        return _parse_canonical(content, late_arrivals or "reject")
    return _parse_cvrp(content, late_arrivals or "advance", workday)


def read_instance(path: str | Path, **kw) -> ProblemInstance:
    with open(path, encoding="utf-8", newline="") as fh:
        inst = parse_instance(fh.read(), **kw)
    if inst.name == "unnamed":
        inst = ProblemInstance(Path(path).stem, inst.depot_location, inst.fleet, inst.requests,
                               inst.workday_end, inst.cutoff_time, inst.bounds)
    return inst


def _floats(tokens, lineno, count=None):
    if count is not None and len(tokens) != count:
        raise InstanceFormatError(f"expected {count} value(s), got {len(tokens)}", lineno)
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise InstanceFormatError(f"not a number in {' '.join(tokens)!r}", lineno) from None


def _int(tok, lineno):
    try:
        v = float(tok)
    except ValueError:
        raise InstanceFormatError(f"not an integer: {tok!r}", lineno) from None
    if v != int(v):
        raise InstanceFormatError(f"not an integer: {tok!r}", lineno)
    return int(v)


def _apply_late(reqs, cutoff, policy):
    if policy == "advance":
        return [Request(r.id, r.location, r.volume, r.service_time,
                        0.0 if r.arrival_time > cutoff else r.arrival_time) for r in reqs]
    if policy != "reject":
        raise ValueError(f"unknown late_arrivals policy {policy!r}")
    return reqs


def _build(name, depot, cap, speed, vehicles, workday, cutoff, bounds, reqs, policy):
    if cap is None:
        raise InstanceFormatError("missing CAPACITY")
    if workday is None:
        raise InstanceFormatError("missing WORKDAY (length of the working day)")
    if depot is None:
        raise InstanceFormatError("missing DEPOT")
    for r in reqs:
        if r.volume < 0:
            raise ValidationError(f"request {r.id}: negative volume {r.volume}")
    if cutoff is None:
        cutoff = workday / 2.0
    reqs = _apply_late(reqs, cutoff, policy)
    if vehicles is None:
        vehicles = max(1, len(reqs))
    fleet = FleetSpec(cap, 1.0 if speed is None else speed, vehicles)
    return ProblemInstance(name, tuple(depot), fleet, tuple(reqs), workday, cutoff, bounds)


def _parse_canonical(content: str, policy: str) -> ProblemInstance:
    name, depot, cap, speed, vehicles, workday, cutoff, bounds = (
        "unnamed", None, None, None, None, None, None, None)
    reqs: list[Request] = []
    seen: dict[int, int] = {}
    for lineno, raw in enumerate(content.split("\n"), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        if key == "NAME":
            if not rest:
                raise InstanceFormatError("NAME needs a value", lineno)
            name = " ".join(rest)
        elif key == "CAPACITY":
            cap, = _floats(rest, lineno, 1)
        elif key == "SPEED":
            speed, = _floats(rest, lineno, 1)
        elif key == "VEHICLES":
            if len(rest) != 1:
                raise InstanceFormatError("VEHICLES needs one value", lineno)
            vehicles = _int(rest[0], lineno)
        elif key == "WORKDAY":
            workday, = _floats(rest, lineno, 1)
        elif key == "CUTOFF":
            cutoff, = _floats(rest, lineno, 1)
        elif key == "BOUNDS":
            bounds = tuple(_floats(rest, lineno, 4))
        elif key == "DEPOT":
            depot = tuple(_floats(rest, lineno, 2))
        elif key == "REQUEST":
            if len(rest) != 6:
                raise InstanceFormatError("REQUEST needs id x y volume service arrival", lineno)
            rid = _int(rest[0], lineno)
            x, y, vol, serv, arr = _floats(rest[1:], lineno)
            if rid in seen:
                raise ValidationError(f"line {lineno}: duplicate request id {rid} "
                                      f"(first on line {seen[rid]})")
            seen[rid] = lineno
            reqs.append(Request(rid, (x, y), vol, serv, arr))
        else:
            raise InstanceFormatError(f"unknown keyword {key!r}", lineno)
    return _build(name, depot, cap, speed, vehicles, workday, cutoff, bounds, reqs, policy)


_SECTION_ALIASES = {"ARRIVAL_SECTION": "TIME_AVAIL_SECTION",
                    "SERVICE_TIME_SECTION": "DURATION_SECTION"}


def _parse_cvrp(content: str, policy: str, workday: float | None) -> ProblemInstance:
    headers: dict[str, str] = {}
    sections: dict[str, list[tuple[int, list[str]]]] = {}
    current = None
    for lineno, raw in enumerate(content.split("\n"), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "EOF":
            break
        m = _SECTION.match(line)
        if m:
            current = _SECTION_ALIASES.get(m.group(1), m.group(1))
            sections.setdefault(current, [])
            continue
        m = _HEADER.match(line)
        if m:
            headers[m.group(1)] = line[m.end():].strip()
            current = None
            continue
        if current is None:
            if line in ("DATA_SECTION", "DEPOTS"):
                continue
            raise InstanceFormatError(f"data outside any section: {line!r}", lineno)
        sections[current].append((lineno, line.split()))

    def table(sec, width):
        out = {}
        for lineno, toks in sections.get(sec, []):
            if toks == ["-1"]:
                continue
            if len(toks) < width:
                raise InstanceFormatError(f"{sec}: expected {width} columns", lineno)
            key = _int(toks[0], lineno)
            if key in out:
                raise ValidationError(f"line {lineno}: duplicate id {key} in {sec}")
            out[key] = (lineno, _floats(toks[1:width], lineno))
        return out

    def header_float(*keys):
        for k in keys:
            if k in headers:
                try:
                    return float(headers[k].split()[0])
                except (ValueError, IndexError):
                    raise InstanceFormatError(f"bad {k} value {headers[k]!r}") from None
        return None

    name = headers.get("NAME", "unnamed")
    cap = header_float("CAPACITY", "CAPACITIES")
    speed = header_float("SPEED")
    vehicles = header_float("VEHICLES", "NUM_VEHICLES")
    workday = workday if workday is not None else header_float("WORKDAY")
    cutoff = header_float("CUTOFF")

    if "NODE_COORD_SECTION" in sections:
        coords = {k: v for k, (_, v) in table("NODE_COORD_SECTION", 3).items()}
        depot_ids = [_int(t[0], ln) for ln, t in sections.get("DEPOT_SECTION", [])
                     if t != ["-1"]] or [min(coords)]
        node_of = {k: k for k in coords}
        depot_node = depot_ids[0]
        visit_ids = [k for k in coords if k not in depot_ids]
    elif "LOCATION_COORD_SECTION" in sections:
        coords = {k: v for k, (_, v) in table("LOCATION_COORD_SECTION", 3).items()}
        dloc = table("DEPOT_LOCATION_SECTION", 2)
        vloc = table("VISIT_LOCATION_SECTION", 2)
        if not dloc:
            raise InstanceFormatError("missing DEPOT_LOCATION_SECTION")
        depot_node = int(next(iter(dloc.values()))[1][0])
        node_of = {k: int(v[0]) for k, (_, v) in vloc.items()}
        visit_ids = list(vloc)
        depot_ids = list(dloc)
    else:
        raise InstanceFormatError("no coordinate section found")
    if depot_node not in coords:
        raise InstanceFormatError(f"depot location {depot_node} has no coordinates")

    demand = {k: v[0] for k, (_, v) in table("DEMAND_SECTION", 2).items()}
    dur = {k: v[0] for k, (_, v) in table("DURATION_SECTION", 2).items()}
    avail = {k: v[0] for k, (_, v) in table("TIME_AVAIL_SECTION", 2).items()}
    if workday is None and "DEPOT_TIME_WINDOW_SECTION" in sections:
        tw = table("DEPOT_TIME_WINDOW_SECTION", 3)
        workday = next(iter(tw.values()))[1][1]
    visits = [v for v in visit_ids if v in demand or v not in depot_ids]
    if visits and all(demand.get(v, 0.0) <= 0 for v in visits):
        demand = {k: -d for k, d in demand.items()}
    reqs = []
    for vid in visits:
        if vid not in demand:
            raise InstanceFormatError(f"visit {vid} has no demand")
        loc = node_of[vid]
        if loc not in coords:
            raise InstanceFormatError(f"visit {vid}: location {loc} has no coordinates")
        reqs.append(Request(vid, tuple(coords[loc]), demand[vid], dur.get(vid, 0.0),
                            avail.get(vid, 0.0)))
    vehicles = int(vehicles) if vehicles is not None else None
    return _build(name, coords[depot_node], cap, speed, vehicles, workday, cutoff, None,
                  reqs, policy)


def _r(x: float) -> str:
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def serialize_instance(instance: ProblemInstance) -> str:
    out = [f"NAME {instance.name}",
           f"CAPACITY {_r(instance.fleet.capacity)}",
           f"SPEED {_r(instance.fleet.speed)}",
           f"VEHICLES {instance.fleet.vehicle_count}",
           f"WORKDAY {_r(instance.workday_end)}",
           f"CUTOFF {_r(instance.cutoff_time)}"]
    if instance.bounds is not None:
        out.append("BOUNDS " + " ".join(_r(b) for b in instance.bounds))
    out.append(f"DEPOT {_r(instance.depot_location[0])} {_r(instance.depot_location[1])}")
    for r in instance.requests:
        out.append(f"REQUEST {r.id} {_r(r.location[0])} {_r(r.location[1])} {_r(r.volume)} "
                   f"{_r(r.service_time)} {_r(r.arrival_time)}")
    return "\n".join(out) + "\n"


def write_instance(instance: ProblemInstance, path: str | Path):
    Path(path).write_text(serialize_instance(instance), encoding="utf-8")


def generate_instance(n: int, seed: int = 0, kind: str = "uniform", name: str | None = None,
                      capacity: float = 100.0, volume_range: tuple[int, int] = (5, 30),
                      workday: float = 1000.0, service_time: float = 0.0,
                      dynamic_fraction: float = 0.0, clusters: int = 4,
                      extent: float = 100.0) -> ProblemInstance:
    """Random instance on ``[0, extent]^2`` with the depot at the centre.

    ``kind`` is ``uniform``, ``clustered`` (Gaussian blobs) or ``mixed`` (half
    each).  A ``dynamic_fraction`` of requests gets arrival times uniform in
    ``(0, cutoff]``.
    """
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        pts = rng.random((n, 2)) * extent
    elif kind in ("clustered", "mixed"):
        n_cl = n if kind == "clustered" else n // 2
        centers = rng.random((clusters, 2)) * extent * 0.8 + 0.1 * extent
        lab = rng.integers(clusters, size=n_cl)
        pts = centers[lab] + rng.normal(scale=0.06 * extent, size=(n_cl, 2))
        if kind == "mixed":
            pts = np.vstack([pts, rng.random((n - n_cl, 2)) * extent])
        pts = np.clip(pts, 0, extent)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    vols = rng.integers(volume_range[0], volume_range[1] + 1, size=n).astype(float)
    cutoff = workday / 2.0
    arrivals = np.zeros(n)
    dyn = rng.random(n) < dynamic_fraction
    arrivals[dyn] = np.round(rng.uniform(0, cutoff, size=int(dyn.sum())), 3)
    arrivals = np.clip(arrivals, 0, cutoff)
    reqs = tuple(Request(i + 1, (round(float(pts[i, 0]), 3), round(float(pts[i, 1]), 3)),
                         float(vols[i]), float(service_time), float(arrivals[i]))
                 for i in range(n))
    return ProblemInstance(name or f"{kind}{n}_s{seed}", (extent / 2, extent / 2),
                           FleetSpec(capacity, 1.0, max(n, 1)), reqs, workday, cutoff)
