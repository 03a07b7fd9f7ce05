"""JSON formats for systems and scenarios, and the bundled examples.

A system file holds machines plus either a reduced network

    {"name": ..., "frequency_hz": 60,
     "machines": [{"id": "G1", "H": 3, "D": 1, "E": 1.0, "Pm": 0.2}, ...],
     "network": {"g": [...], "a": [[...]], "b": [[...]]},
     "initial_angles_deg": [...]}

or a bus network that is Kron-reduced on load

    "bus_network": {"buses": 9, "lines": [[from, to, r, x, b_total], ...],
                    "loads": [[bus, P, Q, V], ...],
                    "machines": [{"bus": 1, "xd": 0.0608}, ...]}

Machine damping can be given per machine as "D" or for all machines as
"uniform_gamma" (D_i = 2 H_i gamma).

A scenario file references (or embeds) such a system and describes the
fault: {"id", "system", "fault_buses", "trip_lines", "clearing_cycles" or
"clearing_time", "horizon", "step"}.  Alternatively it gives "prefault",
"faulton" and "postfault" systems explicitly.
"""
from __future__ import annotations

import json
import math
import os
from importlib import resources

import numpy as np

from .model import ClassicalSystem, Machine, ModelError, ReducedNetwork, Scenario, kron_reduce


class FormatError(ValueError):
    pass


def _need(d, key, where):
    if key not in d:
        raise FormatError(f"{where}: missing field '{key}'")
    return d[key]


def _read(src):
    if isinstance(src, dict):
        return dict(src), None
    path = os.fspath(src)
    try:
        with open(path) as fh:
            return json.load(fh), os.path.dirname(os.path.abspath(path))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc


def _machines(d, where):
    raw = _need(d, "machines", where)
    if not isinstance(raw, list) or not raw:
        raise FormatError(f"{where}: 'machines' must be a non-empty list")
    gamma = d.get("uniform_gamma")
    out = []
    for i, m in enumerate(raw):
        w = f"{where}: machines[{i}]"
        H = float(_need(m, "H", w))
        if "D" in m:
            D = float(m["D"])
        elif gamma is not None:
            D = 2 * H * float(gamma)
        else:
            raise FormatError(f"{w}: missing field 'D' (or top-level 'uniform_gamma')")
        try:
            out.append(Machine(str(m.get("id", f"G{i + 1}")), H, D, float(_need(m, "E", w)),
                               float(_need(m, "Pm", w))))
        except ModelError as exc:
            raise FormatError(f"{w}: {exc}") from exc
    return out


def bus_admittance(bus):
    n = int(bus["buses"])
    Y = np.zeros((n, n), dtype=complex)
    tripped = {tuple(sorted(map(int, t))) for t in bus.get("tripped", [])}
    for f, t, r, x, b in bus["lines"]:
        if tuple(sorted((int(f), int(t)))) in tripped:
            continue
        y = 1.0 / complex(r, x)
        i, j = int(f) - 1, int(t) - 1
        Y[i, i] += y + 0.5j * b
        Y[j, j] += y + 0.5j * b
        Y[i, j] -= y
        Y[j, i] -= y
    for busno, p, q, v in bus.get("loads", []):
        Y[int(busno) - 1, int(busno) - 1] += complex(p, -q) / v ** 2
    return Y


def system_from_dict(d, where="system", tripped=(), fault_buses=()):
    machines = _machines(d, where)
    E = np.array([m.E for m in machines])
    if "network" in d:
        if tripped or fault_buses:
            raise FormatError(f"{where}: faults and line trips need a bus network")
        net = d["network"]
        try:
            red = ReducedNetwork(np.array(_need(net, "g", where + ".network"), float),
                                 np.array(_need(net, "a", where + ".network"), float),
                                 np.array(_need(net, "b", where + ".network"), float))
        except ModelError as exc:
            raise FormatError(f"{where}.network: {exc}") from exc
    elif "bus_network" in d:
        bus = dict(d["bus_network"])
        for k in ("buses", "lines", "machines"):
            _need(bus, k, where + ".bus_network")
        bus["tripped"] = list(bus.get("tripped", [])) + [list(t) for t in tripped]
        gm = bus["machines"]
        if len(gm) != len(machines):
            raise FormatError(f"{where}.bus_network: machine count differs from 'machines'")
        red = kron_reduce(bus_admittance(bus), [int(g["bus"]) - 1 for g in gm], E,
                          machine_reactances=[float(g["xd"]) for g in gm],
                          fault_buses=[int(b) - 1 for b in fault_buses])
    else:
        raise FormatError(f"{where}: needs 'network' or 'bus_network'")
    fhz = float(d.get("frequency_hz", 60.0))
    omega = float(d.get("omega_s", 2 * math.pi * fhz))
    try:
        return ClassicalSystem(machines, red, omega, name=str(d.get("name", "")))
    except ModelError as exc:
        raise FormatError(f"{where}: {exc}") from exc


def initial_angles(d):
    if "initial_angles_deg" in d:
        return np.radians(np.asarray(d["initial_angles_deg"], float))
    if "initial_angles" in d:
        return np.asarray(d["initial_angles"], float)
    return None


def load_system(src):
    """(ClassicalSystem, initial angle guess or None) from a file or dict."""
    d, _ = _read(src)
    return system_from_dict(d, str(src) if not isinstance(src, dict) else "system"), \
        initial_angles(d)


def system_to_dict(sys, guess=None):
    d = {"name": sys.name, "omega_s": sys.omega_s,
         "machines": [{"id": m.id, "H": m.H, "D": m.D, "E": m.E, "Pm": m.Pm}
                      for m in sys.machines],
         "network": {"g": sys.network.g.tolist(), "a": sys.network.a.tolist(),
                     "b": sys.network.b.tolist()}}
    if guess is not None:
        d["initial_angles"] = np.asarray(guess).tolist()
    return d


def save_system(sys, path, guess=None):
    with open(path, "w") as fh:
        json.dump(system_to_dict(sys, guess), fh, indent=1)


def load_scenario(src):
    """(Scenario, initial angle guess or None) from a file or dict."""
    d, base = _read(src)
    where = str(src) if not isinstance(src, dict) else "scenario"

    def sub(key):
        v = _need(d, key, where)
        if isinstance(v, str):
            path = v if os.path.isabs(v) or base is None else os.path.join(base, v)
            if not os.path.exists(path):
                path = data_path(v)
            v, _ = _read(path)
        return v

    if "system" in d:
        sd = sub("system")
        faults = d.get("fault_buses", [])
        trips = d.get("trip_lines", [])
        pre = system_from_dict(sd, where + ".system")
        fault = system_from_dict(sd, where + ".system", fault_buses=faults)
        post = system_from_dict(sd, where + ".system", tripped=trips)
        guess = initial_angles(sd)
    else:
        pre = system_from_dict(sub("prefault"), where + ".prefault")
        fault = system_from_dict(sub("faulton"), where + ".faulton")
        post = system_from_dict(sub("postfault"), where + ".postfault")
        guess = None
    if "initial_angles_deg" in d or "initial_angles" in d:
        guess = initial_angles(d)
    if "clearing_cycles" in d:
        tc = float(d["clearing_cycles"]) / (pre.omega_s / (2 * math.pi))
    else:
        tc = float(_need(d, "clearing_time", where))
    try:
        scn = Scenario(pre, fault, post, tc, float(d.get("horizon", 5.0)),
                       float(d.get("step", 1e-3)), str(d.get("id", "")))
    except ModelError as exc:
        raise FormatError(f"{where}: {exc}") from exc
    return scn, guess


def data_path(name):
    """Path of a bundled example input."""
    p = resources.files("nmdtsa") / "data" / name
    if not p.is_file():
        raise FileNotFoundError(name)
    return str(p)


def bundled():
    return sorted(p.name for p in (resources.files("nmdtsa") / "data").iterdir()
                  if p.name.endswith(".json"))
