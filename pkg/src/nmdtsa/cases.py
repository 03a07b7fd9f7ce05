"""Bundled test systems.

smib
    Single machine against an infinite bus, H = 3 s, D = 1, Pmax = 1.7 pu,
    steady-state angle 15 deg, 60 Hz.  Encoded exactly as two identical
    machines: the relative angle of the pair obeys the SMIB swing equation.

ninebus
    WSCC 3-machine 9-bus system, classical model, data as published by
    Anderson & Fouad (100 MVA base, loads as constant impedances at their
    power-flow voltages, EMFs and mechanical powers from the same power flow).
    Damping is not part of the published data; a uniform D_i/(2H_i) = 1/6 1/s
    is used (same ratio as the SMIB case).
"""
from __future__ import annotations

import math

import numpy as np

from .model import ClassicalSystem, Machine, ReducedNetwork, Scenario, kron_reduce

SMIB = dict(H=3.0, D=1.0, Pmax=1.7, delta_s=math.radians(15.0), omega_s=2 * math.pi * 60)


def smib_system(H=SMIB["H"], D=SMIB["D"], Pmax=SMIB["Pmax"], delta_s=SMIB["delta_s"],
                omega_s=SMIB["omega_s"]):
    half = 0.5 * Pmax
    pm = 0.5 * Pmax * math.sin(delta_s)
    machines = [Machine("G", H, D, 1.0, pm), Machine("inf", H, D, 1.0, -pm)]
    a = np.array([[0.0, half], [half, 0.0]])
    net = ReducedNetwork(g=np.zeros(2), a=a, b=np.zeros((2, 2)),
                         meta={"encoding": "two-machine SMIB, relative angle = delta_1 - delta_2"})
    return ClassicalSystem(machines, net, omega_s, name="smib")


# Anderson & Fouad, Table 2.1 / Fig 2.18 (bus numbers 1-based)
NINEBUS_LINES = [
    # from, to, r, x, total line charging b
    (1, 4, 0.0, 0.0576, 0.0),
    (4, 5, 0.010, 0.085, 0.176),
    (4, 6, 0.017, 0.092, 0.158),
    (5, 7, 0.032, 0.161, 0.306),
    (6, 9, 0.039, 0.170, 0.358),
    (7, 8, 0.0085, 0.072, 0.149),
    (8, 9, 0.0119, 0.1008, 0.209),
    (2, 7, 0.0, 0.0625, 0.0),
    (3, 9, 0.0, 0.0586, 0.0),
]
NINEBUS_LOADS = {5: (1.25, 0.50, 0.9956), 6: (0.90, 0.30, 1.0127), 8: (1.00, 0.35, 1.0159)}
NINEBUS_GENS = [
    # id, bus, H, x'd, E, angle (deg), Pm
    ("G1", 1, 23.64, 0.0608, 1.0566, 2.2717, 0.716),
    ("G2", 2, 6.40, 0.1198, 1.0502, 19.7315, 1.630),
    ("G3", 3, 3.01, 0.1813, 1.0170, 13.1752, 0.850),
]
NINEBUS_GAMMA = 1.0 / 6.0


def ninebus_bus_admittance(tripped=()):
    tripped = {tuple(sorted(t)) for t in tripped}
    Y = np.zeros((9, 9), dtype=complex)
    for f, t, r, x, b in NINEBUS_LINES:
        if tuple(sorted((f, t))) in tripped:
            continue
        y = 1.0 / complex(r, x)
        i, j = f - 1, t - 1
        Y[i, i] += y + 0.5j * b
        Y[j, j] += y + 0.5j * b
        Y[i, j] -= y
        Y[j, i] -= y
    for bus, (p, q, v) in NINEBUS_LOADS.items():
        Y[bus - 1, bus - 1] += complex(p, -q) / v ** 2
    return Y


def ninebus_machines(gamma=NINEBUS_GAMMA):
    return [Machine(g[0], g[2], 2 * g[2] * gamma, g[4], g[6]) for g in NINEBUS_GENS]


def ninebus_initial_angles():
    return np.radians([g[5] for g in NINEBUS_GENS])


def ninebus_system(tripped=(), fault_buses=(), gamma=NINEBUS_GAMMA, name="ninebus"):
    E = np.array([g[4] for g in NINEBUS_GENS])
    net = kron_reduce(ninebus_bus_admittance(tripped), [g[1] - 1 for g in NINEBUS_GENS], E,
                      machine_reactances=[g[3] for g in NINEBUS_GENS],
                      fault_buses=[b - 1 for b in fault_buses])
    return ClassicalSystem(ninebus_machines(gamma), net, 2 * math.pi * 60, name=name)


def ninebus_scenario(cycles=8, fault_bus=5, line=(5, 7), horizon=5.0, step=1e-3,
                     gamma=NINEBUS_GAMMA):
    """Three-phase fault at ``fault_bus`` cleared by tripping ``line``."""
    pre = ninebus_system(gamma=gamma, name="ninebus_pre")
    fault = ninebus_system(fault_buses=(fault_bus,), gamma=gamma, name="ninebus_fault")
    post = ninebus_system(tripped=(line,), gamma=gamma, name="ninebus_post")
    return Scenario(pre, fault, post, clearing_time=cycles / 60.0, horizon=horizon, step=step,
                    id=f"ninebus_bus{fault_bus}_{cycles}cyc")


def synthetic_system(m, gamma=0.2, seed=0, name=None):
    """Random lossy uniform-damping system with a stable equilibrium at the
    angles it was generated from (Pm chosen to balance the network)."""
    rng = np.random.default_rng(seed)
    H = rng.uniform(2.0, 12.0, m)
    E = rng.uniform(1.0, 1.1, m)
    # sparse-ish coupling: ring plus random chords
    B = np.zeros((m, m))
    for i in range(m):
        j = (i + 1) % m
        B[i, j] = B[j, i] = rng.uniform(2.0, 6.0)
    for _ in range(2 * m):
        i, j = rng.choice(m, 2, replace=False)
        B[i, j] = B[j, i] = rng.uniform(0.5, 3.0)
    G = -0.05 * B * rng.uniform(0.5, 1.5, (m, m))
    G = 0.5 * (G + G.T)
    a = np.outer(E, E) * B
    b = np.outer(E, E) * G
    g = rng.uniform(0.0, 0.2, m)
    delta = rng.uniform(-0.25, 0.25, m)
    delta[0] = 0.0
    net = ReducedNetwork(g=g, a=a, b=b)
    diff = np.subtract.outer(delta, delta)
    pe = E ** 2 * g + (a * np.sin(diff) + b * np.cos(diff)).sum(axis=1)
    machines = [Machine(f"G{i + 1}", H[i], 2 * H[i] * gamma, E[i], pe[i]) for i in range(m)]
    sys = ClassicalSystem(machines, net, 2 * math.pi * 60, name=name or f"synthetic{m}")
    return sys, delta
