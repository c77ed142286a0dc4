#!/usr/bin/env python3
"""Regenerate the bundled scenario documents from standard power-flow cases.

Runs a Newton power flow (pypower) on the WSCC 9-bus and New England 39-bus
cases, then derives classical-model internal EMFs and mechanical powers so the
pre-fault operating point is an equilibrium of the reduced network.

    pip install pypower
    python3 scripts/gen_scenarios.py crates/core/data
"""
import json
import math
import sys

import numpy as np
from pypower.api import case9, case39, ppoption, runpf

OMEGA_S = 2.0 * math.pi * 60.0

# (bus, H [s, system base], x'd [p.u., system base]) in machine-id order.
NINEBUS_DYN = [(1, 23.64, 0.0608), (2, 6.40, 0.1198), (3, 3.01, 0.1813)]
NEWENGLAND_DYN = [
    (39, 500.0, 0.006), (31, 30.3, 0.0697), (32, 35.8, 0.0531),
    (33, 28.6, 0.0436), (34, 26.0, 0.132), (35, 34.8, 0.05),
    (36, 26.4, 0.049), (37, 24.3, 0.057), (38, 34.5, 0.057),
    (30, 42.0, 0.031),
]


def build(case, dyn, name, fault, sim):
    opt = ppoption(VERBOSE=0, OUT_ALL=0)
    res, ok = runpf(case, opt)
    assert ok, name
    base = res["baseMVA"]
    bus = res["bus"]
    vm = {int(b[0]): b[7] for b in bus}
    va = {int(b[0]): math.radians(b[8]) for b in bus}
    gens = {int(g[0]): (g[1] / base, g[2] / base) for g in res["gen"]}

    machines = []
    for k, (b, h, xd) in enumerate(dyn, start=1):
        p, q = gens[b]
        v = vm[b] * complex(math.cos(va[b]), math.sin(va[b]))
        i = (complex(p, q) / v).conjugate()
        e = v + 1j * xd * i
        machines.append({
            "id": k, "bus": b, "M": 2.0 * h / OMEGA_S, "Pm": round(p, 9),
            "E": round(abs(e), 9), "xd_prime": xd, "damping": 0.0,
        })

    buses = [{"id": int(b[0]), "gs": b[4] / base, "bs": b[5] / base} for b in bus]
    loads = [
        {"bus": int(b[0]), "p": b[2] / base, "q": b[3] / base, "v": round(b[7], 9)}
        for b in bus if b[2] != 0.0 or b[3] != 0.0
    ]
    branches = []
    for br in res["branch"]:
        tap = br[8] if br[8] != 0.0 else 1.0
        branches.append({
            "from": int(br[0]), "to": int(br[1]), "r": br[2], "x": br[3],
            "b": br[4], "tap": tap,
        })
    return {
        "version": 1,
        "name": name,
        "base_mva": base,
        "machines": machines,
        "network": {"buses": buses, "branches": branches, "loads": loads},
        "fault": fault,
        "sim": sim,
    }


def main(out):
    nine = build(
        case9(), NINEBUS_DYN, "WSCC 3-machine 9-bus (stand-in)",
        {"bus": 7, "clearing_time": 0.25, "trip_branches": [[7, 8]]},
        {"dt": 0.01, "horizon": 2.0},
    )
    ne = build(
        case39(), NEWENGLAND_DYN, "New England 10-machine 39-bus (stand-in)",
        {"bus": 2, "clearing_time": 0.43, "trip_branches": []},
        {"dt": 0.01, "horizon": 1.4},
    )
    for fname, doc in (("ts3_ninebus.json", nine), ("ts10_newengland.json", ne)):
        with open(f"{out}/{fname}", "w") as f:
            json.dump(doc, f, indent=1)
            f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/data")
