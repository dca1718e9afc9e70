#!/usr/bin/env python3
"""Drive the command line front end end to end.

Writes a small problem file, then runs inspect, check, curve, and
report the same way a shell user would.  Everything goes through
subprocess so the exit codes are the real ones.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

CONFIG = """\
[problem]
name = tilted-sphere
family = L2
n = 2
h11 = "1 + 0.5*t^2"
seed = 42

[metric]
g11 = "1"
g22 = "sin(x1)^2"

[potential]
u2 = "cos(x1)"

[ranges]
t = 0.0 1.0
x1 = 0.3 2.8
x2 = -3.0 3.0
y1 = -1.5 1.5
y2 = -1.5 1.5
"""


def run(*args):
    cmd = [sys.executable, "-m", "jetlag.cli", *args]
    print("$", "jetlag", *args)
    proc = subprocess.run(cmd, capture_output=True, text=True)
    print(proc.stdout, end="")
    if proc.stderr:
        print(proc.stderr, end="", file=sys.stderr)
    print("exit:", proc.returncode)
    print()
    return proc


with tempfile.TemporaryDirectory() as tmp:
    cfg = Path(tmp) / "tilted_sphere.cfg"
    cfg.write_text(CONFIG)

    # single-point drill down, JSON on stdout
    proc = run("inspect", "--config", str(cfg),
               "--point", "0.2", "1.0", "0.5", "0.1", "0.9")
    record = json.loads(proc.stdout)["record"]
    print("scalar curvature at that point:", record["ricci"]["Sc"])
    print()

    # identity sweep over 40 random points; exit 0 means all suites passed
    run("check", "--config", str(cfg), "--points", "40")

    # integrate a harmonic curve and save it as CSV
    out = Path(tmp) / "curve.csv"
    run("curve", "--config", str(cfg),
        "--x0", "1.5707963", "0.0", "--y0", "0.0", "1.0",
        "--t1", "1.0", "--step", "0.001", "--out", str(out))
    print("CSV header:", out.read_text().splitlines()[0])
    print()

    # the report verb bundles the sweep summary with per-point records
    rpt = Path(tmp) / "report.json"
    run("report", "--config", str(cfg), "--points", "15", "--out", str(rpt))
    payload = json.loads(rpt.read_text())
    print("report keys:", sorted(payload))
    print("suites:", sorted(payload["summary"]))

    # builtins work without a file; same verbs, same contract
    run("check", "--config", "sphere_l1", "--points", "20")
