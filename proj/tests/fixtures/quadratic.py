#!/usr/bin/env python3
"""Toy system under test for the command backend.

Reads the configuration from TUNA_CONFIG_JSON and prints one JSON result line.
Worker 3 is 10% slower; mode "b" with x above 0.9 crashes with a nonzero exit.
"""
import json
import os
import sys

cfg = json.loads(os.environ["TUNA_CONFIG_JSON"])
worker = int(os.environ["TUNA_WORKER_ID"])
x = float(cfg["x"])
if cfg.get("mode") == "b" and x > 0.9:
    print("simulated crash", file=sys.stderr)
    sys.exit(1)
perf = 1000.0 - 800.0 * (x - 0.3) ** 2
if worker == 3:
    perf *= 0.9
print("warming up")
print(json.dumps({"performance": perf, "metrics": {"x_echo": x, "worker": worker}}))
