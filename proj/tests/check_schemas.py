# Copyright 2026 The offload-planner Authors
# SPDX-License-Identifier: Apache-2.0
"""Runs the CLI and validates its JSON output against docs/schemas."""

import json
import struct
import subprocess
import sys
import tempfile
from pathlib import Path

from jsonschema import Draft202012Validator
from referencing import Registry, Resource

tool, root = sys.argv[1], Path(sys.argv[2])
schemas = {}
registry = Registry()
for path in sorted((root / "docs" / "schemas").glob("*.schema.json")):
    doc = json.loads(path.read_text())
    Draft202012Validator.check_schema(doc)
    schemas[doc["$id"]] = doc
    registry = registry.with_resource(doc["$id"], Resource.from_contents(doc))

fixtures = root / "tests" / "fixtures"
work = ["--s", "64", "--n", "4"]
with tempfile.TemporaryDirectory() as tmp:
    raw = Path(tmp) / "x.f32"
    raw.write_bytes(struct.pack("<256f", *[((i * 37) % 101) / 7.0 - 5.0 for i in range(256)]))
    runs = [
        ("footprint-output", ["footprint", "--model", "opt-175b", "--batch", "4", "--s", "8", "--n", "2"]),
        ("plan-output", ["plan", "--model", "opt-30b", "--hw", "t4-gcp", *work, "--oracle-check", "0.25", "--table"]),
        ("plan-output", ["plan", "--model", "opt-6.7b", "--hw", str(fixtures / "synthetic-hw.json"), *work,
                         "--pin", "wg=1", "--pin", "cg=1", "--pin", "hg=1"]),
        ("simulate-output", ["simulate", "--model", "opt-30b", "--hw", "t4-gcp", *work, "--baseline", "deepspeed"]),
        ("simulate-output", ["simulate", "--model", "opt-30b", "--hw", "t4-gcp", *work, "--baseline", "deepspeed",
                             "--pipeline", "2", "--allow-oom"]),
        ("simulate-output", ["simulate", "--model", "opt-30b", "--hw", "t4-gcp", *work, "--compare", "planned"]),
        ("schedule-output", ["schedule", "--kind", "zigzag", "--rows", "2", "--n", "2", "--l", "2", "--s", "2",
                             "--capacity", "6", "--account", "--brute-force"]),
        ("schedule-output", ["schedule", "--kind", "zigzag", "--rows", "4", "--n", "2", "--l", "2", "--s", "2",
                             "--capacity", "5"]),
        ("quantize-output", ["quantize", "-i", str(raw), "--shape", "2,128", "--verify"]),
    ]
    documents = [(name, subprocess.run([tool, *args], capture_output=True, text=True).stdout) for name, args in runs]

documents += [("hardware", p.read_text()) for p in [root / "presets" / "t4-gcp.json", fixtures / "synthetic-hw.json"]]
documents += [("model", p.read_text()) for p in sorted((root / "presets").glob("opt-*.json"))]

failures = 0
for name, text in documents:
    validator = Draft202012Validator(schemas[name + ".schema.json"], registry=registry)
    errors = [e.message for e in validator.iter_errors(json.loads(text))]
    if errors:
        failures += 1
        print(f"{name}: {errors[0]}")
print(f"{len(documents) - failures}/{len(documents)} documents valid")
sys.exit(1 if failures else 0)
