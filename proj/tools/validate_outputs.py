#!/usr/bin/env python3
"""Run each CLI subcommand on small inputs and validate its JSON output."""

import argparse
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema
from referencing import Registry, Resource

SCHEMAS = Path(__file__).resolve().parent.parent / "schemas"

# (output file, schema) pairs per run; runs share one scratch directory.
RUNS = [
    (["simulate", "--out", "sim", "--p", "4", "--w", "0.1,0.2,0.3,0.4", "--n", "300"],
     [("sim/simulate.json", "simulate")]),
    (["simulate", "--out", "pairs", "--p", "4", "--q", "4", "--w", "0.1,0.2,0.3,0.4",
      "--wy", "0.4,0.3,0.2,0.1", "--rho", "0.2", "--n", "400"],
     [("pairs/simulate.json", "simulate")]),
    (["simulate", "--out", "dummy", "--design", "{dir}/dummy_design.json", "--w", "0.1,0.2,0.3,0.4",
      "--n", "200"],
     [("dummy/simulate.json", "simulate")]),
    (["estimate", "--out", "est", "--p", "4", "--data", "{dir}/sim/observations.csv"],
     [("est/estimate.json", "estimate")]),
    (["estimate", "--out", "est_dummy", "--design", "{dir}/dummy_design.json", "--method", "mom",
      "--data", "{dir}/dummy/observations.csv"],
     [("est_dummy/estimate.json", "estimate")]),
    (["estimate", "--out", "bench", "--p", "4", "--w", "0.1,0.2,0.3,0.4", "--n", "200", "--k", "10"],
     [("bench/benchmark.json", "benchmark"), ("bench/timing.json", "timing")]),
    (["audit", "--out", "audit", "--p", "4", "--w", "0.1,0.2,0.3,0.4"],
     [("audit/audit.json", "audit")]),
    (["audit", "--out", "audit_data", "--p", "4", "--data", "{dir}/sim/observations.csv"],
     [("audit_data/audit.json", "audit")]),
    (["test", "--out", "test", "--p", "4", "--q", "4", "--data", "{dir}/pairs/pairs.csv"],
     [("test/test.json", "test")]),
    (["test", "--out", "raw", "--p", "2", "--table", "9592,1179,15128,6662"],
     [("raw/test.json", "test")]),
    (["test", "--out", "combined", "--p", "4", "--combined", "2x2", "--data", "{dir}/sim/observations.csv"],
     [("combined/test.json", "test")]),
    (["test", "--out", "power", "--p", "4", "--q", "4", "--rho", "0.05", "--n", "200", "--k", "6"],
     [("power/power.json", "power")]),
    (["test", "--out", "gi_power", "--scenario", "gender-income", "--n", "300,600", "--k", "4"],
     [("gi_power/power.json", "power")]),
    (["ingest", "--out", "ingest", "--data", "{dir}/adult.csv", "--schema", "{dir}/adult_schema.json"],
     [("ingest/ingest.json", "ingest")]),
]


def registry():
    resources = []
    for path in SCHEMAS.glob("*.schema.json"):
        resources.append((path.name, Resource.from_contents(json.loads(path.read_text()))))
    return Registry().with_resources(resources)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("cli", help="path to the subsetpriv binary")
    args = parser.parse_args()
    args.cli = str(Path(args.cli).resolve())

    reg = registry()
    failures = 0
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(tmp)
        (work / "dummy_design.json").write_text(json.dumps({"p": 4, "kind": "dummy", "alpha": 0.2}))
        (work / "adult.csv").write_text("race,sex\nWhite,Male\nBlack,Female\nWhite,Female\n")
        (work / "adult_schema.json").write_text(json.dumps({
            "race": ["Amer-Indian-Eskimo", "Asian-Pac-Islander", "Black", "Other", "White"],
            "sex": ["Female", "Male"]}))
        for argv, outputs in RUNS:
            argv = [a.replace("{dir}", str(work)) for a in argv]
            done = subprocess.run([args.cli, *argv], cwd=work, capture_output=True, text=True)
            if done.returncode != 0:
                print(f"FAIL {' '.join(argv[:3])}: exit {done.returncode}\n{done.stderr}")
                failures += 1
                continue
            for rel, name in outputs:
                schema = json.loads((SCHEMAS / f"{name}.schema.json").read_text())
                validator = jsonschema.Draft202012Validator(schema, registry=reg)
                doc = json.loads((work / rel).read_text())
                errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
                for e in errors:
                    print(f"FAIL {rel} against {name}: {'/'.join(map(str, e.path))}: {e.message}")
                failures += bool(errors)
                if not errors:
                    print(f"ok   {rel} against {name}")
        # The schemas must also reject malformed documents.
        doc = json.loads((work / "est/estimate.json").read_text())
        doc["results"][0]["w_hat"] = [0.5, 1.5]
        validator = jsonschema.Draft202012Validator(
            json.loads((SCHEMAS / "estimate.schema.json").read_text()), registry=reg)
        if validator.is_valid(doc):
            print("FAIL estimate schema accepts w_hat outside [0, 1]")
            failures += 1
        doc = json.loads((work / "audit/audit.json").read_text())
        doc["secret"] = 1
        validator = jsonschema.Draft202012Validator(
            json.loads((SCHEMAS / "audit.schema.json").read_text()), registry=reg)
        if validator.is_valid(doc):
            print("FAIL audit schema accepts unknown fields")
            failures += 1
    print(f"{failures} failed")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
