# SPDX-License-Identifier: Apache-2.0
"""Runs each CLI command at small scale and validates its JSON summary."""
import json
import pathlib
import shutil
import subprocess
import sys

import jsonschema


def main() -> int:
    cli, src, work = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    shutil.rmtree(work, ignore_errors=True)
    work.mkdir(parents=True)
    schema = json.loads((src / "schemas" / "summary.schema.json").read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)

    config = src / "configs" / "calibrated.json"
    runs = {
        "simulate": (["simulate", str(config), "--trials", "2000"], "summary.json"),
        "fig2": (["reproduce", "fig2", "--trials", "200000"], "summary.json"),
        "fig3": (["reproduce", "fig3"], "summary.json"),
        "fig4": (["reproduce", "fig4", "--trials", "3000"], "summary.json"),
        "analyze": (["analyze", str(src / "docs" / "events_sample.csv"), "--window", "20", "--delay", "500"],
                    "estimates.json"),
    }
    failures = 0
    for name, (args, output) in runs.items():
        out = work / name
        subprocess.run([cli, *args, "--out", str(out)], check=True, stdout=subprocess.DEVNULL)
        document = json.loads((out / output).read_text())
        errors = sorted(validator.iter_errors(document), key=lambda e: list(e.path))
        for err in errors:
            print(f"{name}: {'/'.join(map(str, err.path))}: {err.message}")
        failures += len(errors)
        print(f"{name}: {'ok' if not errors else 'INVALID'}")

    broken = json.loads((work / "fig3" / "summary.json").read_text())
    broken["schema_version"] = 2
    if validator.is_valid(broken):
        print("schema accepted a wrong schema_version")
        failures += 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
