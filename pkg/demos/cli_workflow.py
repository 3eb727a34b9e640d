"""
End-to-end batch workflow with the command line tool
====================================================

Generates a small corpus, then runs the same steps a forensic analyst would
run from a shell: fingerprint, attribute, detect, clean. Each step is shown
as the equivalent ``prnu-nua`` command.
"""

import json
import shlex
import sys
import tempfile
from pathlib import Path

from prnu_nua.cli import main
from prnu_nua.synth import two_sensor_scenario

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="prnu_nua_demo_"))
scenario = two_sensor_scenario(shape=(256, 256), n_ref=6, n_test=3)
(work / "scenario.json").parent.mkdir(parents=True, exist_ok=True)
(work / "scenario.json").write_text(json.dumps(scenario.to_dict(), indent=2))


def run(*args):
    print("$ prnu-nua " + " ".join(shlex.quote(str(a)) for a in args))
    code = main([str(a) for a in args])
    print(f"  exit {code}")
    return code


run("simulate", work / "scenario.json", work / "corpus")
refs = work / "corpus/A/reference/*.png"
tests = work / "corpus/*/test/*.png"
for mode in ("plain", "residual_cancel"):
    run("fingerprint", refs, "--mode", mode, "--out", work / f"A_{mode}.prnf")
    run("attribute", "--fingerprint", work / f"A_{mode}.prnf", tests, "--out", work / f"att_{mode}.jsonl")
    for line in (work / f"att_{mode}.jsonl").read_text().splitlines():
        r = json.loads(line)
        print(f"    {Path(r['file']).name:22s} PCE {r['pce']:10.1f}  matched {r['matched']}")

run("detect", refs, "--periods", "128", "--csv", "--out", work / "detect.csv")
print((work / "detect.csv").read_text())
run("clean", tests, "--reference", refs, "--out-dir", work / "cleaned", "--format", "png")
print("outputs in", work)
