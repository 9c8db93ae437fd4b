"""End-to-end checks of the sacc command line: outputs, reports and exit codes."""
import argparse
import json
import shutil
import subprocess
import sys
from pathlib import Path

ap = argparse.ArgumentParser()
ap.add_argument("--sacc", required=True)
ap.add_argument("--data", type=Path, required=True)
ap.add_argument("--golden", type=Path, required=True)
ap.add_argument("--work", type=Path, required=True)
args = ap.parse_args()

work = args.work
shutil.rmtree(work, ignore_errors=True)
work.mkdir(parents=True)
cell_example = str(args.data / "cell_example.json")
failures = []


def sacc(*argv, code=0):
    r = subprocess.run([args.sacc, *map(str, argv)], capture_output=True, text=True)
    if r.returncode != code:
        failures.append(f"sacc {' '.join(map(str, argv))}: exit {r.returncode}, wanted {code}\n{r.stderr}")
    return r


def check(ok, what):
    print(("ok   " if ok else "FAIL ") + what)
    if not ok:
        failures.append(what)


# pack: golden bytes, report, dropped-weight warning
r = sacc("pack", cell_example, "--out", work / "packed.bin")
check((work / "packed.bin").read_bytes() == (args.golden / "cell_example_model.bin").read_bytes(),
      "pack output equals the golden file")
check(json.loads(r.stdout)["dropped_total"] == 0, "compliant model drops nothing")

dense = {
    "input_shape": [8, 2, 2], "reshape_factor": 1,
    "layers": [{"f": 3, "c": 8, "g": 8, "weights": [[0.5, -0.25, 1.0, 0.125, 0.5, -1.0, 0.25, 0.75]] * 3}],
    "fc": {"f": 2, "c": 3, "g": 1, "weights": [[1, 0, 0], [0, 1, 0]]},
}
(work / "dense.json").write_text(json.dumps(dense))
r = sacc("pack", work / "dense.json", "--out", work / "dense.bin", code=4)
check(json.loads(r.stdout)["layers"][0]["dropped"] == 3 * 7, "dense g=8 layer drops 7 of 8 weights per row")

# compile: instruction counts
r = sacc("compile", args.data / "tiled_128.json", "--array", "128x128", "--out", work / "tiled.bin")
check(json.loads(r.stdout)["instructions"] == 6, "128x128 layer + 256x128 fc on a 128x128 array: 6 instructions")
r = sacc("compile", cell_example, "--array", "8x8", "--out", work / "one.bin")
rep = json.loads(r.stdout)
check(all(l["instructions"] == 2 for l in rep["layers"]), "single-tile layers take 2 instructions")
sacc("compile", cell_example, "--array", "4x1", "--out", work / "small.bin")

# simulate
sacc("gen", "image", "--manifest", cell_example, "--seed", 5, "--zero-fraction", 0.3, "--out", work / "x.tensor")
on = json.loads(sacc("simulate", work / "small.bin", "--manifest", cell_example, "--input", work / "x.tensor").stdout)
off = json.loads(sacc("simulate", work / "small.bin", "--manifest", cell_example, "--input", work / "x.tensor",
                      "--no-zero-skip", "--fidelity", "bit").stdout)
check(on["logits"] == off["logits"], "zero-skip and fidelity do not change logits")
check(on["cell_cycles_active"] < off["cell_cycles_active"] == off["cell_cycles_total"], "zero-skip lowers activity")
fast = json.loads(sacc("simulate", work / "small.bin", "--manifest", cell_example, "--input", work / "x.tensor",
                       "--clock-mhz", 340).stdout)
check(abs(fast["latency_ms"] * 2 - on["latency_ms"]) < 1e-12, "--clock-mhz scales latency")

batch = work / "batch"
batch.mkdir()
for seed in range(4):
    sacc("gen", "image", "--manifest", cell_example, "--seed", seed, "--out", batch / f"img{seed}.tensor")
r = sacc("simulate", work / "small.bin", "--manifest", cell_example, "--batch", batch, "--out", work / "reports")
summary = json.loads(r.stdout)
check(summary["images"] == 4 and all(x["status"] == "ok" for x in summary["results"]), "batch runs every image")
single = sacc("simulate", work / "small.bin", "--manifest", cell_example, "--input", batch / "img2.tensor").stdout
check((work / "reports" / "img2.json").read_text() == single, "batch report equals the single-image report")

# compare
for seed in (0, 1, 2):
    r = sacc("compare", cell_example, "--seed", seed, "--array", "8x8")
    check(json.loads(r.stdout)["status"] == "identical", f"compare seed {seed} identical")
r = sacc("compare", cell_example, "--stream", work / "small.bin", "--input", work / "x.tensor")
check(json.loads(r.stdout)["status"] == "identical", "compare through a compiled stream")

stream = bytearray((work / "small.bin").read_bytes())
# First tile: 8-byte load word, 8-byte packed header, then cell (0, 0) = -2^-1 at position 1.
assert stream[16] == 0x36
stream[16] ^= 0x10
(work / "corrupt.bin").write_bytes(bytes(stream))
r = sacc("compare", cell_example, "--stream", work / "corrupt.bin", "--input", work / "x.tensor", code=3)
rep = json.loads(r.stdout)
check(rep["status"] == "mismatch" and rep["max_abs_diff"] > 0, "flipped sign bit is detected")
check(rep.get("first_mismatch", {}).get("stage") == "layers[0]"
      and rep["first_mismatch"]["where"]["channel"] == 0, "mismatch location points at filter 0")

stream[16] = 0x0F  # reserved power code
(work / "reserved.bin").write_bytes(bytes(stream))
sacc("compare", cell_example, "--stream", work / "reserved.bin", "--input", work / "x.tensor", code=2)

# usage and validation exit codes
sacc(code=1)
sacc("compile", cell_example, "--array", "0x8", "--out", work / "bad.bin", code=1)
sacc("simulate", work / "small.bin", "--manifest", cell_example, code=1)
sacc("pack", work / "missing.json", "--out", work / "bad.bin", code=1)
bad = json.loads((args.data / "cell_example.json").read_text())
bad["layers"][0]["bn"] = {"mu": 0.0, "sigma": 0.0, "beta": 0.0}
(work / "bad.json").write_text(json.dumps(bad))
r = sacc("pack", work / "bad.json", "--out", work / "bad.bin", code=2)
check("bn.sigma must be > 0" in r.stderr, "validation error names the field")

# gen model is deterministic and loadable
a = sacc("gen", "model", "--seed", 9).stdout
check(a == sacc("gen", "model", "--seed", 9).stdout, "gen model is deterministic")
(work / "gen.json").write_text(a)
sacc("compare", work / "gen.json", "--seed", 9, "--array", "16x8")

for f in failures:
    print("FAIL", f, file=sys.stderr)
sys.exit(1 if failures else 0)
