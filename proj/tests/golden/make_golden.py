"""Writes the golden packed files for data/cell_example.json.

The cell byte layout is spelled out here independently of the C++ encoder:
bits 7..5 index within the group, bit 4 sign (1 = negative), bits 3..0 power code
(0 = zero weight, exponent + 7 otherwise).
"""
import json
import struct
import sys
from pathlib import Path

root = Path(__file__).resolve().parents[2]
doc = json.loads((root / "data" / "cell_example.json").read_text())


def pack(layer, bias):
    f, c, g = layer["f"], layer["c"], layer["g"]
    cols = -(-c // g)
    dense = [[None] * c for _ in range(f)]
    for t in layer["weights"]:
        dense[t["row"]][t["col"]] = (t["sign"], t["exp"])
    out = bytearray(struct.pack("<HHB3x", f, cols, g))
    for r in range(f):
        for k in range(cols):
            group = [(ch, dense[r][ch]) for ch in range(k * g, min((k + 1) * g, c)) if dense[r][ch]]
            if not group:
                out.append(0)
                continue
            ch, (sign, exp) = max(group, key=lambda e: (e[1][1], -e[0]))
            out.append(((ch - k * g) << 5) | ((1 if sign < 0 else 0) << 4) | (exp + 7))
    for b in bias:
        out += struct.pack("<i", b)
    return bytes(out)


layer = doc["layers"][0]
layer_bin = pack(layer, layer["bn"]["bias_fx"])
fc_bin = pack(doc["fc"], [0] * doc["fc"]["f"])
out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
(out_dir / "cell_example_layer0.bin").write_bytes(layer_bin)
(out_dir / "cell_example_model.bin").write_bytes(layer_bin + fc_bin)
