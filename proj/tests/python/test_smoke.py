from pathlib import Path

import numpy as np
import pytest

import sacsim

DATA = Path(__file__).resolve().parents[2] / "data"


def test_log_quantize():
    assert sacsim.log_quantize(0.5) == (1, -1)
    assert sacsim.log_quantize(-0.3) == (-1, -2)
    assert sacsim.log_quantize(0.0) is None
    assert sacsim.log_quantize(8.0) == (1, 0)


def test_cell_codes():
    assert sacsim.encode_cell(1, -1, -1, group_size=4) == 0x36
    assert sacsim.encode_cell(0, 1, None) == 0
    assert sacsim.decode_cell(0x36) == (1, -1, -1)
    assert sacsim.decode_cell(0) == (0, 0, None)
    with pytest.raises(sacsim.FormatError):
        sacsim.decode_cell(0x0A)


def test_pack_matches_golden():
    m = sacsim.load_manifest_file(str(DATA / "cell_example.json"))
    packed, dropped = sacsim.pack(m)
    golden = (DATA.parent / "tests" / "golden" / "cell_example_model.bin").read_bytes()
    assert packed == golden
    assert dropped == [0, 0]


def test_compile_counts_instructions():
    m = sacsim.load_manifest_file(str(DATA / "tiled_128.json"))
    c = sacsim.compile(m, "128x128")
    assert len(c.instructions) == 6
    assert c.instructions[0] & 0b11 == 0b01
    assert c.instructions[1] & 0b11 == 0b10


def test_simulate_matches_reference():
    for seed in range(5):
        m = sacsim.gen_model(seed, max_layers=3, max_channels=16)
        img = sacsim.gen_image(seed, m.input_shape, 0.2)
        want = sacsim.reference_logits(m, img)
        for array in ("8x8", "128x64"):
            c = sacsim.compile(m, array)
            rep = sacsim.simulate(c, img)
            assert rep["logits"] == want
            assert sacsim.simulate(c, img, fidelity="bit", zero_skip=False)["logits"] == want


def test_stream_round_trip():
    m = sacsim.gen_model(3)
    c = sacsim.compile(m, "16x8")
    b = sacsim.bind_stream(c.stream(), m)
    assert b.instructions == c.instructions


def test_reshape_round_trip():
    img = sacsim.gen_image(1, (3, 224, 224))
    assert img.dtype == np.uint8
    r = sacsim.reshape_input(img, 4)
    assert r.shape == (48, 56, 56)
    assert np.array_equal(sacsim.restore_input(r, 4, 3), img)


def test_manifest_errors():
    with pytest.raises(sacsim.ManifestError, match="line"):
        sacsim.load_manifest("{ not json")
    m = sacsim.gen_model(7)
    assert sacsim.load_manifest(m.dumps()) == m
