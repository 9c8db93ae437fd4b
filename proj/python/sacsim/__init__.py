"""Power-of-two CNN packing, tiling and SAC systolic array simulation."""

from ._sacsim import (
    CompiledModel,
    FormatError,
    Manifest,
    ManifestError,
    RangeError,
    ShapeError,
    bind_stream,
    compile,
    decode_cell,
    encode_cell,
    gen_image,
    gen_model,
    load_manifest,
    load_manifest_file,
    log_quantize,
    pack,
    reference_logits,
    reshape_input,
    restore_input,
    simulate,
)

__all__ = [
    "CompiledModel",
    "FormatError",
    "Manifest",
    "ManifestError",
    "RangeError",
    "ShapeError",
    "bind_stream",
    "compile",
    "decode_cell",
    "encode_cell",
    "gen_image",
    "gen_model",
    "load_manifest",
    "load_manifest_file",
    "log_quantize",
    "pack",
    "reference_logits",
    "reshape_input",
    "restore_input",
    "simulate",
]
