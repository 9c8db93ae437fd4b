#pragma once

#include <string>
#include <string_view>

#include "sacsim/model.hpp"

namespace sac {

/// Parses and validates a JSON model manifest.
///
/// Top-level keys: input_shape [C,H,W], reshape_factor, clock_mhz, optional lsb_exp,
/// layers[], fc. Each layer has f, c, g, optional s, weights (sparse
/// {row,col,sign,exp} triples or a dense f x c array of reals, which are log-quantized),
/// optional bn ({mu,sigma,beta} or {scale_exp,bias_fx}; scalars broadcast to every filter)
/// and optional shift_dirs ([[dy,dx], ...] per channel). Layers after the first shift
/// their input; without shift_dirs the nine offsets are assigned round-robin.
/// The fc block takes f, c, g, weights, optional s and optional classes (== f).
/// Unknown keys are rejected. Errors are ManifestError with line or field context.
ModelManifest load_manifest(std::string_view text);

ModelManifest load_manifest_file(const std::string& path);

/// Canonical JSON form (sparse weights, per-filter bn, explicit shift_dirs).
/// load_manifest(dump_manifest(m)) == m.
std::string dump_manifest(const ModelManifest& m);

}  // namespace sac
