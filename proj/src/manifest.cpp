#include "sacsim/manifest.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sacsim/error.hpp"

namespace sac {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw ManifestError(path + ": " + msg);
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) fail(path + "." + key, "unknown field");
    }
}

const json& require(const json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) fail(path + "." + key, "missing required field");
    return *it;
}

long long get_int(const json& v, const std::string& path) {
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::floor(d) == d && std::fabs(d) < 9e15) return static_cast<long long>(d);
    }
    fail(path, "expected an integer");
}

double get_real(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    return v.get<double>();
}

std::size_t get_positive(const json& v, const std::string& path) {
    const long long n = get_int(v, path);
    if (n <= 0) fail(path, "must be positive");
    return static_cast<std::size_t>(n);
}

WeightMatrix parse_weights(const json& w, std::size_t f, std::size_t c, const std::string& path) {
    if (!w.is_array()) fail(path, "expected an array");
    WeightMatrix m(f, c);
    if (w.empty()) return m;
    if (w.front().is_object()) {
        std::set<std::pair<std::size_t, std::size_t>> seen;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const auto p = path + "[" + std::to_string(i) + "]";
            const auto& t = w[i];
            check_keys(t, p, {"row", "col", "sign", "exp"});
            const long long row = get_int(require(t, "row", p), p + ".row");
            const long long col = get_int(require(t, "col", p), p + ".col");
            const long long sign = get_int(require(t, "sign", p), p + ".sign");
            const long long exp = get_int(require(t, "exp", p), p + ".exp");
            if (row < 0 || static_cast<std::size_t>(row) >= f) fail(p + ".row", "out of range");
            if (col < 0 || static_cast<std::size_t>(col) >= c) fail(p + ".col", "out of range");
            if (sign != 1 && sign != -1) fail(p + ".sign", "must be +1 or -1");
            if (exp < kMinExponent || exp > kMaxExponent) fail(p + ".exp", "must lie in [-6, 0]");
            const auto key = std::make_pair(static_cast<std::size_t>(row), static_cast<std::size_t>(col));
            if (!seen.insert(key).second) fail(p, "duplicate entry for this (row, col)");
            m.at(key.first, key.second) = PowTwoWeight::value(static_cast<int>(sign), static_cast<int>(exp));
        }
        return m;
    }
    if (w.size() != f) fail(path, "dense weights need " + std::to_string(f) + " rows");
    for (std::size_t r = 0; r < f; ++r) {
        const auto rp = path + "[" + std::to_string(r) + "]";
        if (!w[r].is_array() || w[r].size() != c) fail(rp, "dense row needs " + std::to_string(c) + " values");
        for (std::size_t k = 0; k < c; ++k) {
            const double x = get_real(w[r][k], rp + "[" + std::to_string(k) + "]");
            if (!std::isfinite(x)) fail(rp, "weights must be finite");
            m.at(r, k) = log_quantize(x);
        }
    }
    return m;
}

// Scalar values broadcast to every filter; arrays must have one value per filter.
std::vector<double> per_filter_real(const json& v, std::size_t f, const std::string& path) {
    if (v.is_array()) {
        if (v.size() != f) fail(path, "needs " + std::to_string(f) + " values (one per filter)");
        std::vector<double> out;
        for (std::size_t i = 0; i < f; ++i) out.push_back(get_real(v[i], path));
        return out;
    }
    return std::vector<double>(f, get_real(v, path));
}

std::vector<long long> per_filter_int(const json& v, std::size_t f, const std::string& path) {
    if (v.is_array()) {
        if (v.size() != f) fail(path, "needs " + std::to_string(f) + " values (one per filter)");
        std::vector<long long> out;
        for (std::size_t i = 0; i < f; ++i) out.push_back(get_int(v[i], path));
        return out;
    }
    return std::vector<long long>(f, get_int(v, path));
}

BnSpec parse_bn(const json& bn, std::size_t f, const std::string& path) {
    if (!bn.is_object()) fail(path, "expected an object");
    if (bn.contains("gamma")) {
        fail(path + ".gamma", "not supported; gamma is fixed to 1 and absorbed by the next layer");
    }
    if (bn.contains("scale_exp") || bn.contains("bias_fx")) {
        check_keys(bn, path, {"scale_exp", "bias_fx"});
        const auto scale = per_filter_int(require(bn, "scale_exp", path), f, path + ".scale_exp");
        const auto bias = per_filter_int(require(bn, "bias_fx", path), f, path + ".bias_fx");
        std::vector<FoldedAffine> out(f);
        for (std::size_t i = 0; i < f; ++i) {
            if (scale[i] < -30 || scale[i] > 30) fail(path + ".scale_exp", "out of range");
            if (bias[i] < INT32_MIN || bias[i] > INT32_MAX) fail(path + ".bias_fx", "does not fit in 32 bits");
            out[i] = {static_cast<int>(scale[i]), static_cast<std::int32_t>(bias[i])};
        }
        return out;
    }
    check_keys(bn, path, {"mu", "sigma", "beta"});
    const auto mu = per_filter_real(require(bn, "mu", path), f, path + ".mu");
    const auto sigma = per_filter_real(require(bn, "sigma", path), f, path + ".sigma");
    const auto beta = per_filter_real(require(bn, "beta", path), f, path + ".beta");
    std::vector<BnParams> out(f);
    for (std::size_t i = 0; i < f; ++i) {
        if (!(sigma[i] > 0.0)) fail(path + ".sigma", "bn.sigma must be > 0");
        out[i] = {mu[i], sigma[i], beta[i]};
    }
    return out;
}

LayerSpec parse_layer(const json& j, const std::string& path, bool is_fc, bool first) {
    if (is_fc) {
        check_keys(j, path, {"f", "c", "s", "g", "weights", "classes"});
    } else {
        check_keys(j, path, {"f", "c", "s", "g", "weights", "bn", "shift_dirs"});
    }
    LayerSpec layer;
    layer.filters = get_positive(require(j, "f", path), path + ".f");
    layer.channels = get_positive(require(j, "c", path), path + ".c");
    layer.groups = static_cast<int>(get_int(require(j, "g", path), path + ".g"));
    if (auto it = j.find("s"); it != j.end()) layer.stride = static_cast<int>(get_int(*it, path + ".s"));
    layer.weights = parse_weights(require(j, "weights", path), layer.filters, layer.channels, path + ".weights");
    if (auto it = j.find("bn"); it != j.end()) {
        layer.bn = parse_bn(*it, layer.filters, path + ".bn");
    } else {
        layer.bn = std::vector<FoldedAffine>(layer.filters);
    }
    if (is_fc) {
        if (auto it = j.find("classes"); it != j.end()) {
            if (get_positive(*it, path + ".classes") != layer.filters) {
                fail(path + ".classes", "must equal f");
            }
        }
        return layer;
    }
    if (auto it = j.find("shift_dirs"); it != j.end()) {
        if (first) fail(path + ".shift_dirs", "first layer has no shift");
        if (!it->is_array()) fail(path + ".shift_dirs", "expected an array of [dy, dx] pairs");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto p = path + ".shift_dirs[" + std::to_string(i) + "]";
            const auto& d = (*it)[i];
            if (!d.is_array() || d.size() != 2) fail(p, "expected [dy, dx]");
            layer.shift_dirs.push_back({static_cast<int>(get_int(d[0], p)), static_cast<int>(get_int(d[1], p))});
        }
        layer.has_shift = true;
    } else if (!first) {
        layer.has_shift = true;
        layer.shift_dirs = round_robin_shifts(layer.channels);
    }
    return layer;
}

std::string locate(std::string_view text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

json layer_to_json(const LayerSpec& layer, bool is_fc) {
    json j;
    j["f"] = layer.filters;
    j["c"] = layer.channels;
    j["s"] = layer.stride;
    j["g"] = layer.groups;
    json w = json::array();
    for (std::size_t r = 0; r < layer.filters; ++r) {
        for (std::size_t c = 0; c < layer.channels; ++c) {
            const auto x = layer.weights.at(r, c);
            if (x.is_zero()) continue;
            w.push_back({{"row", r}, {"col", c}, {"sign", x.sign()}, {"exp", x.exponent()}});
        }
    }
    j["weights"] = std::move(w);
    if (is_fc) {
        j["classes"] = layer.filters;
        return j;
    }
    if (const auto* raw = std::get_if<std::vector<BnParams>>(&layer.bn)) {
        json mu = json::array(), sigma = json::array(), beta = json::array();
        for (const auto& p : *raw) {
            mu.push_back(p.mu);
            sigma.push_back(p.sigma);
            beta.push_back(p.beta);
        }
        j["bn"] = {{"mu", mu}, {"sigma", sigma}, {"beta", beta}};
    } else {
        json scale = json::array(), bias = json::array();
        for (const auto& a : layer.folded_bn()) {
            scale.push_back(a.scale_exp);
            bias.push_back(a.bias_fx);
        }
        j["bn"] = {{"scale_exp", scale}, {"bias_fx", bias}};
    }
    if (layer.has_shift) {
        json dirs = json::array();
        for (const auto& d : layer.shift_dirs) dirs.push_back({d.dy, d.dx});
        j["shift_dirs"] = std::move(dirs);
    }
    return j;
}

}  // namespace

ModelManifest load_manifest(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ManifestError("manifest parse error at " + locate(text, e.byte == 0 ? 0 : e.byte - 1) +
                            ": " + e.what());
    }
    check_keys(doc, "manifest", {"input_shape", "reshape_factor", "clock_mhz", "lsb_exp", "layers", "fc"});

    ModelManifest m;
    const auto& shape = require(doc, "input_shape", "manifest");
    if (!shape.is_array() || shape.size() != 3) fail("input_shape", "expected [channels, height, width]");
    m.input_shape = {get_positive(shape[0], "input_shape[0]"), get_positive(shape[1], "input_shape[1]"),
                     get_positive(shape[2], "input_shape[2]")};
    if (auto it = doc.find("reshape_factor"); it != doc.end()) {
        m.reshape_factor = static_cast<int>(get_int(*it, "reshape_factor"));
    }
    if (auto it = doc.find("clock_mhz"); it != doc.end()) m.clock_mhz = get_real(*it, "clock_mhz");
    if (auto it = doc.find("lsb_exp"); it != doc.end()) {
        const auto e = get_int(*it, "lsb_exp");
        if (e < -16 || e > 16) fail("lsb_exp", "must lie in [-16, 16]");
        m.lsb_exp = static_cast<int>(e);
    }
    const auto& layers = require(doc, "layers", "manifest");
    if (!layers.is_array()) fail("layers", "expected an array");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        m.layers.push_back(parse_layer(layers[i], "layers[" + std::to_string(i) + "]", false, i == 0));
    }
    m.fc = parse_layer(require(doc, "fc", "manifest"), "fc", true, false);
    validate_manifest(m);
    return m;
}

ModelManifest load_manifest_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ManifestError("cannot open manifest '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_manifest(ss.str());
}

std::string dump_manifest(const ModelManifest& m) {
    json doc;
    doc["input_shape"] = {m.input_shape.channels, m.input_shape.height, m.input_shape.width};
    doc["reshape_factor"] = m.reshape_factor;
    doc["clock_mhz"] = m.clock_mhz;
    doc["lsb_exp"] = m.lsb_exp;
    json layers = json::array();
    for (const auto& layer : m.layers) layers.push_back(layer_to_json(layer, false));
    doc["layers"] = std::move(layers);
    doc["fc"] = layer_to_json(m.fc, true);
    return doc.dump(1) + "\n";
}

}  // namespace sac
