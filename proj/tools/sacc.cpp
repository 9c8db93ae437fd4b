// sacc: pack, compile, simulate and check power-of-two CNN models on the SAC array model.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "sacsim/error.hpp"
#include "sacsim/manifest.hpp"
#include "sacsim/oracle.hpp"
#include "sacsim/packer.hpp"
#include "sacsim/scheduler.hpp"
#include "sacsim/sim.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace sac;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kValidation = 2, kMismatch = 3, kPackWarning = 4 };

struct RunConfig {
    std::string manifest;
    std::string input;
    std::string stream;
    std::string batch;
    std::string out;
    std::string report;
    std::string array = "128x64";
    std::optional<double> clock_mhz;
    std::string fidelity = "word";
    bool no_zero_skip = false;
    bool human = false;
    std::uint64_t seed = 0;
};

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

std::string layer_name(std::size_t l, std::size_t count) {
    return l == count ? "fc" : "layers[" + std::to_string(l) + "]";
}

SimOptions sim_options(const RunConfig& rc) {
    return {parse_fidelity(rc.fidelity), !rc.no_zero_skip};
}

// pack ------------------------------------------------------------------------------------

int cmd_pack(const RunConfig& rc) {
    const auto m = fold_model(load_manifest_file(rc.manifest));
    std::vector<std::uint8_t> bytes;
    json layers = json::array();
    std::size_t dropped = 0;
    for (std::size_t l = 0; l <= m.layers.size(); ++l) {
        const auto& spec = l < m.layers.size() ? m.layers[l] : m.fc;
        const auto p = combine_columns(spec);
        append_packed(bytes, p);
        dropped += p.dropped;
        layers.push_back({{"layer", layer_name(l, m.layers.size())},
                          {"rows", p.rows},
                          {"cols", p.cols},
                          {"group", p.group_size},
                          {"nonzero_in", spec.weights.nonzeros()},
                          {"dropped", p.dropped}});
    }
    write_bytes(rc.out, bytes);

    std::ostringstream os;
    if (rc.human) {
        os << std::left << std::setw(12) << "layer" << std::setw(12) << "packed" << std::setw(8) << "group"
           << "dropped\n";
        for (const auto& l : layers) {
            os << std::setw(12) << l["layer"].get<std::string>() << std::setw(12)
               << (std::to_string(l["rows"].get<std::size_t>()) + "x" + std::to_string(l["cols"].get<std::size_t>()))
               << std::setw(8) << l["group"].get<unsigned>() << l["dropped"].get<std::size_t>() << "\n";
        }
        os << "wrote " << bytes.size() << " bytes to " << rc.out << "\n";
    } else {
        json j{{"output", rc.out}, {"bytes", bytes.size()}, {"dropped_total", dropped}, {"layers", layers}};
        os << j.dump(2) << "\n";
    }
    emit(rc.report, os.str());
    if (dropped > 0) {
        std::cerr << "warning: " << dropped << " non-zero weight(s) dropped by column combining\n";
        return kPackWarning;
    }
    return kOk;
}

// compile ---------------------------------------------------------------------------------

int cmd_compile(const RunConfig& rc) {
    const auto cfg = ArrayConfig::parse(rc.array);
    const auto c = compile_model(load_manifest_file(rc.manifest), cfg);
    const auto bytes = serialize_stream(c);
    write_bytes(rc.out, bytes);

    const auto dims = c.model.matmul_dims();
    json layers = json::array();
    for (std::size_t l = 0; l < c.plans.size(); ++l) {
        const auto& plan = c.plans[l];
        const auto& p = c.packed[l];
        layers.push_back({{"layer", layer_name(l, c.model.layers.size())},
                          {"packed", std::to_string(p.rows) + "x" + std::to_string(p.cols)},
                          {"input", std::to_string(dims[l].first) + "x" + std::to_string(dims[l].second)},
                          {"vertical_tiles", plan.vertical.size()},
                          {"horizontal_tiles", plan.horizontal.size()},
                          {"instructions", 2 * plan.tile_count()}});
    }
    const auto words = c.instructions().size();
    std::ostringstream os;
    if (rc.human) {
        os << "array " << cfg.to_string() << ", " << words << " instructions, " << bytes.size() << " bytes\n";
        for (const auto& l : layers) {
            os << "  " << std::left << std::setw(12) << l["layer"].get<std::string>() << std::setw(10)
               << l["packed"].get<std::string>() << " tiles " << l["vertical_tiles"].get<std::size_t>() << "x"
               << l["horizontal_tiles"].get<std::size_t>() << "  input " << l["input"].get<std::string>() << "\n";
        }
        if (c.dropped_weights() > 0) os << "dropped weights: " << c.dropped_weights() << "\n";
    } else {
        json j{{"output", rc.out},
               {"array", cfg.to_string()},
               {"instructions", words},
               {"bytes", bytes.size()},
               {"dropped_weights", c.dropped_weights()},
               {"layers", layers}};
        os << j.dump(2) << "\n";
    }
    emit(rc.report, os.str());
    return kOk;
}

// simulate --------------------------------------------------------------------------------

CompiledModel load_stream(const RunConfig& rc, const ModelManifest& m, bool explicit_array) {
    auto c = bind_stream(parse_stream(read_bytes(rc.stream)), m);
    if (explicit_array) {
        const auto cfg = ArrayConfig::parse(rc.array);
        for (const auto& s : c.steps) {
            if (s.payload.rows > cfg.rows || s.payload.cols > cfg.cols) {
                throw ShapeError("stream tile " + std::to_string(s.payload.rows) + "x" +
                                 std::to_string(s.payload.cols) + " does not fit a " + cfg.to_string() + " array");
            }
        }
        c.array = cfg;
    }
    return c;
}

std::string render(const SimReport& rep, bool human) { return human ? rep.to_table() : rep.to_json(); }

int cmd_simulate(const RunConfig& rc, bool explicit_array) {
    const auto manifest = load_manifest_file(rc.manifest);
    auto compiled = load_stream(rc, manifest, explicit_array);
    if (rc.clock_mhz) compiled.model.clock_mhz = *rc.clock_mhz;
    const auto opts = sim_options(rc);
    auto load_image = [&](const std::string& path) {
        return parse_tensor(read_bytes(path), manifest.lsb_exp);
    };

    if (rc.batch.empty()) {
        const auto rep = run_model(compiled, load_image(rc.input), opts);
        emit(rc.out, render(rep, rc.human));
        return kOk;
    }

    std::vector<fs::path> images;
    for (const auto& e : fs::directory_iterator(rc.batch))
        if (e.is_regular_file() && e.path().extension() == ".tensor") images.push_back(e.path());
    std::sort(images.begin(), images.end());
    const fs::path out_dir = rc.out.empty() ? fs::path(rc.batch) : fs::path(rc.out);
    fs::create_directories(out_dir);

    struct Result {
        std::string status;
        std::size_t argmax = 0;
    };
    std::vector<Result> results(images.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < images.size(); i = next++) {
            try {
                const auto rep = run_model(compiled, load_image(images[i].string()), opts);
                const auto ext = rc.human ? ".txt" : ".json";
                emit((out_dir / images[i].stem()).string() + ext, render(rep, rc.human));
                results[i] = {"ok", rep.argmax()};
            } catch (const std::exception& e) {
                results[i] = {std::string("error: ") + e.what(), 0};
            }
        }
    };
    const auto n_threads = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                            static_cast<unsigned>(images.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    json summary = json::array();
    bool all_ok = true;
    for (std::size_t i = 0; i < images.size(); ++i) {
        all_ok &= results[i].status == "ok";
        json r{{"image", images[i].filename().string()}, {"status", results[i].status}};
        if (results[i].status == "ok") r["argmax"] = results[i].argmax;
        summary.push_back(r);
    }
    std::cout << json{{"images", images.size()}, {"out_dir", out_dir.string()}, {"results", summary}}.dump(2) << "\n";
    return all_ok ? kOk : kValidation;
}

// compare ---------------------------------------------------------------------------------

struct Mismatch {
    std::string stage;
    json where;
    std::int64_t expected = 0;
    std::int64_t actual = 0;
};

int cmd_compare(const RunConfig& rc, bool explicit_array) {
    const auto m = load_manifest_file(rc.manifest);
    const auto image = rc.input.empty() ? oracle::gen_image(rc.seed, m.input_shape)
                                        : parse_tensor(read_bytes(rc.input), m.lsb_exp);
    const auto compiled = rc.stream.empty() ? compile_model(m, ArrayConfig::parse(rc.array))
                                            : load_stream(rc, m, explicit_array);
    const auto ref = oracle::ref_forward(m, image);
    auto opts = sim_options(rc);
    SimTrace trace;
    const auto rep = run_model(compiled, image, opts, &trace);
    opts.zero_skip = !opts.zero_skip;
    const auto flipped = run_model(compiled, image, opts);

    std::optional<Mismatch> first;
    std::int64_t max_diff = 0;
    auto note = [&](const std::string& stage, json where, std::int64_t want, std::int64_t got) {
        const auto d = std::llabs(want - got);
        if (d == 0) return;
        max_diff = std::max<std::int64_t>(max_diff, d);
        if (!first) first = Mismatch{stage, std::move(where), want, got};
    };
    for (std::size_t l = 0; l < ref.activations.size(); ++l) {
        const auto& a = ref.activations[l];
        const auto& b = trace.activations.at(l);
        const auto& s = a.shape();
        for (std::size_t c = 0; c < s.channels; ++c)
            for (std::size_t y = 0; y < s.height; ++y)
                for (std::size_t x = 0; x < s.width; ++x)
                    note(layer_name(l, m.layers.size()), json{{"channel", c}, {"y", y}, {"x", x}}, a.at(c, y, x),
                         b.at(c, y, x));
    }
    for (std::size_t r = 0; r < ref.fc_outputs.rows; ++r)
        for (std::size_t p = 0; p < ref.fc_outputs.positions; ++p)
            note("fc", json{{"class", r}, {"position", p}}, ref.fc_outputs.at(r, p),
                 trace.fc_outputs.at(r * ref.fc_outputs.positions + p));
    for (std::size_t r = 0; r < ref.logits.size(); ++r) note("logits", json{{"class", r}}, ref.logits[r], rep.logits[r]);

    const bool identical = !first;
    const bool skip_invariant = flipped.logits == rep.logits;
    std::ostringstream os;
    if (rc.human) {
        os << (identical ? "identical" : "MISMATCH") << " (max abs diff " << max_diff << ")\n";
        if (first) {
            os << "first difference in " << first->stage << " at " << first->where.dump() << ": expected "
               << first->expected << ", got " << first->actual << "\n";
        }
        os << "zero-skip on/off logits " << (skip_invariant ? "identical" : "DIFFER") << "; active cells "
           << rep.cell_cycles_active << " vs " << flipped.cell_cycles_active << "\n";
    } else {
        json j{{"status", identical ? "identical" : "mismatch"},
               {"max_abs_diff", max_diff},
               {"argmax", rep.argmax()},
               {"array", compiled.array.to_string()},
               {"zero_skip_invariant", skip_invariant},
               {"cell_cycles_active", rep.cell_cycles_active},
               {"cell_cycles_active_flipped", flipped.cell_cycles_active}};
        if (first) {
            j["first_mismatch"] = {{"stage", first->stage},
                                   {"where", first->where},
                                   {"expected", first->expected},
                                   {"actual", first->actual}};
        }
        os << j.dump(2) << "\n";
    }
    emit(rc.out, os.str());
    return identical && skip_invariant ? kOk : kMismatch;
}

// gen -------------------------------------------------------------------------------------

int cmd_gen_model(const RunConfig& rc, const std::string& topology, std::size_t max_layers, std::size_t max_channels) {
    oracle::Topology t;
    if (topology == "imagenet_small56") {
        t = oracle::imagenet_small56();
    } else if (topology == "random") {
        t = oracle::random_topology(rc.seed, max_layers, max_channels);
    } else {
        throw CLI::ValidationError("--topology", "must be 'random' or 'imagenet_small56'");
    }
    if (rc.clock_mhz) t.clock_mhz = *rc.clock_mhz;
    emit(rc.out, dump_manifest(oracle::gen_synthetic(rc.seed, t)));
    return kOk;
}

Shape3 parse_shape(const std::string& s) {
    Shape3 shape;
    char a = 0, b = 0;
    std::istringstream is(s);
    if (!(is >> shape.channels >> a >> shape.height >> b >> shape.width) || a != ',' || b != ',' || !is.eof() ||
        shape.size() == 0) {
        throw CLI::ValidationError("--shape", "expected C,H,W with positive sizes, got '" + s + "'");
    }
    return shape;
}

int cmd_gen_image(const RunConfig& rc, const std::string& shape_text, double zero_fraction) {
    Shape3 shape;
    if (!rc.manifest.empty()) {
        shape = load_manifest_file(rc.manifest).input_shape;
    } else if (!shape_text.empty()) {
        shape = parse_shape(shape_text);
    } else {
        throw CLI::ValidationError("gen image", "one of --manifest or --shape is required");
    }
    if (rc.out.empty()) throw CLI::ValidationError("--out", "is required");
    write_bytes(rc.out, serialize_tensor(oracle::gen_image(rc.seed, shape, zero_fraction)));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sacc - power-of-two CNN compiler and SAC systolic array simulator"};
    app.require_subcommand(1);
    RunConfig rc;

    auto add_array = [&](CLI::App* cmd) {
        return cmd->add_option("--array", rc.array, "Systolic array size RxC")->capture_default_str();
    };
    auto add_sim_flags = [&](CLI::App* cmd) {
        cmd->add_option("--fidelity", rc.fidelity, "Simulation fidelity")
            ->check(CLI::IsMember({"bit", "word"}))
            ->capture_default_str();
        cmd->add_flag("--no-zero-skip", rc.no_zero_skip, "Clock every cell, even for zero operands");
    };

    auto* pack = app.add_subcommand("pack", "Column-combine and encode a model into packed cell records");
    pack->add_option("manifest", rc.manifest, "Model manifest (JSON)")->required()->check(CLI::ExistingFile);
    pack->add_option("--out", rc.out, "Packed binary output")->required();
    pack->add_option("--report", rc.report, "Report path (default stdout)");
    pack->add_flag("--human", rc.human, "Print a table instead of JSON");

    auto* compile = app.add_subcommand("compile", "Tile a model and write its instruction stream");
    compile->add_option("manifest", rc.manifest, "Model manifest (JSON)")->required()->check(CLI::ExistingFile);
    add_array(compile);
    compile->add_option("--out", rc.out, "Instruction stream output")->required();
    compile->add_option("--report", rc.report, "Report path (default stdout)");
    compile->add_flag("--human", rc.human, "Print a table instead of JSON");

    auto* simulate = app.add_subcommand("simulate", "Run an instruction stream on the array model");
    simulate->add_option("stream", rc.stream, "Instruction stream from 'compile'")->required()->check(CLI::ExistingFile);
    simulate->add_option("--manifest", rc.manifest, "Manifest the stream was compiled from")
        ->required()
        ->check(CLI::ExistingFile);
    auto* sim_input = simulate->add_option("--input", rc.input, "Input tensor file")->check(CLI::ExistingFile);
    auto* sim_batch =
        simulate->add_option("--batch", rc.batch, "Directory of *.tensor inputs, processed in parallel")
            ->check(CLI::ExistingDirectory);
    sim_input->excludes(sim_batch);
    auto* sim_array = add_array(simulate);
    simulate->add_option("--clock-mhz", rc.clock_mhz, "Override the manifest clock")->check(CLI::PositiveNumber);
    add_sim_flags(simulate);
    simulate->add_option("--out", rc.out, "Report path (default stdout); output directory with --batch");
    simulate->add_flag("--human", rc.human, "Print a table instead of JSON");

    auto* compare = app.add_subcommand("compare", "Check the simulator against the reference model");
    compare->add_option("manifest", rc.manifest, "Model manifest (JSON)")->required()->check(CLI::ExistingFile);
    compare->add_option("--input", rc.input, "Input tensor file (default: random image from --seed)")
        ->check(CLI::ExistingFile);
    compare->add_option("--stream", rc.stream, "Simulate this stream instead of compiling the manifest")
        ->check(CLI::ExistingFile);
    auto* cmp_array = add_array(compare);
    compare->add_option("--seed", rc.seed, "Seed for the generated input");
    add_sim_flags(compare);
    compare->add_option("--out", rc.out, "Report path (default stdout)");
    compare->add_flag("--human", rc.human, "Print a table instead of JSON");

    auto* gen = app.add_subcommand("gen", "Generate synthetic models and input tensors");
    gen->require_subcommand(1);
    std::string topology = "random";
    std::size_t max_layers = 4, max_channels = 32;
    auto* gen_model = gen->add_subcommand("model", "Synthetic manifest with combinable weights");
    gen_model->add_option("--topology", topology, "random | imagenet_small56")->capture_default_str();
    gen_model->add_option("--max-layers", max_layers, "Layer limit for random topologies")
        ->check(CLI::Range(1, 64))
        ->capture_default_str();
    gen_model->add_option("--max-channels", max_channels, "Channel limit for random topologies")
        ->check(CLI::Range(1, 4096))
        ->capture_default_str();
    gen_model->add_option("--seed", rc.seed, "Generator seed")->capture_default_str();
    gen_model->add_option("--clock-mhz", rc.clock_mhz, "Clock written into the manifest")->check(CLI::PositiveNumber);
    gen_model->add_option("--out", rc.out, "Manifest path (default stdout)");

    std::string shape_text;
    double zero_fraction = 0.0;
    auto* gen_image = gen->add_subcommand("image", "Random 8-bit input tensor");
    gen_image->add_option("--shape", shape_text, "C,H,W");
    gen_image->add_option("--manifest", rc.manifest, "Take the shape from a manifest")->check(CLI::ExistingFile);
    gen_image->add_option("--zero-fraction", zero_fraction, "Share of pixels forced to zero")
        ->check(CLI::Range(0.0, 1.0));
    gen_image->add_option("--seed", rc.seed, "Generator seed")->capture_default_str();
    gen_image->add_option("--out", rc.out, "Tensor file path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*pack) return cmd_pack(rc);
        if (*compile) return cmd_compile(rc);
        if (*simulate) {
            if (rc.input.empty() && rc.batch.empty()) {
                std::cerr << "simulate: one of --input or --batch is required\n";
                return kUsage;
            }
            return cmd_simulate(rc, sim_array->count() > 0);
        }
        if (*compare) return cmd_compare(rc, cmp_array->count() > 0);
        if (*gen_model) return cmd_gen_model(rc, topology, max_layers, max_channels);
        if (*gen_image) return cmd_gen_image(rc, shape_text, zero_fraction);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    }
    return kUsage;
}
