#include "ulab/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "ulab/format.hpp"

namespace ulab {

namespace {

constexpr const char* kMagic = "ulab-model";
constexpr int kVersion = 1;

std::string expect_key(std::istream& in, const std::string& key, const std::string& source) {
    std::string k, v;
    if (!(in >> k >> v) || k != key) {
        throw IoError(source + ": expected '" + key + "' entry in checkpoint");
    }
    return v;
}

std::size_t to_size(const std::string& s, const std::string& source) {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw IoError(source + ": bad integer '" + s + "'");
    return v;
}

}  // namespace

void write_checkpoint(const Model& model, std::ostream& out) {
    model.validate();
    out << kMagic << " " << kVersion << "\n";
    out << "kind " << to_string(model.arch.kind) << "\n";
    out << "input_dim " << model.arch.input_dim << "\n";
    out << "hidden_dim " << model.arch.hidden_dim << "\n";
    out << "num_classes " << model.arch.num_classes << "\n";
    out << "activation " << to_string(model.arch.activation) << "\n";
    out << "init_seed " << model.init_seed << "\n";
    out << "theta " << model.theta.size() << "\n";
    for (double v : model.theta) out << format_double(v) << "\n";
}

Model read_checkpoint(std::istream& in, const std::string& source) {
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kMagic) throw IoError(source + ": not a model checkpoint");
    if (version != kVersion) throw IoError(source + ": unsupported checkpoint version");
    Model m;
    m.arch.kind = parse_arch_kind(expect_key(in, "kind", source));
    m.arch.input_dim = to_size(expect_key(in, "input_dim", source), source);
    m.arch.hidden_dim = to_size(expect_key(in, "hidden_dim", source), source);
    m.arch.num_classes = to_size(expect_key(in, "num_classes", source), source);
    m.arch.activation = parse_activation(expect_key(in, "activation", source));
    m.init_seed = to_size(expect_key(in, "init_seed", source), source);
    const std::size_t n = to_size(expect_key(in, "theta", source), source);
    m.arch.validate();
    if (n != m.arch.param_count()) throw IoError(source + ": theta length does not match architecture");
    m.theta.resize(n);
    std::string tok;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(in >> tok)) throw IoError(source + ": truncated theta");
        const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), m.theta[i]);
        if (ec != std::errc() || p != tok.data() + tok.size()) {
            throw IoError(source + ": bad theta value '" + tok + "'");
        }
    }
    m.validate();
    return m;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    write_checkpoint(model, out);
    if (!out) throw IoError("write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return read_checkpoint(in, path.string());
}

}  // namespace ulab
