#include "ulab/datakit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

#include "ulab/format.hpp"

namespace ulab {

void Dataset::validate() const {
    if (labels.empty()) throw ConfigError("dataset must contain at least one row");
    if (features.rows() != labels.size()) throw ShapeError("feature rows and labels differ in count");
    if (num_classes < 1) throw ConfigError("dataset needs at least one class");
    for (int y : labels) {
        if (y < 1 || static_cast<std::size_t>(y) > num_classes) {
            throw LabelError("label " + std::to_string(y) + " outside [1, " +
                             std::to_string(num_classes) + "]");
        }
    }
    for (double v : features.data()) {
        if (!std::isfinite(v)) throw NumericError("dataset features contain non-finite values");
    }
}

std::vector<int> Dataset::labels_of(std::span<const std::size_t> idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(labels.at(i));
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
    return Dataset{rows(idx), labels_of(idx), num_classes};
}

IndexSet Dataset::all_indices() const {
    IndexSet out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
}

IndexSet DataSplits::train_indices() const {
    IndexSet out;
    out.reserve(retain.size() + forget.size());
    std::merge(retain.begin(), retain.end(), forget.begin(), forget.end(), std::back_inserter(out));
    return out;
}

void DataSplits::validate(std::size_t pool_size) const {
    std::vector<int> owner(pool_size, -1);
    const IndexSet* sets[] = {&held_out, &retain, &forget, &validation};
    const char* names[] = {"held_out", "retain", "forget", "validation"};
    for (int s = 0; s < 4; ++s) {
        if (sets[s]->empty()) throw SplitError(std::string(names[s]) + " split is empty");
        for (std::size_t i : *sets[s]) {
            if (i >= pool_size) throw SplitError("split index out of range");
            if (owner[i] != -1) {
                throw SplitError("index " + std::to_string(i) + " appears in both " +
                                 names[owner[i]] + " and " + names[s]);
            }
            owner[i] = s;
        }
    }
    for (std::size_t i = 0; i < pool_size; ++i) {
        if (owner[i] == -1) throw SplitError("index " + std::to_string(i) + " is in no split");
    }
}

std::size_t ClassHistogram::total() const noexcept {
    std::size_t s = 0;
    for (auto c : counts) s += c;
    return s;
}

void GenSpec::validate() const {
    if (num_classes < 2) throw ConfigError("GenSpec.num_classes must be >= 2");
    if (input_dim < 1) throw ConfigError("GenSpec.input_dim must be >= 1");
    if (samples_per_class < 1) throw ConfigError("GenSpec.samples_per_class must be >= 1");
    if (!(noise_sigma > 0.0)) throw ConfigError("GenSpec.noise_sigma must be > 0");
    if (!(centroid_scale >= 0.0)) throw ConfigError("GenSpec.centroid_scale must be >= 0");
}

Matrix gaussian_mixture_centroids(const GenSpec& spec) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, 0));
    Matrix c(spec.num_classes, spec.input_dim);
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        auto row = c.row(k);
        double norm2 = 0.0;
        while (norm2 == 0.0) {
            for (double& v : row) v = rng.normal();
            norm2 = 0.0;
            for (double v : row) norm2 += v * v;
        }
        const double scale = spec.centroid_scale / std::sqrt(norm2);
        for (double& v : row) v *= scale;
    }
    return c;
}

Dataset generate_gaussian_mixture(const GenSpec& spec) {
    return generate_gaussian_mixture(spec, derive_seed(spec.seed, 1));
}

Dataset generate_gaussian_mixture(const GenSpec& spec, std::uint64_t sample_seed) {
    const Matrix centroids = gaussian_mixture_centroids(spec);
    const std::size_t n = spec.num_classes * spec.samples_per_class;
    Dataset out{Matrix(n, spec.input_dim), std::vector<int>(n), spec.num_classes};
    Rng rng(sample_seed);
    std::size_t i = 0;
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        const auto mu = centroids.row(k);
        for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++i) {
            auto row = out.features.row(i);
            for (std::size_t j = 0; j < spec.input_dim; ++j) {
                row[j] = mu[j] + spec.noise_sigma * rng.normal();
            }
            out.labels[i] = static_cast<int>(k + 1);
        }
    }
    return out;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, CsvOptions opts) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string name = path.string();

    std::vector<double> feats;
    std::vector<int> labels;
    std::size_t dim = 0;
    bool dim_known = false;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (opts.has_header && lineno == 1) continue;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(line);
        if (cells.size() < 2) throw IngestionError(name, lineno, "need at least one feature and a label");
        const std::size_t d = cells.size() - 1;
        if (!dim_known) {
            dim = d;
            dim_known = true;
        } else if (d != dim) {
            throw IngestionError(name, lineno, "ragged row: expected " + std::to_string(dim + 1) +
                                                   " columns, found " + std::to_string(d + 1));
        }
        for (std::size_t j = 0; j < d; ++j) {
            const auto cell = cells[j];
            double v = 0.0;
            const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || p != cell.data() + cell.size()) {
                throw IngestionError(name, lineno, "cannot parse feature '" + std::string(cell) + "'");
            }
            if (!std::isfinite(v)) {
                throw IngestionError(name, lineno, "non-finite feature '" + std::string(cell) + "'");
            }
            feats.push_back(v);
        }
        const auto cell = cells.back();
        long long y = 0;
        const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), y);
        if (ec != std::errc() || p != cell.data() + cell.size()) {
            throw IngestionError(name, lineno, "cannot parse label '" + std::string(cell) + "'");
        }
        if (y < 1) throw IngestionError(name, lineno, "label " + std::to_string(y) + " is below 1");
        if (y > 1'000'000) throw IngestionError(name, lineno, "label " + std::to_string(y) + " is too large");
        labels.push_back(static_cast<int>(y));
    }
    if (labels.empty()) throw IngestionError(name, lineno, "no data rows");
    const int kmax = *std::max_element(labels.begin(), labels.end());
    Dataset out{Matrix(labels.size(), dim, std::move(feats)), std::move(labels),
                static_cast<std::size_t>(kmax)};
    return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path, bool header) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    if (header) {
        for (std::size_t j = 0; j < data.dim(); ++j) out << "x" << j << ",";
        out << "label\n";
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data.features.row(i)) out << format_double(v) << ",";
        out << data.labels[i] << "\n";
    }
    if (!out) throw IoError("write failed for " + path.string());
}

std::size_t round_half_up(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
}

DataSplits make_splits(const Dataset& pool, Dataset test, double forget_fraction,
                       std::uint64_t seed) {
    pool.validate();
    if (!(forget_fraction > 0.0 && forget_fraction < 1.0)) {
        throw SplitError("forget_fraction must lie in (0, 1)");
    }
    const std::size_t n = pool.size();
    // Integer round-half-up of n / 10.
    const std::size_t n_held = (n + 5) / 10;
    if (n_held >= n) throw SplitError("pool too small for a held-out split");
    const std::size_t n_train = n - n_held;
    const std::size_t n_forget = round_half_up(forget_fraction, n_train);
    const std::size_t n_val = (n_train + 5) / 10;
    if (n_held == 0 || n_forget == 0 || n_val == 0 || n_forget + n_val >= n_train) {
        throw SplitError("pool of " + std::to_string(n) + " rows cannot produce four nonempty splits");
    }

    IndexSet perm = pool.all_indices();
    Rng rng(seed);
    shuffle(perm, rng);

    DataSplits s;
    auto take = [&](std::size_t from, std::size_t count) {
        IndexSet out(perm.begin() + static_cast<std::ptrdiff_t>(from),
                     perm.begin() + static_cast<std::ptrdiff_t>(from + count));
        std::sort(out.begin(), out.end());
        return out;
    };
    s.held_out = take(0, n_held);
    s.forget = take(n_held, n_forget);
    s.validation = take(n_held + n_forget, n_val);
    s.retain = take(n_held + n_forget + n_val, n_train - n_forget - n_val);
    s.test = std::move(test);

    const auto hist = class_histogram(pool.labels_of(s.held_out), pool.num_classes);
    for (std::size_t k = 0; k < hist.counts.size(); ++k) {
        if (hist.counts[k] == 0) {
            throw SplitError("class " + std::to_string(k + 1) + " is absent from the held-out split");
        }
    }
    return s;
}

ClassHistogram class_histogram(std::span<const int> labels, std::size_t num_classes) {
    ClassHistogram h{std::vector<std::size_t>(num_classes, 0)};
    for (int y : labels) {
        if (y < 1 || static_cast<std::size_t>(y) > num_classes) {
            throw LabelError("label " + std::to_string(y) + " outside [1, " +
                             std::to_string(num_classes) + "]");
        }
        ++h.counts[static_cast<std::size_t>(y - 1)];
    }
    return h;
}

void shuffle(std::span<std::size_t> v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(v[i - 1], v[j]);
    }
}

IndexSet sample_minibatch(std::span<const std::size_t> indices, std::size_t b, Rng& rng) {
    if (indices.empty()) throw EmptyBatchError("sample_minibatch: empty index set");
    if (b == 0) throw ConfigError("sample_minibatch: batch size must be >= 1");
    IndexSet out;
    out.reserve(b);
    if (b <= indices.size()) {
        IndexSet pool(indices.begin(), indices.end());
        // Partial Fisher-Yates: the first b slots become the draw.
        for (std::size_t i = 0; i < b; ++i) {
            const std::size_t j = i + rng.below(pool.size() - i);
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
    } else {
        for (std::size_t i = 0; i < b; ++i) out.push_back(indices[rng.below(indices.size())]);
    }
    return out;
}

}  // namespace ulab
