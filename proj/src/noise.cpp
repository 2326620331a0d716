#include "semd/noise.hpp"

#include "semd/common.hpp"
#include "semd/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace semd {

using nlohmann::json;

std::string to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::symmetric: return "symmetric";
        case NoiseKind::asymmetric: return "asymmetric";
        case NoiseKind::confidence_based: return "confidence_based";
        case NoiseKind::external_file: return "external_file";
    }
    return "unknown";
}

NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "symmetric") return NoiseKind::symmetric;
    if (s == "asymmetric") return NoiseKind::asymmetric;
    if (s == "confidence_based" || s == "confidence") return NoiseKind::confidence_based;
    if (s == "external_file" || s == "external" || s == "human") return NoiseKind::external_file;
    throw InvalidInput("unknown noise kind '" + s + "'");
}

json NoiseSpec::to_json() const {
    json j;
    j["kind"] = to_string(kind);
    j["rate"] = rate;
    j["seed"] = seed;
    j["exact_count"] = exact_count;
    if (kind == NoiseKind::asymmetric) j["asym_map"] = asym_map;
    if (kind == NoiseKind::external_file) j["source"] = source;
    return j;
}

NoiseSpec NoiseSpec::from_json(const json& j) {
    NoiseSpec s;
    s.kind = noise_kind_from_string(j.at("kind").get<std::string>());
    s.rate = j.at("rate").get<double>();
    s.seed = j.value("seed", std::uint64_t{0});
    s.exact_count = j.value("exact_count", false);
    if (j.contains("asym_map")) s.asym_map = j["asym_map"].get<std::vector<int>>();
    if (j.contains("source")) s.source = j["source"].get<std::string>();
    return s;
}

double NoiseResult::observed_rate() const {
    if (noise_mask.empty()) return 0.0;
    const auto changed = std::count(noise_mask.begin(), noise_mask.end(), true);
    return static_cast<double>(changed) / static_cast<double>(noise_mask.size());
}

namespace {

void check_rate(double rate) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw InvalidInput("noise rate must be in [0, 1]");
}

void check_labels(const LabelSet& y) {
    if (y.num_classes < 2) throw InvalidInput("noise injection needs at least 2 classes");
    y.validate();
}

// Which examples are subjected to the noising procedure.
std::vector<bool> select_examples(std::size_t n, double rate, bool exact_count, RngStream& rng) {
    std::vector<bool> selected(n, false);
    if (exact_count) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        rng.shuffle(idx);
        const auto take = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
        for (std::size_t k = 0; k < take; ++k) selected[idx[k]] = true;
    } else {
        for (std::size_t i = 0; i < n; ++i) selected[i] = rng.bernoulli(rate);
    }
    return selected;
}

NoiseResult finish(const LabelSet& clean, LabelSet noisy, NoiseSpec spec) {
    NoiseResult r;
    r.noise_mask.resize(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) r.noise_mask[i] = noisy[i] != clean[i];
    r.clean_labels = clean;
    r.noisy_labels = std::move(noisy);
    r.spec = std::move(spec);
    return r;
}

}  // namespace

NoiseResult inject_symmetric(const LabelSet& clean, double rate, std::uint64_t seed, bool exact_count) {
    check_rate(rate);
    check_labels(clean);
    RngStream rng = RngStream(seed).split(1);
    const auto selected = select_examples(clean.size(), rate, exact_count, rng);
    LabelSet noisy = clean;
    const std::size_t C = clean.num_classes;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        if (!selected[i]) continue;
        // Uniform over the C-1 other classes.
        auto draw = static_cast<int>(rng.uniform_index(C - 1));
        if (draw >= clean[i]) ++draw;
        noisy.labels[i] = draw;
    }
    NoiseSpec spec{NoiseKind::symmetric, rate, seed, exact_count, {}, {}};
    return finish(clean, std::move(noisy), std::move(spec));
}

std::vector<int> draw_asymmetric_map(std::size_t num_classes, std::uint64_t seed) {
    if (num_classes < 2) throw InvalidInput("asymmetric map needs at least 2 classes");
    RngStream rng = RngStream(seed).split(2);
    std::vector<int> map(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        auto draw = rng.uniform_index(num_classes - 1);
        if (draw >= c) ++draw;
        map[c] = static_cast<int>(draw);
    }
    return map;
}

NoiseResult inject_asymmetric(const LabelSet& clean, double rate, std::uint64_t seed, bool exact_count) {
    check_rate(rate);
    check_labels(clean);
    auto map = draw_asymmetric_map(clean.num_classes, seed);
    RngStream rng = RngStream(seed).split(1);
    const auto selected = select_examples(clean.size(), rate, exact_count, rng);
    LabelSet noisy = clean;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        if (selected[i]) noisy.labels[i] = map[static_cast<std::size_t>(clean[i])];
    }
    NoiseSpec spec{NoiseKind::asymmetric, rate, seed, exact_count, std::move(map), {}};
    return finish(clean, std::move(noisy), std::move(spec));
}

NoiseResult inject_confidence_based(const Matrix& x, const LabelSet& clean, double rate, const TrainConfig& cfg,
                                    std::uint64_t seed, bool exact_count) {
    check_rate(rate);
    check_labels(clean);
    LabelSet noisy = clean;
    if (rate > 0.0) {
        const auto model = train_probe(x, clean, cfg);
        const auto proba = predict_proba(model, x);
        RngStream rng = RngStream(seed).split(1);
        const auto selected = select_examples(clean.size(), rate, exact_count, rng);
        for (std::size_t i = 0; i < clean.size(); ++i) {
            if (!selected[i]) continue;
            auto row = proba.row(i);
            const auto own = static_cast<std::size_t>(clean[i]);
            std::size_t best = own == 0 ? 1 : 0;
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (c != own && row[c] > row[best]) best = c;
            }
            noisy.labels[i] = static_cast<int>(best);
        }
    }
    NoiseSpec spec{NoiseKind::confidence_based, rate, seed, exact_count, {}, {}};
    return finish(clean, std::move(noisy), std::move(spec));
}

NoiseResult load_external_labels(const std::filesystem::path& path, const LabelSet& clean) {
    auto noisy = read_labels(path, clean.num_classes);
    if (noisy.size() != clean.size()) {
        throw FormatError(path.string() + ": " + std::to_string(noisy.size()) + " labels, expected " +
                          std::to_string(clean.size()));
    }
    NoiseSpec spec{NoiseKind::external_file, 0.0, 0, false, {}, path.string()};
    auto r = finish(clean, std::move(noisy), std::move(spec));
    r.spec.rate = r.observed_rate();
    return r;
}

}  // namespace semd

namespace semd {

MultiLabelNoiseResult inject_multilabel_flips(const MultiLabelSet& clean, double rate,
                                              const std::vector<std::size_t>& classes, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw InvalidInput("noise rate must lie in [0, 1]");
    const std::size_t n = clean.size(), C = clean.num_classes();
    MultiLabelNoiseResult out{clean, clean, std::vector<bool>(n * C, false)};
    RngStream root(seed);
    for (auto c : classes) {
        if (c >= C) throw InvalidInput("noise class " + std::to_string(c) + " out of range");
        auto rng = root.split(0x6d6c0000ULL + c);
        for (std::size_t i = 0; i < n; ++i) {
            if (!rng.bernoulli(rate)) continue;
            out.noisy_labels.set(i, c, clean(i, c) == 0);
            out.noise_mask[i * C + c] = true;
        }
    }
    return out;
}

}  // namespace semd
