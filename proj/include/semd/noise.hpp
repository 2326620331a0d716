#pragma once

#include "semd/data.hpp"
#include "semd/probe.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace semd {

enum class NoiseKind { symmetric, asymmetric, confidence_based, external_file };

std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& s);

struct NoiseSpec {
    NoiseKind kind = NoiseKind::symmetric;
    double rate = 0.0;  // eta; the observed disagreement rate for external files
    std::uint64_t seed = 0;
    // Exactly floor(rate * n) examples are selected (without replacement)
    // instead of an independent Bernoulli(rate) draw per example.
    bool exact_count = false;
    std::vector<int> asym_map;  // class -> target, asymmetric only
    std::string source;         // external file path, external_file only

    nlohmann::json to_json() const;
    static NoiseSpec from_json(const nlohmann::json& j);
};

struct NoiseResult {
    LabelSet noisy_labels;
    LabelSet clean_labels;
    std::vector<bool> noise_mask;  // true where the label changed
    NoiseSpec spec;

    double observed_rate() const;
};

// Each selected example gets a label drawn uniformly from the other C-1 classes.
NoiseResult inject_symmetric(const LabelSet& clean, double rate, std::uint64_t seed, bool exact_count = false);

// Draws a fixed map m with m[i] != i (depends only on seed and C, and may be
// non-injective), then relabels each selected example y -> m[y].
NoiseResult inject_asymmetric(const LabelSet& clean, double rate, std::uint64_t seed, bool exact_count = false);

// Trains a probe in-sample on the clean labels; each selected example takes
// the highest-probability class other than its own.
NoiseResult inject_confidence_based(const Matrix& x, const LabelSet& clean, double rate, const TrainConfig& cfg,
                                    std::uint64_t seed, bool exact_count = false);

// Human-style noise supplied as a label file aligned with `clean`.
NoiseResult load_external_labels(const std::filesystem::path& path, const LabelSet& clean);

struct MultiLabelNoiseResult {
    MultiLabelSet noisy_labels;
    MultiLabelSet clean_labels;
    std::vector<bool> noise_mask;  // n*C row-major
};

// Flips each (example, c) annotation with probability `rate`, only for the
// listed classes. Other columns are untouched.
MultiLabelNoiseResult inject_multilabel_flips(const MultiLabelSet& clean, double rate,
                                              const std::vector<std::size_t>& classes, std::uint64_t seed);

// Asymmetric map on its own (exposed for inspection).
std::vector<int> draw_asymmetric_map(std::size_t num_classes, std::uint64_t seed);

}  // namespace semd
