#pragma once

#include "semd/data.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace semd {

// ---------------------------------------------------------------------------
// Embedding file, little-endian:
//
//   offset  size  field
//   0       4     magic "LSEB"
//   4       4     u32 format version = 1
//   8       8     u64 n
//   16      4     u32 d
//   20      4     u32 V
//   24      1     u8 dtype = 0 (IEEE-754 binary32)
//   25      7     reserved, zero
//   32      ...   V blocks of n*d row-major binary32
//
// Values are promoted to double on read; writing rounds to float.

inline constexpr std::size_t kEmbeddingHeaderBytes = 32;

void write_embeddings(const EmbeddingTensor& x, const std::filesystem::path& path);
EmbeddingTensor read_embeddings(const std::filesystem::path& path);

std::vector<unsigned char> encode_embeddings(const EmbeddingTensor& x);
// `source` names the input in error messages. Errors carry the byte offset.
EmbeddingTensor decode_embeddings(const std::vector<unsigned char>& bytes, const std::string& source);

// ---------------------------------------------------------------------------
// Label files: UTF-8, one example per line, '#' lines ignored. Single-label
// lines hold a decimal class index; multi-label lines hold C comma-separated
// 0/1 values. Errors name the 1-based line number.

LabelSet read_labels(const std::filesystem::path& path, std::size_t num_classes);
MultiLabelSet read_multilabels(const std::filesystem::path& path, std::size_t num_classes);
LabelSet parse_labels(const std::string& text, std::size_t num_classes, const std::string& source);
MultiLabelSet parse_multilabels(const std::string& text, std::size_t num_classes, const std::string& source);

void write_labels(const LabelSet& y, const std::filesystem::path& path);
void write_multilabels(const MultiLabelSet& y, const std::filesystem::path& path);

// Noise masks reuse the label formats (0/1 per line, or n x C for multi-label).
std::vector<bool> read_mask(const std::filesystem::path& path);
void write_mask(const std::vector<bool>& mask, const std::filesystem::path& path);

// Index lists (one index per line) and (index,class) pair lists.
std::vector<std::size_t> read_index_list(const std::filesystem::path& path);
void write_index_list(const std::vector<std::size_t>& idx, const std::filesystem::path& path);
std::vector<std::pair<std::size_t, std::size_t>> read_pair_list(const std::filesystem::path& path);
void write_pair_list(const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                     const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Dataset manifest (JSON, "format": "semd-manifest", "format_version": 1).
// Paths are relative to the manifest's directory.

enum class TaskKind { single_label, multi_label };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& s);

struct SplitEntry {
    std::size_t n = 0;
    std::size_t views = 1;
    std::string embeddings;
    std::string labels;
    std::string clean_labels;  // optional
    std::string noise_mask;    // optional
};

struct RemovalEntry {
    std::string examples;  // whole-example drops, optional
    std::string pairs;     // (example, class) drops, optional
};

struct DatasetManifest {
    static constexpr int kFormatVersion = 1;

    TaskKind task = TaskKind::single_label;
    std::size_t num_classes = 0;
    std::size_t dim = 0;
    std::vector<std::string> class_names;
    std::string class_embeddings;  // optional C x d embedding file (V = 1, n = C)
    std::map<std::string, SplitEntry> splits;
    std::optional<RemovalEntry> removal;  // applies to the "train" split
    nlohmann::json provenance = nlohmann::json::object();

    nlohmann::json to_json() const;
    // Schema errors are aggregated into one ValidationError.
    static DatasetManifest from_json(const nlohmann::json& j);
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct SplitData {
    EmbeddingTensor x;
    // Single-label tasks.
    LabelSet labels;
    std::optional<LabelSet> clean_labels;
    // Multi-label tasks.
    MultiLabelSet multi_labels;
    std::optional<MultiLabelSet> clean_multi_labels;

    std::optional<std::vector<bool>> noise_mask;  // n, or n*C row-major for multi-label

    std::size_t size() const noexcept { return x.rows(); }
};

struct DatasetBundle {
    DatasetManifest manifest;
    std::filesystem::path base_dir;
    std::map<std::string, SplitData> splits;
    std::optional<Matrix> class_embeddings;
    std::vector<std::size_t> removed_examples;
    std::vector<std::pair<std::size_t, std::size_t>> removed_pairs;

    const SplitData& split(const std::string& name) const;
    bool has_split(const std::string& name) const { return splits.count(name) != 0; }
    std::size_t num_classes() const noexcept { return manifest.num_classes; }
    std::size_t dim() const noexcept { return manifest.dim; }
};

// Reads every referenced file and shape-checks it against the declared n, d,
// C and V. All violations are reported together in one ValidationError.
DatasetBundle load_manifest(const std::filesystem::path& path);

}  // namespace semd
