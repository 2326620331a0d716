#include "semd/dataio.hpp"

#include "binary_io.hpp"
#include "semd/common.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace semd {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// data.hpp

void LabelSet::validate() const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw InvalidInput("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                               " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
}

std::vector<std::size_t> LabelSet::class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (int v : labels) {
        if (v >= 0 && static_cast<std::size_t>(v) < num_classes) ++counts[static_cast<std::size_t>(v)];
    }
    return counts;
}

LabelSet select_labels(const LabelSet& y, std::span<const std::size_t> rows) {
    LabelSet out;
    out.num_classes = y.num_classes;
    out.labels.reserve(rows.size());
    for (auto r : rows) out.labels.push_back(y.labels[r]);
    return out;
}

LabelSet MultiLabelSet::column(std::size_t c) const {
    LabelSet out;
    out.num_classes = 2;
    out.labels.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) out.labels[i] = (*this)(i, c);
    return out;
}

MultiLabelSet select_labels(const MultiLabelSet& y, std::span<const std::size_t> rows) {
    MultiLabelSet out(rows.size(), y.num_classes());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < y.num_classes(); ++c) out.set(r, c, y(rows[r], c));
    }
    return out;
}

void EmbeddingTensor::validate() const {
    if (views.empty()) throw InvalidInput("EmbeddingTensor: no views");
    for (std::size_t v = 0; v < views.size(); ++v) {
        if (views[v].rows() != rows() || views[v].cols() != dim()) {
            throw InvalidInput("EmbeddingTensor: view " + std::to_string(v) + " shape differs from view 0");
        }
        if (!views[v].all_finite()) throw InvalidInput("EmbeddingTensor: non-finite value in view " + std::to_string(v));
    }
}

EmbeddingTensor select_rows(const EmbeddingTensor& x, std::span<const std::size_t> rows) {
    EmbeddingTensor out;
    out.views.reserve(x.views.size());
    for (const auto& v : x.views) out.views.push_back(select_rows(v, rows));
    return out;
}

// ---------------------------------------------------------------------------
// Embeddings

namespace {
constexpr char kEmbeddingMagic[4] = {'L', 'S', 'E', 'B'};
constexpr std::uint32_t kEmbeddingVersion = 1;
}  // namespace

std::vector<unsigned char> encode_embeddings(const EmbeddingTensor& x) {
    x.validate();
    std::vector<unsigned char> buf(kEmbeddingMagic, kEmbeddingMagic + 4);
    detail::put_le<std::uint32_t>(buf, kEmbeddingVersion);
    detail::put_le<std::uint64_t>(buf, x.rows());
    detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(x.dim()));
    detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(x.num_views()));
    buf.push_back(0);                 // dtype: binary32
    buf.insert(buf.end(), 7, 0);      // reserved
    buf.reserve(buf.size() + 4 * x.num_views() * x.rows() * x.dim());
    for (const auto& view : x.views) {
        for (double v : view.data()) detail::put_le<float>(buf, static_cast<float>(v));
    }
    return buf;
}

EmbeddingTensor decode_embeddings(const std::vector<unsigned char>& bytes, const std::string& source) {
    auto fail = [&](std::size_t offset, const std::string& msg) -> FormatError {
        return FormatError(source + ": " + msg + " (byte offset " + std::to_string(offset) + ")");
    };
    if (bytes.size() < kEmbeddingHeaderBytes) {
        throw fail(bytes.size(), "truncated header: expected " + std::to_string(kEmbeddingHeaderBytes) +
                                     " bytes, found " + std::to_string(bytes.size()));
    }
    if (!std::equal(kEmbeddingMagic, kEmbeddingMagic + 4, bytes.begin())) throw fail(0, "bad magic");
    const auto version = detail::get_le<std::uint32_t>(bytes.data() + 4);
    if (version != kEmbeddingVersion) throw fail(4, "unsupported format version " + std::to_string(version));
    const auto n = detail::get_le<std::uint64_t>(bytes.data() + 8);
    const auto d = detail::get_le<std::uint32_t>(bytes.data() + 16);
    const auto views = detail::get_le<std::uint32_t>(bytes.data() + 20);
    if (bytes[24] != 0) throw fail(24, "unsupported dtype code " + std::to_string(bytes[24]));
    for (std::size_t k = 25; k < 32; ++k) {
        if (bytes[k] != 0) throw fail(k, "reserved byte is not zero");
    }
    if (views == 0) throw fail(20, "view count is zero");
    const unsigned __int128 payload = static_cast<unsigned __int128>(n) * d * views * 4;
    const unsigned __int128 expected = payload + kEmbeddingHeaderBytes;
    if (expected != bytes.size()) {
        const auto exp64 = static_cast<std::uint64_t>(expected);
        throw fail(std::min<std::uint64_t>(bytes.size(), exp64),
                   std::string(expected > bytes.size() ? "truncated payload" : "trailing bytes") +
                       ": expected " + std::to_string(exp64) + " bytes, found " + std::to_string(bytes.size()));
    }

    EmbeddingTensor x;
    x.views.reserve(views);
    std::size_t offset = kEmbeddingHeaderBytes;
    for (std::uint32_t v = 0; v < views; ++v) {
        std::vector<double> data(static_cast<std::size_t>(n) * d);
        for (auto& value : data) {
            const float f = detail::get_le<float>(bytes.data() + offset);
            if (!std::isfinite(f)) throw fail(offset, "non-finite value");
            value = f;
            offset += 4;
        }
        x.views.emplace_back(static_cast<std::size_t>(n), d, std::move(data));
    }
    return x;
}

void write_embeddings(const EmbeddingTensor& x, const fs::path& path) {
    detail::write_file_bytes(path, encode_embeddings(x));
}

EmbeddingTensor read_embeddings(const fs::path& path) {
    return decode_embeddings(detail::read_file_bytes(path), path.string());
}

// ---------------------------------------------------------------------------
// Text formats

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed: " + path.string());
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Calls fn(line_number, content) for every non-blank, non-comment line.
template <typename Fn>
void for_each_data_line(const std::string& text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        ++line_no;
        const std::string line = trim(std::string_view(text).substr(pos, end - pos));
        if (!line.empty() && line.front() != '#') fn(line_no, line);
        pos = end + 1;
    }
}

long long parse_int(const std::string& s, const std::string& source, std::size_t line_no) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw FormatError(source + ":" + std::to_string(line_no) + ": not an integer: '" + s + "'");
    }
    return v;
}

}  // namespace

LabelSet parse_labels(const std::string& text, std::size_t num_classes, const std::string& source) {
    LabelSet y;
    y.num_classes = num_classes;
    for_each_data_line(text, [&](std::size_t line_no, const std::string& line) {
        const auto v = parse_int(line, source, line_no);
        if (v < 0 || static_cast<std::size_t>(v) >= num_classes) {
            throw FormatError(source + ":" + std::to_string(line_no) + ": class " + std::to_string(v) +
                              " outside [0, " + std::to_string(num_classes) + ")");
        }
        y.labels.push_back(static_cast<int>(v));
    });
    return y;
}

MultiLabelSet parse_multilabels(const std::string& text, std::size_t num_classes, const std::string& source) {
    std::vector<std::vector<std::uint8_t>> rows;
    for_each_data_line(text, [&](std::size_t line_no, const std::string& line) {
        std::vector<std::uint8_t> row;
        std::size_t pos = 0;
        while (true) {
            const auto comma = line.find(',', pos);
            const std::string field = trim(std::string_view(line).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
            const auto v = parse_int(field, source, line_no);
            if (v != 0 && v != 1) {
                throw FormatError(source + ":" + std::to_string(line_no) + ": multi-label entries must be 0 or 1");
            }
            row.push_back(static_cast<std::uint8_t>(v));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (row.size() != num_classes) {
            throw FormatError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(num_classes) +
                              " values, found " + std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    });
    MultiLabelSet y(rows.size(), num_classes);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < num_classes; ++c) y.set(i, c, rows[i][c]);
    }
    return y;
}

LabelSet read_labels(const fs::path& path, std::size_t num_classes) {
    return parse_labels(read_text(path), num_classes, path.string());
}

MultiLabelSet read_multilabels(const fs::path& path, std::size_t num_classes) {
    return parse_multilabels(read_text(path), num_classes, path.string());
}

void write_labels(const LabelSet& y, const fs::path& path) {
    std::string out;
    out.reserve(y.size() * 3);
    for (int v : y.labels) {
        out += std::to_string(v);
        out += '\n';
    }
    write_text(path, out);
}

void write_multilabels(const MultiLabelSet& y, const fs::path& path) {
    std::string out;
    out.reserve(y.size() * y.num_classes() * 2);
    for (std::size_t i = 0; i < y.size(); ++i) {
        for (std::size_t c = 0; c < y.num_classes(); ++c) {
            if (c) out += ',';
            out += y(i, c) ? '1' : '0';
        }
        out += '\n';
    }
    write_text(path, out);
}

std::vector<bool> read_mask(const fs::path& path) {
    const auto y = parse_labels(read_text(path), 2, path.string());
    std::vector<bool> mask(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) mask[i] = y[i] == 1;
    return mask;
}

void write_mask(const std::vector<bool>& mask, const fs::path& path) {
    std::string out;
    out.reserve(mask.size() * 2);
    for (bool b : mask) out += b ? "1\n" : "0\n";
    write_text(path, out);
}

std::vector<std::size_t> read_index_list(const fs::path& path) {
    std::vector<std::size_t> out;
    const auto src = path.string();
    for_each_data_line(read_text(path), [&](std::size_t line_no, const std::string& line) {
        const auto v = parse_int(line, src, line_no);
        if (v < 0) throw FormatError(src + ":" + std::to_string(line_no) + ": negative index");
        out.push_back(static_cast<std::size_t>(v));
    });
    return out;
}

void write_index_list(const std::vector<std::size_t>& idx, const fs::path& path) {
    std::string out;
    for (auto i : idx) out += std::to_string(i) + '\n';
    write_text(path, out);
}

std::vector<std::pair<std::size_t, std::size_t>> read_pair_list(const fs::path& path) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const auto src = path.string();
    for_each_data_line(read_text(path), [&](std::size_t line_no, const std::string& line) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError(src + ":" + std::to_string(line_no) + ": expected 'index,class'");
        const auto a = parse_int(trim(line.substr(0, comma)), src, line_no);
        const auto b = parse_int(trim(line.substr(comma + 1)), src, line_no);
        if (a < 0 || b < 0) throw FormatError(src + ":" + std::to_string(line_no) + ": negative value");
        out.emplace_back(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
    });
    return out;
}

void write_pair_list(const std::vector<std::pair<std::size_t, std::size_t>>& pairs, const fs::path& path) {
    std::string out = "# index,class\n";
    for (auto [i, c] : pairs) out += std::to_string(i) + ',' + std::to_string(c) + '\n';
    write_text(path, out);
}

// ---------------------------------------------------------------------------
// Manifest

std::string to_string(TaskKind kind) {
    return kind == TaskKind::single_label ? "single_label" : "multi_label";
}

TaskKind task_kind_from_string(const std::string& s) {
    if (s == "single_label") return TaskKind::single_label;
    if (s == "multi_label") return TaskKind::multi_label;
    throw InvalidInput("unknown task kind '" + s + "'");
}

json DatasetManifest::to_json() const {
    json j;
    j["format"] = "semd-manifest";
    j["format_version"] = kFormatVersion;
    j["task"] = to_string(task);
    j["num_classes"] = num_classes;
    j["dim"] = dim;
    j["class_names"] = class_names;
    if (!class_embeddings.empty()) j["class_embeddings"] = class_embeddings;
    json splits_j = json::object();
    for (const auto& [name, s] : splits) {
        json sj;
        sj["n"] = s.n;
        sj["views"] = s.views;
        sj["embeddings"] = s.embeddings;
        sj["labels"] = s.labels;
        if (!s.clean_labels.empty()) sj["clean_labels"] = s.clean_labels;
        if (!s.noise_mask.empty()) sj["noise_mask"] = s.noise_mask;
        splits_j[name] = sj;
    }
    j["splits"] = splits_j;
    if (removal) {
        json r = json::object();
        if (!removal->examples.empty()) r["examples"] = removal->examples;
        if (!removal->pairs.empty()) r["pairs"] = removal->pairs;
        j["removal"] = r;
    }
    j["provenance"] = provenance;
    return j;
}

DatasetManifest DatasetManifest::from_json(const json& j) {
    std::vector<std::string> bad;
    DatasetManifest m;
    if (!j.is_object()) throw ValidationError({"manifest: top level must be an object"});

    auto get_string = [&](const json& obj, const char* key, const std::string& where, bool required) -> std::string {
        if (!obj.contains(key)) {
            if (required) bad.push_back(where + ": missing '" + key + "'");
            return {};
        }
        if (!obj[key].is_string()) {
            bad.push_back(where + ": '" + key + "' must be a string");
            return {};
        }
        return obj[key].get<std::string>();
    };
    auto get_count = [&](const json& obj, const char* key, const std::string& where, bool required,
                         std::size_t fallback) -> std::size_t {
        if (!obj.contains(key)) {
            if (required) bad.push_back(where + ": missing '" + key + "'");
            return fallback;
        }
        if (!obj[key].is_number_integer() || obj[key].get<long long>() < 0) {
            bad.push_back(where + ": '" + key + "' must be a non-negative integer");
            return fallback;
        }
        return obj[key].get<std::size_t>();
    };

    if (get_string(j, "format", "manifest", true) != "semd-manifest" && j.contains("format")) {
        bad.push_back("manifest: format must be 'semd-manifest'");
    }
    const auto version = get_count(j, "format_version", "manifest", true, 0);
    if (j.contains("format_version") && version != static_cast<std::size_t>(kFormatVersion)) {
        bad.push_back("manifest: unsupported format_version " + std::to_string(version));
    }
    const auto task = get_string(j, "task", "manifest", true);
    if (!task.empty()) {
        try {
            m.task = task_kind_from_string(task);
        } catch (const InvalidInput& e) {
            bad.push_back(std::string("manifest: ") + e.what());
        }
    }
    m.num_classes = get_count(j, "num_classes", "manifest", true, 0);
    m.dim = get_count(j, "dim", "manifest", true, 0);
    if (j.contains("class_names")) {
        if (j["class_names"].is_array() && std::all_of(j["class_names"].begin(), j["class_names"].end(),
                                                       [](const json& v) { return v.is_string(); })) {
            m.class_names = j["class_names"].get<std::vector<std::string>>();
            if (m.class_names.size() != m.num_classes && !m.class_names.empty()) {
                bad.push_back("manifest: " + std::to_string(m.class_names.size()) + " class names for " +
                              std::to_string(m.num_classes) + " classes");
            }
        } else {
            bad.push_back("manifest: class_names must be an array of strings");
        }
    }
    m.class_embeddings = get_string(j, "class_embeddings", "manifest", false);

    if (!j.contains("splits") || !j["splits"].is_object()) {
        bad.push_back("manifest: missing 'splits' object");
    } else {
        for (const auto& [name, sj] : j["splits"].items()) {
            const std::string where = "split '" + name + "'";
            if (!sj.is_object()) {
                bad.push_back(where + ": must be an object");
                continue;
            }
            SplitEntry s;
            s.n = get_count(sj, "n", where, true, 0);
            s.views = get_count(sj, "views", where, false, 1);
            s.embeddings = get_string(sj, "embeddings", where, true);
            s.labels = get_string(sj, "labels", where, true);
            s.clean_labels = get_string(sj, "clean_labels", where, false);
            s.noise_mask = get_string(sj, "noise_mask", where, false);
            m.splits[name] = s;
        }
        if (!m.splits.count("train")) bad.push_back("manifest: missing 'train' split");
    }
    if (j.contains("removal")) {
        if (!j["removal"].is_object()) {
            bad.push_back("manifest: 'removal' must be an object");
        } else {
            RemovalEntry r;
            r.examples = get_string(j["removal"], "examples", "removal", false);
            r.pairs = get_string(j["removal"], "pairs", "removal", false);
            m.removal = r;
        }
    }
    if (j.contains("provenance")) m.provenance = j["provenance"];
    if (!bad.empty()) throw ValidationError(std::move(bad));
    return m;
}

DatasetManifest read_manifest(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw ValidationError({path.string() + ": " + e.what()});
    }
    return DatasetManifest::from_json(j);
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
    write_text(path, manifest.to_json().dump(2) + "\n");
}

const SplitData& DatasetBundle::split(const std::string& name) const {
    auto it = splits.find(name);
    if (it == splits.end()) throw InvalidInput("dataset has no '" + name + "' split");
    return it->second;
}

DatasetBundle load_manifest(const fs::path& path) {
    DatasetBundle bundle;
    bundle.manifest = read_manifest(path);
    bundle.base_dir = path.parent_path();
    const auto& m = bundle.manifest;
    const std::size_t C = m.num_classes;
    std::vector<std::string> bad;
    auto resolve = [&](const std::string& rel) { return bundle.base_dir / rel; };

    // Each reader failure is recorded rather than thrown so every problem is
    // listed at once.
    auto attempt = [&](const std::string& what, auto&& fn) {
        try {
            fn();
            return true;
        } catch (const std::exception& e) {
            bad.push_back(what + ": " + e.what());
            return false;
        }
    };

    if (C < 2) bad.push_back("manifest: num_classes must be >= 2");
    for (const auto& [name, entry] : m.splits) {
        SplitData data;
        const std::string where = "split '" + name + "'";
        attempt(where + " embeddings", [&] {
            data.x = read_embeddings(resolve(entry.embeddings));
            if (data.x.rows() != entry.n) {
                bad.push_back(where + ": manifest declares n=" + std::to_string(entry.n) + " but " +
                              entry.embeddings + " has n=" + std::to_string(data.x.rows()));
            }
            if (data.x.dim() != m.dim) {
                bad.push_back(where + ": manifest declares d=" + std::to_string(m.dim) + " but " +
                              entry.embeddings + " has d=" + std::to_string(data.x.dim()));
            }
            if (data.x.num_views() != entry.views) {
                bad.push_back(where + ": manifest declares V=" + std::to_string(entry.views) + " but " +
                              entry.embeddings + " has V=" + std::to_string(data.x.num_views()));
            }
        });
        auto check_rows = [&](std::size_t rows, const std::string& file) {
            if (rows != entry.n) {
                bad.push_back(where + ": manifest declares n=" + std::to_string(entry.n) + " but " + file +
                              " has " + std::to_string(rows) + " rows");
            }
        };
        if (m.task == TaskKind::single_label) {
            attempt(where + " labels", [&] {
                data.labels = read_labels(resolve(entry.labels), C);
                check_rows(data.labels.size(), entry.labels);
            });
            if (!entry.clean_labels.empty()) {
                attempt(where + " clean labels", [&] {
                    data.clean_labels = read_labels(resolve(entry.clean_labels), C);
                    check_rows(data.clean_labels->size(), entry.clean_labels);
                });
            }
        } else {
            attempt(where + " labels", [&] {
                data.multi_labels = read_multilabels(resolve(entry.labels), C);
                check_rows(data.multi_labels.size(), entry.labels);
            });
            if (!entry.clean_labels.empty()) {
                attempt(where + " clean labels", [&] {
                    data.clean_multi_labels = read_multilabels(resolve(entry.clean_labels), C);
                    check_rows(data.clean_multi_labels->size(), entry.clean_labels);
                });
            }
        }
        if (!entry.noise_mask.empty()) {
            attempt(where + " noise mask", [&] {
                if (m.task == TaskKind::single_label) {
                    data.noise_mask = read_mask(resolve(entry.noise_mask));
                    check_rows(data.noise_mask->size(), entry.noise_mask);
                } else {
                    const auto mm = read_multilabels(resolve(entry.noise_mask), C);
                    check_rows(mm.size(), entry.noise_mask);
                    std::vector<bool> flat(mm.size() * C);
                    for (std::size_t i = 0; i < mm.size(); ++i)
                        for (std::size_t c = 0; c < C; ++c) flat[i * C + c] = mm(i, c) == 1;
                    data.noise_mask = std::move(flat);
                }
            });
        }
        bundle.splits[name] = std::move(data);
    }

    if (!m.class_embeddings.empty()) {
        attempt("class embeddings", [&] {
            auto t = read_embeddings(resolve(m.class_embeddings));
            if (t.rows() != C || t.dim() != m.dim) {
                bad.push_back("class embeddings: expected " + std::to_string(C) + "x" + std::to_string(m.dim) +
                              ", found " + std::to_string(t.rows()) + "x" + std::to_string(t.dim()));
            }
            bundle.class_embeddings = t.canonical();
        });
    }

    if (m.removal) {
        const std::size_t n_train = m.splits.count("train") ? m.splits.at("train").n : 0;
        if (!m.removal->examples.empty()) {
            attempt("removal examples", [&] {
                bundle.removed_examples = read_index_list(resolve(m.removal->examples));
                for (auto i : bundle.removed_examples) {
                    if (i >= n_train) bad.push_back("removal examples: index " + std::to_string(i) + " >= n=" + std::to_string(n_train));
                }
            });
        }
        if (!m.removal->pairs.empty()) {
            attempt("removal pairs", [&] {
                bundle.removed_pairs = read_pair_list(resolve(m.removal->pairs));
                for (auto [i, c] : bundle.removed_pairs) {
                    if (i >= n_train || c >= C) {
                        bad.push_back("removal pairs: (" + std::to_string(i) + "," + std::to_string(c) + ") out of range");
                    }
                }
            });
        }
    }

    if (!bad.empty()) throw ValidationError(std::move(bad));
    return bundle;
}

}  // namespace semd
