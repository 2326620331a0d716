#include "semd/common.hpp"
#include "semd/dataio.hpp"
#include "semd/noise.hpp"
#include "semd/probe.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cstring>
#include <fstream>

using namespace semd;

namespace {

EmbeddingTensor random_tensor(std::size_t n, std::size_t d, std::size_t views, std::uint64_t seed) {
    RngStream rng(seed);
    EmbeddingTensor x;
    for (std::size_t v = 0; v < views; ++v) {
        Matrix m(n, d);
        // float-representable values so the round trip is exact in memory too
        for (double& e : m.data()) e = static_cast<float>(10 * rng.normal());
        x.views.push_back(m);
    }
    return x;
}

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("embedding file round-trips bit for bit") {
    testutil::TempDir dir("emb");
    const auto x = random_tensor(37, 5, 3, 1);
    write_embeddings(x, dir / "x.emb");
    const auto y = read_embeddings(dir / "x.emb");
    CHECK(y == x);
    write_embeddings(y, dir / "y.emb");
    CHECK(slurp(dir / "x.emb") == slurp(dir / "y.emb"));
    CHECK(std::filesystem::file_size(dir / "x.emb") == 32 + 4 * 37 * 5 * 3);
}

TEST_CASE("hand-assembled minimal embedding file") {
    const std::vector<unsigned char> bytes = {
        'L', 'S', 'E', 'B',           // magic
        1, 0, 0, 0,                   // version
        1, 0, 0, 0, 0, 0, 0, 0,       // n
        1, 0, 0, 0,                   // d
        1, 0, 0, 0,                   // V
        0,                            // dtype
        0, 0, 0, 0, 0, 0, 0,          // reserved
        0x00, 0x00, 0x00, 0x3f,       // 0.5f
    };
    const auto x = decode_embeddings(bytes, "fixture");
    REQUIRE(x.num_views() == 1);
    CHECK(x.rows() == 1);
    CHECK(x.dim() == 1);
    CHECK(x.views[0](0, 0) == 0.5);
    CHECK(encode_embeddings(x) == bytes);
}

TEST_CASE("malformed embedding files are rejected") {
    const auto good = encode_embeddings(random_tensor(4, 3, 1, 2));

    auto cut = good;
    cut.resize(cut.size() - 5);
    try {
        decode_embeddings(cut, "cut.emb");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("expected 80") != std::string::npos);
        CHECK(msg.find("found 75") != std::string::npos);
    }

    auto extra = good;
    extra.push_back(0);
    CHECK_THROWS_AS(decode_embeddings(extra, "x"), FormatError);

    auto magic = good;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode_embeddings(magic, "x"), FormatError);

    auto reserved = good;
    reserved[30] = 1;
    CHECK_THROWS_AS(decode_embeddings(reserved, "x"), FormatError);

    auto nan = good;
    const float bad = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(nan.data() + 32, &bad, 4);
    CHECK_THROWS_AS(decode_embeddings(nan, "x"), FormatError);

    CHECK_THROWS_AS(decode_embeddings({'L', 'S'}, "x"), FormatError);
}

TEST_CASE("label files") {
    CHECK(parse_labels("0\n2\n1\n", 3, "t").labels == std::vector<int>{0, 2, 1});
    CHECK(parse_labels("# header\n1\n0\n", 2, "t").labels == std::vector<int>{1, 0});
    try {
        parse_labels("0\n1\n3\n", 3, "lab.txt");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("lab.txt:3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_labels("0\nx\n", 3, "t"), FormatError);
    CHECK_THROWS_AS(parse_labels("-1\n", 3, "t"), FormatError);

    const auto m = parse_multilabels("1,0,1\n", 3, "t");
    CHECK(m.size() == 1);
    CHECK(m(0, 0) == 1);
    CHECK(m(0, 1) == 0);
    CHECK(m(0, 2) == 1);
    CHECK_THROWS_AS(parse_multilabels("1,0\n", 3, "t"), FormatError);
    CHECK_THROWS_AS(parse_multilabels("1,2,0\n", 3, "t"), FormatError);

    testutil::TempDir dir("labels");
    LabelSet y{{0, 4, 2, 2, 1}, 5};
    write_labels(y, dir / "y.txt");
    CHECK(read_labels(dir / "y.txt", 5) == y);
    MultiLabelSet my(3, 2);
    my.set(0, 1, true);
    my.set(2, 0, true);
    write_multilabels(my, dir / "m.txt");
    CHECK(read_multilabels(dir / "m.txt", 2) == my);
    const std::vector<bool> mask{true, false, true};
    write_mask(mask, dir / "mask.txt");
    CHECK(read_mask(dir / "mask.txt") == mask);
    const std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 1}, {5, 0}};
    write_pair_list(pairs, dir / "pairs.txt");
    CHECK(read_pair_list(dir / "pairs.txt") == pairs);
}

namespace {

// Writes a valid single-label manifest with a train split of n rows.
std::filesystem::path minimal_manifest(const testutil::TempDir& dir, std::size_t n, std::size_t declared_n) {
    write_embeddings(random_tensor(n, 3, 1, 5), dir / "train.emb");
    LabelSet y{{}, 2};
    for (std::size_t i = 0; i < n; ++i) y.labels.push_back(static_cast<int>(i % 2));
    write_labels(y, dir / "train.labels");
    DatasetManifest m;
    m.num_classes = 2;
    m.dim = 3;
    m.class_names = {"cat", "dog"};
    m.splits["train"] = SplitEntry{declared_n, 1, "train.emb", "train.labels", "", ""};
    write_manifest(m, dir / "manifest.json");
    return dir / "manifest.json";
}

}  // namespace

TEST_CASE("minimal manifest loads") {
    testutil::TempDir dir("manifest");
    const auto b = load_manifest(minimal_manifest(dir, 10, 10));
    CHECK(b.num_classes() == 2);
    CHECK(b.dim() == 3);
    CHECK(b.split("train").size() == 10);
    CHECK(b.split("train").labels.size() == 10);
}

TEST_CASE("manifest shape mismatch names both numbers") {
    testutil::TempDir dir("manifest_bad");
    const auto path = minimal_manifest(dir, 9, 10);
    try {
        load_manifest(path);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("n=10") != std::string::npos);
        CHECK(msg.find("n=9") != std::string::npos);
        // the label file is checked as well
        CHECK(e.violations().size() >= 2);
    }
}

TEST_CASE("manifest lists every schema violation") {
    nlohmann::json j = {{"format", "semd-manifest"}, {"format_version", 1}, {"task", "bogus"}, {"dim", "three"}};
    try {
        DatasetManifest::from_json(j);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.violations().size() >= 3);
    }
}

TEST_CASE("manifest json round-trips") {
    DatasetManifest m;
    m.task = TaskKind::multi_label;
    m.num_classes = 4;
    m.dim = 8;
    m.class_names = {"a", "b", "c", "d"};
    m.class_embeddings = "classes.emb";
    m.splits["train"] = SplitEntry{100, 2, "t.emb", "t.lab", "t.clean", "t.mask"};
    m.splits["val"] = SplitEntry{20, 1, "v.emb", "v.lab", "", ""};
    m.removal = RemovalEntry{"ex.txt", "pairs.txt"};
    m.provenance = {{"encoder", "none"}};
    const auto back = DatasetManifest::from_json(m.to_json());
    CHECK(back.to_json() == m.to_json());

    testutil::TempDir dir("mjson");
    write_manifest(m, dir / "a.json");
    write_manifest(read_manifest(dir / "a.json"), dir / "b.json");
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
}

TEST_CASE("manifest with noise exposes clean labels, noisy labels and mask") {
    testutil::TempDir dir("noisy_manifest");
    const auto s = testutil::clusters(200, 3, 4, 5.0, 1);
    write_embeddings(s.x, dir / "train.emb");
    const auto noise = inject_symmetric(s.labels, 0.3, 4);
    write_labels(noise.noisy_labels, dir / "noisy.labels");
    write_labels(noise.clean_labels, dir / "clean.labels");
    write_mask(noise.noise_mask, dir / "mask.txt");
    DatasetManifest m;
    m.num_classes = 3;
    m.dim = 4;
    m.splits["train"] = SplitEntry{200, 1, "train.emb", "noisy.labels", "clean.labels", "mask.txt"};
    m.provenance["noise"] = noise.spec.to_json();
    write_manifest(m, dir / "manifest.json");

    const auto b = load_manifest(dir / "manifest.json");
    const auto& tr = b.split("train");
    CHECK(tr.labels == noise.noisy_labels);
    REQUIRE(tr.clean_labels);
    CHECK(*tr.clean_labels == noise.clean_labels);
    REQUIRE(tr.noise_mask);
    CHECK(*tr.noise_mask == noise.noise_mask);
    CHECK(NoiseSpec::from_json(b.manifest.provenance["noise"]).rate == 0.3);
}

TEST_CASE("manifest with a missing file reports it") {
    testutil::TempDir dir("missing");
    const auto path = minimal_manifest(dir, 10, 10);
    std::filesystem::remove(dir / "train.labels");
    CHECK_THROWS_AS(load_manifest(path), ValidationError);
}

TEST_CASE("synthetic generator") {
    const auto a = testutil::clusters(500, 5, 8, 10.0, 3, 2);
    const auto b = testutil::clusters(500, 5, 8, 10.0, 3, 2);
    CHECK(a.x == b.x);
    CHECK(a.labels == b.labels);
    CHECK(a.x.num_views() == 2);
    CHECK(a.x.views[0] != a.x.views[1]);
    for (auto c : a.labels.class_counts()) CHECK(c == 100);

    const auto flat = testutil::clusters(2000, 5, 8, 1e-6, 4);
    const auto p = cross_val_proba(flat.x.canonical(), flat.labels, TrainConfig{});
    std::size_t hit = 0;
    for (std::size_t i = 0; i < p.rows(); ++i) hit += static_cast<int>(argmax_row(p.row(i))) == flat.labels[i];
    CHECK(std::abs(static_cast<double>(hit) / 2000.0 - 0.2) <= 0.05);

    SyntheticSpec bad;
    bad.num_classes = 1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("synthetic multi-label sample") {
    SyntheticSpec spec;
    spec.multi_label = true;
    spec.num_classes = 4;
    spec.n = 3000;
    spec.positive_rate = 0.25;
    const auto s = generate_synthetic(spec);
    REQUIRE(s.multi_labels.size() == 3000);
    for (std::size_t c = 0; c < 4; ++c) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < 3000; ++i) pos += s.multi_labels(i, c);
        CHECK(std::abs(static_cast<double>(pos) / 3000.0 - 0.25) < 0.04);
    }
}
