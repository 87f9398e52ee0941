#include "doctest.h"
#include "support.hpp"

#include "dllids/ingest.hpp"
#include "dllids/synth.hpp"

#include <fstream>
#include <set>

using namespace dllids;

namespace {

const char* kHttpLine =
    "0,tcp,http,SF,215,45076,0,0,0,0,0,1,0,0,0,0,0,0,0,0,0,0,1,1,0.00,0.00,0.00,0.00,1.00,0.00,0.00,0,0,0.00,0.00,"
    "0.00,0.00,0.00,0.00,0.00,0.00,normal,21";

FlowRecord record(const std::string& proto, const std::string& service, const std::string& flag,
                  const std::string& label, double src_bytes = 0.0) {
    FlowRecord r;
    r.protocol_type = proto;
    r.service = service;
    r.flag = flag;
    r.label = label;
    r.numeric[numeric_feature_index("src_bytes")] = src_bytes;
    return r;
}

std::vector<FlowRecord> three_protocols() {
    return {record("tcp", "http", "SF", "normal", 10), record("udp", "domain_u", "SF", "normal", 20),
            record("icmp", "ecr_i", "REJ", "smurf", 30)};
}

std::string write_text(const std::string& name, const std::string& text) {
    auto path = (std::filesystem::current_path() / name).string();
    std::ofstream(path) << text;
    return path;
}

}  // namespace

TEST_CASE("parse_record maps fields in file order") {
    auto r = parse_record(kHttpLine, 1);
    CHECK(r.protocol_type == "tcp");
    CHECK(r.service == "http");
    CHECK(r.flag == "SF");
    CHECK(r.label == "normal");
    CHECK(r.difficulty == 21);
    CHECK(r.value("src_bytes") == 215.0);
    CHECK(r.value("dst_bytes") == 45076.0);
    CHECK(r.value("same_srv_rate") == 1.0);
}

TEST_CASE("wrong column count is reported with its line number") {
    std::string line = kHttpLine;
    line = line.substr(line.find(',') + 1);  // 42 columns
    try {
        parse_record(line, 17);
        FAIL("expected an error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("17") != std::string::npos);
    }
    auto path = write_text("two_lines.txt", std::string(kHttpLine) + "\n" + line + "\n");
    CHECK_THROWS_WITH_AS(parse_nslkdd(path), doctest::Contains("line 2:"), DataError);
}

TEST_CASE("empty file gives no records; missing file is a data error") {
    CHECK(parse_nslkdd(write_text("empty.txt", "")).empty());
    CHECK_THROWS_AS(parse_nslkdd("no/such/file.txt"), DataError);
}

TEST_CASE("format_record round-trips through parse_record") {
    SynthConfig c;
    c.records = 200;
    for (const auto& r : synthesize_nslkdd(c)) {
        auto back = parse_record(format_record(r), 1);
        CHECK(back.protocol_type == r.protocol_type);
        CHECK(back.service == r.service);
        CHECK(back.label == r.label);
        CHECK(back.numeric == r.numeric);
    }
}

TEST_CASE("encoder layout") {
    auto enc = fit_encoder(three_protocols());
    CHECK(enc.protocol_vocab == std::vector<std::string>{"tcp", "udp", "icmp"});
    CHECK(enc.dynamic_dims.size() == kDynamicCount);
    std::size_t total = 0;
    for (const auto& e : enc.layout) total += e.width;
    CHECK(total == kEncodedWidth);
    CHECK(enc.width() == 128);

    auto udp = encode(enc, three_protocols()[1]);
    CHECK(udp.features.segment(35, 3) == Vector::Unit(3, 1));

    auto mask = enc.mask();
    CHECK(std::count(mask.begin(), mask.end(), true) == 35);
    for (std::size_t i = 0; i < kEncodedWidth; ++i)
        CHECK(mask[i] == (std::find(enc.dynamic_dims.begin(), enc.dynamic_dims.end(), i) != enc.dynamic_dims.end()));
}

TEST_CASE("min-max normalization and degenerate features") {
    auto enc = fit_encoder(three_protocols());
    const auto dim = static_cast<Eigen::Index>(numeric_feature_index("src_bytes"));
    CHECK(encode(enc, three_protocols()[0]).features[dim] == 0.0);
    CHECK(encode(enc, three_protocols()[1]).features[dim] == doctest::Approx(0.5));
    CHECK(encode(enc, three_protocols()[2]).features[dim] == 1.0);
    // dst_bytes is constant (0) across the records
    CHECK(enc.min[numeric_feature_index("dst_bytes")] == enc.max[numeric_feature_index("dst_bytes")]);
    CHECK(encode(enc, three_protocols()[2]).features[static_cast<Eigen::Index>(numeric_feature_index("dst_bytes"))] == 0.0);
    // outside the fitted range clamps into [0,1]
    auto big = record("tcp", "http", "SF", "normal", 1e9);
    CHECK(encode(enc, big).features[dim] == 1.0);
}

TEST_CASE("unknown categorical values encode as all-zero one-hot") {
    auto enc = fit_encoder(three_protocols());
    auto r = record("tcp", "gopher", "SF", "normal");
    auto s = encode(enc, r);
    CHECK(s.features.segment(38, 70).isZero());
}

TEST_CASE("labels are binary") {
    CHECK(label_of("normal") == 0);
    CHECK(label_of("neptune") == 1);
    CHECK(label_of("buffer_overflow") == 1);
}

TEST_CASE("fit_encoder rejects bad persistent sets and single-valued categoricals") {
    auto recs = three_protocols();
    CHECK_THROWS_AS(fit_encoder({}), std::invalid_argument);
    CHECK_THROWS_AS(fit_encoder(recs, {"protocol_type", "service", "flag", "land", "is_host_login", "bogus"}),
                    std::invalid_argument);
    CHECK_THROWS_AS(fit_encoder(recs, {"protocol_type", "service", "flag", "land"}), std::invalid_argument);
    for (auto& r : recs) r.flag = "SF";
    CHECK_THROWS_AS(fit_encoder(recs), std::invalid_argument);
}

TEST_CASE("property: encoded coordinates lie in [0,1] for random records") {
    SynthConfig c;
    c.records = 400;
    c.seed = 3;
    auto fit_on = synthesize_nslkdd(c);
    auto enc = fit_encoder(fit_on);
    Rng rng(5);
    const auto mask = enc.mask();
    for (int trial = 0; trial < 300; ++trial) {
        FlowRecord r = fit_on[uniform_index(rng, fit_on.size())];
        for (auto& v : r.numeric) v = testing::uniform(rng, -1e6, 1e6);
        if (trial % 3 == 0) r.service = "unseen_service";
        auto s = encode(enc, r);
        CHECK(s.features.size() == 128);
        CHECK(s.features.minCoeff() >= 0.0);
        CHECK(s.features.maxCoeff() <= 1.0);
        CHECK(s.mask == mask);
    }
}

TEST_CASE("fit_encoder and encode are deterministic") {
    SynthConfig c;
    c.records = 300;
    auto recs = synthesize_nslkdd(c);
    auto a = fit_encoder(recs), b = fit_encoder(recs);
    CHECK(a.to_json() == b.to_json());
    for (std::size_t i = 0; i < 20; ++i) CHECK(encode(a, recs[i]).features == encode(b, recs[i]).features);
}

TEST_CASE("split is disjoint, seeded and size-checked") {
    auto [tr, te] = split_indices(100, 60, 30, 4);
    CHECK(tr.size() == 60);
    CHECK(te.size() == 30);
    std::set<std::size_t> all(tr.begin(), tr.end());
    all.insert(te.begin(), te.end());
    CHECK(all.size() == 90);
    auto again = split_indices(100, 60, 30, 4);
    CHECK(again.first == tr);
    CHECK(again.second == te);
    CHECK(split_indices(100, 60, 30, 5).first != tr);
    CHECK_THROWS(split_indices(100, 80, 30, 4));
}

TEST_CASE("encoder and dataset persistence round-trip") {
    SynthConfig c;
    c.records = 300;
    auto recs = synthesize_nslkdd(c);
    auto enc = std::make_shared<FeatureEncoder>(fit_encoder(recs));
    std::vector<EncodedSample> samples;
    for (const auto& r : recs) samples.push_back(encode(*enc, r));
    auto [train, test] = split(samples, enc, 200, 50, 1);

    auto dir = testing::scratch_dir("ingest");
    save_encoder(*enc, (dir / "enc.json").string());
    auto enc2 = std::make_shared<FeatureEncoder>(load_encoder((dir / "enc.json").string()));
    CHECK(enc2->digest() == enc->digest());

    save_dataset_csv(test, (dir / "test.csv").string());
    auto back = load_dataset_csv((dir / "test.csv").string(), enc2);
    REQUIRE(back.size() == test.size());
    CHECK(back.feature_matrix() == test.feature_matrix());
    CHECK(back.labels() == test.labels());
}
