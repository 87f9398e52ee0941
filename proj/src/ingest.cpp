#include "dllids/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace dllids {

namespace {

constexpr std::size_t kColumns = kRawFeatureCount + 2;  // + label + difficulty
const char* const kDatasetFormat = "dllids-dataset";
const char* const kEncoderFormat = "dllids-encoder";
const char* const kVersion = "1";

bool is_categorical(const std::string& name) {
    return name == "protocol_type" || name == "service" || name == "flag";
}

void collect(std::vector<std::string>& vocab, const std::string& value) {
    if (std::find(vocab.begin(), vocab.end(), value) == vocab.end()) vocab.push_back(value);
}

void put_onehot(Vector& out, std::size_t offset, const std::vector<std::string>& vocab,
                const std::string& value) {
    auto it = std::find(vocab.begin(), vocab.end(), value);
    if (it != vocab.end()) out[static_cast<Eigen::Index>(offset + (it - vocab.begin()))] = 1.0;
}

double normalize(double v, double lo, double hi) {
    if (!(hi > lo)) return 0.0;
    return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

}  // namespace

const std::array<std::string, kRawFeatureCount>& feature_names() {
    static const std::array<std::string, kRawFeatureCount> names = {
        "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes", "land",
        "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in", "num_compromised",
        "root_shell", "su_attempted", "num_root", "num_file_creations", "num_shells",
        "num_access_files", "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
        "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate", "srv_rerror_rate",
        "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate", "dst_host_count",
        "dst_host_srv_count", "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
        "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
        "dst_host_srv_serror_rate", "dst_host_rerror_rate", "dst_host_srv_rerror_rate"};
    return names;
}

const std::array<std::string, kNumericFeatureCount>& numeric_feature_names() {
    static const std::array<std::string, kNumericFeatureCount> names = [] {
        std::array<std::string, kNumericFeatureCount> out;
        std::size_t j = 0;
        for (const auto& n : feature_names())
            if (!is_categorical(n)) out[j++] = n;
        return out;
    }();
    return names;
}

std::size_t numeric_feature_index(const std::string& name) {
    const auto& names = numeric_feature_names();
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw std::invalid_argument("unknown numeric feature '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
}

std::vector<std::string> default_persistent_set() {
    return {"protocol_type", "service", "flag", "land", "is_host_login", "su_attempted"};
}

double FlowRecord::value(const std::string& numeric_name) const {
    return numeric[numeric_feature_index(numeric_name)];
}

FlowRecord parse_record(std::string_view line, std::size_t line_no) {
    auto fields = split_line(line, ',');
    if (fields.size() != kColumns) {
        throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(kColumns) +
                        " comma-separated fields, found " + std::to_string(fields.size()));
    }
    FlowRecord r;
    std::size_t j = 0;
    const auto& names = feature_names();
    for (std::size_t i = 0; i < kRawFeatureCount; ++i) {
        std::string f = trim(fields[i]);
        if (names[i] == "protocol_type") {
            r.protocol_type = f;
        } else if (names[i] == "service") {
            r.service = f;
        } else if (names[i] == "flag") {
            r.flag = f;
        } else {
            try {
                r.numeric[j++] = parse_double(f);
            } catch (const FormatError&) {
                throw DataError("line " + std::to_string(line_no) + ": feature '" + names[i] +
                                "' is not numeric: '" + f + "'");
            }
        }
        if (is_categorical(names[i]) && f.empty())
            throw DataError("line " + std::to_string(line_no) + ": empty categorical '" + names[i] + "'");
    }
    r.label = trim(fields[kRawFeatureCount]);
    if (r.label.empty()) throw DataError("line " + std::to_string(line_no) + ": empty label");
    try {
        r.difficulty = static_cast<int>(parse_double(fields[kRawFeatureCount + 1]));
    } catch (const FormatError&) {
        throw DataError("line " + std::to_string(line_no) + ": difficulty is not numeric");
    }
    return r;
}

std::vector<FlowRecord> parse_nslkdd(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::vector<FlowRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(parse_record(line, line_no));
        } catch (const DataError& e) {
            throw DataError(path + ": " + e.what());
        }
    }
    return out;
}

std::string format_record(const FlowRecord& r) {
    std::string out;
    std::size_t j = 0;
    for (const auto& n : feature_names()) {
        if (n == "protocol_type") out += r.protocol_type;
        else if (n == "service") out += r.service;
        else if (n == "flag") out += r.flag;
        else out += format_double(r.numeric[j++]);
        out += ',';
    }
    out += r.label + ',' + std::to_string(r.difficulty);
    return out;
}

Mask FeatureEncoder::mask() const {
    Mask m(kEncodedWidth, false);
    for (auto d : dynamic_dims) m[d] = true;
    return m;
}

std::string FeatureEncoder::mask_digest() const {
    std::string bits;
    for (bool b : mask()) bits += b ? '1' : '0';
    return digest_hex(bits);
}

nlohmann::json FeatureEncoder::to_json() const {
    nlohmann::json j;
    j["width"] = kEncodedWidth;
    j["persistent"] = persistent;
    j["vocab"] = {{"protocol_type", protocol_vocab}, {"service", service_vocab}, {"flag", flag_vocab}};
    nlohmann::json numeric = nlohmann::json::array();
    const auto& names = numeric_feature_names();
    for (std::size_t i = 0; i < kNumericFeatureCount; ++i)
        numeric.push_back({{"name", names[i]}, {"min", min[i]}, {"max", max[i]}});
    j["numeric"] = numeric;
    nlohmann::json lay = nlohmann::json::array();
    for (const auto& e : layout)
        lay.push_back({{"feature", e.feature}, {"kind", e.kind}, {"offset", e.offset}, {"width", e.width}});
    j["layout"] = lay;
    j["dynamic_dims"] = dynamic_dims;
    return j;
}

FeatureEncoder FeatureEncoder::from_json(const nlohmann::json& j) {
    try {
        FeatureEncoder enc;
        if (j.at("width").get<std::size_t>() != kEncodedWidth) throw FormatError("encoder width is not 128");
        enc.persistent = j.at("persistent").get<std::vector<std::string>>();
        enc.protocol_vocab = j.at("vocab").at("protocol_type").get<std::vector<std::string>>();
        enc.service_vocab = j.at("vocab").at("service").get<std::vector<std::string>>();
        enc.flag_vocab = j.at("vocab").at("flag").get<std::vector<std::string>>();
        const auto& numeric = j.at("numeric");
        if (numeric.size() != kNumericFeatureCount) throw FormatError("encoder numeric table has wrong size");
        for (std::size_t i = 0; i < kNumericFeatureCount; ++i) {
            enc.min[i] = numeric[i].at("min").get<double>();
            enc.max[i] = numeric[i].at("max").get<double>();
        }
        for (const auto& e : j.at("layout"))
            enc.layout.push_back({e.at("feature").get<std::string>(), e.at("kind").get<std::string>(),
                                  e.at("offset").get<std::size_t>(), e.at("width").get<std::size_t>()});
        enc.dynamic_dims = j.at("dynamic_dims").get<std::vector<std::size_t>>();
        if (enc.dynamic_dims.size() != kDynamicCount) throw FormatError("encoder must have 35 dynamic dims");
        return enc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed encoder document: ") + e.what());
    }
}

FeatureEncoder fit_encoder(const std::vector<FlowRecord>& records,
                           const std::vector<std::string>& persistent_set) {
    if (records.empty()) throw std::invalid_argument("fit_encoder: no records");
    std::set<std::string> pset(persistent_set.begin(), persistent_set.end());
    if (pset.size() != 6 || persistent_set.size() != 6)
        throw std::invalid_argument("fit_encoder: persistent set must name 6 distinct features");
    const auto& all = feature_names();
    for (const auto& n : pset)
        if (std::find(all.begin(), all.end(), n) == all.end())
            throw std::invalid_argument("fit_encoder: '" + n + "' is not an NSL-KDD feature");
    for (const char* cat : {"protocol_type", "service", "flag"})
        if (!pset.count(cat))
            throw std::invalid_argument(std::string("fit_encoder: categorical '") + cat +
                                        "' must be persistent");

    FeatureEncoder enc;
    enc.persistent = persistent_set;
    enc.min.fill(std::numeric_limits<double>::infinity());
    enc.max.fill(-std::numeric_limits<double>::infinity());
    for (const auto& r : records) {
        collect(enc.protocol_vocab, r.protocol_type);
        collect(enc.service_vocab, r.service);
        collect(enc.flag_vocab, r.flag);
        for (std::size_t i = 0; i < kNumericFeatureCount; ++i) {
            enc.min[i] = std::min(enc.min[i], r.numeric[i]);
            enc.max[i] = std::max(enc.max[i], r.numeric[i]);
        }
    }
    auto check_vocab = [](const char* name, const std::vector<std::string>& v, std::size_t slots) {
        if (v.size() < 2)
            throw std::invalid_argument(std::string("fit_encoder: '") + name +
                                        "' has fewer than 2 distinct values");
        if (v.size() > slots)
            throw std::invalid_argument(std::string("fit_encoder: '") + name + "' has " +
                                        std::to_string(v.size()) + " values, layout holds " +
                                        std::to_string(slots));
    };
    check_vocab("protocol_type", enc.protocol_vocab, kProtocolSlots);
    check_vocab("service", enc.service_vocab, kServiceSlots);
    check_vocab("flag", enc.flag_vocab, kFlagSlots);

    std::size_t offset = 0;
    for (const auto& n : numeric_feature_names()) {
        if (pset.count(n)) continue;
        enc.layout.push_back({n, "dynamic", offset, 1});
        enc.dynamic_dims.push_back(offset);
        ++offset;
    }
    if (enc.dynamic_dims.size() != kDynamicCount)
        throw std::invalid_argument("fit_encoder: persistent set must leave exactly 35 dynamic features");
    enc.layout.push_back({"protocol_type", "onehot", offset, kProtocolSlots});
    offset += kProtocolSlots;
    enc.layout.push_back({"service", "onehot", offset, kServiceSlots});
    offset += kServiceSlots;
    enc.layout.push_back({"flag", "onehot", offset, kFlagSlots});
    offset += kFlagSlots;
    for (const auto& n : numeric_feature_names()) {
        if (!pset.count(n)) continue;
        enc.layout.push_back({n, "scalar", offset, 1});
        ++offset;
    }
    enc.layout.push_back({"padding", "padding", offset, kEncodedWidth - offset});
    return enc;
}

int label_of(const std::string& attack_name) { return attack_name == "normal" ? 0 : 1; }

EncodedSample encode(const FeatureEncoder& enc, const FlowRecord& record) {
    EncodedSample s;
    s.features = Vector::Zero(kEncodedWidth);
    for (const auto& e : enc.layout) {
        if (e.kind == "dynamic" || e.kind == "scalar") {
            std::size_t i = numeric_feature_index(e.feature);
            s.features[static_cast<Eigen::Index>(e.offset)] = normalize(record.numeric[i], enc.min[i], enc.max[i]);
        } else if (e.kind == "onehot") {
            if (e.feature == "protocol_type") put_onehot(s.features, e.offset, enc.protocol_vocab, record.protocol_type);
            else if (e.feature == "service") put_onehot(s.features, e.offset, enc.service_vocab, record.service);
            else put_onehot(s.features, e.offset, enc.flag_vocab, record.flag);
        }
    }
    s.label = label_of(record.label);
    s.mask = enc.mask();
    return s;
}

Matrix Dataset::feature_matrix() const {
    const auto width = samples.empty() ? static_cast<Eigen::Index>(kEncodedWidth) : samples.front().features.size();
    Matrix m(static_cast<Eigen::Index>(samples.size()), width);
    for (std::size_t i = 0; i < samples.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = samples[i].features.transpose();
    return m;
}

std::vector<int> Dataset::labels() const {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(std::size_t n, std::size_t train_n, std::size_t test_n, std::uint64_t seed) {
    if (train_n + test_n > n)
        throw DataError("split: requested " + std::to_string(train_n) + "+" + std::to_string(test_n) +
                        " samples but only " + std::to_string(n) + " available");
    Rng rng(seed);
    auto perm = permutation(n, rng);
    std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(train_n));
    std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(train_n),
                                  perm.begin() + static_cast<std::ptrdiff_t>(train_n + test_n));
    return {train, test};
}

std::pair<Dataset, Dataset> split(const std::vector<EncodedSample>& samples,
                                  std::shared_ptr<const FeatureEncoder> encoder, std::size_t train_n,
                                  std::size_t test_n, std::uint64_t seed) {
    auto [tr, te] = split_indices(samples.size(), train_n, test_n, seed);
    Dataset train{{}, encoder, "train", ""};
    Dataset test{{}, encoder, "test", ""};
    for (auto i : tr) train.samples.push_back(samples[i]);
    for (auto i : te) test.samples.push_back(samples[i]);
    return {std::move(train), std::move(test)};
}

void save_encoder(const FeatureEncoder& enc, const std::string& path, const Meta& meta) {
    nlohmann::json j = enc.to_json();
    j["format"] = kEncoderFormat;
    j["version"] = kVersion;
    j["meta"] = meta;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(1) << '\n';
}

FeatureEncoder load_encoder(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    if (j.value("format", "") != kEncoderFormat || j.value("version", "") != kVersion)
        throw FormatError(path + ": not a version-" + kVersion + " encoder document");
    return FeatureEncoder::from_json(j);
}

void save_dataset_csv(const Dataset& ds, const std::string& path, const Meta& meta) {
    if (!ds.encoder) throw std::invalid_argument("save_dataset_csv: dataset has no encoder");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    Meta m = meta;
    m["format"] = kDatasetFormat;
    m["version"] = kVersion;
    m["tag"] = ds.tag.empty() ? "-" : ds.tag;
    m["source"] = ds.source.empty() ? "-" : ds.source;
    m["mask"] = ds.encoder->mask_digest();
    m["encoder"] = ds.encoder->digest();
    m["rows"] = std::to_string(ds.size());
    out << meta_line(m) << '\n';
    for (std::size_t i = 0; i < kEncodedWidth; ++i) out << 'f' << i << ',';
    out << "label\n";
    for (const auto& s : ds.samples) {
        for (Eigen::Index i = 0; i < s.features.size(); ++i) out << format_double(s.features[i]) << ',';
        out << s.label << '\n';
    }
}

Dataset load_dataset_csv(const std::string& path, std::shared_ptr<const FeatureEncoder> encoder) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    Meta meta = parse_meta_line(line);
    require_format(meta, kDatasetFormat, kVersion, path);
    if (meta["mask"] != encoder->mask_digest())
        throw FormatError(path + ": mask digest does not match the encoder");
    Dataset ds;
    ds.encoder = encoder;
    ds.tag = meta["tag"];
    ds.source = meta["source"];
    std::getline(in, line);  // column header
    const Mask mask = encoder->mask();
    std::size_t line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_line(line, ',');
        if (fields.size() != kEncodedWidth + 1)
            throw FormatError(path + ": line " + std::to_string(line_no) + " has wrong column count");
        EncodedSample s;
        s.features.resize(kEncodedWidth);
        for (std::size_t i = 0; i < kEncodedWidth; ++i) s.features[static_cast<Eigen::Index>(i)] = parse_double(fields[i]);
        s.label = static_cast<int>(parse_double(fields[kEncodedWidth]));
        s.mask = mask;
        ds.samples.push_back(std::move(s));
    }
    if (meta.count("rows") && std::to_string(ds.size()) != meta["rows"])
        throw FormatError(path + ": truncated dataset");
    return ds;
}

}  // namespace dllids
