#include "dllids/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <cmath>
#include <iostream>

namespace dllids {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- config io

json budget_json(const Budget& b) { return b ? json(*b) : json(nullptr); }

Budget budget_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    if (j.is_string()) return parse_budget(j.get<std::string>());
    return j.get<double>();
}

json budgets_json(const std::vector<Budget>& v) {
    json a = json::array();
    for (const auto& b : v) a.push_back(budget_json(b));
    return a;
}

std::vector<Budget> budgets_from(const json& j) {
    std::vector<Budget> out;
    for (const auto& b : j) out.push_back(budget_from(b));
    return out;
}

json methods_json(const std::vector<AttackMethod>& v) {
    json a = json::array();
    for (auto m : v) a.push_back(to_string(m));
    return a;
}

std::vector<AttackMethod> methods_from(const json& j) {
    std::vector<AttackMethod> out;
    for (const auto& m : j) out.push_back(parse_attack_method(m.get<std::string>()));
    return out;
}

json params_json(const ClassicParams& p) {
    return {{"knn_k", p.knn_k},       {"epochs", p.epochs},       {"learning_rate", p.learning_rate},
            {"l2", p.l2},             {"max_depth", p.max_depth}, {"min_leaf", p.min_leaf}};
}

ClassicParams params_from(const json& j) {
    ClassicParams p;
    p.knn_k = j.at("knn_k");
    p.epochs = j.at("epochs");
    p.learning_rate = j.at("learning_rate");
    p.l2 = j.at("l2");
    p.max_depth = j.at("max_depth");
    p.min_leaf = j.at("min_leaf");
    return p;
}

// Rejects keys the defaults do not know, so typos in a config file surface.
void check_keys(const json& given, const json& known, const std::string& where) {
    if (!given.is_object() || !known.is_object()) return;
    for (auto it = given.begin(); it != given.end(); ++it) {
        if (!known.contains(it.key())) throw std::invalid_argument("unknown config key '" + where + it.key() + "'");
        check_keys(it.value(), known.at(it.key()), where + it.key() + ".");
    }
}

// Like merge_patch, but null is a value (e.g. "no budget") rather than a deletion.
void overlay(json& base, const json& given) {
    if (!base.is_object() || !given.is_object()) {
        base = given;
        return;
    }
    for (auto it = given.begin(); it != given.end(); ++it) overlay(base[it.key()], it.value());
}

// ---------------------------------------------------------------- logging

void note(const RunConfig& c, const std::string& stage, const std::string& msg) {
    if (c.verbose) std::clog << "[" << stage << "] " << msg << std::endl;
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------- stage bookkeeping

struct ResolvedData {
    bool real = false;
    std::vector<std::string> paths;
};

ResolvedData resolve_data(const DataOptions& d) {
    std::string root = d.root;
    if (root.empty()) {
        const char* env = std::getenv(kDataRootEnv);
        root = env && *env ? env : "data";
    }
    ResolvedData r;
    bool all = !d.files.empty();
    for (const auto& f : d.files) {
        fs::path p = fs::path(f).is_absolute() ? fs::path(f) : fs::path(root) / f;
        r.paths.push_back(p.string());
        all = all && fs::is_regular_file(p);
    }
    if (d.source == "synthetic") return {false, {}};
    if (d.source == "nslkdd") {
        if (!all) throw DataError("NSL-KDD files not found under " + root + " (set " + kDataRootEnv + ")");
        r.real = true;
        return r;
    }
    if (d.source != "auto") throw std::invalid_argument("data.source must be auto, nslkdd or synthetic");
    r.real = all;
    if (!r.real) r.paths.clear();
    return r;
}

json section(const RunConfig& c, const std::string& stage) {
    const json all = c.to_json();
    if (stage == "ingest") {
        json s = all.at("data");
        s.erase("root");
        const auto data = resolve_data(c.data);
        json inputs = json::array();
        for (const auto& p : data.paths) inputs.push_back(file_digest(p));
        s["resolved"] = data.real ? json{{"kind", "nslkdd"}, {"digests", inputs}} : json{{"kind", "synthetic"}};
        return s;
    }
    if (stage == "mlp") return {{"mlp", all.at("mlp")}, {"train", all.at("train")}};
    if (stage == "attack") return all.at("attack");
    if (stage == "detector") return all.at("detector");
    if (stage == "ls") return all.at("ls");
    if (stage == "run" || stage == "eval") return all.at("eval");
    throw std::invalid_argument("unknown stage " + stage);
}

std::vector<std::string> upstream_of(const std::string& stage) {
    if (stage == "ingest") return {};
    if (stage == "mlp") return {"ingest"};
    if (stage == "attack" || stage == "detector") return {"mlp"};
    if (stage == "ls") return {"ingest"};
    if (stage == "run" || stage == "eval") return {"attack", "detector", "ls"};
    throw std::invalid_argument("unknown stage " + stage);
}

std::string producer_of(const std::string& stage) {
    if (stage == "ingest") return "ingest";
    if (stage == "mlp") return "train-dl";
    if (stage == "attack") return "attack";
    if (stage == "detector") return "train-detector";
    if (stage == "ls") return "train-ml";
    if (stage == "run") return "run";
    return "eval";
}

json stage_identity(const RunConfig& c, const std::string& stage) {
    json up = json::object();
    for (const auto& u : upstream_of(stage)) up[u] = stage_info(c, u).key;
    return {{"stage", stage}, {"config", section(c, stage)}, {"upstream", up}};
}

std::string path_in(const StageInfo& s, const std::string& file) { return (fs::path(s.dir) / file).string(); }

void require_stage(const StageInfo& s) {
    if (!fs::is_regular_file(path_in(s, "stage.json")))
        throw ArtifactMissing("missing " + s.name + " artifacts for this configuration (expected " + s.dir +
                                  "); run `dllids " + producer_of(s.name) + "` first",
                              producer_of(s.name));
}

StageInfo begin_stage(const RunConfig& c, const std::string& stage) {
    for (const auto& u : upstream_of(stage)) require_stage(stage_info(c, u));
    StageInfo s = stage_info(c, stage);
    fs::create_directories(s.dir);
    fs::remove(path_in(s, "stage.json"));
    return s;
}

Meta stage_meta(const RunConfig& c, const StageInfo& s) {
    return {{"stage", s.name}, {"config_digest", s.key}, {"seed", std::to_string(c.data.split_seed)}};
}

void finish_stage(const RunConfig& c, const StageInfo& s, const std::vector<std::string>& files) {
    json digests = json::object();
    for (const auto& f : files) digests[f] = file_digest(path_in(s, f));
    json doc = stage_identity(c, s.name);
    doc["key"] = s.key;
    doc["format"] = "dllids-stage";
    doc["version"] = 1;
    doc["files"] = digests;
    {
        std::ofstream out(path_in(s, "stage.json"));
        out << doc.dump(1) << '\n';
    }
    const fs::path manifest = fs::path(c.output_dir) / "manifest.json";
    json m = json::object();
    if (fs::is_regular_file(manifest)) {
        std::ifstream in(manifest);
        try {
            m = json::parse(in);
        } catch (const json::exception&) {
            m = json::object();
        }
    }
    m["format"] = "dllids-manifest";
    m["stages"][s.name] = {{"key", s.key}, {"dir", fs::path(s.dir).filename().string()}};
    std::ofstream out(manifest);
    out << m.dump(1) << '\n';
}

// ---------------------------------------------------------------- helpers

Dataset subset(const Dataset& d, const std::vector<std::size_t>& ids, const std::string& tag) {
    Dataset out;
    out.encoder = d.encoder;
    out.tag = tag;
    out.source = d.source;
    for (auto i : ids) out.samples.push_back(d.samples[i]);
    return out;
}

std::vector<std::size_t> eval_ids(const RunConfig& c, std::size_t test_size) {
    Rng rng(c.attack.eval_seed);
    auto perm = permutation(test_size, rng);
    perm.resize(std::min(perm.size(), c.attack.eval_samples));
    return perm;
}

std::string batch_file(AttackMethod m, const Budget& b) { return to_string(m) + "_" + budget_label(b) + ".csv"; }

bool is_zero(const Budget& b) { return b && *b == 0.0; }

json table_json(const Table& t) { return {{"header", t.header}, {"rows", t.rows}}; }

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(1) << '\n';
}

std::string join_labels(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : "+") + x;
    return s;
}

const AdversarialBatch& find_batch(const std::vector<AdversarialBatch>& batches, AttackMethod m, const Budget& b) {
    for (const auto& x : batches)
        if (x.method == m && x.budget == b) return x;
    throw ArtifactMissing("no adversarial batch for " + to_string(m) + " at budget " + budget_label(b) +
                              "; add it to attack.budgets and rerun `dllids attack`",
                          "attack");
}

Matrix rows_of(const std::vector<const Vector*>& v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(kEncodedWidth));
    for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i]->transpose();
    return m;
}

ReferenceSample reference_from(const MlpModel& model, const Dataset& train, const std::vector<std::size_t>& ids) {
    std::vector<const Vector*> rows;
    for (auto i : ids) rows.push_back(&train.samples.at(i).features);
    ReferenceSample r;
    r.rows = ids;
    r.layers = forward_batch(model, rows_of(rows)).hidden;
    return r;
}

}  // namespace

// ---------------------------------------------------------------- RunConfig

RunConfig detector_config_for(const RunConfig& c, const Budget& budget) {
    RunConfig out = c;
    out.detector.budgets = {budget};
    return out;
}

json RunConfig::to_json() const {
    json j;
    j["data"] = {{"source", data.source},
                 {"files", data.files},
                 {"root", data.root},
                 {"synthetic_records", data.synth.records},
                 {"synthetic_seed", data.synth.seed},
                 {"synthetic_malicious_share", data.synth.malicious_share},
                 {"synthetic_camouflage_share", data.synth.camouflage_share},
                 {"synthetic_noisy_benign_share", data.synth.noisy_benign_share},
                 {"train_n", data.train_n},
                 {"test_n", data.test_n},
                 {"split_seed", data.split_seed},
                 {"persistent", data.persistent}};
    j["mlp"] = {{"input_width", mlp.input_width}, {"hidden", mlp.hidden}, {"output_width", mlp.output_width}};
    j["train"] = {{"learning_rate", train.learning_rate},
                  {"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"optimizer", train.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
                  {"seed", train.seed}};
    const auto& p = attack.params;
    j["attack"] = {{"methods", methods_json(attack.methods)},
                   {"budgets", budgets_json(attack.budgets)},
                   {"eval_samples", attack.eval_samples},
                   {"eval_seed", attack.eval_seed},
                   {"bim_iterations", p.bim_iterations},
                   {"bim_step", p.bim_step ? json(*p.bim_step) : json(nullptr)},
                   {"deepfool_overshoot", p.deepfool_overshoot},
                   {"deepfool_max_iterations", p.deepfool_max_iterations},
                   {"cw_c", p.cw_c},
                   {"cw_steps", p.cw_steps},
                   {"cw_learning_rate", p.cw_learning_rate},
                   {"cw_kappa", p.cw_kappa},
                   {"cw_project_each_step", p.cw_project_each_step}};
    const auto& d = detector;
    j["detector"] = {{"kind", to_string(d.train.kind)},
                     {"k", d.lid.k},
                     {"batch_size", d.lid.batch_size},
                     {"reference_seed", d.lid.seed},
                     {"exclude_origin", d.lid.exclude_origin},
                     {"bank_size", d.bank_size},
                     {"attacks", methods_json(d.attacks)},
                     {"budgets", budgets_json(d.budgets)},
                     {"pairs", d.pairs},
                     {"successful_only", d.successful_only},
                     {"sample_seed", d.sample_seed},
                     {"holdout", d.train.holdout_fraction},
                     {"threshold", d.train.threshold},
                     {"seed", d.train.seed},
                     {"params", params_json(d.train.params)}};
    j["ls"] = {{"anchors", ls.anchors},
               {"sigma", ls.sigma ? json(*ls.sigma) : json(nullptr)},
               {"sigma_rule", ls.sigma_rule},
               {"sigma_k", ls.sigma_k},
               {"alpha", ls.alpha},
               {"tolerance", ls.tolerance},
               {"max_iterations", ls.max_iterations},
               {"query_batch", ls.query_batch},
               {"seed", ls.seed}};
    j["eval"] = {{"budget", budget_json(eval.budget)},
                 {"db_probes", eval.db.probes},
                 {"db_sigma", eval.db.sigma},
                 {"db_tau", eval.db.tau},
                 {"db_seed", eval.db_seed},
                 {"detection_budgets", budgets_json(eval.detection_budgets)},
                 {"detector_per_budget", eval.detector_per_budget},
                 {"classics", params_json(eval.classics)},
                 {"classics_seed", eval.classics_seed}};
    j["output_dir"] = output_dir;
    j["threads"] = threads;
    j["compare_kinds"] = compare_kinds;
    j["verbose"] = verbose;
    return j;
}

RunConfig RunConfig::from_json(const json& given) {
    const json defaults = RunConfig{}.to_json();
    check_keys(given, defaults, "");
    json j = defaults;
    overlay(j, given);
    RunConfig c;
    try {
        const auto& d = j.at("data");
        c.data.source = d.at("source");
        c.data.files = d.at("files").get<std::vector<std::string>>();
        c.data.root = d.at("root");
        c.data.synth.records = d.at("synthetic_records");
        c.data.synth.seed = d.at("synthetic_seed");
        c.data.synth.malicious_share = d.at("synthetic_malicious_share");
        c.data.synth.camouflage_share = d.at("synthetic_camouflage_share");
        c.data.synth.noisy_benign_share = d.at("synthetic_noisy_benign_share");
        c.data.train_n = d.at("train_n");
        c.data.test_n = d.at("test_n");
        c.data.split_seed = d.at("split_seed");
        c.data.persistent = d.at("persistent").get<std::vector<std::string>>();

        const auto& m = j.at("mlp");
        c.mlp.input_width = m.at("input_width");
        c.mlp.hidden = m.at("hidden").get<std::vector<std::size_t>>();
        c.mlp.output_width = m.at("output_width");
        const auto& t = j.at("train");
        c.train.learning_rate = t.at("learning_rate");
        c.train.epochs = t.at("epochs");
        c.train.batch_size = t.at("batch_size");
        const std::string opt = t.at("optimizer");
        if (opt != "adam" && opt != "sgd") throw std::invalid_argument("train.optimizer must be adam or sgd");
        c.train.optimizer = opt == "adam" ? OptimizerKind::Adam : OptimizerKind::Sgd;
        c.train.seed = t.at("seed");

        const auto& a = j.at("attack");
        c.attack.methods = methods_from(a.at("methods"));
        c.attack.budgets = budgets_from(a.at("budgets"));
        c.attack.eval_samples = a.at("eval_samples");
        c.attack.eval_seed = a.at("eval_seed");
        auto& p = c.attack.params;
        p.bim_iterations = a.at("bim_iterations");
        if (!a.at("bim_step").is_null()) p.bim_step = a.at("bim_step").get<double>();
        p.deepfool_overshoot = a.at("deepfool_overshoot");
        p.deepfool_max_iterations = a.at("deepfool_max_iterations");
        p.cw_c = a.at("cw_c");
        p.cw_steps = a.at("cw_steps");
        p.cw_learning_rate = a.at("cw_learning_rate");
        p.cw_kappa = a.at("cw_kappa");
        p.cw_project_each_step = a.at("cw_project_each_step");

        const auto& dt = j.at("detector");
        c.detector.train.kind = parse_classic_kind(dt.at("kind"));
        c.detector.lid.k = dt.at("k");
        c.detector.lid.batch_size = dt.at("batch_size");
        c.detector.lid.seed = dt.at("reference_seed");
        c.detector.lid.exclude_origin = dt.at("exclude_origin");
        c.detector.bank_size = dt.at("bank_size");
        c.detector.attacks = methods_from(dt.at("attacks"));
        c.detector.budgets = budgets_from(dt.at("budgets"));
        c.detector.pairs = dt.at("pairs");
        c.detector.successful_only = dt.at("successful_only");
        c.detector.sample_seed = dt.at("sample_seed");
        c.detector.train.holdout_fraction = dt.at("holdout");
        c.detector.train.threshold = dt.at("threshold");
        c.detector.train.seed = dt.at("seed");
        c.detector.train.params = params_from(dt.at("params"));

        const auto& l = j.at("ls");
        c.ls.anchors = l.at("anchors");
        if (!l.at("sigma").is_null()) c.ls.sigma = l.at("sigma").get<double>();
        c.ls.sigma_rule = l.at("sigma_rule");
        c.ls.sigma_k = l.at("sigma_k");
        c.ls.alpha = l.at("alpha");
        c.ls.tolerance = l.at("tolerance");
        c.ls.max_iterations = l.at("max_iterations");
        c.ls.query_batch = l.at("query_batch");
        c.ls.seed = l.at("seed");

        const auto& e = j.at("eval");
        c.eval.budget = budget_from(e.at("budget"));
        c.eval.db.probes = e.at("db_probes");
        c.eval.db.sigma = e.at("db_sigma");
        c.eval.db.tau = e.at("db_tau");
        c.eval.db_seed = e.at("db_seed");
        c.eval.detection_budgets = budgets_from(e.at("detection_budgets"));
        c.eval.detector_per_budget = e.at("detector_per_budget");
        c.eval.classics = params_from(e.at("classics"));
        c.eval.classics_seed = e.at("classics_seed");

        c.output_dir = j.at("output_dir");
        c.threads = j.at("threads");
        c.compare_kinds = j.at("compare_kinds");
        c.verbose = j.at("verbose");
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad config: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config " + path);
    try {
        return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config " + path + " is not valid JSON: " + e.what());
    }
}

void RunConfig::validate() const {
    mlp.validate();
    train.validate();
    if (mlp.input_width != kEncodedWidth) throw std::invalid_argument("mlp.input_width must be 128");
    if (mlp.output_width != 2) throw std::invalid_argument("mlp.output_width must be 2");
    if (data.train_n == 0 || data.test_n == 0) throw std::invalid_argument("data.train_n and data.test_n must be positive");
    for (const auto& b : attack.budgets)
        if (b && !(*b >= 0.0 && *b <= 1.0)) throw std::invalid_argument("attack budgets must lie in [0, 1] or be null");
    for (const auto& b : detector.budgets)
        if (b && !(*b > 0.0 && *b <= 1.0)) throw std::invalid_argument("detector budgets must lie in (0, 1] or be null");
    for (const auto& b : eval.detection_budgets)
        if (!b || !(*b > 0.0 && *b <= 1.0)) throw std::invalid_argument("eval.detection_budgets must lie in (0, 1]");
    if (eval.budget && !(*eval.budget > 0.0 && *eval.budget <= 1.0))
        throw std::invalid_argument("eval.budget must lie in (0, 1] or be null");
    AttackConfig probe = attack.params;
    probe.budget = 0.1;
    probe.validate();
    detector.lid.validate();
    if (detector.attacks.empty() || detector.budgets.empty()) throw std::invalid_argument("detector needs attacks and budgets");
    if (detector.pairs < detector.lid.batch_size) throw std::invalid_argument("detector.pairs must cover one minibatch");
    if (detector.bank_size < detector.lid.batch_size) throw std::invalid_argument("detector.bank_size below the LID batch size");
    ls.validate();
    eval.db.validate();
    if (attack.eval_samples == 0) throw std::invalid_argument("attack.eval_samples must be positive");
    if (threads == 0) throw std::invalid_argument("threads must be at least 1");
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override must look like key.path=value");
    std::string pointer;
    for (const auto& part : split_line(assignment.substr(0, eq), '.')) pointer += "/" + part;
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    doc[json::json_pointer(pointer)] = value;
}

StageInfo stage_info(const RunConfig& c, const std::string& stage) {
    StageInfo s;
    s.name = stage;
    s.key = digest_hex(stage_identity(c, stage).dump());
    s.dir = (fs::path(c.output_dir) / (stage + "-" + s.key)).string();
    return s;
}

// ---------------------------------------------------------------- ingest

IngestOutput cmd_ingest(const RunConfig& c) {
    Stopwatch clock;
    StageInfo s = begin_stage(c, "ingest");
    const auto data = resolve_data(c.data);
    std::vector<FlowRecord> records;
    std::string source;
    if (data.real) {
        for (const auto& p : data.paths) {
            auto part = parse_nslkdd(p);
            records.insert(records.end(), part.begin(), part.end());
            source += (source.empty() ? "" : "+") + fs::path(p).filename().string();
        }
        note(c, "ingest", "parsed " + std::to_string(records.size()) + " NSL-KDD records");
    } else {
        records = synthesize_nslkdd(c.data.synth);
        source = "synthetic-" + std::to_string(c.data.synth.seed);
        note(c, "ingest", "no NSL-KDD files found; generated " + std::to_string(records.size()) + " synthetic records");
    }
    auto [train_ids, test_ids] = split_indices(records.size(), c.data.train_n, c.data.test_n, c.data.split_seed);
    std::vector<FlowRecord> train_records;
    for (auto i : train_ids) train_records.push_back(records[i]);
    auto encoder = std::make_shared<const FeatureEncoder>(fit_encoder(train_records, c.data.persistent));

    IngestOutput out;
    out.stage = s;
    auto fill = [&](Dataset& d, const std::vector<std::size_t>& ids, const std::string& tag) {
        d.encoder = encoder;
        d.tag = tag;
        d.source = source;
        for (auto i : ids) d.samples.push_back(encode(*encoder, records[i]));
    };
    fill(out.train, train_ids, "train");
    fill(out.test, test_ids, "test");

    Meta meta = stage_meta(c, s);
    save_encoder(*encoder, path_in(s, "encoder.json"), meta);
    save_dataset_csv(out.train, path_in(s, "train.csv"), meta);
    save_dataset_csv(out.test, path_in(s, "test.csv"), meta);
    finish_stage(c, s, {"encoder.json", "train.csv", "test.csv"});
    note(c, "ingest", "train " + std::to_string(out.train.size()) + ", test " + std::to_string(out.test.size()) +
                          " samples in " + format_double(std::round(clock.seconds() * 10) / 10) + " s");
    return out;
}

IngestOutput load_ingest(const RunConfig& c) {
    IngestOutput out;
    out.stage = stage_info(c, "ingest");
    require_stage(out.stage);
    auto encoder = std::make_shared<const FeatureEncoder>(load_encoder(path_in(out.stage, "encoder.json")));
    out.train = load_dataset_csv(path_in(out.stage, "train.csv"), encoder);
    out.test = load_dataset_csv(path_in(out.stage, "test.csv"), encoder);
    return out;
}

// ---------------------------------------------------------------- train-dl

DlOutput cmd_train_dl(const RunConfig& c) {
    Stopwatch clock;
    StageInfo s = begin_stage(c, "mlp");
    IngestOutput data = load_ingest(c);
    DlOutput out;
    out.stage = s;
    out.model = init_model(c.mlp, c.train.seed);
    out.history = train(out.model, data.train, c.train);
    out.test_accuracy = accuracy(out.model, data.test);

    Meta meta = stage_meta(c, s);
    meta["seed"] = std::to_string(c.train.seed);
    save_model(out.model, path_in(s, "model.txt"), meta);
    Table h;
    h.header = {"epoch", "loss", "train_accuracy"};
    for (const auto& e : out.history)
        h.rows.push_back({std::to_string(e.epoch), format_double(e.loss), format_double(e.accuracy)});
    h.write_csv(path_in(s, "history.csv"));
    write_json(path_in(s, "summary.json"),
               {{"test_accuracy", format_double(out.test_accuracy)}, {"test_samples", data.test.size()}});
    finish_stage(c, s, {"model.txt", "history.csv", "summary.json"});
    note(c, "train-dl", "test accuracy " + format_double(out.test_accuracy) + " after " +
                            std::to_string(out.history.size()) + " epochs (" +
                            format_double(std::round(clock.seconds() * 10) / 10) + " s)");
    return out;
}

DlOutput load_dl(const RunConfig& c) {
    DlOutput out;
    out.stage = stage_info(c, "mlp");
    require_stage(out.stage);
    out.model = load_model(path_in(out.stage, "model.txt"));
    std::ifstream in(path_in(out.stage, "summary.json"));
    out.test_accuracy = parse_double(json::parse(in).at("test_accuracy").get<std::string>());
    return out;
}

// ---------------------------------------------------------------- attack

AttackOutput cmd_attack(const RunConfig& c) {
    Stopwatch clock;
    StageInfo s = begin_stage(c, "attack");
    IngestOutput data = load_ingest(c);
    DlOutput dl = load_dl(c);
    AttackOutput out;
    out.stage = s;
    out.eval = subset(data.test, eval_ids(c, data.test.size()), "eval");

    Meta meta = stage_meta(c, s);
    meta["seed"] = std::to_string(c.attack.eval_seed);
    std::vector<std::string> files;
    for (auto m : c.attack.methods)
        for (const auto& b : c.attack.budgets) {
            if (is_zero(b)) continue;
            Stopwatch t;
            AttackConfig ac = c.attack.params;
            ac.method = m;
            ac.budget = b;
            out.batches.push_back(generate_batch(dl.model, out.eval, ac, c.threads));
            const auto name = batch_file(m, b);
            save_batch_csv(out.batches.back(), path_in(s, name), meta);
            files.push_back(name);
            note(c, "attack", to_string(m) + " budget " + budget_label(b) + ": success rate " +
                                  format_double(std::round(out.batches.back().success_rate() * 1e4) / 1e4) + " (" +
                                  format_double(std::round(t.seconds() * 10) / 10) + " s)");
        }
    out.table = attack_table_from(out.batches, c.attack.budgets, accuracy(dl.model, out.eval), out.eval.size());
    out.table.methods = c.attack.methods;
    finish_stage(c, s, files);
    note(c, "attack", "done in " + format_double(std::round(clock.seconds() * 10) / 10) + " s");
    return out;
}

AttackOutput load_attack(const RunConfig& c) {
    AttackOutput out;
    out.stage = stage_info(c, "attack");
    require_stage(out.stage);
    IngestOutput data = load_ingest(c);
    DlOutput dl = load_dl(c);
    out.eval = subset(data.test, eval_ids(c, data.test.size()), "eval");
    for (auto m : c.attack.methods)
        for (const auto& b : c.attack.budgets)
            if (!is_zero(b)) out.batches.push_back(load_batch_csv(path_in(out.stage, batch_file(m, b)), out.eval));
    out.table = attack_table_from(out.batches, c.attack.budgets, accuracy(dl.model, out.eval), out.eval.size());
    out.table.methods = c.attack.methods;
    return out;
}

// ---------------------------------------------------------------- train-detector

DetectorOutput cmd_train_detector(const RunConfig& c) {
    Stopwatch clock;
    StageInfo s = begin_stage(c, "detector");
    IngestOutput data = load_ingest(c);
    DlOutput dl = load_dl(c);
    const auto& dc = c.detector;

    auto pred = predict_batch(dl.model, data.train.feature_matrix());
    std::vector<std::size_t> correct;
    for (std::size_t i = 0; i < data.train.size(); ++i)
        if (pred[i] == data.train.samples[i].label) correct.push_back(i);
    if (correct.size() < dc.bank_size || correct.size() < dc.pairs)
        throw DataError("train-detector: too few correctly classified training samples for the bank and pairs");

    // Reference sample for inference-time LID: a seeded draw from a bank of clean training rows.
    Rng bank_rng(dc.lid.seed);
    auto bank_perm = permutation(correct.size(), bank_rng);
    std::vector<std::size_t> bank_ids;
    for (std::size_t i = 0; i < dc.bank_size; ++i) bank_ids.push_back(correct[bank_perm[i]]);
    std::vector<const Vector*> bank_rows;
    for (auto i : bank_ids) bank_rows.push_back(&data.train.samples[i].features);
    ReferenceBank bank = build_reference_bank(dl.model, rows_of(bank_rows), "train");
    ReferenceSample reference = draw_reference(bank, dc.lid.batch_size, dc.lid.seed);
    for (auto& r : reference.rows) r = bank_ids[r];

    // Minibatches of clean training samples, each attacked with one (method, budget) in turn.
    Rng pair_rng(dc.sample_seed);
    auto pair_perm = permutation(correct.size(), pair_rng);
    const std::size_t batch = dc.lid.batch_size;
    const std::size_t batches = dc.pairs / batch;
    std::vector<std::pair<AttackMethod, Budget>> combos;
    for (auto m : dc.attacks)
        for (const auto& b : dc.budgets) combos.push_back({m, b});
    std::vector<Matrix> clean_batches, adv_batches;
    std::vector<std::vector<bool>> keep;
    std::vector<std::size_t> successes(combos.size(), 0), attempts(combos.size(), 0);
    for (std::size_t bi = 0; bi < batches; ++bi) {
        const auto& combo = combos[bi % combos.size()];
        AttackConfig ac = c.attack.params;
        ac.method = combo.first;
        ac.budget = combo.second;
        Matrix clean(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(kEncodedWidth));
        Matrix adv(clean.rows(), clean.cols());
        std::vector<char> ok(batch, 0);
        parallel_for(batch, c.threads, [&](std::size_t j) {
            const auto& sample = data.train.samples[correct[pair_perm[bi * batch + j]]];
            auto res = run_attack(dl.model, sample, ac);
            clean.row(static_cast<Eigen::Index>(j)) = sample.features.transpose();
            adv.row(static_cast<Eigen::Index>(j)) = res.adversarial.transpose();
            ok[j] = res.success;
        });
        for (char v : ok) successes[bi % combos.size()] += static_cast<std::size_t>(v);
        keep.emplace_back(ok.begin(), ok.end());
        attempts[bi % combos.size()] += batch;
        clean_batches.push_back(std::move(clean));
        adv_batches.push_back(std::move(adv));
    }
    // Perturbations that did not flip the victim are not adversarial examples;
    // only the successful ones enter the positive class.
    LidTrainingSet set = build_training_set(dl.model, clean_batches, adv_batches, dc.lid, c.threads,
                                            dc.successful_only ? keep : std::vector<std::vector<bool>>{});
    std::vector<std::string> attack_names, budget_names;
    for (auto m : dc.attacks) attack_names.push_back(to_string(m));
    for (const auto& b : dc.budgets) budget_names.push_back(budget_label(b));
    set.meta["attacks"] = join_labels(attack_names);
    set.meta["budgets"] = join_labels(budget_names);

    DetectorOutput out;
    out.stage = s;
    out.detector = train_ae_detector(set, dc.train);
    out.detector.lid = dc.lid;
    out.reference = std::move(reference);
    out.reference_ids = out.reference.rows;
    out.training_set = std::move(set);

    Meta meta = stage_meta(c, s);
    meta["seed"] = std::to_string(dc.train.seed);
    save_detector(out.detector, path_in(s, "detector.json"), meta);
    save_lid_csv(out.training_set, path_in(s, "lid_train.csv"));
    {
        std::ofstream ref(path_in(s, "reference.txt"));
        ref << meta_line({{"format", "dllids-reference"}, {"version", "1"}, {"rows", std::to_string(out.reference_ids.size())}})
            << '\n';
        for (auto i : out.reference_ids) ref << i << '\n';
    }
    std::vector<std::string> files = {"detector.json", "lid_train.csv", "reference.txt"};
    if (c.compare_kinds) {
        Table t;
        t.header = {"kind", "heldout_accuracy", "heldout_samples"};
        for (auto kind : {ClassicKind::LinSvm, ClassicKind::Lgr, ClassicKind::Dtc, ClassicKind::Knn}) {
            DetectorTrainOptions opt = dc.train;
            opt.kind = kind;
            auto d = kind == dc.train.kind ? out.detector : train_ae_detector(out.training_set, opt);
            t.rows.push_back({to_string(kind), format_double(d.heldout_accuracy), std::to_string(d.heldout_size)});
        }
        t.write_csv(path_in(s, "table2.csv"));
        files.push_back("table2.csv");
        out.kind_comparison = std::move(t);
    }
    finish_stage(c, s, files);
    std::string rates;
    for (std::size_t i = 0; i < combos.size(); ++i)
        rates += " " + to_string(combos[i].first) + "@" + budget_label(combos[i].second) + "=" +
                 format_double(std::round(1e4 * static_cast<double>(successes[i]) /
                                          static_cast<double>(std::max<std::size_t>(attempts[i], 1))) / 1e4);
    note(c, "train-detector", "attack success on training pairs:" + rates);
    note(c, "train-detector", "held-out accuracy " + format_double(out.detector.heldout_accuracy) + " on " +
                                  std::to_string(out.detector.heldout_size) + " LID vectors (" +
                                  format_double(std::round(clock.seconds() * 10) / 10) + " s)");
    return out;
}

DetectorOutput load_detector_stage(const RunConfig& c) {
    DetectorOutput out;
    out.stage = stage_info(c, "detector");
    require_stage(out.stage);
    out.detector = load_detector(path_in(out.stage, "detector.json"));
    std::ifstream in(path_in(out.stage, "reference.txt"));
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path_in(out.stage, "reference.txt") + ": empty file");
    require_format(parse_meta_line(line), "dllids-reference", "1", path_in(out.stage, "reference.txt"));
    while (std::getline(in, line))
        if (!line.empty()) out.reference_ids.push_back(static_cast<std::size_t>(parse_double(line)));
    IngestOutput data = load_ingest(c);
    DlOutput dl = load_dl(c);
    out.reference = reference_from(dl.model, data.train, out.reference_ids);
    return out;
}

// ---------------------------------------------------------------- train-ml

LsOutput cmd_train_ml(const RunConfig& c) {
    Stopwatch clock;
    StageInfo s = begin_stage(c, "ls");
    IngestOutput data = load_ingest(c);
    LsOutput out;
    out.stage = s;
    out.model = fit_ls(data.train, c.ls);
    Meta meta = stage_meta(c, s);
    meta["seed"] = std::to_string(c.ls.seed);
    save_ls(out.model, path_in(s, "ls.txt"), meta);
    finish_stage(c, s, {"ls.txt"});
    note(c, "train-ml", std::to_string(out.model.size()) + " anchors, sigma " + format_double(out.model.sigma) + " (" +
                            format_double(std::round(clock.seconds() * 10) / 10) + " s)");
    return out;
}

LsOutput load_ls_stage(const RunConfig& c) {
    LsOutput out;
    out.stage = stage_info(c, "ls");
    require_stage(out.stage);
    out.model = load_ls(path_in(out.stage, "ls.txt"));
    return out;
}

// ---------------------------------------------------------------- run

namespace {

struct Assembled {
    DlOutput dl;
    AttackOutput attack;
    DetectorOutput detector;
    LsOutput ls;
    Pipeline pipeline;
};

Assembled assemble(const RunConfig& c) {
    Assembled a;
    a.attack = load_attack(c);
    a.detector = load_detector_stage(c);
    a.ls = load_ls_stage(c);
    a.dl = load_dl(c);
    a.pipeline.model = std::make_shared<const MlpModel>(a.dl.model);
    a.pipeline.reference = std::make_shared<const ReferenceSample>(a.detector.reference);
    a.pipeline.detector = std::make_shared<const AeDetector>(a.detector.detector);
    a.pipeline.ls = std::make_shared<const LabelSpreadModel>(a.ls.model);
    return a;
}

json provenance(const RunConfig& c, const Assembled& a) {
    json keys = json::object();
    for (const char* st : {"ingest", "mlp", "attack", "detector", "ls"}) keys[st] = stage_info(c, st).key;
    return {{"stage_keys", keys},
            {"component_digests",
             {{"model", file_digest(path_in(a.dl.stage, "model.txt"))},
              {"detector", file_digest(path_in(a.detector.stage, "detector.json"))},
              {"ls", file_digest(path_in(a.ls.stage, "ls.txt"))}}},
            {"seeds",
             {{"split", c.data.split_seed},
              {"train", c.train.seed},
              {"eval_subset", c.attack.eval_seed},
              {"detector_pairs", c.detector.sample_seed},
              {"reference", c.detector.lid.seed},
              {"ls_anchors", c.ls.seed},
              {"db", c.eval.db_seed},
              {"classics", c.eval.classics_seed}}},
            {"budget", budget_label(c.eval.budget)},
            {"eval_samples", a.attack.eval.size()}};
}

}  // namespace

RunOutput cmd_run(const RunConfig& c) {
    Stopwatch clock;
    StageInfo s = begin_stage(c, "run");
    Assembled a = assemble(c);

    std::vector<TestSet> sets;
    TestSet clean{"CLEAN", a.attack.eval.feature_matrix(), a.attack.eval.labels(), {}};
    clean.adversarial.assign(clean.labels.size(), 0);
    sets.push_back(std::move(clean));
    for (auto m : c.attack.methods) {
        const auto& b = find_batch(a.attack.batches, m, c.eval.budget);
        TestSet t{to_string(m), b.adversarial_matrix(), b.labels(), {}};
        t.adversarial.assign(t.labels.size(), 1);
        sets.push_back(std::move(t));
    }
    RunOutput out;
    out.stage = s;
    std::vector<std::vector<FusionVerdict>> verdicts;
    out.report = comparison_report(a.pipeline, a.dl.model, sets, c.threads, &out.stats, &verdicts);

    std::vector<std::string> files = {"table5.csv", "table5.json"};
    out.report.table().write_csv(path_in(s, "table5.csv"));
    json doc = {{"format", "dllids-report"},
                {"version", 1},
                {"config_digest", s.key},
                {"table5", out.report.json()},
                {"ls_invocations", out.stats.ls_invocations},
                {"ls_queries", out.stats.ls_queries},
                {"provenance", provenance(c, a)}};
    write_json(path_in(s, "table5.json"), doc);
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const auto name = "verdicts_" + sets[i].name + ".jsonl";
        write_verdicts_jsonl(verdicts[i], path_in(s, name));
        files.push_back(name);
    }
    finish_stage(c, s, files);
    for (const auto& set : sets) {
        const auto& f = out.report.find("DLL-IDS", set.name).malicious;
        const auto& b = out.report.find("Baseline", set.name).malicious;
        note(c, "run", set.name + ": DLL-IDS accuracy " + format_double(std::round(f.accuracy * 1e4) / 1e4) +
                           ", bare DL " + format_double(std::round(b.accuracy * 1e4) / 1e4));
    }
    note(c, "run", "done in " + format_double(std::round(clock.seconds() * 10) / 10) + " s");
    return out;
}

// ---------------------------------------------------------------- eval

EvalOutput cmd_eval(const RunConfig& c) {
    Stopwatch clock;
    StageInfo s = begin_stage(c, "eval");
    Assembled a = assemble(c);
    IngestOutput data = load_ingest(c);
    EvalOutput out;
    out.stage = s;
    out.table1 = a.attack.table;

    // Detection rates on successful AEs, one attack-pooled detector per budget,
    // and the deployed detector's clean false-positive rate.
    const auto& model = a.dl.model;
    auto lid_rate = [&](const DetectorOutput& d, const Matrix& rows) {
        if (rows.rows() == 0) return 0.0;
        const auto& det = d.detector;
        auto found = detect_batch(det, lid_matrix(model, rows, d.reference, det.lid.k, c.threads));
        std::size_t hit = 0;
        for (const auto& x : found) hit += x.adversarial;
        return static_cast<double>(hit) / static_cast<double>(found.size());
    };
    auto db_rate = [&](const Matrix& rows, const Mask& mask) {
        if (rows.rows() == 0) return 0.0;
        std::vector<char> hit(static_cast<std::size_t>(rows.rows()));
        parallel_for(hit.size(), c.threads, [&](std::size_t i) {
            hit[i] = db_detect(model, rows.row(static_cast<Eigen::Index>(i)).transpose(), mask, c.eval.db,
                               c.eval.db_seed + i);
        });
        return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(hit.size());
    };
    const Mask mask = data.train.encoder->mask();
    const Matrix clean_rows = a.attack.eval.feature_matrix();
    out.table3.cells.push_back({"CLEAN", std::nullopt, 1.0 - lid_rate(a.detector, clean_rows),
                                1.0 - db_rate(clean_rows, mask), a.attack.eval.size()});
    std::vector<DetectorOutput> per_budget;
    for (const auto& b : c.eval.detection_budgets) {
        if (!c.eval.detector_per_budget) {
            per_budget.push_back(a.detector);
            continue;
        }
        const RunConfig cb = detector_config_for(c, b);
        if (!fs::is_regular_file(path_in(stage_info(cb, "detector"), "stage.json"))) {
            note(c, "eval", "training the detector for budget " + budget_label(b));
            cmd_train_detector(cb);
        }
        per_budget.push_back(load_detector_stage(cb));
    }
    for (auto m : c.attack.methods)
        for (std::size_t bi = 0; bi < c.eval.detection_budgets.size(); ++bi) {
            const auto& b = c.eval.detection_budgets[bi];
            const auto& batch = find_batch(a.attack.batches, m, b);
            std::vector<const Vector*> rows;
            for (const auto& e : batch.examples)
                if (e.success) rows.push_back(&e.adversarial);
            const Matrix adv = rows_of(rows);
            out.table3.cells.push_back({to_string(m), b, lid_rate(per_budget[bi], adv), db_rate(adv, mask), rows.size()});
        }

    // Transferability of the DL-crafted AEs to the other models.
    const Matrix train_rows = data.train.feature_matrix();
    const auto train_labels = data.train.labels();
    std::vector<NamedPredictor> models;
    models.push_back({"DL", [&](const Matrix& r) { return predict_batch(model, r); }});
    std::vector<std::shared_ptr<ClassicModel>> classics;
    for (auto kind : {ClassicKind::Knn, ClassicKind::Lgr, ClassicKind::LinSvm, ClassicKind::Dtc}) {
        classics.push_back(std::make_shared<ClassicModel>(
            train_classic(kind, train_rows, train_labels, c.eval.classics, c.eval.classics_seed)));
        auto cm = classics.back();
        models.push_back({to_string(kind), [cm](const Matrix& r) { return predict_labels(*cm, r); }});
    }
    models.push_back({"LS", [&](const Matrix& r) { return predict_ls(a.ls.model, r); }});
    std::vector<AdversarialBatch> at_budget;
    for (auto m : c.attack.methods) at_budget.push_back(find_batch(a.attack.batches, m, c.eval.budget));
    out.table4 = transferability_matrix(models, clean_rows, a.attack.eval.labels(), at_budget);

    const Table t1 = out.table1.table(), t3 = out.table3.table(), t4 = out.table4.table();
    t1.write_csv(path_in(s, "table1.csv"));
    t3.write_csv(path_in(s, "table3.csv"));
    t4.write_csv(path_in(s, "table4.csv"));
    json doc = {{"format", "dllids-report"},
                {"version", 1},
                {"config_digest", s.key},
                {"table1", table_json(t1)},
                {"table3", table_json(t3)},
                {"table4", table_json(t4)},
                {"clean_accuracy", format_double(out.table1.clean_accuracy)},
                {"provenance", provenance(c, a)}};
    write_json(path_in(s, "report.json"), doc);
    finish_stage(c, s, {"table1.csv", "table3.csv", "table4.csv", "report.json"});
    note(c, "eval", "done in " + format_double(std::round(clock.seconds() * 10) / 10) + " s");
    return out;
}

std::vector<std::string> report_files(const RunConfig& c) {
    const auto run = fs::path(stage_info(c, "run").dir).filename();
    const auto eval = fs::path(stage_info(c, "eval").dir).filename();
    std::vector<std::string> out = {(run / "table5.csv").string(), (run / "table5.json").string()};
    for (const char* f : {"table1.csv", "table3.csv", "table4.csv", "report.json"}) out.push_back((eval / f).string());
    return out;
}

}  // namespace dllids
