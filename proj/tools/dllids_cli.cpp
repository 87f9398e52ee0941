// dllids: runs the experiment stages from one config file.
//
//   dllids ingest --config run.json
//   dllids eval --config run.json --set attack.eval_samples=500 --threads 4

#include "dllids/pipeline.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kMissing = 3 };

struct Options {
    std::string config;
    std::string out;
    unsigned threads = 0;
    std::vector<std::string> overrides;
    bool compare_kinds = false;
    bool quiet = false;
    bool print_config = false;
};

dllids::RunConfig build_config(const Options& o) {
    nlohmann::json doc = nlohmann::json::object();
    if (!o.config.empty()) {
        std::ifstream in(o.config);
        if (!in) throw dllids::DataError("cannot read config " + o.config);
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::invalid_argument("config " + o.config + " is not valid JSON: " + e.what());
        }
    }
    for (const auto& s : o.overrides) dllids::apply_override(doc, s);
    if (!o.out.empty()) doc["output_dir"] = o.out;
    if (o.threads) doc["threads"] = o.threads;
    if (o.compare_kinds) doc["compare_kinds"] = true;
    if (o.quiet) doc["verbose"] = false;
    return dllids::RunConfig::from_json(doc);
}

void print_table(const dllids::Table& t) { std::cout << t.csv(); }

int dispatch(const std::string& cmd, const dllids::RunConfig& c) {
    using namespace dllids;
    if (cmd == "ingest") {
        auto r = cmd_ingest(c);
        std::cout << r.stage.dir << '\n';
    } else if (cmd == "train-dl") {
        auto r = cmd_train_dl(c);
        std::cout << "test_accuracy," << format_double(r.test_accuracy) << '\n';
    } else if (cmd == "attack") {
        print_table(cmd_attack(c).table.table());
    } else if (cmd == "train-detector") {
        auto r = cmd_train_detector(c);
        if (r.kind_comparison) print_table(*r.kind_comparison);
        else std::cout << "heldout_accuracy," << format_double(r.detector.heldout_accuracy) << '\n';
    } else if (cmd == "train-ml") {
        auto r = cmd_train_ml(c);
        std::cout << r.stage.dir << '\n';
    } else if (cmd == "run") {
        print_table(cmd_run(c).report.table());
    } else if (cmd == "eval") {
        auto r = cmd_eval(c);
        print_table(r.table1.table());
        std::cout << '\n';
        print_table(r.table3.table());
        std::cout << '\n';
        print_table(r.table4.table());
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial-robust intrusion detection experiments"};
    app.require_subcommand(1);
    Options o;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"ingest", "parse or synthesize flows, fit the encoder, write train/test splits"},
        {"train-dl", "train the MLP classifier"},
        {"attack", "craft adversarial batches for every method and budget"},
        {"train-detector", "build LID features and fit the adversarial-example detector"},
        {"train-ml", "fit the label-spreading model"},
        {"run", "classify the evaluation sets through the fused pipeline"},
        {"eval", "attack damage, detection and transferability tables"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", o.config, "JSON config file (defaults apply when omitted)");
        sub->add_option("-o,--out", o.out, "output directory");
        sub->add_option("-j,--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--set", o.overrides, "override a config field, e.g. --set ls.alpha=0.8");
        sub->add_flag("-q,--quiet", o.quiet, "no progress output");
        sub->add_flag("--print-config", o.print_config, "print the effective config and exit");
        if (name == "train-detector")
            sub->add_flag("--compare-kinds", o.compare_kinds, "also fit LINSVM/LGR/DTC/KNN on the LID set");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        const auto config = build_config(o);
        if (o.print_config) {
            std::cout << config.to_json().dump(2) << '\n';
            return kOk;
        }
        return dispatch(cmd, config);
    } catch (const dllids::ArtifactMissing& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kMissing;
    } catch (const dllids::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
}
