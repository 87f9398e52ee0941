#include "dllids/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dllids {

namespace {

std::string fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

double ratio(std::size_t num, std::size_t den, bool& degenerate) {
    degenerate = den == 0;
    return degenerate ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

bool budget_is_zero(const Budget& b) { return b && *b == 0.0; }

}  // namespace

MetricsReport MetricsReport::from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
    MetricsReport m;
    m.tp = tp;
    m.fp = fp;
    m.tn = tn;
    m.fn = fn;
    m.precision = ratio(tp, tp + fp, m.precision_degenerate);
    m.recall = ratio(tp, tp + fn, m.recall_degenerate);
    const double pr = m.precision + m.recall;
    m.f1_degenerate = pr == 0.0;
    m.f1 = m.f1_degenerate ? 0.0 : 2.0 * m.precision * m.recall / pr;
    bool empty = false;
    m.accuracy = ratio(tp + tn, tp + fp + tn + fn, empty);
    return m;
}

MetricsReport metrics(const std::vector<int>& predictions, const std::vector<int>& truth, int positive_class) {
    if (predictions.size() != truth.size()) throw std::invalid_argument("metrics: length mismatch");
    if (predictions.empty()) throw std::invalid_argument("metrics: empty input");
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool p = predictions[i] == positive_class, t = truth[i] == positive_class;
        if (p && t) ++tp;
        else if (p) ++fp;
        else if (t) ++fn;
        else ++tn;
    }
    return MetricsReport::from_counts(tp, fp, tn, fn);
}

nlohmann::json to_json(const MetricsReport& m) {
    return {{"tp", m.tp},
            {"fp", m.fp},
            {"tn", m.tn},
            {"fn", m.fn},
            {"precision", format_double(m.precision)},
            {"recall", format_double(m.recall)},
            {"f1", format_double(m.f1)},
            {"accuracy", format_double(m.accuracy)},
            {"precision_degenerate", m.precision_degenerate},
            {"recall_degenerate", m.recall_degenerate},
            {"f1_degenerate", m.f1_degenerate}};
}

std::string Table::csv() const {
    std::ostringstream out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out.str();
}

void Table::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << csv();
}

Table AttackTable::table() const {
    Table t;
    t.header.push_back("budget");
    for (auto m : methods) t.header.push_back(to_string(m));
    for (std::size_t b = 0; b < budgets.size(); ++b) {
        std::vector<std::string> row{budget_label(budgets[b])};
        for (std::size_t m = 0; m < methods.size(); ++m)
            row.push_back(fixed(accuracy(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(m))));
        t.rows.push_back(std::move(row));
    }
    return t;
}

AttackTable attack_table_from(const std::vector<AdversarialBatch>& batches, const std::vector<Budget>& budgets,
                              double clean_accuracy, std::size_t samples) {
    AttackTable t;
    for (const auto& b : batches)
        if (std::find(t.methods.begin(), t.methods.end(), b.method) == t.methods.end()) t.methods.push_back(b.method);
    t.budgets = budgets;
    t.clean_accuracy = clean_accuracy;
    t.samples = samples;
    t.accuracy.resize(static_cast<Eigen::Index>(budgets.size()), static_cast<Eigen::Index>(t.methods.size()));
    for (std::size_t bi = 0; bi < budgets.size(); ++bi) {
        for (std::size_t mi = 0; mi < t.methods.size(); ++mi) {
            double acc = clean_accuracy;
            if (!budget_is_zero(budgets[bi])) {
                auto it = std::find_if(batches.begin(), batches.end(), [&](const AdversarialBatch& b) {
                    return b.method == t.methods[mi] && b.budget == budgets[bi];
                });
                if (it == batches.end())
                    throw std::invalid_argument("attack_table: no batch for " + to_string(t.methods[mi]) + " at " +
                                                budget_label(budgets[bi]));
                acc = it->victim_accuracy_overall();
            }
            t.accuracy(static_cast<Eigen::Index>(bi), static_cast<Eigen::Index>(mi)) = acc;
        }
    }
    return t;
}

AttackTable attack_table(const MlpModel& model, const Dataset& data, const std::vector<AttackMethod>& methods,
                         const std::vector<Budget>& budgets, const AttackConfig& base, unsigned threads,
                         std::vector<AdversarialBatch>* batches_out) {
    std::vector<AdversarialBatch> batches;
    for (auto m : methods)
        for (const auto& b : budgets) {
            if (budget_is_zero(b)) continue;
            AttackConfig c = base;
            c.method = m;
            c.budget = b;
            batches.push_back(generate_batch(model, data, c, threads));
        }
    auto t = attack_table_from(batches, budgets, accuracy(model, data), data.size());
    t.methods = methods;
    if (batches_out) *batches_out = std::move(batches);
    return t;
}

Table TransferTable::table() const {
    Table t;
    t.header.push_back("model");
    t.header.insert(t.header.end(), columns.begin(), columns.end());
    for (std::size_t m = 0; m < models.size(); ++m) {
        std::vector<std::string> row{models[m]};
        for (std::size_t c = 0; c < columns.size(); ++c)
            row.push_back(fixed(accuracy(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(c))));
        t.rows.push_back(std::move(row));
    }
    return t;
}

double TransferTable::at(const std::string& model, const std::string& column) const {
    auto mi = std::find(models.begin(), models.end(), model);
    auto ci = std::find(columns.begin(), columns.end(), column);
    if (mi == models.end() || ci == columns.end()) throw std::out_of_range("TransferTable: no cell " + model + "/" + column);
    return accuracy(mi - models.begin(), ci - columns.begin());
}

TransferTable transferability_matrix(const std::vector<NamedPredictor>& models, const Matrix& clean_rows,
                                     const std::vector<int>& clean_labels,
                                     const std::vector<AdversarialBatch>& batches) {
    TransferTable t;
    t.columns.push_back("CLEAN");
    for (const auto& b : batches) t.columns.push_back(to_string(b.method));
    t.columns.push_back("Overall");
    t.accuracy.resize(static_cast<Eigen::Index>(models.size()), static_cast<Eigen::Index>(t.columns.size()));
    auto acc = [](const std::vector<int>& p, const std::vector<int>& y, std::size_t& correct) {
        correct = 0;
        for (std::size_t i = 0; i < y.size(); ++i) correct += p[i] == y[i];
        return y.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(y.size());
    };
    for (std::size_t m = 0; m < models.size(); ++m) {
        t.models.push_back(models[m].name);
        const auto r = static_cast<Eigen::Index>(m);
        std::size_t correct = 0, pooled_correct = 0, pooled_total = 0;
        t.accuracy(r, 0) = acc(models[m].predict(clean_rows), clean_labels, correct);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            auto labels = batches[b].labels();
            t.accuracy(r, static_cast<Eigen::Index>(b + 1)) =
                acc(models[m].predict(batches[b].adversarial_matrix()), labels, correct);
            pooled_correct += correct;
            pooled_total += labels.size();
        }
        t.accuracy(r, static_cast<Eigen::Index>(batches.size() + 1)) =
            pooled_total ? static_cast<double>(pooled_correct) / static_cast<double>(pooled_total) : 0.0;
    }
    return t;
}

const ComparisonRow& ComparisonReport::find(const std::string& system, const std::string& test_set) const {
    for (const auto& r : rows)
        if (r.system == system && r.test_set == test_set) return r;
    throw std::out_of_range("ComparisonReport: no row " + system + "/" + test_set);
}

Table ComparisonReport::table() const {
    Table t;
    t.header = {"system", "test_data", "precision", "recall", "f1", "accuracy", "tp", "fp", "tn", "fn"};
    for (const auto& r : rows) {
        const auto& m = r.malicious;
        t.rows.push_back({r.system, r.test_set, fixed(m.precision), fixed(m.recall), fixed(m.f1), fixed(m.accuracy),
                          std::to_string(m.tp), std::to_string(m.fp), std::to_string(m.tn), std::to_string(m.fn)});
    }
    return t;
}

nlohmann::json ComparisonReport::json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows)
        arr.push_back({{"system", r.system},
                       {"test_data", r.test_set},
                       {"malicious", to_json(r.malicious)},
                       {"adversarial", to_json(r.adversarial)}});
    return arr;
}

ComparisonReport comparison_report(const Pipeline& fusion, const MlpModel& bare, const std::vector<TestSet>& sets,
                                   unsigned threads, FusionStats* stats,
                                   std::vector<std::vector<FusionVerdict>>* verdicts_out) {
    ComparisonReport report;
    if (verdicts_out) verdicts_out->clear();
    for (const auto& s : sets) {
        if (s.rows.rows() == 0) throw DataError("comparison_report: empty test set " + s.name);
        auto verdicts = classify_batch(fusion, s.rows, stats, threads);
        std::vector<int> mal, adv;
        for (const auto& v : verdicts) {
            mal.push_back(v.is_malicious ? 1 : 0);
            adv.push_back(v.is_adversarial ? 1 : 0);
        }
        std::vector<int> adv_truth = s.adversarial.empty() ? std::vector<int>(s.labels.size(), 0) : s.adversarial;
        report.rows.push_back({"DLL-IDS", s.name, metrics(mal, s.labels), metrics(adv, adv_truth)});
        auto bare_pred = predict_batch(bare, s.rows);
        report.rows.push_back({"Baseline", s.name, metrics(bare_pred, s.labels), MetricsReport{}});
        if (verdicts_out) verdicts_out->push_back(std::move(verdicts));
    }
    return report;
}

const DetectionCell& DetectionTable::find(const std::string& attack, const Budget& budget) const {
    for (const auto& c : cells)
        if (c.attack == attack && (attack == "CLEAN" || c.budget == budget)) return c;
    throw std::out_of_range("DetectionTable: no cell " + attack + "/" + budget_label(budget));
}

Table DetectionTable::table() const {
    Table t;
    t.header = {"test_data", "budget", "LID", "DB", "samples"};
    for (const auto& c : cells)
        t.rows.push_back({c.attack, c.attack == "CLEAN" ? "-" : budget_label(c.budget), fixed(c.lid), fixed(c.db),
                          std::to_string(c.samples)});
    return t;
}

}  // namespace dllids
