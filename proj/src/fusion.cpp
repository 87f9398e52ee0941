#include "dllids/fusion.hpp"

#include <fstream>

namespace dllids {

namespace {

void check(const Pipeline& p) {
    if (!p.model) throw ArtifactMissing("pipeline has no DL model", "train-dl");
    if (!p.detector_override && (!p.detector || !p.reference))
        throw ArtifactMissing("pipeline has no adversarial-example detector", "train-detector");
}

Detection run_detector(const Pipeline& p, const Vector& x, const ActivationTrace& trace) {
    if (p.detector_override) return p.detector_override(x, trace);
    return detect(*p.detector, lid_vector(trace, *p.reference, p.detector->lid.k));
}

// Fills the LS part of the flagged verdicts.
void route_flagged(const Pipeline& p, const Matrix& rows, const std::vector<std::size_t>& flagged,
                   std::vector<FusionVerdict>& out, FusionStats* stats) {
    if (flagged.empty()) return;
    if (!p.ls) {
        for (auto i : flagged) out[i].is_malicious = true;
        return;
    }
    Matrix q(static_cast<Eigen::Index>(flagged.size()), rows.cols());
    for (std::size_t j = 0; j < flagged.size(); ++j) q.row(static_cast<Eigen::Index>(j)) = rows.row(static_cast<Eigen::Index>(flagged[j]));
    Matrix scores = propagate_iterative(*p.ls, q).scores;
    auto classes = argmax_rows(scores);
    if (stats) {
        ++stats->ls_invocations;
        stats->ls_queries += flagged.size();
    }
    for (std::size_t j = 0; j < flagged.size(); ++j) {
        auto& v = out[flagged[j]];
        v.ls_scores = scores.row(static_cast<Eigen::Index>(j)).transpose();
        v.is_malicious = classes[j] == 1;
    }
}

}  // namespace

std::string to_string(VerdictSource s) { return s == VerdictSource::DL ? "DL" : "ML"; }

FusionVerdict classify(const Pipeline& p, const Vector& x, FusionStats* stats) {
    Matrix row = x.transpose();
    return classify_batch(p, row, stats).front();
}

std::vector<FusionVerdict> classify_batch(const Pipeline& p, const Matrix& rows, FusionStats* stats, unsigned threads) {
    check(p);
    const auto n = static_cast<std::size_t>(rows.rows());
    std::vector<FusionVerdict> out(n);
    if (n == 0) return out;
    BatchForward fw = forward_batch(*p.model, rows);
    parallel_for(n, threads, [&](std::size_t i) {
        const auto r = static_cast<Eigen::Index>(i);
        ActivationTrace trace;
        for (const Matrix& h : fw.hidden) trace.hidden.push_back(h.row(r).transpose());
        FusionVerdict& v = out[i];
        v.dl_probs = fw.probs.row(r).transpose();
        Detection d = run_detector(p, rows.row(r).transpose(), trace);
        v.is_adversarial = d.adversarial;
        v.detector_score = d.score;
        v.source = d.adversarial ? VerdictSource::ML : VerdictSource::DL;
        if (!d.adversarial) v.is_malicious = argmax_class(v.dl_probs) == 1;
    });
    std::vector<std::size_t> flagged;
    for (std::size_t i = 0; i < n; ++i)
        if (out[i].is_adversarial) flagged.push_back(i);
    route_flagged(p, rows, flagged, out, stats);
    return out;
}

void write_verdicts_jsonl(const std::vector<FusionVerdict>& verdicts, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    auto num = [](double v) { return format_double(v); };
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        const auto& v = verdicts[i];
        out << "{\"index\":" << i << ",\"isAdversarial\":" << (v.is_adversarial ? "true" : "false")
            << ",\"isMalicious\":" << (v.is_malicious ? "true" : "false") << ",\"source\":\"" << to_string(v.source)
            << "\",\"dl_probs\":[" << num(v.dl_probs[0]) << ',' << num(v.dl_probs[1])
            << "],\"detector_score\":" << num(v.detector_score);
        if (v.ls_scores) out << ",\"ls_scores\":[" << num((*v.ls_scores)[0]) << ',' << num((*v.ls_scores)[1]) << ']';
        out << "}\n";
    }
}

}  // namespace dllids
