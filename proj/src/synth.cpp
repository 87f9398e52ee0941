#include "dllids/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

namespace dllids {

namespace {

const std::vector<std::string> kServices = {
    "aol", "auth", "bgp", "courier", "csnet_ns", "ctf", "daytime", "discard", "domain", "domain_u",
    "echo", "eco_i", "ecr_i", "efs", "exec", "finger", "ftp", "ftp_data", "gopher", "harvest",
    "hostnames", "http", "http_2784", "http_443", "http_8001", "imap4", "IRC", "iso_tsap", "klogin",
    "kshell", "ldap", "link", "login", "mtp", "name", "netbios_dgm", "netbios_ns", "netbios_ssn",
    "netstat", "nnsp", "nntp", "ntp_u", "other", "pm_dump", "pop_2", "pop_3", "printer", "private",
    "red_i", "remote_job", "rje", "shell", "smtp", "sql_net", "ssh", "sunrpc", "supdup", "systat",
    "telnet", "tftp_u", "tim_i", "time", "urh_i", "urp_i", "uucp", "uucp_path", "vmnet", "whois",
    "X11", "Z39_50"};

const std::vector<std::string> kTcpScanServices = {
    "private", "other", "ftp", "telnet", "smtp", "finger", "http", "auth", "domain", "sunrpc",
    "ssh", "pop_3", "imap4", "login", "shell", "exec", "uucp", "whois", "netstat", "systat",
    "daytime", "time", "echo", "discard", "gopher", "ctf", "link", "name", "mtp", "csnet_ns",
    "iso_tsap", "Z39_50", "bgp", "courier", "efs", "hostnames", "klogin", "kshell", "ldap",
    "netbios_dgm", "netbios_ns", "netbios_ssn", "nnsp", "nntp", "pop_2", "printer", "remote_job",
    "rje", "sql_net", "supdup", "uucp_path", "vmnet", "X11", "http_443", "IRC", "aol",
    "http_2784", "http_8001", "harvest", "pm_dump"};

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
    bool chance(double p) { return uniform(0.0, 1.0) < p; }
    double count(int lo, int hi) { return static_cast<double>(lo + static_cast<int>(uniform_index(rng_, static_cast<std::size_t>(hi - lo + 1)))); }
    double bytes(double median, double spread, double cap) {
        double v = median * std::exp(spread * std::normal_distribution<double>(0.0, 1.0)(rng_));
        return std::round(std::min(v, cap));
    }
    // Rates in NSL-KDD carry two decimals.
    double rate(double center, double spread) {
        double v = std::clamp(center + spread * std::normal_distribution<double>(0.0, 1.0)(rng_), 0.0, 1.0);
        return std::round(v * 100.0) / 100.0;
    }
    const std::string& pick(const std::vector<std::string>& v) { return v[uniform_index(rng_, v.size())]; }
    Rng& rng() { return rng_; }

private:
    Rng rng_;
};

struct Builder {
    FlowRecord r;
    Builder(std::string proto, std::string service, std::string flag, std::string label) {
        r.protocol_type = std::move(proto);
        r.service = std::move(service);
        r.flag = std::move(flag);
        r.label = std::move(label);
    }
    Builder& set(const char* name, double v) {
        r.numeric[numeric_feature_index(name)] = v;
        return *this;
    }
};

// Host-level window statistics shared by most profiles.
void host_window(Builder& b, Gen& g, double host_count, double srv_count, double same_srv,
                 double diff_srv, double src_port, double srv_diff_host) {
    b.set("dst_host_count", host_count)
        .set("dst_host_srv_count", srv_count)
        .set("dst_host_same_srv_rate", g.rate(same_srv, 0.05))
        .set("dst_host_diff_srv_rate", g.rate(diff_srv, 0.03))
        .set("dst_host_same_src_port_rate", g.rate(src_port, 0.05))
        .set("dst_host_srv_diff_host_rate", g.rate(srv_diff_host, 0.03));
}

FlowRecord benign_profile(Gen& g) {
    double u = g.uniform(0.0, 1.0);
    if (u < 0.45) {
        Builder b("tcp", "http", g.chance(0.97) ? "SF" : "RSTO", "normal");
        double cnt = g.count(1, 25);
        b.set("duration", g.chance(0.9) ? 0 : g.count(1, 30))
            .set("src_bytes", g.bytes(240, 0.5, 5000))
            .set("dst_bytes", g.bytes(3000, 1.2, 200000))
            .set("logged_in", 1)
            .set("hot", g.chance(0.1) ? g.count(1, 4) : 0)
            .set("count", cnt)
            .set("srv_count", std::max(cnt, g.count(1, 40)))
            .set("same_srv_rate", 1.0)
            .set("srv_diff_host_rate", g.rate(0.1, 0.1));
        host_window(b, g, g.count(5, 255), 255, 1.0, 0.0, 0.02, 0.03);
        return b.r;
    }
    if (u < 0.60) {
        Builder b("tcp", "smtp", "SF", "normal");
        b.set("duration", g.count(0, 3))
            .set("src_bytes", g.bytes(1100, 0.7, 60000))
            .set("dst_bytes", g.bytes(330, 0.3, 3000))
            .set("logged_in", 1)
            .set("count", g.count(1, 5))
            .set("srv_count", g.count(1, 5))
            .set("same_srv_rate", 1.0)
            .set("srv_diff_host_rate", g.rate(0.05, 0.1));
        host_window(b, g, g.count(20, 255), g.count(40, 200), 0.7, 0.05, 0.01, 0.02);
        return b.r;
    }
    if (u < 0.75) {
        Builder b("tcp", g.chance(0.7) ? "ftp_data" : "ftp", "SF", "normal");
        b.set("duration", g.chance(0.7) ? 0 : g.count(1, 400))
            .set("src_bytes", g.bytes(2500, 1.5, 2000000))
            .set("dst_bytes", g.chance(0.6) ? 0 : g.bytes(800, 1.0, 100000))
            .set("logged_in", g.chance(0.8) ? 1 : 0)
            .set("count", g.count(1, 8))
            .set("srv_count", g.count(1, 10))
            .set("same_srv_rate", g.rate(0.95, 0.05));
        host_window(b, g, g.count(1, 120), g.count(1, 80), 0.6, 0.05, 0.4, 0.02);
        return b.r;
    }
    if (u < 0.88) {
        Builder b("udp", g.chance(0.8) ? "domain_u" : "ntp_u", "SF", "normal");
        double cnt = g.count(1, 120);
        b.set("src_bytes", g.bytes(44, 0.2, 300))
            .set("dst_bytes", g.bytes(90, 0.4, 600))
            .set("count", cnt)
            .set("srv_count", cnt)
            .set("same_srv_rate", 1.0);
        host_window(b, g, 255, g.count(150, 255), 0.95, 0.01, 0.0, 0.0);
        return b.r;
    }
    if (u < 0.93) {
        Builder b("udp", "private", "SF", "normal");
        b.set("src_bytes", g.bytes(105, 0.3, 600))
            .set("dst_bytes", g.bytes(146, 0.2, 600))
            .set("count", g.count(1, 300))
            .set("srv_count", g.count(1, 300))
            .set("same_srv_rate", 1.0);
        host_window(b, g, 255, g.count(1, 255), 0.5, 0.02, 0.0, 0.0);
        return b.r;
    }
    if (u < 0.96) {
        Builder b("icmp", g.chance(0.5) ? "ecr_i" : "eco_i", "SF", "normal");
        b.set("src_bytes", g.bytes(30, 0.4, 1480))
            .set("count", g.count(1, 6))
            .set("srv_count", g.count(1, 10))
            .set("same_srv_rate", 1.0)
            .set("srv_diff_host_rate", g.rate(0.3, 0.3));
        host_window(b, g, g.count(1, 255), g.count(1, 100), 0.5, 0.05, 0.5, 0.1);
        return b.r;
    }
    // interactive sessions
    Builder b("tcp", g.pick({"telnet", "ssh", "login", "pop_3", "imap4", "IRC", "X11", "finger"}),
              "SF", "normal");
    b.set("duration", g.count(0, 3000))
        .set("src_bytes", g.bytes(600, 1.0, 50000))
        .set("dst_bytes", g.bytes(3000, 1.0, 500000))
        .set("logged_in", 1)
        .set("hot", g.chance(0.3) ? g.count(1, 6) : 0)
        .set("num_compromised", g.chance(0.05) ? 1 : 0)
        .set("su_attempted", g.chance(0.01) ? 1 : 0)
        .set("num_file_creations", g.chance(0.1) ? g.count(1, 3) : 0)
        .set("num_access_files", g.chance(0.05) ? 1 : 0)
        .set("is_host_login", g.chance(0.002) ? 1 : 0)
        .set("count", g.count(1, 4))
        .set("srv_count", g.count(1, 4))
        .set("same_srv_rate", 1.0);
    host_window(b, g, g.count(1, 150), g.count(1, 60), 0.6, 0.05, 0.1, 0.05);
    return b.r;
}

// Real benign windows are rarely spotless: a share carries low error and
// service-mix rates, busier windows, or the odd failed login, urgent packet
// or root session that attack signatures also use.
FlowRecord benign(Gen& g) {
    FlowRecord r = benign_profile(g);
    auto at = [&](const char* name) -> double& { return r.numeric[numeric_feature_index(name)]; };
    if (g.chance(0.4)) {
        for (const char* name : {"serror_rate", "rerror_rate", "diff_srv_rate", "dst_host_serror_rate",
                                 "dst_host_rerror_rate", "dst_host_srv_serror_rate", "dst_host_srv_rerror_rate",
                                 "srv_serror_rate", "srv_rerror_rate", "dst_host_diff_srv_rate"}) {
            if (g.chance(0.5)) at(name) = std::max(at(name), g.rate(g.uniform(0.0, 0.15), 0.04));
        }
    }
    if (g.chance(0.15)) {
        const double busy = g.count(20, 250);
        at("count") = std::max(at("count"), busy);
        at("srv_count") = std::max(at("srv_count"), busy * g.uniform(0.5, 1.0));
    }
    if (g.chance(0.03)) at("num_failed_logins") = 1;
    if (g.chance(0.02)) at("wrong_fragment") = 1;
    if (g.chance(0.02)) at("urgent") = 1;
    if (g.chance(0.02)) {
        at("root_shell") = 1;
        at("num_root") = g.count(1, 5);
        at("num_shells") = g.chance(0.5) ? 1 : 0;
    }
    if (g.chance(0.05)) at("hot") = std::max(at("hot"), g.count(1, 10));
    if (g.chance(0.03)) at("num_compromised") = g.count(1, 3);
    return r;
}

FlowRecord neptune(Gen& g) {
    Builder b("tcp", g.chance(0.55) ? "private" : g.pick(kTcpScanServices), g.chance(0.85) ? "S0" : "REJ",
              "neptune");
    bool syn = b.r.flag == "S0";
    double cnt = g.count(80, 511);
    b.set("count", cnt)
        .set("srv_count", g.count(1, 30))
        .set("serror_rate", syn ? g.rate(0.99, 0.02) : 0.0)
        .set("srv_serror_rate", syn ? g.rate(0.99, 0.02) : 0.0)
        .set("rerror_rate", syn ? 0.0 : g.rate(0.99, 0.02))
        .set("srv_rerror_rate", syn ? 0.0 : g.rate(0.99, 0.02))
        .set("same_srv_rate", g.rate(0.05, 0.04))
        .set("diff_srv_rate", g.rate(0.07, 0.02));
    host_window(b, g, 255, g.count(1, 30), 0.05, 0.07, 0.0, 0.0);
    b.set("dst_host_serror_rate", syn ? g.rate(0.99, 0.02) : 0.0)
        .set("dst_host_srv_serror_rate", syn ? g.rate(0.99, 0.02) : 0.0)
        .set("dst_host_rerror_rate", syn ? 0.0 : g.rate(0.99, 0.02))
        .set("dst_host_srv_rerror_rate", syn ? 0.0 : g.rate(0.99, 0.02));
    return b.r;
}

FlowRecord smurf(Gen& g) {
    Builder b("icmp", "ecr_i", "SF", "smurf");
    double cnt = g.count(300, 511);
    b.set("src_bytes", g.chance(0.6) ? 1032 : g.chance(0.5) ? 520 : g.count(500, 1480))
        .set("count", cnt)
        .set("srv_count", cnt)
        .set("same_srv_rate", 1.0);
    host_window(b, g, 255, 255, 1.0, 0.0, g.uniform(0.0, 1.0), 0.0);
    return b.r;
}

FlowRecord back_attack(Gen& g) {
    Builder b("tcp", "http", g.chance(0.8) ? "SF" : "RSTR", "back");
    b.set("duration", g.count(0, 5))
        .set("src_bytes", g.bytes(54540, 0.01, 60000))
        .set("dst_bytes", g.bytes(8314, 0.2, 20000))
        .set("hot", 2)
        .set("num_compromised", 1)
        .set("logged_in", 1)
        .set("count", g.count(1, 20))
        .set("srv_count", g.count(1, 20))
        .set("same_srv_rate", 1.0);
    host_window(b, g, g.count(50, 255), g.count(50, 255), 1.0, 0.0, 0.02, 0.01);
    return b.r;
}

FlowRecord teardrop(Gen& g) {
    Builder b("udp", "private", "SF", g.chance(0.7) ? "teardrop" : "pod");
    if (b.r.label == "pod") {
        b.r.protocol_type = "icmp";
        b.r.service = "ecr_i";
    }
    b.set("src_bytes", b.r.label == "pod" ? 1480 : 28)
        .set("wrong_fragment", b.r.label == "pod" ? 1 : 3)
        .set("count", g.count(1, 120))
        .set("srv_count", g.count(1, 120))
        .set("same_srv_rate", 1.0);
    host_window(b, g, 255, g.count(1, 100), 0.4, 0.02, 0.0, 0.0);
    return b.r;
}

FlowRecord probe(Gen& g) {
    double u = g.uniform(0.0, 1.0);
    if (u < 0.35) {  // satan: many services, rejected
        Builder b(g.chance(0.9) ? "tcp" : "udp", g.pick(kTcpScanServices),
                  g.chance(0.7) ? "REJ" : g.chance(0.5) ? "S0" : "RSTO", "satan");
        b.set("count", g.count(1, 200))
            .set("srv_count", g.count(1, 5))
            .set("rerror_rate", g.rate(0.8, 0.2))
            .set("srv_rerror_rate", g.rate(0.8, 0.2))
            .set("serror_rate", g.rate(0.1, 0.1))
            .set("same_srv_rate", g.rate(0.05, 0.05))
            .set("diff_srv_rate", g.rate(0.6, 0.2));
        host_window(b, g, 255, g.count(1, 20), 0.05, 0.6, 0.5, 0.0);
        b.set("dst_host_rerror_rate", g.rate(0.8, 0.2)).set("dst_host_srv_rerror_rate", g.rate(0.8, 0.2));
        return b.r;
    }
    if (u < 0.65) {  // ipsweep
        Builder b("icmp", g.chance(0.9) ? "eco_i" : "ecr_i", "SF", "ipsweep");
        b.set("src_bytes", g.count(8, 18))
            .set("count", g.count(1, 3))
            .set("srv_count", g.count(1, 40))
            .set("same_srv_rate", 1.0)
            .set("srv_diff_host_rate", g.rate(0.9, 0.1));
        host_window(b, g, g.count(1, 60), g.count(20, 120), 1.0, 0.0, 1.0, g.rate(0.5, 0.2));
        return b.r;
    }
    if (u < 0.90) {  // portsweep
        Builder b("tcp", "private", g.chance(0.6) ? "REJ" : "RSTOS0", "portsweep");
        b.set("duration", g.chance(0.3) ? g.count(1000, 40000) : 0)
            .set("count", g.count(1, 5))
            .set("srv_count", g.count(1, 5))
            .set("rerror_rate", g.rate(0.6, 0.3))
            .set("srv_rerror_rate", g.rate(0.6, 0.3))
            .set("same_srv_rate", g.rate(0.5, 0.3))
            .set("diff_srv_rate", g.rate(0.4, 0.3))
            .set("srv_diff_host_rate", g.rate(0.5, 0.3));
        host_window(b, g, g.count(1, 100), g.count(1, 10), 0.1, 0.5, 1.0, 0.0);
        b.set("dst_host_rerror_rate", g.rate(0.7, 0.2)).set("dst_host_srv_rerror_rate", g.rate(0.7, 0.2));
        return b.r;
    }
    Builder b(g.chance(0.5) ? "tcp" : "icmp", "", g.chance(0.5) ? "SH" : "SF", "nmap");
    b.r.service = b.r.protocol_type == "icmp" ? "eco_i" : g.pick(kTcpScanServices);
    b.set("count", g.count(1, 10))
        .set("srv_count", g.count(1, 10))
        .set("serror_rate", b.r.flag == "SH" ? g.rate(0.8, 0.2) : 0.0)
        .set("same_srv_rate", g.rate(0.3, 0.2))
        .set("diff_srv_rate", g.rate(0.5, 0.2));
    host_window(b, g, g.count(1, 255), g.count(1, 30), 0.2, 0.4, 0.8, 0.0);
    return b.r;
}

FlowRecord remote(Gen& g) {
    double u = g.uniform(0.0, 1.0);
    if (u < 0.6) {
        Builder b("tcp", "ftp_data", "SF", "warezclient");
        b.set("duration", g.count(0, 15000))
            .set("src_bytes", g.bytes(30000, 1.2, 5000000))
            .set("hot", g.count(0, 28))
            .set("is_guest_login", 1)
            .set("logged_in", 1)
            .set("count", g.count(1, 3))
            .set("srv_count", g.count(1, 3))
            .set("same_srv_rate", 1.0);
        host_window(b, g, g.count(1, 30), g.count(1, 30), 1.0, 0.0, 1.0, 0.0);
        return b.r;
    }
    if (u < 0.85) {
        Builder b("tcp", g.chance(0.7) ? "telnet" : "ftp", g.chance(0.7) ? "RSTO" : "SF", "guess_passwd");
        b.set("duration", g.count(1, 10))
            .set("src_bytes", g.count(100, 130))
            .set("dst_bytes", g.count(170, 200))
            .set("num_failed_logins", 1)
            .set("hot", g.count(0, 1))
            .set("count", g.count(1, 2))
            .set("srv_count", g.count(1, 2))
            .set("rerror_rate", g.rate(0.3, 0.3))
            .set("same_srv_rate", 1.0);
        host_window(b, g, g.count(50, 255), g.count(1, 20), 0.1, 0.02, 0.0, 0.0);
        b.set("dst_host_rerror_rate", g.rate(0.6, 0.3)).set("dst_host_srv_rerror_rate", g.rate(0.8, 0.2));
        return b.r;
    }
    Builder b("tcp", "telnet", "SF", g.chance(0.6) ? "buffer_overflow" : "rootkit");
    b.set("duration", g.count(20, 3000))
        .set("src_bytes", g.bytes(1500, 0.8, 50000))
        .set("dst_bytes", g.bytes(5000, 1.0, 200000))
        .set("hot", g.count(1, 5))
        .set("logged_in", 1)
        .set("root_shell", 1)
        .set("su_attempted", g.chance(0.1) ? 2 : 0)
        .set("num_root", g.count(0, 5))
        .set("num_file_creations", g.count(1, 10))
        .set("num_shells", g.count(0, 2))
        .set("count", 1)
        .set("srv_count", 1)
        .set("same_srv_rate", 1.0);
    host_window(b, g, g.count(1, 40), g.count(1, 10), 0.4, 0.1, 0.1, 0.1);
    return b.r;
}

FlowRecord malicious(Gen& g) {
    double u = g.uniform(0.0, 1.0);
    if (u < 0.66) return neptune(g);
    if (u < 0.71) return smurf(g);
    if (u < 0.74) return back_attack(g);
    if (u < 0.77) return teardrop(g);
    if (u < 0.95) return probe(g);
    return remote(g);
}

// Benign session skeleton carrying a weak attack signature.
FlowRecord camouflaged(Gen& g) {
    FlowRecord r = benign(g);
    r.label = g.pick({"neptune", "satan", "portsweep", "warezclient", "guess_passwd", "back", "ipsweep"});
    auto bump = [&](const char* name, double lo, double hi) {
        auto& v = r.numeric[numeric_feature_index(name)];
        v = std::clamp(v + g.uniform(lo, hi), 0.0, 1.0);
        v = std::round(v * 100.0) / 100.0;
    };
    switch (uniform_index(g.rng(), 4)) {
        case 0: bump("serror_rate", 0.15, 0.5); bump("dst_host_serror_rate", 0.15, 0.5); break;
        case 1: bump("rerror_rate", 0.15, 0.5); bump("dst_host_rerror_rate", 0.15, 0.5); break;
        case 2: bump("diff_srv_rate", 0.15, 0.45); bump("dst_host_diff_srv_rate", 0.15, 0.45); break;
        default: bump("dst_host_same_src_port_rate", 0.2, 0.6); bump("srv_diff_host_rate", 0.2, 0.5); break;
    }
    r.numeric[numeric_feature_index("count")] += g.count(0, 40);
    return r;
}

// Benign traffic with transient errors that resembles scan or flood windows.
FlowRecord noisy_benign(Gen& g) {
    FlowRecord r = benign(g);
    auto set_rate = [&](const char* name, double c) {
        r.numeric[numeric_feature_index(name)] = g.rate(c, 0.2);
    };
    if (g.chance(0.5)) {
        r.flag = g.chance(0.5) ? "REJ" : "S0";
        set_rate("rerror_rate", 0.4);
        set_rate("serror_rate", 0.3);
        set_rate("dst_host_rerror_rate", 0.3);
    } else {
        set_rate("diff_srv_rate", 0.3);
        set_rate("dst_host_diff_srv_rate", 0.3);
        set_rate("same_srv_rate", 0.4);
        r.numeric[numeric_feature_index("count")] = g.count(50, 300);
    }
    return r;
}

}  // namespace

std::vector<FlowRecord> synthesize_nslkdd(const SynthConfig& config) {
    Gen g(config.seed);
    std::vector<FlowRecord> out;
    out.reserve(config.records);
    std::unordered_set<std::string> seen;
    std::size_t attempts = 0;
    while (out.size() < config.records) {
        if (++attempts > config.records * 50) throw std::runtime_error("synthesize_nslkdd: too many duplicates");
        FlowRecord r;
        if (g.chance(config.malicious_share)) {
            r = g.chance(config.camouflage_share) ? camouflaged(g) : malicious(g);
        } else {
            r = g.chance(config.noisy_benign_share) ? noisy_benign(g) : benign(g);
        }
        r.difficulty = static_cast<int>(g.count(11, 21));
        std::string line = format_record(r);
        if (!seen.insert(line.substr(0, line.rfind(','))).second) continue;
        out.push_back(std::move(r));
    }
    return out;
}

void write_nslkdd(const std::vector<FlowRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& r : records) out << format_record(r) << '\n';
}

}  // namespace dllids
