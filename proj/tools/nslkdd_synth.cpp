// nslkdd-synth: writes a synthetic flow file in the NSL-KDD text format.

#include "dllids/synth.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Generate NSL-KDD-shaped synthetic flows"};
    dllids::SynthConfig c;
    std::string out = "KDDTrain+.txt";
    app.add_option("-o,--out", out, "output file");
    app.add_option("-n,--records", c.records, "number of flows")->check(CLI::PositiveNumber);
    app.add_option("-s,--seed", c.seed, "generator seed");
    app.add_option("--malicious-share", c.malicious_share)->check(CLI::Range(0.0, 1.0));
    app.add_option("--camouflage-share", c.camouflage_share)->check(CLI::Range(0.0, 1.0));
    app.add_option("--noisy-benign-share", c.noisy_benign_share)->check(CLI::Range(0.0, 1.0));
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }
    try {
        dllids::write_nslkdd(dllids::synthesize_nslkdd(c), out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    std::cout << out << '\n';
    return 0;
}
