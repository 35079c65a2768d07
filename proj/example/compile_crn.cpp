// Compiles a CRN into a population protocol and compares one endpoint
// statistic of the two simulations.

#include <cstdio>

#include <popsim/popsim.hpp>

int main() {
    const popsim::Count n = 200;
    const auto crn = popsim::parse_crn("2A <-> B + C @ 3, 2\nC -> D", static_cast<double>(n));
    const auto protocol = popsim::compile(crn, n);
    std::printf("%s\n", popsim::emit_protocol(protocol).c_str());

    const auto init = popsim::make_configuration({{"A", n}}, crn);
    const double t = 2.0;
    const std::uint64_t trials = 20000;
    const auto d = crn.species().at("D");
    double via_protocol = 0.0;
    for (const auto &[value, count] : popsim::sample_endpoint_state(init, protocol, t, trials, 1, d))
        via_protocol += static_cast<double>(value * static_cast<popsim::Count>(count));
    double via_crn = 0.0;
    for (const auto &[config, count] : popsim::sample_crn_endpoint(init, crn, t, trials, 2))
        via_crn += static_cast<double>(config[d] * static_cast<popsim::Count>(count));
    std::printf("mean #D at t=%g: protocol %.3f, CRN %.3f\n", t, via_protocol / trials, via_crn / trials);
}
