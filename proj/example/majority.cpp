// Approximate majority at n = 10^9: runs to consensus with the hybrid
// scheduler and reports how the work was split between engines.

#include <cstdio>

#include <popsim/popsim.hpp>

int main() {
    const auto protocol = popsim::parse_protocol("A B -> U U\nA U -> A A\nB U -> B B");
    const auto init = popsim::make_configuration({{"A", 500'010'000}, {"B", 499'990'000}}, protocol);

    popsim::RngStream rng(7);
    popsim::Simulation sim(protocol, init, rng);
    for (double t = 5.0; !sim.silent() && t <= 200.0; t += 5.0) {
        sim.advance_to(t);
        const auto &c = sim.configuration();
        std::printf("t=%6.1f  A=%lld  B=%lld  U=%lld\n", t, static_cast<long long>(c[0]),
                    static_cast<long long>(c[1]), static_cast<long long>(c[2]));
    }
    const auto &stats = sim.stats();
    std::printf("silent: %s", sim.silent() ? "yes" : "no");
    if (sim.silent_time())
        std::printf(" at t=%.4f", *sim.silent_time());
    std::printf("\nbatches=%llu gillespie_events=%llu interactions=%lld\n",
                static_cast<unsigned long long>(stats.batches),
                static_cast<unsigned long long>(stats.gillespie_events), static_cast<long long>(stats.interactions));
}
