// popsim command-line tool: run, compile, sample, bench.

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>

#include <popsim/popsim.hpp>

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

/// Bad flags or inputs; reported with exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto end = s.find(sep, start);
        parts.push_back(trim(s.substr(start, end - start)));
        if (end == std::string_view::npos)
            break;
        start = end + 1;
    }
    return parts;
}

template <class T>
T parse_number(const std::string &text, const std::string &what) {
    T value{};
    const auto *end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, value);
    if (res.ec != std::errc() || res.ptr != end)
        throw UsageError("invalid " + what + " '" + text + "'");
    return value;
}

/// "A=51,B=49"
template <class T>
std::vector<std::pair<std::string, T>> parse_assignments(const std::string &text, const std::string &what) {
    std::vector<std::pair<std::string, T>> out;
    for (const auto &item : split(text, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw UsageError("expected NAME=VALUE in " + what + ", got '" + item + "'");
        const auto name = trim(std::string_view(item).substr(0, eq));
        if (name.empty())
            throw UsageError("missing state name in " + what);
        out.emplace_back(name, parse_number<T>(trim(std::string_view(item).substr(eq + 1)), what + " value"));
    }
    return out;
}

popsim::Count parse_population(const std::string &text) {
    const auto x = parse_number<double>(text, "population size");
    if (!(x >= 0.0) || x != std::floor(x) || x > 9.0e18)
        throw UsageError("population size must be a whole number, got '" + text + "'");
    return static_cast<popsim::Count>(x);
}

std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw UsageError("cannot read '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t> &flag) {
    if (flag)
        return *flag;
    if (const char *env = std::getenv("POPSIM_SEED"))
        return parse_number<std::uint64_t>(trim(env), "POPSIM_SEED");
    return popsim::entropy_seed();
}

/// Output stream for --out, stdout when empty.
class Output {
public:
    explicit Output(const std::string &path) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
            if (!*file_)
                throw UsageError("cannot write '" + path + "'");
        }
    }
    std::ostream &stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

struct ModelFlags {
    std::string protocol_path;
    std::string crn_path;
    std::optional<std::string> n;
    std::optional<double> volume;
    std::string init;
    std::string time_model = "continuous";
    std::string method = "auto";
    double switch_factor = 2.0;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_model_flags(CLI::App &cmd, ModelFlags &f) {
    auto *proto = cmd.add_option("--protocol", f.protocol_path, "Protocol file (.pp)");
    auto *crn = cmd.add_option("--crn", f.crn_path, "CRN file (.crn)");
    proto->excludes(crn);
    crn->excludes(proto);
    cmd.add_option("--n", f.n, "Population size (required with --crn)");
    cmd.add_option("--volume", f.volume, "CRN volume (default n)");
    cmd.add_option("--init", f.init, "Initial counts, e.g. \"A=51,B=49\"")->required();
    cmd.add_option("--time-model", f.time_model, "discrete or continuous")
        ->check(CLI::IsMember({"discrete", "continuous"}));
    cmd.add_option("--method", f.method, "auto, batch, gillespie or sequential")
        ->check(CLI::IsMember({"auto", "batch", "gillespie", "sequential"}));
    cmd.add_option("--switch-factor", f.switch_factor, "Gillespie switch factor alpha")
        ->check(CLI::PositiveNumber);
    cmd.add_option("--seed", f.seed, "Random seed (default $POPSIM_SEED, else entropy)");
    cmd.add_option("--out", f.out, "Output file (default stdout)");
}

struct Model {
    popsim::Protocol protocol;
    popsim::Configuration config;
    popsim::TimeModel time_model = popsim::TimeModel::continuous;
    popsim::Method method = popsim::Method::automatic;
};

Model load_model(const ModelFlags &f) {
    if (f.protocol_path.empty() == f.crn_path.empty())
        throw UsageError("exactly one of --protocol and --crn is required");
    Model m;
    m.time_model = *popsim::parse_time_model(f.time_model);
    m.method = *popsim::parse_method(f.method);
    const auto init = parse_assignments<popsim::Count>(f.init, "--init");
    if (!f.crn_path.empty()) {
        if (!f.n)
            throw UsageError("--n is required with --crn");
        if (m.time_model == popsim::TimeModel::discrete)
            throw UsageError("discrete time unsupported for CRN inputs");
        const auto n = parse_population(*f.n);
        const double volume = f.volume.value_or(static_cast<double>(n));
        const auto crn = popsim::parse_crn(read_file(f.crn_path), volume);
        m.config = popsim::make_configuration(init, crn);
        if (m.config.population() != n)
            throw UsageError("--init sums to " + std::to_string(m.config.population()) + " but --n is " +
                             std::to_string(n));
        m.protocol = popsim::compile(crn, n);
    } else {
        if (f.volume)
            throw UsageError("--volume only applies to --crn inputs");
        m.protocol = popsim::parse_protocol(read_file(f.protocol_path));
        m.config = popsim::make_configuration(init, m.protocol);
        if (f.n && parse_population(*f.n) != m.config.population())
            throw UsageError("--init sums to " + std::to_string(m.config.population()) + " but --n is " + *f.n);
        if (m.time_model == popsim::TimeModel::discrete && m.protocol.origin())
            throw UsageError("discrete time unsupported for protocols compiled from a CRN");
    }
    return m;
}

int cmd_run(const ModelFlags &f, double time, std::optional<double> interval, const std::string &format) {
    Model m;
    popsim::RunSpec spec;
    std::uint64_t seed = 0;
    try {
        m = load_model(f);
        spec.horizon = time;
        spec.snapshot_interval = interval.value_or(time > 0.0 ? time : 1.0);
        spec.method = m.method;
        spec.switch_factor = f.switch_factor;
        spec.time_model = m.time_model;
        popsim::snapshot_times(spec.horizon, spec.snapshot_interval);
        seed = resolve_seed(f.seed);
    } catch (const popsim::Error &e) {
        throw UsageError(e.what());
    }
    popsim::RngStream rng(seed);
    const auto traj = popsim::run(m.config, m.protocol, spec, rng);
    Output out(f.out);
    if (format == "json")
        out.stream() << popsim::to_json(traj).dump(2) << '\n';
    else
        popsim::write_csv(out.stream(), traj);
    return 0;
}

int cmd_sample(const ModelFlags &f, std::uint64_t trials, double at, const std::optional<std::string> &state_name,
               unsigned threads, const std::string &format) {
    Model m;
    std::uint64_t seed = 0;
    popsim::StateId state = 0;
    try {
        if (trials == 0)
            throw UsageError("--trials must be at least 1");
        if (at < 0.0)
            throw UsageError("--at must be non-negative");
        m = load_model(f);
        const auto &names = m.protocol.states().names();
        state = state_name ? m.protocol.states().at(*state_name) : popsim::name_order(names).front();
        seed = resolve_seed(f.seed);
    } catch (const popsim::Error &e) {
        throw UsageError(e.what());
    }
    popsim::SampleOptions options;
    options.method = m.method;
    options.time_model = m.time_model;
    options.switch_factor = f.switch_factor;
    options.threads = threads;
    const auto hist = popsim::sample_endpoint(m.config, m.protocol, at, trials, seed, options);
    Output out(f.out);
    if (format == "json") {
        out.stream() << popsim::histogram_to_json(m.protocol.states().names(), hist, at, seed).dump(2) << '\n';
    } else {
        std::map<popsim::Count, std::uint64_t> marginal;
        for (const auto &[config, count] : hist)
            marginal[config[state]] += count;
        popsim::write_histogram_csv(out.stream(), marginal);
    }
    return 0;
}

int cmd_compile(const std::string &crn_path, const std::string &n_text, std::optional<double> volume,
                const std::string &out_path) {
    std::string text;
    try {
        const auto n = parse_population(n_text);
        const auto crn = popsim::parse_crn(read_file(crn_path), volume.value_or(static_cast<double>(n)));
        if (crn.reactions().empty())
            throw UsageError("'" + crn_path + "' contains no reactions");
        text = popsim::emit_protocol(popsim::compile(crn, n));
    } catch (const popsim::Error &e) {
        throw UsageError(e.what());
    }
    Output out(out_path);
    out.stream() << text;
    return 0;
}

struct BenchFlags {
    std::string protocol_path;
    std::string n_list;
    double time = 1.0;
    unsigned reps = 1;
    std::string methods = "batch,gillespie";
    std::string init;
    std::string time_model = "continuous";
    std::optional<std::uint64_t> seed;
    std::string out;
};

int cmd_bench(const BenchFlags &f) {
    popsim::Protocol protocol;
    popsim::InitialWeights weights;
    popsim::BenchSpec spec;
    try {
        protocol = popsim::parse_protocol(read_file(f.protocol_path));
        if (!f.init.empty())
            weights = parse_assignments<double>(f.init, "--init");
        for (const auto &item : split(f.n_list, ','))
            spec.n_list.push_back(parse_population(item));
        spec.methods.clear();
        for (const auto &item : split(f.methods, ',')) {
            const auto method = popsim::parse_method(item);
            if (!method)
                throw UsageError("unknown method '" + item + "'");
            spec.methods.push_back(*method);
        }
        spec.time = f.time;
        spec.reps = f.reps;
        spec.time_model = *popsim::parse_time_model(f.time_model);
        if (spec.reps == 0)
            throw UsageError("--reps must be at least 1");
        if (spec.time_model == popsim::TimeModel::discrete && protocol.origin())
            throw UsageError("discrete time unsupported for protocols compiled from a CRN");
        for (auto n : spec.n_list)
            popsim::scale_configuration(weights, n, protocol.states());
        spec.seed = resolve_seed(f.seed);
    } catch (const popsim::Error &e) {
        throw UsageError(e.what());
    }
    const auto rows = popsim::run_benchmark(protocol, weights, spec);
    Output out(f.out);
    auto &os = out.stream();
    os << "n,method,wall_seconds,interactions\n";
    for (const auto &row : rows)
        os << row.n << ',' << popsim::to_string(row.method) << ',' << popsim::format_time(row.wall_seconds) << ','
           << row.interactions << '\n';
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Exact stochastic simulation of population protocols and chemical reaction networks"};
    app.require_subcommand(1);

    ModelFlags run_flags;
    double run_time = 0.0;
    std::optional<double> run_interval;
    std::string run_format = "csv";
    auto *run = app.add_subcommand("run", "Simulate and print a trajectory");
    add_model_flags(*run, run_flags);
    run->add_option("--time", run_time, "Simulated time horizon")->required()->check(CLI::NonNegativeNumber);
    run->add_option("--interval", run_interval, "Snapshot interval (default: --time)")
        ->check(CLI::PositiveNumber);
    run->add_option("--format", run_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

    std::string compile_crn;
    std::string compile_n;
    std::optional<double> compile_volume;
    std::string compile_out;
    auto *compile = app.add_subcommand("compile", "Compile a CRN into a population protocol");
    compile->add_option("--crn", compile_crn, "CRN file")->required();
    compile->add_option("--n", compile_n, "Population size")->required();
    compile->add_option("--volume", compile_volume, "Volume (default n)")->check(CLI::PositiveNumber);
    compile->add_option("--out", compile_out, "Output file (default stdout)");

    ModelFlags sample_flags;
    std::uint64_t sample_trials = 0;
    double sample_at = 0.0;
    std::optional<std::string> sample_state;
    unsigned sample_threads = 1;
    std::string sample_format = "csv";
    auto *sample = app.add_subcommand("sample", "Histogram of one state's count at a fixed time");
    add_model_flags(*sample, sample_flags);
    sample->add_option("--trials", sample_trials, "Independent runs")->required();
    sample->add_option("--at", sample_at, "Sampling time")->required();
    sample->add_option("--state", sample_state, "State to histogram (default: first by name)");
    sample->add_option("--threads", sample_threads, "Worker threads")->check(CLI::Range(1u, 256u));
    sample->add_option("--format", sample_format, "csv (one state) or json (full configurations)")
        ->check(CLI::IsMember({"csv", "json"}));

    BenchFlags bench_flags;
    auto *bench = app.add_subcommand("bench", "Wall-clock time against population size");
    bench->add_option("--protocol", bench_flags.protocol_path, "Protocol file")->required();
    bench->add_option("--n-list", bench_flags.n_list, "Population sizes, e.g. \"1e4,1e5,1e6\"")->required();
    bench->add_option("--time", bench_flags.time, "Simulated time per run")->required()->check(CLI::NonNegativeNumber);
    bench->add_option("--reps", bench_flags.reps, "Repetitions per (n, method)")->required();
    bench->add_option("--methods", bench_flags.methods, "Comma-separated methods (default batch,gillespie)");
    bench->add_option("--init", bench_flags.init, "Initial proportions, e.g. \"A=1,B=1\" (default uniform)");
    bench->add_option("--time-model", bench_flags.time_model, "discrete or continuous")
        ->check(CLI::IsMember({"discrete", "continuous"}));
    bench->add_option("--seed", bench_flags.seed, "Random seed");
    bench->add_option("--out", bench_flags.out, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*run)
            return cmd_run(run_flags, run_time, run_interval, run_format);
        if (*compile)
            return cmd_compile(compile_crn, compile_n, compile_volume, compile_out);
        if (*sample)
            return cmd_sample(sample_flags, sample_trials, sample_at, sample_state, sample_threads, sample_format);
        if (*bench)
            return cmd_bench(bench_flags);
    } catch (const UsageError &e) {
        std::cerr << "popsim: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception &e) {
        std::cerr << "popsim: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
