#include "binembed/bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "binembed/architectures.hpp"
#include "binembed/parallel.hpp"
#include "binembed/rng.hpp"

namespace binembed {

namespace {

std::string host_description() {
    std::string model = "unknown-cpu";
    std::ifstream cpuinfo("/proc/cpuinfo");
    std::string line;
    while (std::getline(cpuinfo, line)) {
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                model = line.substr(colon + 1);
                const auto first = model.find_first_not_of(' ');
                if (first != std::string::npos) model = model.substr(first);
            }
            break;
        }
    }
    std::ostringstream os;
    os << model << " (" << std::thread::hardware_concurrency() << " hw threads)";
    return os.str();
}

}  // namespace

LatencyResult latency_bench(LayerGraph& g, int runs, int warmup, uint64_t seed) {
    if (runs < 1) throw std::invalid_argument("latency_bench: runs must be >= 1");
    Rng rng(seed);
    FloatTensor input({g.input_shape[0], g.input_shape[1], g.input_shape[2]});
    for (auto& v : input.data) v = static_cast<float>(rng.normal(0.0, 1.0));

    LatencyResult r;
    r.runs = runs;
    r.warmup_runs = warmup;
    r.host = host_description();
    r.samples_ms.reserve(runs);

    SingleThreadGuard single;
    r.threads_during_timed = get_num_threads();

    for (int i = 0; i < warmup; ++i) (void)graph_forward(g, input, BnMode::infer);

    using clock = std::chrono::steady_clock;
    for (int i = 0; i < runs; ++i) {
        const auto t0 = clock::now();
        (void)graph_forward(g, input, BnMode::infer);
        const auto t1 = clock::now();
        r.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }

    double sum = 0.0;
    r.min_ms = r.max_ms = r.samples_ms[0];
    for (double s : r.samples_ms) {
        sum += s;
        r.min_ms = std::min(r.min_ms, s);
        r.max_ms = std::max(r.max_ms, s);
    }
    r.mean_ms = sum / runs;
    double sq = 0.0;
    for (double s : r.samples_ms) sq += (s - r.mean_ms) * (s - r.mean_ms);
    r.std_ms = std::sqrt(sq / runs);
    return r;
}

std::vector<std::string> eligible_taps(const LayerGraph& g) {
    std::vector<std::string> taps;
    for (const auto& l : g.layers) {
        if (l.kind == LayerKind::batch_norm || l.name.find("transition-pw") != std::string::npos)
            taps.push_back(l.name);
    }
    if (taps.empty() || g.layers.back().name != taps.back()) taps.push_back(g.layers.back().name);
    return taps;
}

SweepResult layer_sweep(const LayerGraph& g, const Manifest& m, const ProbeConfig& cfg,
                        int bench_runs, int bench_warmup) {
    SweepResult result;
    for (const auto& tap : eligible_taps(g)) {
        try {
            LayerGraph tiny = truncate_at_tap(g, tap);
            LinearProbe probe = train_probe(tiny, m, cfg);
            const double acc = accuracy(tiny, probe, m);
            const LatencyResult lat = latency_bench(tiny, bench_runs, bench_warmup);
            result.rows.push_back({tap, tiny.embedding_dim(), acc, lat.mean_ms,
                                   parameter_count(tiny).total});
        } catch (const std::exception& e) {
            result.errors.push_back(tap + ": " + e.what());
        }
    }
    return result;
}

void write_sweep_csv(const std::string& path, const SweepResult& r) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write sweep csv: " + path);
    out << "layer_name,embedding_dim,accuracy,latency_ms,param_count\n";
    for (const auto& row : r.rows)
        out << row.layer_name << "," << row.embedding_dim << "," << row.accuracy << ","
            << row.latency_ms << "," << row.param_count << "\n";
}

void write_sweep_svg(const std::string& path, const SweepResult& r) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write sweep svg: " + path);
    const int W = 640, H = 480, margin = 60;
    double lat_max = 1e-9, acc_min = 1.0, acc_max = 0.0;
    for (const auto& row : r.rows) {
        lat_max = std::max(lat_max, row.latency_ms);
        acc_min = std::min(acc_min, row.accuracy);
        acc_max = std::max(acc_max, row.accuracy);
    }
    if (acc_max <= acc_min) acc_max = acc_min + 1e-6;

    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<line x1='" << margin << "' y1='" << H - margin << "' x2='" << W - 20 << "' y2='"
        << H - margin << "' stroke='black'/>\n";
    out << "<line x1='" << margin << "' y1='" << H - margin << "' x2='" << margin
        << "' y2='20' stroke='black'/>\n";
    out << "<text x='" << W / 2 << "' y='" << H - 15 << "' text-anchor='middle'>latency (ms)</text>\n";
    out << "<text x='15' y='" << H / 2 << "' transform='rotate(-90 15 " << H / 2
        << ")' text-anchor='middle'>accuracy</text>\n";
    for (const auto& row : r.rows) {
        const double x = margin + (row.latency_ms / lat_max) * (W - margin - 30);
        const double y =
            H - margin - ((row.accuracy - acc_min) / (acc_max - acc_min)) * (H - margin - 30);
        out << "<circle cx='" << x << "' cy='" << y << "' r='4' fill='steelblue'/>\n";
        out << "<text x='" << x + 6 << "' y='" << y - 4 << "' font-size='9'>" << row.layer_name
            << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace binembed
