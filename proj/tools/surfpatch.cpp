#include "surfpatch/evaluation.hpp"
#include "surfpatch/service.hpp"
#include "surfpatch/store.hpp"
#include "surfpatch/stream_surface.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <csignal>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <pthread.h>
#include <thread>

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace surfpatch;

struct Options {
    bool json = false;
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());

    // gen
    std::string field;
    std::string expression;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    std::string out;

    // preprocess and friends
    std::string in;
    std::vector<std::string> stores;
    double epsilon = 0.5;
    Eigen::Index d = 128;
    Eigen::Index k = 128;
    std::size_t min_vertices = 200;

    // match / evaluate / cluster
    std::uint32_t surface = 0;
    std::uint32_t patch = 0;
    std::string delta1 = "50";
    std::string delta2 = "50";
    std::string delta_s = "50";
    std::vector<std::uint32_t> with;
    std::size_t queries = 100;
    std::size_t clusters = 0;

    // serve
    std::string host = "127.0.0.1";
    int port = 8080;
};

double slider(const std::string& text) {
    if (text == "inf" || text == "infinity") return std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("malformed slider value " + text);
    return v;
}

const CLI::Validator kSlider(
    [](std::string& text) -> std::string {
        try {
            const double v = slider(text);
            if (!(v >= 0.0 && (v <= 100.0 || std::isinf(v)))) return "must be in [0, 100] or inf";
            return {};
        } catch (const std::exception&) {
            return "must be a number in [0, 100] or inf";
        }
    },
    "0..100|inf");

const CLI::Validator kFieldKind(
    [](std::string& text) -> std::string {
        if (text == "custom") return {};
        try {
            parse_field_kind(text);
            return {};
        } catch (const std::invalid_argument& e) {
            return std::string(e.what()) + ", custom";
        }
    },
    "KIND");

void emit(const Options& opt, const json& payload, const std::string& text) {
    if (opt.json)
        std::cout << payload.dump() << '\n';
    else
        std::cout << text << '\n';
}

void log_line(const Options& opt, const std::string& line) {
    if (opt.json)
        std::cerr << json{{"log", line}}.dump() << '\n';
    else
        std::cerr << line << '\n';
}

int run_gen(const Options& opt) {
    const VectorField field =
        opt.field == "custom" ? VectorField::custom(opt.expression) : VectorField::by_kind(parse_field_kind(opt.field));
    EnsembleParams params;
    params.jobs = opt.jobs;
    const Ensemble ensemble = generate_ensemble(field, opt.count, params, opt.seed, opt.out);
    emit(opt, {{"manifest", ensemble.manifest.string()}, {"count", ensemble.entries.size()}, {"field", opt.field}},
         ensemble.manifest.string());
    return 0;
}

int run_preprocess(const Options& opt) {
    PipelineConfig config;
    config.epsilon = opt.epsilon;
    config.d = opt.d;
    config.k = opt.k;
    config.dataset_seed = opt.seed;
    config.min_vertices = opt.min_vertices;
    config.validate();

    FeatureStore store = FeatureStore::open_or_create(opt.stores.front(), config);
    const fs::path manifest = fs::path(opt.in) / "manifest.json";
    if (fs::exists(manifest)) {
        std::string field;
        read_ensemble_manifest(manifest, &field);
        if (!field.empty()) store.set_field(field);
    }
    const BatchReport report = preprocess_directory(opt.in, store, opt.jobs, [&](const std::string& line) { log_line(opt, line); });

    const json summary = {{"store", store.dir().string()},
                          {"ready", report.ready},
                          {"failed", report.failed},
                          {"skipped", report.skipped},
                          {"up_to_date", report.ready == 0 && report.failed == 0},
                          {"timings",
                           {{"simplify", report.total.simplify},
                            {"spectral", report.total.spectral},
                            {"embedding", report.total.embedding}}}};
    std::ostringstream text;
    if (report.ready == 0 && report.failed == 0)
        text << "up to date (" << report.skipped << " surfaces)";
    else
        text << report.ready << " ready, " << report.failed << " failed, " << report.skipped << " skipped";
    emit(opt, summary, text.str());
    return report.failed > 0 && report.ready == 0 && report.skipped == 0 ? 1 : 0;
}

int run_match(const Options& opt) {
    QueryService service({opt.stores.front()});
    json ids = json::array({opt.surface});
    for (auto id : opt.with) ids.push_back(id);
    auto slider_json = [](const std::string& s) { return std::isinf(slider(s)) ? json("inf") : json(slider(s)); };
    const json body = {{"surface_ids", ids},
                       {"query", {{"surface_id", opt.surface}, {"patch_id", opt.patch}}},
                       {"delta1", slider_json(opt.delta1)},
                       {"delta2", slider_json(opt.delta2)}};
    const HttpResponse res = service.handle({"POST", "/match", {}, body.dump()});
    if (res.status != 200) {
        std::cerr << json::parse(res.body).value("error", res.body) << '\n';
        return 1;
    }
    std::cout << (opt.json ? res.body : json::parse(res.body).dump(2)) << '\n';
    return 0;
}

int run_evaluate(const Options& opt) {
    const FeatureStore store = FeatureStore::open(opt.stores.front());
    EvaluationParams params;
    params.queries = opt.queries;
    params.seed = opt.seed;
    params.delta1 = CutLevel::percent(slider(opt.delta1));
    params.delta2 = CutLevel::percent(slider(opt.delta2));
    const auto records = store.load_all();
    if (records.empty()) throw std::runtime_error("store has no ready surfaces");
    const EvaluationReport result = evaluate_matching(records, params, store.config());
    const json report = to_json(result, params);
    if (!opt.out.empty()) {
        std::ofstream(opt.out) << report.dump(2) << '\n';
    }
    if (opt.json) {
        std::cout << report.dump() << '\n';
        return 0;
    }
    auto cell = [](const MetricStats& m) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(4) << m.mean << " +- " << m.std;
        return c.str();
    };
    std::cout << std::left << std::setw(24) << "pairs" << std::setw(20) << "hausdorff" << std::setw(20) << "chamfer"
              << std::setw(20) << "rmse" << "count\n";
    const std::pair<const char*, const MetricSummary*> rows[] = {
        {"matched", &result.matched}, {"matched (without self)", &result.matched_others}, {"random baseline", &result.baseline}};
    for (const auto& [name, m] : rows) {
        std::cout << std::setw(24) << name << std::setw(20) << cell(m->hausdorff) << std::setw(20) << cell(m->chamfer)
                  << std::setw(20) << cell(m->rmse) << m->hausdorff.count << '\n';
    }
    std::cout << result.per_query.size() << " queries, " << result.skipped_pairs << " zero-extent pairs skipped\n";
    return 0;
}

int run_cluster(const Options& opt) {
    const FeatureStore store = FeatureStore::open(opt.stores.front());
    SurfaceClusterParams params;
    params.delta1 = CutLevel::percent(slider(opt.delta1));
    params.delta_s = CutLevel::percent(slider(opt.delta_s));
    if (opt.clusters > 0) params.cluster_count = opt.clusters;
    const SurfaceEmbedding emb = cluster_surfaces(store.load_all(), params, store.config());
    save_surface_embedding(store, emb);

    json blocks = json::array();
    std::ostringstream text;
    text << emb.clusters.cluster_count << " clusters over " << emb.surface_ids.size() << " surfaces";
    for (const auto& block : emb.gallery) {
        json members = json::array();
        for (auto row : block) members.push_back(emb.surface_ids[row]);
        blocks.push_back({{"representative", emb.surface_ids[block.front()]}, {"members", members}});
        text << "\n  representative " << emb.surface_ids[block.front()] << ": " << block.size() << " members";
    }
    emit(opt, {{"store", store.dir().string()}, {"cluster_count", emb.clusters.cluster_count}, {"clusters", blocks}},
         text.str());
    return 0;
}

int run_serve(const Options& opt) {
    std::vector<fs::path> paths(opt.stores.begin(), opt.stores.end());
    QueryService service(paths);

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    const int port = service.bind(opt.host, opt.port);
    if (port < 0) {
        std::cerr << "cannot bind " << opt.host << ":" << opt.port << '\n';
        return 1;
    }
    emit(opt, {{"host", opt.host}, {"port", port}}, "listening on http://" + opt.host + ":" + std::to_string(port));
    std::cout.flush();

    std::thread server([&] { service.serve(); });
    int received = 0;
    sigwait(&signals, &received);
    service.stop();
    server.join();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Options opt;
    CLI::App app{"surfpatch: stream surface patch matching"};
    app.require_subcommand(1);
    app.add_flag("--json", opt.json, "Machine-readable output");
    app.add_option("--jobs", opt.jobs, "Worker threads")->envname("SURFPATCH_JOBS")->check(CLI::Range(1u, 1024u));

    auto* gen = app.add_subcommand("gen", "Generate a stream surface ensemble");
    gen->add_option("--field", opt.field, "tornado, two_swirls, five_critical_points or custom")
        ->required()
        ->check(kFieldKind);
    gen->add_option("--expression", opt.expression, "Custom field, e.g. \"(-y, x, 0)\"");
    gen->add_option("--count", opt.count, "Number of surfaces")->required()->check(CLI::Range(std::size_t{1}, std::size_t{1} << 20));
    gen->add_option("--seed", opt.seed, "RNG seed");
    gen->add_option("--out", opt.out, "Output directory")->required();

    auto* pre = app.add_subcommand("preprocess", "Preprocess OBJ surfaces into a feature store");
    pre->add_option("--in", opt.in, "Directory of OBJ files")->required()->check(CLI::ExistingDirectory);
    pre->add_option("--store", opt.stores, "Store directory")->required()->expected(1);
    pre->add_option("--epsilon", opt.epsilon, "Simplification threshold")->check(CLI::NonNegativeNumber);
    pre->add_option("--d", opt.d, "HKS width")->check(CLI::Range(2, 1 << 16));
    pre->add_option("--k", opt.k, "Eigenpairs")->check(CLI::Range(2, 1 << 16));
    pre->add_option("--min-vertices", opt.min_vertices, "Simplification floor")->check(CLI::Range(4, 1 << 30));
    pre->add_option("--seed", opt.seed, "Dataset seed");

    auto* match = app.add_subcommand("match", "Match one patch within a surface selection");
    match->add_option("--store", opt.stores, "Store directory")->required()->expected(1);
    match->add_option("--surface", opt.surface, "Query surface id")->required();
    match->add_option("--patch", opt.patch, "Query patch id")->required();
    match->add_option("--delta1", opt.delta1, "Segmentation slider")->check(kSlider);
    match->add_option("--delta2", opt.delta2, "Matching slider")->check(kSlider);
    match->add_option("--with", opt.with, "Additional surface ids")->delimiter(',');

    auto* evaluate = app.add_subcommand("evaluate", "Patch matching quality report");
    evaluate->add_option("--store", opt.stores, "Store directory")->required()->expected(1);
    evaluate->add_option("--queries", opt.queries, "Number of random queries")->check(CLI::Range(std::size_t{1}, std::size_t{1} << 20));
    evaluate->add_option("--seed", opt.seed, "Query RNG seed");
    evaluate->add_option("--delta1", opt.delta1, "Segmentation slider")->check(kSlider);
    evaluate->add_option("--delta2", opt.delta2, "Matching slider")->check(kSlider);
    evaluate->add_option("--out", opt.out, "Also write the report here");

    auto* cluster = app.add_subcommand("cluster", "Cluster surfaces and persist the gallery");
    cluster->add_option("--store", opt.stores, "Store directory")->required()->expected(1);
    cluster->add_option("--delta1", opt.delta1, "Patch slider for surface features")->check(kSlider);
    cluster->add_option("--delta-s", opt.delta_s, "Surface clustering slider")->check(kSlider);
    cluster->add_option("--clusters", opt.clusters, "Fixed cluster count (overrides --delta-s)")
        ->check(CLI::Range(std::size_t{1}, std::size_t{1} << 20));

    auto* serve = app.add_subcommand("serve", "HTTP query service");
    serve->add_option("--store", opt.stores, "Store directory, repeatable")->required();
    serve->add_option("--host", opt.host, "Bind address");
    serve->add_option("--port", opt.port, "Port, 0 for any")->check(CLI::Range(0, 65535));

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (gen->parsed() && opt.field == "custom" && opt.expression.empty()) {
        std::cerr << "--field custom requires --expression\n";
        return 2;
    }

    try {
        if (gen->parsed()) return run_gen(opt);
        if (pre->parsed()) return run_preprocess(opt);
        if (match->parsed()) return run_match(opt);
        if (evaluate->parsed()) return run_evaluate(opt);
        if (cluster->parsed()) return run_cluster(opt);
        if (serve->parsed()) return run_serve(opt);
    } catch (const std::exception& e) {
        if (opt.json)
            std::cerr << json{{"error", e.what()}}.dump() << '\n';
        else
            std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
