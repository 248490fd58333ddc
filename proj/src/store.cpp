#include "surfpatch/store.hpp"

#include "surfpatch/binary_io.hpp"
#include "surfpatch/mesh_io.hpp"

#include "json.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>

namespace surfpatch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kMeshFile = "mesh.obj";
constexpr const char* kHksFile = "hks.bin";
constexpr const char* kProjectionFile = "vproj.bin";
constexpr const char* kMetaFile = "meta.json";

void write_text_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw StoreError("cannot write " + tmp.string());
        os << text;
        if (!os) throw StoreError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

template <typename Fn>
void write_binary(const fs::path& path, Fn&& fn) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw StoreError("cannot write " + path.string());
    fn(os);
    if (!os) throw StoreError("write failed: " + path.string());
}

json config_json(const PipelineConfig& c) {
    return {{"epsilon", c.epsilon},
            {"min_vertices", c.min_vertices},
            {"k", c.k},
            {"d", c.d},
            {"dataset_seed", c.dataset_seed},
            {"perplexity", c.perplexity},
            {"tsne_iterations", c.tsne_iterations},
            {"umap",
             {{"n_neighbors", c.umap.n_neighbors},
              {"min_dist", c.umap.min_dist},
              {"spread", c.umap.spread},
              {"epochs", c.umap.epochs},
              {"negative_sample_rate", c.umap.negative_sample_rate}}},
            {"cluster_patches_in_2d", c.cluster_patches_in_2d}};
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    c.epsilon = j.at("epsilon").get<double>();
    c.min_vertices = j.at("min_vertices").get<std::size_t>();
    c.k = j.at("k").get<Eigen::Index>();
    c.d = j.at("d").get<Eigen::Index>();
    c.dataset_seed = j.at("dataset_seed").get<std::uint64_t>();
    c.perplexity = j.at("perplexity").get<double>();
    c.tsne_iterations = j.at("tsne_iterations").get<int>();
    const auto& u = j.at("umap");
    c.umap.n_neighbors = u.at("n_neighbors").get<int>();
    c.umap.min_dist = u.at("min_dist").get<double>();
    c.umap.spread = u.at("spread").get<double>();
    c.umap.epochs = u.at("epochs").get<int>();
    c.umap.negative_sample_rate = u.at("negative_sample_rate").get<int>();
    c.cluster_patches_in_2d = j.at("cluster_patches_in_2d").get<bool>();
    return c;
}

json matrix_json(const RowMatrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

RowMatrix matrix_from_json(const json& j, Eigen::Index cols_if_empty) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : cols_if_empty;
    RowMatrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    return m;
}

std::string status_name(SurfaceStatus s) { return s == SurfaceStatus::ready ? "ready" : "failed"; }

}  // namespace

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StoreError("missing file " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw StoreError("sha256 init failed");
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += kHex[digest[i] >> 4];
        out += kHex[digest[i] & 15];
    }
    return out;
}

void write_projection(std::ostream& out, const RowMatrix& points) {
    if (points.cols() != 2) throw std::invalid_argument("write_projection: expected 2 columns");
    binary::write_magic(out, "PRJ1");
    binary::write_u32(out, static_cast<std::uint32_t>(points.rows()));
    for (Eigen::Index r = 0; r < points.rows(); ++r) {
        binary::write_f64(out, points(r, 0));
        binary::write_f64(out, points(r, 1));
    }
}

RowMatrix read_projection(std::istream& in) {
    binary::expect_magic(in, "PRJ1");
    const auto n = binary::read_u32(in);
    RowMatrix p(n, 2);
    for (std::uint32_t r = 0; r < n; ++r) {
        p(r, 0) = binary::read_f64(in);
        p(r, 1) = binary::read_f64(in);
    }
    return p;
}

FeatureStore::FeatureStore(fs::path dir, PipelineConfig config) : dir_(std::move(dir)), config_(std::move(config)) {}

FeatureStore::FeatureStore(FeatureStore&& other) noexcept
    : dir_(std::move(other.dir_)),
      config_(std::move(other.config_)),
      field_(std::move(other.field_)),
      entries_(std::move(other.entries_)) {}

FeatureStore FeatureStore::open(const fs::path& dir) {
    const fs::path manifest = dir / "manifest.json";
    std::ifstream in(manifest);
    if (!in) throw StoreError("missing file " + manifest.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw StoreError(manifest.string() + ": " + e.what());
    }
    const int version = j.value("version", -1);
    if (version != kStoreVersion) {
        throw StoreError(manifest.string() + ": store version " + std::to_string(version) + ", expected " +
                         std::to_string(kStoreVersion));
    }
    FeatureStore store(dir, config_from_json(j.at("config")));
    store.field_ = j.value("field", "unknown");
    for (const auto& e : j.at("surfaces")) {
        StoreEntry entry;
        entry.id = e.at("id").get<std::uint32_t>();
        entry.source = e.value("source", "");
        entry.status = e.at("status").get<std::string>() == "ready" ? SurfaceStatus::ready : SurfaceStatus::failed;
        entry.error = e.value("error", "");
        if (e.contains("sha256")) entry.sha256 = e.at("sha256").get<std::map<std::string, std::string>>();
        store.entries_[entry.id] = std::move(entry);
    }
    return store;
}

FeatureStore FeatureStore::open_or_create(const fs::path& dir, const PipelineConfig& config) {
    config.validate();
    if (fs::exists(dir / "manifest.json")) {
        auto store = open(dir);
        if (config_json(store.config_) != config_json(config)) {
            throw StoreError("store " + dir.string() + " was built with a different configuration: " +
                             config_json(store.config_).dump());
        }
        return store;
    }
    fs::create_directories(dir);
    FeatureStore store(dir, config);
    store.save_manifest();
    return store;
}

std::vector<StoreEntry> FeatureStore::entries() const {
    std::lock_guard lock(mutex_);
    std::vector<StoreEntry> out;
    for (const auto& [id, e] : entries_) out.push_back(e);
    return out;
}

std::vector<std::uint32_t> FeatureStore::ready_ids() const {
    std::lock_guard lock(mutex_);
    std::vector<std::uint32_t> out;
    for (const auto& [id, e] : entries_) {
        if (e.status == SurfaceStatus::ready) out.push_back(id);
    }
    return out;
}

bool FeatureStore::is_ready(std::uint32_t id) const {
    std::lock_guard lock(mutex_);
    const auto it = entries_.find(id);
    return it != entries_.end() && it->second.status == SurfaceStatus::ready;
}

fs::path FeatureStore::surface_dir(std::uint32_t id) const {
    char name[32];
    std::snprintf(name, sizeof(name), "%06u", id);
    return dir_ / "surfaces" / name;
}

void FeatureStore::put(const SurfaceRecord& record) {
    record.validate();
    const fs::path sd = surface_dir(record.surface_id);
    fs::create_directories(sd);
    write_binary(sd / kMeshFile, [&](std::ostream& os) { write_obj(os, record.mesh); });
    write_binary(sd / kHksFile, [&](std::ostream& os) { write_hks(os, record.hks); });
    write_binary(sd / kProjectionFile, [&](std::ostream& os) { write_projection(os, record.projection.points); });
    const json meta = {{"surface_id", record.surface_id},
                       {"source", record.source},
                       {"input_vertices", record.input_vertices},
                       {"vertex_count", record.mesh.vertex_count()},
                       {"projection", {{"method", "tsne"}, {"seed", record.projection.seed}}}};
    write_binary(sd / kMetaFile, [&](std::ostream& os) { os << meta.dump(2) << '\n'; });

    StoreEntry entry;
    entry.id = record.surface_id;
    entry.source = record.source;
    for (const char* f : {kMeshFile, kHksFile, kProjectionFile, kMetaFile}) entry.sha256[f] = sha256_file(sd / f);
    std::lock_guard lock(mutex_);
    entries_[entry.id] = std::move(entry);
}

void FeatureStore::fail(std::uint32_t id, const std::string& source, const std::string& error) {
    StoreEntry entry;
    entry.id = id;
    entry.source = source;
    entry.status = SurfaceStatus::failed;
    entry.error = error;
    std::lock_guard lock(mutex_);
    entries_[id] = std::move(entry);
}

void FeatureStore::save_manifest() const {
    json surfaces = json::array();
    {
        std::lock_guard lock(mutex_);
        for (const auto& [id, e] : entries_) {
            json j = {{"id", id}, {"source", e.source}, {"status", status_name(e.status)}};
            if (e.status == SurfaceStatus::failed) {
                j["error"] = e.error;
            } else {
                json files = json::array();
                for (const auto& [f, digest] : e.sha256) files.push_back(surface_dir(id).filename().string() + "/" + f);
                j["files"] = files;
                j["sha256"] = e.sha256;
            }
            surfaces.push_back(std::move(j));
        }
    }
    const json doc = {{"version", kStoreVersion},
                      {"dataset_seed", config_.dataset_seed},
                      {"d", config_.d},
                      {"k", config_.k},
                      {"epsilon", config_.epsilon},
                      {"field", field_},
                      {"config", config_json(config_)},
                      {"surfaces", surfaces}};
    write_text_atomic(dir_ / "manifest.json", doc.dump(2) + "\n");
}

SurfaceRecord FeatureStore::load(std::uint32_t id) const {
    StoreEntry entry;
    {
        std::lock_guard lock(mutex_);
        const auto it = entries_.find(id);
        if (it == entries_.end()) throw StoreError("unknown surface " + std::to_string(id));
        entry = it->second;
    }
    if (entry.status != SurfaceStatus::ready) {
        throw StoreError("surface " + std::to_string(id) + " failed preprocessing: " + entry.error);
    }
    const fs::path sd = surface_dir(id);
    for (const auto& [f, digest] : entry.sha256) {
        if (!fs::exists(sd / f)) throw StoreError("missing file " + (sd / f).string());
        if (sha256_file(sd / f) != digest) throw StoreError("checksum mismatch: " + (sd / f).string());
    }
    auto open_in = [&](const char* f) {
        std::ifstream in(sd / f, std::ios::binary);
        if (!in) throw StoreError("missing file " + (sd / f).string());
        return in;
    };
    SurfaceRecord rec;
    rec.surface_id = id;
    rec.source = entry.source;
    {
        auto in = open_in(kMetaFile);
        const json meta = json::parse(in);
        rec.input_vertices = meta.at("input_vertices").get<std::size_t>();
        rec.projection.seed = meta.at("projection").at("seed").get<std::uint64_t>();
        rec.projection.method = EmbeddingMethod::tsne;
    }
    try {
        auto mesh_in = open_in(kMeshFile);
        rec.mesh = read_obj(mesh_in);
        rec.mesh.name = fs::path(rec.source).stem().string();
        auto hks_in = open_in(kHksFile);
        rec.hks = read_hks(hks_in);
        auto prj_in = open_in(kProjectionFile);
        rec.projection.points = read_projection(prj_in);
    } catch (const binary::FormatError& e) {
        throw StoreError("surface " + std::to_string(id) + ": " + e.what());
    }
    rec.validate();
    return rec;
}

std::vector<SurfaceRecord> FeatureStore::load_all() const {
    std::vector<SurfaceRecord> out;
    for (auto id : ready_ids()) out.push_back(load(id));
    return out;
}

void save_surface_embedding(const FeatureStore& store, const SurfaceEmbedding& e) {
    json merges = json::array();
    for (const auto& m : e.tree.merges) merges.push_back({m.a, m.b, m.distance, m.size});
    const json doc = {{"surface_ids", e.surface_ids},
                      {"features", matrix_json(e.features)},
                      {"projection", matrix_json(e.projection.points)},
                      {"projection_seed", e.projection.seed},
                      {"leaf_count", e.tree.leaf_count},
                      {"merges", merges},
                      {"labels", e.clusters.labels},
                      {"cluster_count", e.clusters.cluster_count},
                      {"representatives", e.representatives},
                      {"gallery", e.gallery}};
    write_text_atomic(store.surfaces_path(), doc.dump(2) + "\n");
}

SurfaceEmbedding load_surface_embedding(const FeatureStore& store) {
    std::ifstream in(store.surfaces_path());
    if (!in) throw StoreError("missing file " + store.surfaces_path().string() + " (run `cluster` first)");
    const json j = json::parse(in);
    SurfaceEmbedding e;
    e.surface_ids = j.at("surface_ids").get<std::vector<std::uint32_t>>();
    e.features = matrix_from_json(j.at("features"), store.config().d);
    e.projection.points = matrix_from_json(j.at("projection"), 2);
    e.projection.method = EmbeddingMethod::umap;
    e.projection.seed = j.at("projection_seed").get<std::uint64_t>();
    e.tree.leaf_count = j.at("leaf_count").get<std::size_t>();
    for (const auto& m : j.at("merges")) {
        e.tree.merges.push_back({m[0].get<std::uint32_t>(), m[1].get<std::uint32_t>(), m[2].get<double>(),
                                 m[3].get<std::uint32_t>()});
    }
    e.clusters.labels = j.at("labels").get<std::vector<std::uint32_t>>();
    e.clusters.cluster_count = j.at("cluster_count").get<std::size_t>();
    e.representatives = j.at("representatives").get<std::vector<std::uint32_t>>();
    e.gallery = j.at("gallery").get<std::vector<std::vector<std::uint32_t>>>();
    return e;
}

}  // namespace surfpatch

namespace surfpatch {

BatchReport preprocess_directory(const fs::path& input_dir, FeatureStore& store, unsigned jobs,
                                 const std::function<void(const std::string&)>& log) {
    if (!fs::is_directory(input_dir)) throw StoreError("not a directory: " + input_dir.string());
    std::vector<fs::path> inputs;
    for (const auto& e : fs::directory_iterator(input_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".obj") inputs.push_back(e.path());
    }
    std::sort(inputs.begin(), inputs.end());

    BatchReport report;
    std::mutex report_mutex;
    std::atomic<std::size_t> cursor{0};
    auto emit = [&](const std::string& line) {
        if (log) log(line);
    };

    auto work = [&]() {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= inputs.size()) return;
            const auto id = static_cast<std::uint32_t>(i);
            const auto name = inputs[i].filename().string();
            if (store.is_ready(id)) {
                std::lock_guard lock(report_mutex);
                ++report.skipped;
                continue;
            }
            try {
                const Mesh mesh = load_obj(inputs[i]);
                StageTimings t;
                const auto rec = preprocess_surface(mesh, id, store.config(), &t);
                store.put(rec);
                std::ostringstream line;
                line.precision(3);
                line << std::fixed << "surface " << id << " (" << name << "): " << rec.input_vertices << " -> "
                     << rec.mesh.vertex_count() << " vertices; simplify " << t.simplify << " s, hks " << t.spectral
                     << " s, dr " << t.embedding << " s";
                std::lock_guard lock(report_mutex);
                ++report.ready;
                report.total.simplify += t.simplify;
                report.total.spectral += t.spectral;
                report.total.embedding += t.embedding;
                emit(line.str());
            } catch (const std::exception& ex) {
                store.fail(id, name, ex.what());
                std::lock_guard lock(report_mutex);
                ++report.failed;
                emit("surface " + std::to_string(id) + " (" + name + "): failed: " + ex.what());
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, inputs.size()))));
    std::vector<std::thread> pool;
    for (unsigned j = 1; j < n; ++j) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    store.save_manifest();
    return report;
}

}  // namespace surfpatch
