#include "surfpatch/service.hpp"

#include "json.hpp"
#include "httplib.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <future>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <tuple>

namespace surfpatch {

using nlohmann::json;

namespace {

struct HttpError {
    int status;
    std::string message;
};

[[noreturn]] void fail(int status, std::string message) { throw HttpError{status, std::move(message)}; }

// Keyed cache with request coalescing: the first caller computes, concurrent
// callers wait on the same shared_future. Failed computations are dropped.
template <typename Key, typename Value>
class Memo {
public:
    using Ptr = std::shared_ptr<const Value>;

    explicit Memo(std::size_t capacity) : capacity_(capacity) {}

    Ptr get(const Key& key, const std::function<Value()>& make) {
        std::promise<Ptr> promise;
        std::shared_future<Ptr> future;
        bool owner = false;
        {
            std::lock_guard lock(mutex_);
            auto it = entries_.find(key);
            if (it != entries_.end()) {
                future = it->second;
            } else {
                evict_ready();
                future = promise.get_future().share();
                entries_.emplace(key, future);
                owner = true;
            }
        }
        if (owner) {
            try {
                promise.set_value(std::make_shared<const Value>(make()));
            } catch (...) {
                promise.set_exception(std::current_exception());
                std::lock_guard lock(mutex_);
                entries_.erase(key);
            }
        }
        return future.get();
    }

private:
    void evict_ready() {
        if (entries_.size() < capacity_) return;
        for (auto it = entries_.begin(); it != entries_.end() && entries_.size() >= capacity_;) {
            if (it->second.wait_for(std::chrono::seconds(0)) == std::future_status::ready)
                it = entries_.erase(it);
            else
                ++it;
        }
    }

    std::size_t capacity_;
    std::mutex mutex_;
    std::map<Key, std::shared_future<Ptr>> entries_;
};

struct Joint {
    std::vector<std::shared_ptr<const SurfaceRecord>> records;
    std::vector<PatchSegmentation> segmentations;
    PatchEmbedding embedding;
    LinkageTree tree;
};

// Slider value from a query string or JSON body: 0..100 or "inf".
double parse_slider(const std::string& text, const char* name) {
    std::string lower = text;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "inf" || lower == "infinity" || lower == "+inf") return std::numeric_limits<double>::infinity();
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size() || std::isnan(v))
        fail(400, std::string("malformed ") + name);
    if (std::isinf(v) && v > 0) return v;
    if (v < 0.0 || v > 100.0) fail(422, std::string(name) + " must be in [0, 100] or inf");
    return v;
}

double slider_from_json(const json& body, const char* name) {
    if (!body.contains(name)) return 50.0;
    const json& v = body.at(name);
    if (v.is_string()) return parse_slider(v.get<std::string>(), name);
    if (!v.is_number()) fail(400, std::string("malformed ") + name);
    const double x = v.get<double>();
    if (x < 0.0 || x > 100.0) fail(422, std::string(name) + " must be in [0, 100] or inf");
    return x;
}

json slider_json(double v) { return std::isinf(v) ? json("inf") : json(v); }

std::uint32_t parse_id(const std::string& text, const char* what) {
    if (text.empty() || text.size() > 9 || !std::all_of(text.begin(), text.end(), ::isdigit))
        fail(400, std::string("malformed ") + what);
    return static_cast<std::uint32_t>(std::stoul(text));
}

std::uint32_t id_from_json(const json& v, const char* what) {
    if (!v.is_number_integer() || v.get<long long>() < 0 || v.get<long long>() > 0xffffffffLL)
        fail(400, std::string("malformed ") + what);
    return v.get<std::uint32_t>();
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '/'))
        if (!part.empty()) parts.push_back(part);
    return parts;
}

json points_json(const RowMatrix& p, Eigen::Index row) { return json::array({p(row, 0), p(row, 1)}); }

}  // namespace

struct QueryService::Impl {
    struct Dataset {
        std::string id;
        FeatureStore store;
    };

    using RecordKey = std::pair<std::size_t, std::uint32_t>;
    using JointKey = std::tuple<std::size_t, std::vector<std::uint32_t>, double>;

    std::vector<Dataset> datasets;
    mutable Memo<RecordKey, SurfaceRecord> records{256};
    mutable Memo<RecordKey, LinkageTree> vertex_trees{256};
    mutable Memo<std::size_t, SurfaceEmbedding> clusterings{64};
    mutable Memo<JointKey, Joint> joints{32};

    httplib::Server server;
    int bound_port = -1;

    std::size_t dataset_index(const std::string& id) const {
        for (std::size_t i = 0; i < datasets.size(); ++i)
            if (datasets[i].id == id) return i;
        fail(404, "unknown dataset " + id);
    }

    std::size_t dataset_from_query(const HttpRequest& req) const {
        auto it = req.query.find("dataset");
        if (it != req.query.end()) return dataset_index(it->second);
        if (datasets.empty()) fail(404, "no dataset");
        return 0;
    }

    void require_surface(std::size_t ds, std::uint32_t id) const {
        if (!datasets[ds].store.is_ready(id))
            fail(404, "unknown surface " + std::to_string(id) + " in dataset " + datasets[ds].id);
    }

    std::shared_ptr<const SurfaceRecord> record(std::size_t ds, std::uint32_t id) const {
        require_surface(ds, id);
        return records.get({ds, id}, [&] { return datasets[ds].store.load(id); });
    }

    std::shared_ptr<const LinkageTree> vertex_tree_of(std::size_t ds, std::uint32_t id) const {
        auto rec = record(ds, id);
        return vertex_trees.get({ds, id}, [&] { return vertex_tree(*rec); });
    }

    std::shared_ptr<const SurfaceEmbedding> clustering(std::size_t ds) const {
        return clusterings.get(ds, [&] {
            const FeatureStore& store = datasets[ds].store;
            if (std::filesystem::exists(store.surfaces_path())) return load_surface_embedding(store);
            auto recs = store.load_all();
            if (recs.size() < 2) fail(422, "dataset " + datasets[ds].id + " has fewer than 2 ready surfaces");
            return cluster_surfaces(recs, SurfaceClusterParams{}, store.config());
        });
    }

    std::shared_ptr<const Joint> joint(std::size_t ds, std::vector<std::uint32_t> ids, double delta1) const {
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        for (auto id : ids) require_surface(ds, id);
        return joints.get({ds, ids, delta1}, [&] {
            Joint j;
            for (auto id : ids) {
                j.records.push_back(record(ds, id));
                j.segmentations.push_back(segment_patches(*j.records.back(), *vertex_tree_of(ds, id),
                                                          CutLevel::percent(delta1)));
            }
            std::vector<SurfacePatches> selection;
            for (std::size_t i = 0; i < ids.size(); ++i)
                selection.push_back({j.records[i].get(), &j.segmentations[i]});
            const PipelineConfig& config = datasets[ds].store.config();
            j.embedding = embed_patches(selection, config);
            j.tree = patch_tree(j.embedding, config);
            return j;
        });
    }

    // -- endpoints -----------------------------------------------------------

    json catalog() const {
        json list = json::array();
        for (const auto& d : datasets) {
            const auto entries = d.store.entries();
            std::size_t ready = 0;
            for (const auto& e : entries) ready += e.status == SurfaceStatus::ready;
            const char* status = entries.empty() ? "preprocessing" : ready > 0 ? "ready" : "failed";
            list.push_back({{"id", d.id},
                            {"store", d.store.dir().string()},
                            {"field", d.store.field()},
                            {"surface_count", ready},
                            {"failed_count", entries.size() - ready},
                            {"status", status}});
        }
        return {{"datasets", list}};
    }

    json surfaces(std::size_t ds, const HttpRequest& req) const {
        auto order = req.query.find("order");
        if (order != req.query.end() && order->second != "gallery" && order->second != "id")
            fail(400, "order must be gallery or id");
        if (order == req.query.end() || order->second == "id") {
            json list = json::array();
            for (const auto& e : datasets[ds].store.entries()) {
                json item = {{"id", e.id}, {"source", e.source}, {"status", e.status == SurfaceStatus::ready ? "ready" : "failed"}};
                if (e.status == SurfaceStatus::failed) item["error"] = e.error;
                list.push_back(item);
            }
            return {{"dataset", datasets[ds].id}, {"surfaces", list}};
        }
        auto emb = clustering(ds);
        json blocks = json::array();
        for (const auto& block : emb->gallery) {
            json members = json::array();
            for (auto row : block) members.push_back(emb->surface_ids[row]);
            const auto cluster = emb->clusters.labels[block.front()];
            blocks.push_back({{"cluster", cluster},
                              {"representative", emb->surface_ids[emb->representatives[cluster]]},
                              {"size", block.size()},
                              {"members", members}});
        }
        return {{"dataset", datasets[ds].id}, {"clusters", blocks}};
    }

    json projection(std::size_t ds) const {
        auto emb = clustering(ds);
        json points = json::array();
        for (std::size_t r = 0; r < emb->surface_ids.size(); ++r) {
            const auto row = static_cast<Eigen::Index>(r);
            points.push_back({{"surface_id", emb->surface_ids[r]},
                              {"x", emb->projection.points(row, 0)},
                              {"y", emb->projection.points(row, 1)},
                              {"cluster", emb->clusters.labels[r]}});
        }
        json reps = json::array();
        for (auto r : emb->representatives) reps.push_back(emb->surface_ids[r]);
        return {{"dataset", datasets[ds].id},
                {"cluster_count", emb->clusters.cluster_count},
                {"representatives", reps},
                {"points", points}};
    }

    json mesh(std::size_t ds, std::uint32_t id) const {
        auto rec = record(ds, id);
        const Mesh& m = rec->mesh;
        const auto normals = vertex_normals(m);
        json v = json::array(), n = json::array(), f = json::array();
        for (std::size_t i = 0; i < m.vertices.size(); ++i) {
            v.push_back({m.vertices[i].x(), m.vertices[i].y(), m.vertices[i].z()});
            n.push_back({normals[i].x(), normals[i].y(), normals[i].z()});
        }
        for (const auto& t : m.faces) f.push_back({t[0], t[1], t[2]});
        return {{"dataset", datasets[ds].id}, {"surface_id", id}, {"vertices", v}, {"faces", f}, {"normals", n}};
    }

    json patches(std::size_t ds, std::uint32_t id, const HttpRequest& req) const {
        auto it = req.query.find("delta1");
        const double delta1 = it == req.query.end() ? 50.0 : parse_slider(it->second, "delta1");
        require_surface(ds, id);
        auto j = joint(ds, {id}, delta1);
        const auto& seg = j->segmentations.front();
        json list = json::array();
        for (std::size_t p = 0; p < seg.patches.size(); ++p) {
            const auto row = *j->embedding.find({id, static_cast<std::uint32_t>(p)});
            list.push_back({{"patch_id", p},
                            {"vertices", seg.patches[p]},
                            {"point", points_json(j->embedding.projection.points, static_cast<Eigen::Index>(row))},
                            {"mean_fallback", j->embedding.mean_fallback[row] != 0}});
        }
        return {{"dataset", datasets[ds].id},
                {"surface_id", id},
                {"delta1", slider_json(delta1)},
                {"delta1_distance", std::isinf(seg.delta1) ? json("inf") : json(seg.delta1)},
                {"vertex_count", seg.partition.labels.size()},
                {"patch_count", seg.patch_count()},
                {"labels", seg.partition.labels},
                {"patches", list}};
    }

    json match(const std::string& body_text) const {
        json body;
        try {
            body = json::parse(body_text);
        } catch (const json::parse_error&) {
            fail(400, "body is not valid JSON");
        }
        if (!body.is_object()) fail(400, "body must be an object");
        std::size_t ds = 0;
        if (body.contains("dataset")) {
            if (!body["dataset"].is_string()) fail(400, "malformed dataset");
            ds = dataset_index(body["dataset"].get<std::string>());
        } else if (datasets.empty()) {
            fail(404, "no dataset");
        }
        if (!body.contains("query") || !body["query"].is_object()) fail(400, "missing query");
        const json& q = body["query"];
        if (!q.contains("surface_id") || !q.contains("patch_id")) fail(400, "query needs surface_id and patch_id");
        const PatchRef query{id_from_json(q["surface_id"], "query.surface_id"), id_from_json(q["patch_id"], "query.patch_id")};

        std::vector<std::uint32_t> ids;
        if (body.contains("surface_ids")) {
            if (!body["surface_ids"].is_array()) fail(400, "surface_ids must be an array");
            for (const auto& v : body["surface_ids"]) ids.push_back(id_from_json(v, "surface_ids"));
        }
        if (ids.empty()) ids.push_back(query.surface_id);
        if (std::find(ids.begin(), ids.end(), query.surface_id) == ids.end())
            fail(400, "query surface is not in surface_ids");
        const double delta1 = slider_from_json(body, "delta1");
        const double delta2 = slider_from_json(body, "delta2");
        for (auto id : ids) require_surface(ds, id);

        auto j = joint(ds, ids, delta1);
        if (!j->embedding.find(query)) fail(404, "unknown patch " + std::to_string(query.patch_id));
        const PipelineConfig& config = datasets[ds].store.config();
        const MatchResult result = match_patches(j->embedding, j->tree, query, CutLevel::percent(delta2), config);

        auto segmentation_of = [&](std::uint32_t surface) -> const PatchSegmentation& {
            for (const auto& s : j->segmentations)
                if (s.surface_id == surface) return s;
            throw std::logic_error("segmentation missing");
        };
        json matches = json::array();
        for (std::size_t r = 0; r < result.matches.size(); ++r) {
            const Match& m = result.matches[r];
            matches.push_back({{"rank", r},
                               {"surface_id", m.patch.surface_id},
                               {"patch_id", m.patch.patch_id},
                               {"distance", m.distance},
                               {"vertices", segmentation_of(m.patch.surface_id).patches[m.patch.patch_id]}});
        }
        std::vector<std::uint32_t> sorted_ids(ids);
        std::sort(sorted_ids.begin(), sorted_ids.end());
        sorted_ids.erase(std::unique(sorted_ids.begin(), sorted_ids.end()), sorted_ids.end());
        auto distance_json = [](double v) { return std::isinf(v) ? json("inf") : json(v); };
        json delta1_distances = json::array();
        for (const auto& s : j->segmentations)
            delta1_distances.push_back({{"surface_id", s.surface_id}, {"distance", distance_json(s.delta1)}});
        return {{"dataset", datasets[ds].id},
                {"surface_ids", sorted_ids},
                {"query", {{"surface_id", query.surface_id}, {"patch_id", query.patch_id}}},
                {"delta1", slider_json(delta1)},
                {"delta2", slider_json(delta2)},
                {"delta1_distances", delta1_distances},
                {"delta2_distance", distance_json(result.delta2)},
                {"matches", matches}};
    }

    HttpResponse route(const HttpRequest& req) const {
        const auto parts = split_path(req.path);
        auto ok = [](const json& j) { return HttpResponse{200, j.dump(), "application/json"}; };
        const bool get = req.method == "GET";
        const bool post = req.method == "POST";

        if (parts.size() == 1 && parts[0] == "health") {
            if (!get) fail(405, "method not allowed");
            return {200, "ok", "text/plain"};
        }
        if (parts.size() == 1 && parts[0] == "match") {
            if (!post) fail(405, "method not allowed");
            return ok(match(req.body));
        }
        if (!get) fail(parts.empty() ? 404 : 405, "method not allowed");
        if (parts.size() == 1 && parts[0] == "datasets") return ok(catalog());
        if (parts.size() == 3 && parts[0] == "datasets") {
            const auto ds = dataset_index(parts[1]);
            if (parts[2] == "surfaces") return ok(surfaces(ds, req));
            if (parts[2] == "projection") return ok(projection(ds));
        }
        if (parts.size() == 3 && parts[0] == "surfaces") {
            const auto id = parse_id(parts[1], "surface id");
            const auto ds = dataset_from_query(req);
            if (parts[2] == "mesh") return ok(mesh(ds, id));
            if (parts[2] == "patches") return ok(patches(ds, id, req));
        }
        fail(404, "no route for " + req.path);
    }
};

QueryService::QueryService(const std::vector<std::filesystem::path>& stores) : impl_(std::make_unique<Impl>()) {
    std::set<std::string> used;
    for (const auto& path : stores) {
        std::string base = std::filesystem::absolute(path).lexically_normal().filename().string();
        if (base.empty()) base = std::filesystem::absolute(path).lexically_normal().parent_path().filename().string();
        if (base.empty()) base = "dataset";
        std::string id = base;
        for (int n = 2; used.count(id); ++n) id = base + "-" + std::to_string(n);
        used.insert(id);
        impl_->datasets.push_back({id, FeatureStore::open(path)});
    }

    auto bridge = [this](const httplib::Request& in, httplib::Response& out) {
        HttpRequest req{in.method, in.path, {}, in.body};
        for (const auto& [k, v] : in.params) req.query.emplace(k, v);
        const HttpResponse res = handle(req);
        out.status = res.status;
        out.set_content(res.body, res.content_type);
    };
    // SO_REUSEADDR only: a second server on a live port must fail to bind.
    impl_->server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    impl_->server.Get(".*", bridge);
    impl_->server.Post(".*", bridge);
}

QueryService::~QueryService() = default;

HttpResponse QueryService::handle(const HttpRequest& request) const {
    auto error = [](int status, const std::string& message) {
        return HttpResponse{status, json{{"error", message}}.dump(), "application/json"};
    };
    try {
        return impl_->route(request);
    } catch (const HttpError& e) {
        return error(e.status, e.message);
    } catch (const StoreError& e) {
        return error(500, e.what());
    } catch (const std::exception& e) {
        return error(500, e.what());
    } catch (...) {
        return error(500, "internal error");
    }
}

bool QueryService::listen(const std::string& host, int port) { return bind(host, port) >= 0 && serve(); }

int QueryService::bind(const std::string& host, int port) {
    if (port == 0) {
        impl_->bound_port = impl_->server.bind_to_any_port(host);
    } else {
        impl_->bound_port = impl_->server.bind_to_port(host, port) ? port : -1;
    }
    if (impl_->bound_port < 0) impl_->bound_port = -1;
    return impl_->bound_port;
}

bool QueryService::serve() { return impl_->bound_port >= 0 && impl_->server.listen_after_bind(); }

void QueryService::stop() { impl_->server.stop(); }

int QueryService::port() const { return impl_->bound_port; }

}  // namespace surfpatch
