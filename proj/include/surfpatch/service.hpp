#pragma once

#include "surfpatch/store.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace surfpatch {

struct HttpRequest {
    std::string method;  // "GET" or "POST"
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
};

struct HttpResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

/// JSON query API over one or more feature stores. Store data is read-only;
/// joint patch embeddings are cached per (dataset, surface set, delta1) and
/// concurrent requests for the same key share one computation.
class QueryService {
public:
    /// Dataset ids are the store directory names; duplicates get a numeric suffix.
    explicit QueryService(const std::vector<std::filesystem::path>& stores);
    ~QueryService();

    QueryService(const QueryService&) = delete;
    QueryService& operator=(const QueryService&) = delete;

    /// Routes one request. Never throws: errors map to 400 / 404 / 422 / 500.
    [[nodiscard]] HttpResponse handle(const HttpRequest& request) const;

    /// Binds and serves until stop() (blocking). Returns false if the port
    /// cannot be bound. Port 0 picks a free port, see port().
    bool listen(const std::string& host, int port);
    /// Binds without serving yet; returns the bound port or -1.
    int bind(const std::string& host, int port);
    /// Serves on a socket opened by bind(); blocking.
    bool serve();
    void stop();
    [[nodiscard]] int port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace surfpatch
