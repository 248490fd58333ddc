#pragma once

#include "surfpatch/pipeline.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace surfpatch {

class StoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kStoreVersion = 1;

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// "PRJ1" | u32 n | n*2 f64, little-endian.
void write_projection(std::ostream& out, const RowMatrix& points);
RowMatrix read_projection(std::istream& in);

enum class SurfaceStatus { ready, failed };

struct StoreEntry {
    std::uint32_t id = 0;
    std::string source;
    SurfaceStatus status = SurfaceStatus::ready;
    std::string error;                          // failed entries only
    std::map<std::string, std::string> sha256;  // file name -> digest
};

/// Directory-backed catalog of preprocessed surfaces. Each surface is written
/// once; reads verify checksums. put/fail are safe to call concurrently.
class FeatureStore {
public:
    /// Opens an existing store or creates an empty one. Throws StoreError if
    /// the manifest's version or configuration disagrees with `config`.
    static FeatureStore open_or_create(const std::filesystem::path& dir, const PipelineConfig& config);
    /// Opens an existing store; throws StoreError if the manifest is missing
    /// or has another version.
    static FeatureStore open(const std::filesystem::path& dir);

    FeatureStore(FeatureStore&& other) noexcept;

    [[nodiscard]] const std::filesystem::path& dir() const { return dir_; }
    [[nodiscard]] const PipelineConfig& config() const { return config_; }
    /// Generating field of the ensemble, "unknown" when not recorded.
    [[nodiscard]] const std::string& field() const { return field_; }
    void set_field(std::string field) { field_ = std::move(field); }
    [[nodiscard]] std::vector<StoreEntry> entries() const;
    [[nodiscard]] std::vector<std::uint32_t> ready_ids() const;
    [[nodiscard]] bool is_ready(std::uint32_t id) const;

    void put(const SurfaceRecord& record);
    void fail(std::uint32_t id, const std::string& source, const std::string& error);
    /// Rewrites manifest.json from the current entries.
    void save_manifest() const;

    /// Throws StoreError naming the file on a missing file or checksum mismatch.
    [[nodiscard]] SurfaceRecord load(std::uint32_t id) const;
    [[nodiscard]] std::vector<SurfaceRecord> load_all() const;

    [[nodiscard]] std::filesystem::path surface_dir(std::uint32_t id) const;
    [[nodiscard]] std::filesystem::path surfaces_path() const { return dir_ / "surfaces.json"; }

private:
    FeatureStore(std::filesystem::path dir, PipelineConfig config);

    std::filesystem::path dir_;
    PipelineConfig config_;
    std::string field_ = "unknown";
    std::map<std::uint32_t, StoreEntry> entries_;
    mutable std::mutex mutex_;
};

struct BatchReport {
    std::size_t ready = 0;    // newly preprocessed
    std::size_t failed = 0;
    std::size_t skipped = 0;  // already ready in the store
    StageTimings total;
};

/// Preprocesses every *.obj in `input_dir` (sorted by name; surface id =
/// position) into the store, skipping surfaces already ready. Per-surface
/// failures are recorded, not thrown. `log` receives one line per surface.
BatchReport preprocess_directory(const std::filesystem::path& input_dir, FeatureStore& store, unsigned jobs,
                                 const std::function<void(const std::string&)>& log = {});

/// Persists a surface clustering as surfaces.json in the store.
void save_surface_embedding(const FeatureStore& store, const SurfaceEmbedding& embedding);
/// Throws StoreError when surfaces.json is absent.
SurfaceEmbedding load_surface_embedding(const FeatureStore& store);

}  // namespace surfpatch
