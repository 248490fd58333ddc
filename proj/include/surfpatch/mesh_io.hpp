#pragma once

#include "surfpatch/mesh.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

namespace surfpatch {

class ObjParseError : public std::runtime_error {
public:
    ObjParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    [[nodiscard]] std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct ObjReport {
    std::size_t dropped_faces = 0;  // degenerate records (repeated index)
};

/// Reads `v` and `f` records; polygons are fan-triangulated from their first
/// corner. Texture/normal suffixes (`f 1/2/3`) and negative indices are
/// accepted, every other record kind is ignored.
Mesh read_obj(std::istream& in, ObjReport* report = nullptr);
Mesh load_obj(const std::filesystem::path& path, ObjReport* report = nullptr);

/// Writes shortest round-trip decimal representations, so that
/// load_obj(save_obj(m)) reproduces vertex coordinates bit-exactly.
void write_obj(std::ostream& out, const Mesh& mesh);
void save_obj(const std::filesystem::path& path, const Mesh& mesh);

}  // namespace surfpatch
