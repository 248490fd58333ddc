#include "surfpatch/mesh_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string_view>
#include <vector>

namespace surfpatch {

namespace {

std::string_view next_token(std::string_view& rest) {
    std::size_t b = 0;
    while (b < rest.size() && (rest[b] == ' ' || rest[b] == '\t' || rest[b] == '\r')) ++b;
    std::size_t e = b;
    while (e < rest.size() && rest[e] != ' ' && rest[e] != '\t' && rest[e] != '\r') ++e;
    auto tok = rest.substr(b, e - b);
    rest.remove_prefix(e);
    return tok;
}

double parse_double(std::string_view tok, std::size_t line) {
    double v = 0.0;
    const auto* first = tok.data();
    if (!tok.empty() && tok.front() == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
        throw ObjParseError(line, "bad coordinate '" + std::string(tok) + "'");
    }
    return v;
}

std::uint32_t parse_index(std::string_view tok, std::size_t vertex_count, std::size_t line) {
    const auto slash = tok.find('/');
    if (slash != std::string_view::npos) tok = tok.substr(0, slash);
    long long idx = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), idx);
    if (ec != std::errc{} || ptr != tok.data() + tok.size() || idx == 0) {
        throw ObjParseError(line, "bad face index '" + std::string(tok) + "'");
    }
    const long long resolved = idx > 0 ? idx - 1 : static_cast<long long>(vertex_count) + idx;
    if (resolved < 0 || resolved >= static_cast<long long>(vertex_count)) {
        throw ObjParseError(line, "face index " + std::to_string(idx) + " out of range");
    }
    return static_cast<std::uint32_t>(resolved);
}

}  // namespace

Mesh read_obj(std::istream& in, ObjReport* report) {
    Mesh mesh;
    ObjReport local;
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::uint32_t> poly;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view rest(line);
        const auto kind = next_token(rest);
        if (kind == "v") {
            Vec3 p;
            for (int k = 0; k < 3; ++k) {
                const auto tok = next_token(rest);
                if (tok.empty()) throw ObjParseError(lineno, "vertex needs 3 coordinates");
                p[k] = parse_double(tok, lineno);
            }
            mesh.vertices.push_back(p);
        } else if (kind == "f") {
            poly.clear();
            for (auto tok = next_token(rest); !tok.empty(); tok = next_token(rest)) {
                poly.push_back(parse_index(tok, mesh.vertices.size(), lineno));
            }
            if (poly.size() < 3) throw ObjParseError(lineno, "face needs at least 3 indices");
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
                const Face f{poly[0], poly[k], poly[k + 1]};
                if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
                    ++local.dropped_faces;
                    continue;
                }
                mesh.faces.push_back(f);
            }
        }
    }
    if (report) *report = local;
    return mesh;
}

Mesh load_obj(const std::filesystem::path& path, ObjReport* report) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    auto mesh = read_obj(in, report);
    mesh.name = path.stem().string();
    return mesh;
}

void write_obj(std::ostream& out, const Mesh& mesh) {
    char buf[64];
    auto put = [&](double v) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        out.write(buf, ptr - buf);
    };
    if (!mesh.name.empty()) out << "# " << mesh.name << '\n';
    for (const auto& p : mesh.vertices) {
        out << "v ";
        put(p.x());
        out << ' ';
        put(p.y());
        out << ' ';
        put(p.z());
        out << '\n';
    }
    for (const auto& f : mesh.faces) {
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }
}

void save_obj(const std::filesystem::path& path, const Mesh& mesh) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_obj(out, mesh);
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace surfpatch
