#pragma once

// Adjacency dumps for inspection: JSON, a packed binary form, and DOT.
//
// Binary layout (little-endian): magic "STRGADJM", u32 version (1),
// u32 kind (0 sim, 1 front, 2 back), u64 n, then n*n f64 row-major entries.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "strg/graphs.hpp"

namespace strg {

inline nlohmann::json adjacency_to_json(const AdjacencyMatrix& a) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < a.m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < a.m.cols(); ++j) row.push_back(a.m(i, j));
        rows.push_back(std::move(row));
    }
    return {{"kind", graph_kind_name(a.kind)}, {"n", a.m.rows()}, {"rows", std::move(rows)}};
}

inline void save_adjacency_json(const AdjacencyMatrix& a, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw DataError("save_adjacency_json: cannot write " + path.string());
    os << adjacency_to_json(a).dump(2) << '\n';
}

namespace detail {
constexpr char kAdjMagic[9] = "STRGADJM";
}

inline void save_adjacency_binary(const AdjacencyMatrix& a, const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little, "dump layout is little-endian");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("save_adjacency_binary: cannot write " + path.string());
    os.write(detail::kAdjMagic, 8);
    const std::uint32_t version = 1;
    const std::uint32_t kind = static_cast<std::uint32_t>(a.kind);
    const std::uint64_t n = a.m.rows();
    os.write(reinterpret_cast<const char*>(&version), 4);
    os.write(reinterpret_cast<const char*>(&kind), 4);
    os.write(reinterpret_cast<const char*>(&n), 8);
    os.write(reinterpret_cast<const char*>(a.m.data().data()),
             static_cast<std::streamsize>(a.m.size() * sizeof(double)));
}

inline AdjacencyMatrix load_adjacency_binary(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_adjacency_binary: cannot open " + path.string());
    char magic[8] = {};
    is.read(magic, 8);
    if (std::string(magic, 8) != std::string(detail::kAdjMagic, 8))
        throw DataError("load_adjacency_binary: bad magic in " + path.string());
    std::uint32_t version = 0, kind = 0;
    std::uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&version), 4);
    is.read(reinterpret_cast<char*>(&kind), 4);
    is.read(reinterpret_cast<char*>(&n), 8);
    if (version != 1 || kind > 2 || n > (1ull << 20))
        throw DataError("load_adjacency_binary: bad header in " + path.string());
    AdjacencyMatrix a;
    a.kind = static_cast<GraphKind>(kind);
    a.m = Matrix(n, n);
    is.read(reinterpret_cast<char*>(a.m.data().data()),
            static_cast<std::streamsize>(a.m.size() * sizeof(double)));
    if (!is) throw DataError("load_adjacency_binary: truncated file " + path.string());
    return a;
}

/// DOT digraph of the nonzero edges. Dense similarity graphs are readable
/// only for small N; `min_weight` prunes weak edges.
inline std::string adjacency_to_dot(const AdjacencyMatrix& a, double min_weight = 0.0) {
    std::ostringstream os;
    os << "digraph " << graph_kind_name(a.kind) << " {\n";
    for (std::size_t i = 0; i < a.m.rows(); ++i)
        for (std::size_t j = 0; j < a.m.cols(); ++j) {
            const double w = a.m(i, j);
            if (w > min_weight)
                os << "  n" << i << " -> n" << j << " [label=\"" << w << "\"];\n";
        }
    os << "}\n";
    return os.str();
}

}  // namespace strg
