#pragma once

// Versioned binary model container. Layout (little-endian):
//
//   offset  size  field
//   0       8     magic "STRGCKPT"
//   8       4     u32 version (1)
//   12      4     u32 d
//   16      4     u32 layers
//   20      4     u32 classes
//   24      4     u32 mode            0 = single-label, 1 = multi-label
//   28      8     f64 dropout_rate
//   36      8     f64 ln_eps
//   44      1     u8  normalize_final_layer
//   45      4     u32 tensor_count
//
// followed by tensor_count records, in the fixed visit_params order:
//   u32 name_len, name bytes, u64 rows, u64 cols, f64 data[rows*cols]

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "strg/model.hpp"

namespace strg {

namespace detail {
constexpr char kCkptMagic[9] = "STRGCKPT";
}

inline void save_checkpoint(const GcnModel& m, const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint layout is little-endian");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("save_checkpoint: cannot write " + path.string());
    os.write(detail::kCkptMagic, 8);
    auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    auto u64 = [&](std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); };
    auto f64 = [&](double v) { os.write(reinterpret_cast<const char*>(&v), 8); };
    u32(1);
    u32(static_cast<std::uint32_t>(m.d));
    u32(static_cast<std::uint32_t>(m.layers));
    u32(static_cast<std::uint32_t>(m.classes));
    u32(m.mode == ClassMode::single_label ? 0u : 1u);
    f64(m.dropout_rate);
    f64(m.ln_eps);
    const char norm_flag = m.normalize_final_layer ? 1 : 0;
    os.write(&norm_flag, 1);

    std::uint32_t count = 0;
    visit_params(m.p, [&](const ParamView&) { ++count; });
    u32(count);
    visit_params(m.p, [&](const ParamView& v) {
        u32(static_cast<std::uint32_t>(v.name.size()));
        os.write(v.name.data(), static_cast<std::streamsize>(v.name.size()));
        u64(v.rows);
        u64(v.cols);
        os.write(reinterpret_cast<const char*>(v.data.data()),
                 static_cast<std::streamsize>(v.data.size() * sizeof(double)));
    });
    if (!os) throw DataError("save_checkpoint: write failed for " + path.string());
}

inline GcnModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_checkpoint: cannot open " + path.string());
    char magic[8] = {};
    is.read(magic, 8);
    if (std::string(magic, 8) != std::string(detail::kCkptMagic, 8))
        throw DataError("load_checkpoint: bad magic in " + path.string());
    auto u32 = [&] {
        std::uint32_t v = 0;
        is.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    auto u64 = [&] {
        std::uint64_t v = 0;
        is.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    auto f64 = [&] {
        double v = 0;
        is.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    const std::uint32_t version = u32();
    if (version != 1)
        throw DataError("load_checkpoint: unsupported version " + std::to_string(version));
    GcnModel m;
    m.d = u32();
    m.layers = u32();
    m.classes = u32();
    m.mode = u32() == 0 ? ClassMode::single_label : ClassMode::multi_label;
    m.dropout_rate = f64();
    m.ln_eps = f64();
    char norm_flag = 1;
    is.read(&norm_flag, 1);
    m.normalize_final_layer = norm_flag != 0;
    m.p = zero_gradients(m);

    const std::uint32_t count = u32();
    std::uint32_t seen = 0;
    visit_params(m.p, [&](const ParamView& v) {
        ++seen;
        std::uint32_t name_len = u32();
        if (name_len > 4096) throw DataError("load_checkpoint: implausible tensor name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (name != v.name)
            throw DataError("load_checkpoint: tensor '" + name + "' where '" + v.name +
                            "' was expected");
        const std::uint64_t rows = u64();
        const std::uint64_t cols = u64();
        if (rows != v.rows || cols != v.cols)
            throw DataError("load_checkpoint: tensor '" + name + "' is " + std::to_string(rows) +
                            "x" + std::to_string(cols) + ", expected " + std::to_string(v.rows) +
                            "x" + std::to_string(v.cols));
        is.read(reinterpret_cast<char*>(v.data.data()),
                static_cast<std::streamsize>(v.data.size() * sizeof(double)));
    });
    if (seen != count)
        throw DataError("load_checkpoint: tensor count " + std::to_string(count) + " vs expected " +
                        std::to_string(seen));
    if (!is) throw DataError("load_checkpoint: truncated file " + path.string());
    return m;
}

}  // namespace strg
