#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "eadnet/params.hpp"

// Binary checkpoint container. Byte layout, all integers little-endian:
//   magic          4 bytes, "EADN"
//   version        u32 (currently 1)
//   variant tag    u32 length + UTF-8 bytes
//   count          u32
//   per entry:     u32 name length, name bytes,
//                  u8 dtype (0 = f32, 1 = f64), u8 ndim,
//                  u32 dims[ndim],
//                  raw IEEE-754 values, little-endian
// Floats round-trip bit-exactly. Loading into a ParamStore takes entries by
// name: extra file entries are ignored (a full model checkpoint can feed a
// reduced variant), but every store item must be found, with matching shape.

namespace eadnet::ckpt {

inline constexpr char kMagic[4] = {'E', 'A', 'D', 'N'};
inline constexpr std::uint32_t kVersion = 1;

struct RawEntry {
    std::string name;
    int dtype = 0;  // 0 f32, 1 f64
    Shape shape;
    std::vector<unsigned char> payload;
};

struct RawCheckpoint {
    std::uint32_t version = kVersion;
    std::string variant;
    std::vector<RawEntry> entries;

    const RawEntry* find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    require<DataError>(in.gcount() == 4, path + ": truncated checkpoint");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

template <class T>
void put_values(std::ostream& out, const T* v, i64 n) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    std::vector<unsigned char> buf(static_cast<size_t>(n) * sizeof(T));
    for (i64 i = 0; i < n; ++i) {
        if constexpr (sizeof(T) == 4) {
            std::uint32_t u;
            std::memcpy(&u, v + i, 4);
            for (int k = 0; k < 4; ++k)
                buf[static_cast<size_t>(i) * 4 + static_cast<size_t>(k)] =
                    static_cast<unsigned char>(u >> (8 * k));
        } else {
            std::uint64_t u;
            std::memcpy(&u, v + i, 8);
            for (int k = 0; k < 8; ++k)
                buf[static_cast<size_t>(i) * 8 + static_cast<size_t>(k)] =
                    static_cast<unsigned char>(u >> (8 * k));
        }
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

template <class T>
void get_values(const std::vector<unsigned char>& buf, T* v, i64 n) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    for (i64 i = 0; i < n; ++i) {
        if constexpr (sizeof(T) == 4) {
            std::uint32_t u = 0;
            for (int k = 0; k < 4; ++k)
                u |= static_cast<std::uint32_t>(buf[static_cast<size_t>(i) * 4 +
                                                    static_cast<size_t>(k)])
                     << (8 * k);
            std::memcpy(v + i, &u, 4);
        } else {
            std::uint64_t u = 0;
            for (int k = 0; k < 8; ++k)
                u |= static_cast<std::uint64_t>(buf[static_cast<size_t>(i) * 8 +
                                                    static_cast<size_t>(k)])
                     << (8 * k);
            std::memcpy(v + i, &u, 8);
        }
    }
}

}  // namespace detail

template <class T>
void save_checkpoint(const std::string& path, const std::string& variant,
                     const ParamStore<T>& store) {
    std::ofstream out(path, std::ios::binary);
    require<DataError>(out.good(), path + ": cannot open checkpoint for writing");
    out.write(kMagic, 4);
    detail::put_u32(out, kVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(variant.size()));
    out.write(variant.data(), static_cast<std::streamsize>(variant.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(store.items.size()));
    for (const auto& it : store.items) {
        detail::put_u32(out, static_cast<std::uint32_t>(it.name.size()));
        out.write(it.name.data(), static_cast<std::streamsize>(it.name.size()));
        const unsigned char dtype = sizeof(T) == 8 ? 1 : 0;
        const unsigned char ndim = static_cast<unsigned char>(it.t.rank());
        out.put(static_cast<char>(dtype));
        out.put(static_cast<char>(ndim));
        for (i64 d : it.t.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
        detail::put_values(out, it.t.ptr(), it.t.numel());
    }
    require<DataError>(out.good(), path + ": checkpoint write failed");
}

inline RawCheckpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require<DataError>(in.good(), path + ": cannot open checkpoint");
    char magic[4];
    in.read(magic, 4);
    require<DataError>(in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0,
                       path + ": bad checkpoint magic");
    RawCheckpoint ck;
    ck.version = detail::get_u32(in, path);
    require<DataError>(ck.version == kVersion, path + ": unsupported checkpoint version " +
                                                   std::to_string(ck.version));
    const auto vlen = detail::get_u32(in, path);
    require<DataError>(vlen <= 4096, path + ": implausible variant tag length");
    ck.variant.resize(vlen);
    in.read(ck.variant.data(), vlen);
    require<DataError>(in.gcount() == static_cast<std::streamsize>(vlen),
                       path + ": truncated checkpoint");
    const auto count = detail::get_u32(in, path);
    require<DataError>(count <= 1'000'000, path + ": implausible entry count");
    ck.entries.reserve(count);
    for (std::uint32_t e = 0; e < count; ++e) {
        RawEntry ent;
        const auto nlen = detail::get_u32(in, path);
        require<DataError>(nlen >= 1 && nlen <= 4096, path + ": implausible tensor name length");
        ent.name.resize(nlen);
        in.read(ent.name.data(), nlen);
        require<DataError>(in.gcount() == static_cast<std::streamsize>(nlen),
                           path + ": truncated checkpoint");
        const int dtype = in.get();
        const int ndim = in.get();
        require<DataError>(dtype == 0 || dtype == 1,
                           path + ": entry " + ent.name + ": unknown dtype tag " +
                               std::to_string(dtype));
        require<DataError>(ndim >= 1 && ndim <= 8,
                           path + ": entry " + ent.name + ": bad ndim " + std::to_string(ndim));
        ent.dtype = dtype;
        i64 numel = 1;
        for (int d = 0; d < ndim; ++d) {
            const i64 dim = static_cast<i64>(detail::get_u32(in, path));
            require<DataError>(dim >= 1, path + ": entry " + ent.name + ": zero dimension");
            ent.shape.push_back(dim);
            numel *= dim;
            require<DataError>(numel <= (i64(1) << 32),
                               path + ": entry " + ent.name + ": implausible element count");
        }
        const i64 bytes = numel * (dtype == 1 ? 8 : 4);
        ent.payload.resize(static_cast<size_t>(bytes));
        in.read(reinterpret_cast<char*>(ent.payload.data()), bytes);
        require<DataError>(in.gcount() == bytes, path + ": entry " + ent.name +
                                                     ": truncated payload");
        ck.entries.push_back(std::move(ent));
    }
    return ck;
}

/// Decodes one raw entry to the requested precision (cast allowed).
template <class T>
Tensor<T> entry_tensor(const RawEntry& e) {
    const i64 n = shape_numel(e.shape);
    if (e.dtype == 0) {
        Tensor<float> t(e.shape);
        detail::get_values(e.payload, t.ptr(), n);
        if constexpr (std::is_same_v<T, float>) return t;
        else return t.template cast<T>();
    }
    Tensor<double> t(e.shape);
    detail::get_values(e.payload, t.ptr(), n);
    if constexpr (std::is_same_v<T, double>) return t;
    else return t.template cast<T>();
}

/// Fills every item of `store` from the checkpoint by name. Extra file
/// entries are ignored; a missing or shape-mismatched entry fails naming the
/// tensor and both shapes.
template <class T>
void load_into(const RawCheckpoint& ck, ParamStore<T>& store) {
    for (auto& it : store.items) {
        const RawEntry* e = ck.find(it.name);
        require<DataError>(e != nullptr, "checkpoint is missing tensor " + it.name + " (expected " +
                                             shape_str(it.t.shape) + ")");
        require<DataError>(e->shape == it.t.shape, "checkpoint tensor " + it.name + ": expected " +
                                                       shape_str(it.t.shape) + ", found " +
                                                       shape_str(e->shape));
        it.t = entry_tensor<T>(*e);
    }
}

}  // namespace eadnet::ckpt
