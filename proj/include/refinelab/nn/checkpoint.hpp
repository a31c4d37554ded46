#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "refinelab/nn/tensor.hpp"
#include "refinelab/types.hpp"

namespace refinelab::nn {

// Versioned binary checkpoint: metadata key/value echo, named parameter
// arrays with shapes, optional optimizer state, and a trailing content
// checksum. Loading verifies magic, version, scalar width, tensor names and
// shapes against the model layout, plus the checksum; save -> load -> save
// is byte-identical.

template <typename Real>
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<Real> params;
    bool has_opt = false;
    int64_t opt_step = 0;
    std::vector<Real> m, v;
};

namespace ckpt_detail {

constexpr uint32_t kMagic = 0x524c4231;  // "RLB1"
constexpr uint32_t kVersion = 1;

struct Hasher {
    uint64_t h = 1469598103934665603ULL;
    void eat(const void* data, size_t n) {
        const uint8_t* p = static_cast<const uint8_t*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    }
};

struct Writer {
    std::ofstream out;
    Hasher hash;
    explicit Writer(const std::string& path) : out(path, std::ios::binary) {
        if (!out) throw io_error("cannot open checkpoint for writing: " + path);
    }
    void raw(const void* data, size_t n) {
        out.write(static_cast<const char*>(data), std::streamsize(n));
        hash.eat(data, n);
    }
    template <typename T>
    void pod(T v) {
        raw(&v, sizeof v);
    }
    void str(const std::string& s) {
        pod(uint32_t(s.size()));
        raw(s.data(), s.size());
    }
};

struct Reader {
    std::ifstream in;
    Hasher hash;
    explicit Reader(const std::string& path) : in(path, std::ios::binary) {
        if (!in) throw io_error("cannot open checkpoint: " + path);
    }
    void raw(void* data, size_t n) {
        in.read(static_cast<char*>(data), std::streamsize(n));
        if (!in) throw io_error("truncated checkpoint");
        hash.eat(data, n);
    }
    template <typename T>
    T pod() {
        T v;
        raw(&v, sizeof v);
        return v;
    }
    std::string str() {
        uint32_t n = pod<uint32_t>();
        if (n > (1u << 20)) throw io_error("oversized string in checkpoint");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
};

}  // namespace ckpt_detail

template <typename Real>
void save_checkpoint(const std::string& path, const ParamLayout& layout,
                     const Checkpoint<Real>& ckpt) {
    using namespace ckpt_detail;
    if (ckpt.params.size() != layout.total) throw input_error("checkpoint parameter size mismatch");
    Writer w(path);
    w.pod(kMagic);
    w.pod(kVersion);
    w.pod(uint8_t(sizeof(Real)));

    w.pod(uint32_t(ckpt.meta.size()));
    for (const auto& [k, v] : ckpt.meta) {
        w.str(k);
        w.str(v);
    }

    w.pod(uint32_t(layout.entries.size()));
    for (const auto& e : layout.entries) {
        w.str(e.name);
        w.pod(uint32_t(e.shape.size()));
        for (int s : e.shape) w.pod(int32_t(s));
        w.raw(ckpt.params.data() + e.offset, e.size * sizeof(Real));
    }

    w.pod(uint8_t(ckpt.has_opt ? 1 : 0));
    if (ckpt.has_opt) {
        if (ckpt.m.size() != layout.total || ckpt.v.size() != layout.total)
            throw input_error("checkpoint optimizer state size mismatch");
        w.pod(int64_t(ckpt.opt_step));
        w.raw(ckpt.m.data(), ckpt.m.size() * sizeof(Real));
        w.raw(ckpt.v.data(), ckpt.v.size() * sizeof(Real));
    }

    const uint64_t checksum = w.hash.h;
    w.out.write(reinterpret_cast<const char*>(&checksum), sizeof checksum);
    if (!w.out) throw io_error("checkpoint write failed: " + path);
}

// Reads only the header metadata (no tensor payload, no checksum check);
// used to discover a checkpoint's variant and dimensions before building
// the matching model.
inline std::map<std::string, std::string> peek_checkpoint_meta(const std::string& path) {
    using namespace ckpt_detail;
    Reader r(path);
    if (r.pod<uint32_t>() != kMagic) throw io_error("not a checkpoint file: " + path);
    if (r.pod<uint32_t>() != kVersion) throw io_error("unsupported checkpoint version");
    std::map<std::string, std::string> meta;
    meta["__scalar_bytes"] = std::to_string(int(r.pod<uint8_t>()));
    const uint32_t n_meta = r.pod<uint32_t>();
    for (uint32_t i = 0; i < n_meta; ++i) {
        std::string k = r.str();
        meta[k] = r.str();
    }
    return meta;
}

template <typename Real>
Checkpoint<Real> load_checkpoint(const std::string& path, const ParamLayout& layout) {
    using namespace ckpt_detail;
    Reader r(path);
    if (r.pod<uint32_t>() != kMagic) throw io_error("not a checkpoint file: " + path);
    if (r.pod<uint32_t>() != kVersion) throw io_error("unsupported checkpoint version");
    if (r.pod<uint8_t>() != sizeof(Real))
        throw io_error("checkpoint scalar width does not match this model");

    Checkpoint<Real> ckpt;
    const uint32_t n_meta = r.pod<uint32_t>();
    for (uint32_t i = 0; i < n_meta; ++i) {
        std::string k = r.str();
        ckpt.meta[k] = r.str();
    }

    const uint32_t n_tensors = r.pod<uint32_t>();
    if (n_tensors != layout.entries.size())
        throw io_error("checkpoint tensor count mismatch: file has " + std::to_string(n_tensors) +
                       ", model expects " + std::to_string(layout.entries.size()));
    ckpt.params.assign(layout.total, Real(0));
    for (const auto& e : layout.entries) {
        const std::string name = r.str();
        if (name != e.name) throw io_error("checkpoint tensor order mismatch at " + name);
        const uint32_t ndim = r.pod<uint32_t>();
        if (ndim != e.shape.size()) throw io_error("checkpoint shape mismatch for " + name);
        for (int s : e.shape)
            if (r.pod<int32_t>() != s) throw io_error("checkpoint shape mismatch for " + name);
        r.raw(ckpt.params.data() + e.offset, e.size * sizeof(Real));
    }

    ckpt.has_opt = r.pod<uint8_t>() != 0;
    if (ckpt.has_opt) {
        ckpt.opt_step = r.pod<int64_t>();
        ckpt.m.assign(layout.total, Real(0));
        ckpt.v.assign(layout.total, Real(0));
        r.raw(ckpt.m.data(), ckpt.m.size() * sizeof(Real));
        r.raw(ckpt.v.data(), ckpt.v.size() * sizeof(Real));
    }

    const uint64_t expected = r.hash.h;
    uint64_t stored = 0;
    r.in.read(reinterpret_cast<char*>(&stored), sizeof stored);
    if (!r.in || stored != expected) throw io_error("checkpoint checksum mismatch: " + path);
    return ckpt;
}

}  // namespace refinelab::nn
