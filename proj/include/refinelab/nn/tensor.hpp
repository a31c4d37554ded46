#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "refinelab/types.hpp"

namespace refinelab::nn {

// Named views into one flat parameter array. The layout is fixed at model
// construction; parameters and gradients are plain vectors of the same total
// size, which keeps the optimizer, checkpointing and finite-difference
// probes trivial.
struct ParamLayout {
    struct Entry {
        std::string name;
        size_t offset = 0;
        std::vector<int> shape;
        size_t size = 0;
    };

    std::vector<Entry> entries;
    size_t total = 0;

    size_t add(const std::string& name, std::vector<int> shape) {
        size_t sz = 1;
        for (int s : shape) sz *= size_t(s);
        entries.push_back({name, total, std::move(shape), sz});
        total += sz;
        return entries.back().offset;
    }

    const Entry& find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return e;
        throw input_error("unknown parameter: " + name);
    }
};

}  // namespace refinelab::nn
