#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace refinelab {

using Token = int32_t;

// A length-d vector of token ids. Non-mask tokens are in [0, vocab.size);
// the mask token id equals vocab.size.
using SequenceState = std::vector<Token>;

// Boolean vector marking frozen clue positions.
using ClueMask = std::vector<uint8_t>;

struct input_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct capacity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TaskKind { sudoku, countdown };

struct Vocabulary {
    int size = 0;  // non-mask token count N; mask_id == size
    Token mask_id = 0;
    TaskKind task_kind = TaskKind::sudoku;

    int n_tokens() const { return size + 1; }  // including mask
    bool is_mask(Token t) const { return t == mask_id; }
    bool valid_token(Token t) const { return t >= 0 && t <= mask_id; }

    static Vocabulary make(TaskKind kind, int non_mask_count) {
        Vocabulary v;
        v.size = non_mask_count;
        v.mask_id = non_mask_count;
        v.task_kind = kind;
        return v;
    }
};

struct PuzzleInstance {
    SequenceState x0;  // clues + masks
    SequenceState x1;  // full solution
    ClueMask clues;

    int length() const { return int(x0.size()); }

    int num_non_clue() const {
        int n = 0;
        for (uint8_t c : clues) n += (c == 0);
        return n;
    }
};

inline int count_masks(const SequenceState& x, const Vocabulary& vocab) {
    int n = 0;
    for (Token t : x) n += (t == vocab.mask_id);
    return n;
}

// Enumeration of the full product space S = T^d for tiny instances.
// Token ids run over [0, n_tokens) at every position; index encoding is
// mixed-radix with position 0 as the least significant digit.
struct StateSpace {
    int d = 0;
    int n_tokens = 0;  // including mask

    size_t size() const {
        size_t s = 1;
        for (int i = 0; i < d; ++i) s *= size_t(n_tokens);
        return s;
    }

    SequenceState decode(size_t idx) const {
        SequenceState x(d);
        for (int i = 0; i < d; ++i) {
            x[i] = Token(idx % size_t(n_tokens));
            idx /= size_t(n_tokens);
        }
        return x;
    }

    size_t encode(const SequenceState& x) const {
        size_t idx = 0;
        for (int i = d - 1; i >= 0; --i) idx = idx * size_t(n_tokens) + size_t(x[i]);
        return idx;
    }
};

static constexpr size_t kDenseStateCap = 10000;  // dense enumeration limit

inline StateSpace make_state_space(int d, int n_tokens_incl_mask) {
    StateSpace s{d, n_tokens_incl_mask};
    double sz = std::pow(double(n_tokens_incl_mask), double(d));
    if (sz > double(kDenseStateCap))
        throw capacity_error("state space too large for dense enumeration: " +
                             std::to_string(sz));
    return s;
}

}  // namespace refinelab
