#pragma once

#include <map>
#include <sstream>
#include <string>

#include "refinelab/countdown.hpp"
#include "refinelab/rng.hpp"
#include "refinelab/sudoku.hpp"
#include "refinelab/types.hpp"

namespace refinelab {

// Task family plus its generator parameters. Instances are generated
// deterministically from (spec, seed, index).
struct TaskSpec {
    TaskKind kind = TaskKind::sudoku;

    // sudoku
    int n = 4;
    int clue_min = 5;
    int clue_max = 10;

    // countdown
    CountdownTask countdown;

    std::string name() const {
        if (kind == TaskKind::countdown) return "countdown";
        return n == 4 ? "mini-sudoku" : "sudoku";
    }

    Vocabulary vocab() const {
        return kind == TaskKind::sudoku ? sudoku_vocab(n) : countdown.vocab();
    }

    int d() const { return kind == TaskKind::sudoku ? n * n : countdown.d(); }

    PuzzleInstance generate(uint64_t instance_seed) const {
        if (kind == TaskKind::sudoku) return sudoku_generate(n, instance_seed, clue_min, clue_max);
        return countdown_generate(countdown, instance_seed);
    }

    // Full-solution check against the task's brute-force oracle, not against
    // the stored x1 (Countdown admits several valid expressions).
    bool oracle_check(const SequenceState& final_state, const PuzzleInstance& inst) const {
        if (int(final_state.size()) != d()) return false;
        for (int i = 0; i < d(); ++i)
            if (inst.clues[i] && final_state[i] != inst.x0[i]) return false;
        if (kind == TaskKind::sudoku) {
            const Token mask = Token(n);
            for (Token t : final_state)
                if (t < 0 || t > mask) return false;
            return sudoku_validate(final_state, n);
        }
        return countdown_check_state(countdown, final_state, inst).valid;
    }

    // Split membership: instances are partitioned by a salted hash of their
    // clue configuration so different splits never share a puzzle.
    uint64_t instance_hash(const PuzzleInstance& inst) const {
        uint64_t h = 1469598103934665603ULL;
        auto eat = [&](uint64_t v) {
            h ^= v + 1;
            h *= 1099511628211ULL;
        };
        for (Token t : inst.x0) eat(uint64_t(t));
        for (uint8_t c : inst.clues) eat(uint64_t(c));
        return mix64(h);
    }

    static TaskSpec mini_sudoku() {
        TaskSpec t;
        t.kind = TaskKind::sudoku;
        t.n = 4;
        t.clue_min = 5;
        t.clue_max = 10;
        return t;
    }

    static TaskSpec sudoku9() {
        TaskSpec t;
        t.kind = TaskKind::sudoku;
        t.n = 9;
        t.clue_min = 17;
        t.clue_max = 25;
        return t;
    }

    static TaskSpec mini_countdown(int k = 3) {
        TaskSpec t;
        t.kind = TaskKind::countdown;
        t.countdown.k = k;
        return t;
    }

    std::map<std::string, std::string> header_fields(uint64_t seed) const {
        std::map<std::string, std::string> f;
        f["task"] = name();
        f["d"] = std::to_string(d());
        f["vocab"] = std::to_string(vocab().size);
        f["seed"] = std::to_string(seed);
        if (kind == TaskKind::sudoku) {
            f["n"] = std::to_string(n);
            f["clue_min"] = std::to_string(clue_min);
            f["clue_max"] = std::to_string(clue_max);
        } else {
            f["k"] = std::to_string(countdown.k);
            f["operand_max"] = std::to_string(countdown.operand_max);
            f["result_max"] = std::to_string(countdown.result_max);
            f["target_min"] = std::to_string(countdown.target_min);
            f["target_max"] = std::to_string(countdown.target_max);
        }
        return f;
    }
};

enum class Split { train, val, test, all };

inline const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
        case Split::all: return "all";
    }
    return "?";
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    if (s == "all") return Split::all;
    throw config_error("unknown split: " + s);
}

// Hash-bucket membership: train 90%, val 5%, test 5%.
inline bool in_split(uint64_t instance_hash, Split split) {
    if (split == Split::all) return true;
    const double u = double(instance_hash >> 11) * 0x1.0p-53;
    switch (split) {
        case Split::train: return u < 0.90;
        case Split::val: return u >= 0.90 && u < 0.95;
        default: return u >= 0.95;
    }
}

}  // namespace refinelab
