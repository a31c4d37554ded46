#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "refinelab/rng.hpp"
#include "refinelab/types.hpp"

namespace refinelab {

// Sudoku on an n x n grid with sqrt(n) x sqrt(n) boxes. Digits 1..n are
// encoded as tokens 0..n-1; the mask token (id n) doubles as the blank cell.

inline int sudoku_box_side(int n) {
    int b = int(std::lround(std::sqrt(double(n))));
    if (b * b != n) throw input_error("sudoku grid side must be a perfect square");
    return b;
}

inline Vocabulary sudoku_vocab(int n) { return Vocabulary::make(TaskKind::sudoku, n); }

// True iff the grid is complete (no masks) and every row, column and box
// contains each digit exactly once.
inline bool sudoku_validate(const SequenceState& grid, int n) {
    const int b = sudoku_box_side(n);
    if (int(grid.size()) != n * n)
        throw input_error("sudoku grid has length " + std::to_string(grid.size()) +
                          ", expected " + std::to_string(n * n));
    const Token mask = Token(n);
    for (Token t : grid)
        if (t < 0 || t > mask) throw input_error("sudoku token out of range");

    auto scan = [&](auto cell_index) {
        for (int g = 0; g < n; ++g) {
            uint32_t seen = 0;
            for (int j = 0; j < n; ++j) {
                Token t = grid[cell_index(g, j)];
                if (t == mask) return false;
                uint32_t bit = 1u << t;
                if (seen & bit) return false;
                seen |= bit;
            }
        }
        return true;
    };
    bool rows = scan([&](int r, int c) { return r * n + c; });
    bool cols = scan([&](int c, int r) { return r * n + c; });
    bool boxes = scan([&](int g, int j) {
        int r = (g / b) * b + j / b;
        int c = (g % b) * b + j % b;
        return r * n + c;
    });
    return rows && cols && boxes;
}

namespace detail {

struct SudokuSearch {
    int n, b;
    Token mask;
    std::vector<Token> grid;
    std::vector<uint32_t> row_used, col_used, box_used;
    std::vector<SequenceState>* out = nullptr;
    size_t limit = 0;

    int box_of(int pos) const { return (pos / n / b) * b + (pos % n) / b; }

    bool place_clues(const SequenceState& clues) {
        for (int pos = 0; pos < n * n; ++pos) {
            Token t = clues[pos];
            if (t == mask) continue;
            uint32_t bit = 1u << t;
            int r = pos / n, c = pos % n, bx = box_of(pos);
            if ((row_used[r] | col_used[c] | box_used[bx]) & bit) return false;
            row_used[r] |= bit;
            col_used[c] |= bit;
            box_used[bx] |= bit;
            grid[pos] = t;
        }
        return true;
    }

    // Deterministic backtracking: positions in index order, digits ascending.
    bool search(int pos) {
        while (pos < n * n && grid[pos] != mask) ++pos;
        if (pos == n * n) {
            out->push_back(grid);
            return out->size() >= limit;
        }
        int r = pos / n, c = pos % n, bx = box_of(pos);
        uint32_t used = row_used[r] | col_used[c] | box_used[bx];
        for (Token t = 0; t < Token(n); ++t) {
            uint32_t bit = 1u << t;
            if (used & bit) continue;
            grid[pos] = t;
            row_used[r] |= bit;
            col_used[c] |= bit;
            box_used[bx] |= bit;
            if (search(pos + 1)) return true;
            row_used[r] &= ~bit;
            col_used[c] &= ~bit;
            box_used[bx] &= ~bit;
            grid[pos] = mask;
        }
        return false;
    }
};

}  // namespace detail

// All solutions of the clue grid, up to `limit`, in deterministic order.
// Empty result iff the clues are unsatisfiable (or contradictory).
inline std::vector<SequenceState> sudoku_solve(const SequenceState& clues, int n,
                                               size_t limit = 2) {
    const int b = sudoku_box_side(n);
    if (int(clues.size()) != n * n) throw input_error("sudoku clue grid has wrong length");
    for (Token t : clues)
        if (t < 0 || t > Token(n)) throw input_error("sudoku clue token out of range");

    detail::SudokuSearch s;
    s.n = n;
    s.b = b;
    s.mask = Token(n);
    s.grid.assign(size_t(n) * n, s.mask);
    s.row_used.assign(n, 0);
    s.col_used.assign(n, 0);
    s.box_used.assign(n, 0);

    std::vector<SequenceState> solutions;
    s.out = &solutions;
    s.limit = limit == 0 ? 1 : limit;
    if (!s.place_clues(clues)) return solutions;
    s.search(0);
    return solutions;
}

// A uniformly shuffled valid complete grid: base pattern + digit relabeling +
// row/column permutations within bands/stacks + band/stack permutations.
inline SequenceState sudoku_random_solution(int n, Rng& rng) {
    const int b = sudoku_box_side(n);
    std::vector<Token> digit(n);
    for (int i = 0; i < n; ++i) digit[i] = Token(i);
    rng.shuffle(digit);

    auto shuffled_groups = [&](int) {
        std::vector<int> idx(n);
        std::vector<int> band(b), within(b);
        for (int i = 0; i < b; ++i) band[i] = i;
        rng.shuffle(band);
        int k = 0;
        for (int g = 0; g < b; ++g) {
            for (int i = 0; i < b; ++i) within[i] = i;
            rng.shuffle(within);
            for (int i = 0; i < b; ++i) idx[k++] = band[g] * b + within[i];
        }
        return idx;
    };
    std::vector<int> rows = shuffled_groups(0);
    std::vector<int> cols = shuffled_groups(1);

    SequenceState grid(size_t(n) * n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            int rr = rows[r], cc = cols[c];
            Token base = Token((rr * b + rr / b + cc) % n);
            grid[size_t(r) * n + c] = digit[base];
        }
    return grid;
}

// Unique-solution instance generation: start from a random complete grid and
// remove cells in random order while uniqueness (checked by sudoku_solve with
// limit 2) holds, until the clue count reaches a target drawn from
// [clue_min, clue_max].
inline PuzzleInstance sudoku_generate(int n, uint64_t seed, int clue_min, int clue_max,
                                      int max_attempts = 100) {
    const int cells = n * n;
    if (clue_min < 0 || clue_max < clue_min || clue_max > cells)
        throw input_error("infeasible sudoku clue range");
    Rng rng(seed);
    const Token mask = Token(n);

    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        SequenceState solution = sudoku_random_solution(n, rng);
        SequenceState puzzle = solution;
        int clue_count = cells;
        const int target = rng.range_int(clue_min, clue_max);

        std::vector<int> order(cells);
        for (int i = 0; i < cells; ++i) order[i] = i;
        rng.shuffle(order);

        for (int pos : order) {
            if (clue_count <= target) break;
            Token saved = puzzle[pos];
            puzzle[pos] = mask;
            if (sudoku_solve(puzzle, n, 2).size() == 1) {
                --clue_count;
            } else {
                puzzle[pos] = saved;
            }
        }
        if (clue_count > clue_max) continue;  // could not thin this grid enough

        PuzzleInstance inst;
        inst.x0 = puzzle;
        inst.x1 = solution;
        inst.clues.assign(cells, 0);
        for (int i = 0; i < cells; ++i) inst.clues[i] = (puzzle[i] != mask) ? 1 : 0;
        return inst;
    }
    throw numeric_error("sudoku generation failed after " + std::to_string(max_attempts) +
                        " attempts");
}

}  // namespace refinelab
