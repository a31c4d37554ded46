#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "refinelab/rng.hpp"
#include "refinelab/types.hpp"

namespace refinelab {

// Countdown-k: given k integers and a target, produce a chain of exact
// arithmetic steps "a op b = c" (comma separated, EOS terminated) whose final
// result equals the target, using each given number at most once.
//
// Token layout: integers 0..result_max map to token ids 0..result_max, then
// +, -, *, / , '=', ',' and EOS each get a dedicated id. The sequence is
// [n_1 .. n_k, target, expression region]; the first k+1 positions are clues.

struct CountdownTask {
    int k = 3;
    int operand_max = 99;
    int result_max = 999;
    int target_min = 10;
    int target_max = 99;

    Token tok_add() const { return Token(result_max + 1); }
    Token tok_sub() const { return Token(result_max + 2); }
    Token tok_mul() const { return Token(result_max + 3); }
    Token tok_div() const { return Token(result_max + 4); }
    Token tok_eq() const { return Token(result_max + 5); }
    Token tok_comma() const { return Token(result_max + 6); }
    Token tok_eos() const { return Token(result_max + 7); }

    Vocabulary vocab() const { return Vocabulary::make(TaskKind::countdown, result_max + 8); }

    int expr_len() const { return 6 * k - 6; }  // (k-1) steps of 5 + (k-2) commas + EOS
    int d() const { return (k + 1) + expr_len(); }
    int expr_begin() const { return k + 1; }

    bool is_int_token(Token t) const { return t >= 0 && t <= Token(result_max); }

    char op_char(Token t) const {
        if (t == tok_add()) return '+';
        if (t == tok_sub()) return '-';
        if (t == tok_mul()) return '*';
        if (t == tok_div()) return '/';
        return '?';
    }
};

enum class CountdownReason {
    none,
    parse_failure,
    inexact_division,
    operand_reuse,
    step_value_mismatch,
    wrong_final_value,
};

struct CountdownResult {
    bool valid = false;
    CountdownReason reason = CountdownReason::none;
    std::string detail;

    static CountdownResult ok() { return {true, CountdownReason::none, ""}; }
    static CountdownResult bad(CountdownReason r, std::string d) {
        return {false, r, std::move(d)};
    }
};

inline const char* to_string(CountdownReason r) {
    switch (r) {
        case CountdownReason::none: return "none";
        case CountdownReason::parse_failure: return "parse failure";
        case CountdownReason::inexact_division: return "inexact division";
        case CountdownReason::operand_reuse: return "operand reuse";
        case CountdownReason::step_value_mismatch: return "step value mismatch";
        case CountdownReason::wrong_final_value: return "wrong final value";
    }
    return "?";
}

// Validates an expression region against the given numbers and target.
// Operands must come from the given numbers or earlier step results, each
// usable at most once; every step must be arithmetically exact; the last
// step's result must equal the target.
inline CountdownResult countdown_eval(const CountdownTask& task,
                                      const std::vector<Token>& expr,
                                      const std::vector<int>& given, int target) {
    std::vector<std::pair<long long, bool>> avail;  // (value, used)
    avail.reserve(given.size() + 8);
    for (int g : given) avail.emplace_back(g, false);

    auto consume = [&](long long v) {
        for (auto& [val, used] : avail)
            if (!used && val == v) {
                used = true;
                return true;
            }
        return false;
    };

    size_t pos = 0;
    const size_t n = expr.size();
    bool have_step = false;
    long long final_value = 0;

    for (;;) {
        if (pos >= n) return CountdownResult::bad(CountdownReason::parse_failure, "missing EOS");
        if (expr[pos] == task.tok_eos()) break;
        if (have_step) {
            if (expr[pos] != task.tok_comma())
                return CountdownResult::bad(CountdownReason::parse_failure,
                                            "expected ',' between steps");
            ++pos;
        }
        if (pos + 5 > n)
            return CountdownResult::bad(CountdownReason::parse_failure, "truncated step");
        Token ta = expr[pos], top = expr[pos + 1], tb = expr[pos + 2];
        Token teq = expr[pos + 3], tc = expr[pos + 4];
        pos += 5;
        if (!task.is_int_token(ta) || !task.is_int_token(tb) || !task.is_int_token(tc) ||
            teq != task.tok_eq())
            return CountdownResult::bad(CountdownReason::parse_failure, "malformed step");
        char op = task.op_char(top);
        if (op == '?')
            return CountdownResult::bad(CountdownReason::parse_failure, "missing operator");

        long long a = ta, b = tb, c = tc;
        if (!consume(a))
            return CountdownResult::bad(CountdownReason::operand_reuse,
                                        "operand " + std::to_string(a) + " not available");
        if (!consume(b))
            return CountdownResult::bad(CountdownReason::operand_reuse,
                                        "operand " + std::to_string(b) + " not available");

        long long v = 0;
        switch (op) {
            case '+': v = a + b; break;
            case '-': v = a - b; break;
            case '*': v = a * b; break;
            case '/':
                if (b == 0 || a % b != 0)
                    return CountdownResult::bad(CountdownReason::inexact_division,
                                                std::to_string(a) + "/" + std::to_string(b));
                v = a / b;
                break;
        }
        if (v != c)
            return CountdownResult::bad(CountdownReason::step_value_mismatch,
                                        std::to_string(a) + op + std::to_string(b) +
                                            " != " + std::to_string(c));
        avail.emplace_back(v, false);
        final_value = v;
        have_step = true;
    }
    if (!have_step)
        return CountdownResult::bad(CountdownReason::parse_failure, "empty expression");
    // everything after the terminator must be EOS padding
    for (size_t i = pos; i < n; ++i)
        if (expr[i] != task.tok_eos())
            return CountdownResult::bad(CountdownReason::parse_failure, "junk after EOS");
    if (final_value != target)
        return CountdownResult::bad(CountdownReason::wrong_final_value,
                                    std::to_string(final_value) + " != " + std::to_string(target));
    return CountdownResult::ok();
}

namespace detail {

struct CountdownStep {
    int a, b, c;
    char op;
};

// One random expression over the given numbers, all numbers consumed,
// intermediate results in [0, result_max]. Returns steps or nothing.
inline std::optional<std::vector<CountdownStep>> random_expression(
    const CountdownTask& task, const std::vector<int>& given, Rng& rng) {
    std::vector<int> vals = given;
    std::vector<CountdownStep> steps;
    const char ops[4] = {'+', '-', '*', '/'};
    while (vals.size() >= 2) {
        int i = rng.below_int(int(vals.size()));
        int j = rng.below_int(int(vals.size() - 1));
        if (j >= i) ++j;
        int a = vals[i], b = vals[j];
        char op = ops[rng.below_int(4)];
        long long v = -1;
        switch (op) {
            case '+': v = (long long)a + b; break;
            case '-':
                if (a < b) std::swap(a, b);
                v = (long long)a - b;
                break;
            case '*': v = (long long)a * b; break;
            case '/':
                if (a < b) std::swap(a, b);
                if (b == 0 || a % b != 0) return std::nullopt;
                v = a / b;
                break;
        }
        if (v < 0 || v > task.result_max) return std::nullopt;
        steps.push_back({a, b, int(v), op});
        if (i > j) std::swap(i, j);
        vals.erase(vals.begin() + j);
        vals.erase(vals.begin() + i);
        vals.push_back(int(v));
    }
    return steps;
}

}  // namespace detail

namespace detail {

inline bool solve_rec(const CountdownTask& task, std::vector<int>& vals, int target,
                      std::vector<CountdownStep>& steps) {
    if (vals.size() == 1) return !steps.empty() && vals[0] == target;
    const int n = int(vals.size());
    const char ops[4] = {'+', '-', '*', '/'};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const int a = vals[i], b = vals[j];
            for (char op : ops) {
                if ((op == '+' || op == '*') && i > j) continue;  // commutative
                long long v;
                switch (op) {
                    case '+': v = (long long)a + b; break;
                    case '-': v = (long long)a - b; break;
                    case '*': v = (long long)a * b; break;
                    default:
                        if (b == 0 || a % b != 0) continue;
                        v = a / b;
                }
                if (v < 0 || v > task.result_max) continue;
                std::vector<int> rest;
                rest.reserve(n - 1);
                for (int r = 0; r < n; ++r)
                    if (r != i && r != j) rest.push_back(vals[r]);
                rest.push_back(int(v));
                steps.push_back({a, b, int(v), op});
                if (solve_rec(task, rest, target, steps)) return true;
                steps.pop_back();
            }
        }
    return false;
}

}  // namespace detail

// Deterministic exhaustive search for a full-use expression hitting the
// target; pairs in index order, operators in +,-,*,/ order, first hit wins.
inline std::optional<std::vector<detail::CountdownStep>> countdown_solve(
    const CountdownTask& task, const std::vector<int>& given, int target) {
    std::vector<int> vals = given;
    std::vector<detail::CountdownStep> steps;
    if (detail::solve_rec(task, vals, target, steps)) return steps;
    return std::nullopt;
}

inline std::vector<Token> countdown_serialize(const CountdownTask& task,
                                              const std::vector<detail::CountdownStep>& steps) {
    std::vector<Token> out;
    out.reserve(task.expr_len());
    auto op_token = [&](char op) {
        switch (op) {
            case '+': return task.tok_add();
            case '-': return task.tok_sub();
            case '*': return task.tok_mul();
            default: return task.tok_div();
        }
    };
    for (size_t s = 0; s < steps.size(); ++s) {
        if (s > 0) out.push_back(task.tok_comma());
        out.push_back(Token(steps[s].a));
        out.push_back(op_token(steps[s].op));
        out.push_back(Token(steps[s].b));
        out.push_back(task.tok_eq());
        out.push_back(Token(steps[s].c));
    }
    out.push_back(task.tok_eos());
    return out;
}

// Rejection-samples (numbers, expression) until the final value lands in the
// target range; the target is the value the expression actually produces.
inline PuzzleInstance countdown_generate(const CountdownTask& task, uint64_t seed) {
    if (task.k < 2) throw input_error("countdown needs at least two operands");
    if (task.result_max < task.operand_max || task.result_max < task.target_max)
        throw input_error("countdown result_max too small");
    Rng rng(seed);
    const Vocabulary vocab = task.vocab();
    const int d = task.d();

    for (;;) {
        std::vector<int> given(task.k);
        for (int& g : given) g = rng.range_int(1, task.operand_max);
        auto steps = detail::random_expression(task, given, rng);
        if (!steps) continue;
        int final_value = steps->back().c;
        if (final_value < task.target_min || final_value > task.target_max) continue;

        std::vector<Token> expr = countdown_serialize(task, *steps);
        while (int(expr.size()) < task.expr_len()) expr.push_back(task.tok_eos());

        PuzzleInstance inst;
        inst.x1.resize(d);
        inst.x0.assign(d, vocab.mask_id);
        inst.clues.assign(d, 0);
        for (int i = 0; i < task.k; ++i) inst.x1[i] = Token(given[i]);
        inst.x1[task.k] = Token(final_value);
        for (int i = 0; i < task.expr_len(); ++i) inst.x1[task.expr_begin() + i] = expr[i];
        for (int i = 0; i <= task.k; ++i) {
            inst.x0[i] = inst.x1[i];
            inst.clues[i] = 1;
        }
        return inst;
    }
}

// Expression region of a full-length state.
inline std::vector<Token> countdown_expr_region(const CountdownTask& task,
                                                const SequenceState& x) {
    return std::vector<Token>(x.begin() + task.expr_begin(), x.end());
}

inline CountdownResult countdown_check_state(const CountdownTask& task, const SequenceState& x,
                                             const PuzzleInstance& inst) {
    std::vector<int> given(inst.x0.begin(), inst.x0.begin() + task.k);
    int target = inst.x0[task.k];
    return countdown_eval(task, countdown_expr_region(task, x), given, target);
}

}  // namespace refinelab
