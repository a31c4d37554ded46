#include <catch2/catch_amalgamated.hpp>

#include "refinelab/countdown.hpp"
#include "refinelab/task.hpp"

using namespace refinelab;

namespace {

// builds an expression region from a readable spec: integers, "+-*/=,",
// terminated with EOS and padded to the task's region length.
std::vector<Token> expr(const CountdownTask& t, const std::vector<std::string>& items,
                        bool pad = true) {
    std::vector<Token> out;
    for (const auto& s : items) {
        if (s == "+") out.push_back(t.tok_add());
        else if (s == "-") out.push_back(t.tok_sub());
        else if (s == "*") out.push_back(t.tok_mul());
        else if (s == "/") out.push_back(t.tok_div());
        else if (s == "=") out.push_back(t.tok_eq());
        else if (s == ",") out.push_back(t.tok_comma());
        else out.push_back(Token(std::stoi(s)));
    }
    out.push_back(t.tok_eos());
    if (pad)
        while (int(out.size()) < t.expr_len()) out.push_back(t.tok_eos());
    return out;
}

}  // namespace

TEST_CASE("countdown_eval accepts the reference four-number chain") {
    CountdownTask t;
    t.k = 4;
    auto e = expr(t, {"86", "+", "28", "=", "114", ",", "31", "-", "13", "=", "18", ",",
                      "114", "-", "18", "=", "96"});
    auto res = countdown_eval(t, e, {86, 28, 13, 31}, 96);
    INFO(res.detail);
    REQUIRE(res.valid);
}

TEST_CASE("countdown_eval rejects inexact division") {
    CountdownTask t;
    t.k = 2;
    auto res = countdown_eval(t, expr(t, {"7", "/", "2", "=", "3"}), {7, 2}, 3);
    REQUIRE_FALSE(res.valid);
    REQUIRE(res.reason == CountdownReason::inexact_division);
}

TEST_CASE("countdown_eval rejects a wrong final value") {
    CountdownTask t;
    t.k = 2;
    auto res = countdown_eval(t, expr(t, {"90", "+", "5", "=", "95"}), {90, 5}, 96);
    REQUIRE_FALSE(res.valid);
    REQUIRE(res.reason == CountdownReason::wrong_final_value);
}

TEST_CASE("countdown_eval rejects operand reuse") {
    CountdownTask t;
    t.k = 3;
    auto res = countdown_eval(
        t, expr(t, {"10", "+", "10", "=", "20", ",", "20", "+", "3", "=", "23"}), {10, 5, 3}, 23);
    REQUIRE_FALSE(res.valid);
    REQUIRE(res.reason == CountdownReason::operand_reuse);
}

TEST_CASE("countdown_eval rejects arithmetic mismatches and parse garbage") {
    CountdownTask t;
    t.k = 2;
    auto bad = countdown_eval(t, expr(t, {"5", "+", "3", "=", "9"}), {5, 3}, 9);
    REQUIRE(bad.reason == CountdownReason::step_value_mismatch);

    std::vector<Token> junk(t.expr_len(), t.tok_eq());
    REQUIRE(countdown_eval(t, junk, {5, 3}, 8).reason == CountdownReason::parse_failure);

    // all-mask region never parses
    std::vector<Token> masks(t.expr_len(), t.vocab().mask_id);
    REQUIRE_FALSE(countdown_eval(t, masks, {5, 3}, 8).valid);
}

TEST_CASE("countdown_eval requires clean EOS padding") {
    CountdownTask t;
    t.k = 3;
    auto e = expr(t, {"5", "+", "3", "=", "8", ",", "8", "+", "2", "=", "10"});
    REQUIRE(countdown_eval(t, e, {5, 3, 2}, 10).valid);
    e.back() = Token(1);  // junk after the terminator
    REQUIRE_FALSE(countdown_eval(t, e, {5, 3, 2}, 10).valid);
}

TEST_CASE("countdown_generate is deterministic and oracle-valid") {
    CountdownTask t;
    t.k = 4;
    auto a = countdown_generate(t, 3);
    auto b = countdown_generate(t, 3);
    REQUIRE(a.x0 == b.x0);
    REQUIRE(a.x1 == b.x1);

    for (uint64_t seed = 0; seed < 50; ++seed) {
        auto inst = countdown_generate(t, seed);
        REQUIRE(int(inst.x0.size()) == t.d());
        std::vector<int> given(inst.x0.begin(), inst.x0.begin() + t.k);
        int target = inst.x0[t.k];
        REQUIRE(target >= t.target_min);
        REQUIRE(target <= t.target_max);
        auto res = countdown_eval(t, countdown_expr_region(t, inst.x1), given, target);
        INFO(res.detail);
        REQUIRE(res.valid);
        for (int i = 0; i <= t.k; ++i) REQUIRE(inst.clues[i] == 1);
        for (int i = t.k + 1; i < t.d(); ++i) {
            REQUIRE(inst.clues[i] == 0);
            REQUIRE(inst.x0[i] == t.vocab().mask_id);
        }
    }
}

TEST_CASE("countdown k=2 produces single-step expressions") {
    CountdownTask t;
    t.k = 2;
    REQUIRE(t.expr_len() == 6);
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto inst = countdown_generate(t, seed);
        auto region = countdown_expr_region(t, inst.x1);
        REQUIRE(region[3] == t.tok_eq());
        REQUIRE(region[5] == t.tok_eos());
    }
}

TEST_CASE("countdown_generate validates its parameters") {
    CountdownTask t;
    t.k = 1;
    REQUIRE_THROWS_AS(countdown_generate(t, 1), input_error);
    t.k = 3;
    t.result_max = 50;  // below operand_max
    REQUIRE_THROWS_AS(countdown_generate(t, 1), input_error);
}

TEST_CASE("countdown_solve finds expressions the evaluator accepts") {
    CountdownTask t;
    t.k = 4;
    auto steps = countdown_solve(t, {86, 28, 13, 31}, 96);
    REQUIRE(steps.has_value());
    auto expr = countdown_serialize(t, *steps);
    while (int(expr.size()) < t.expr_len()) expr.push_back(t.tok_eos());
    REQUIRE(countdown_eval(t, expr, {86, 28, 13, 31}, 96).valid);
    REQUIRE_FALSE(countdown_solve(t, {1, 1, 1, 1}, 99).has_value());
}

TEST_CASE("countdown task oracle accepts alternative valid expressions") {
    TaskSpec task = TaskSpec::mini_countdown(3);
    const CountdownTask& t = task.countdown;

    PuzzleInstance inst;
    inst.x1.resize(t.d());
    inst.x0.assign(t.d(), t.vocab().mask_id);
    inst.clues.assign(t.d(), 0);
    int given[3] = {8, 4, 2};
    for (int i = 0; i < 3; ++i) inst.x0[i] = inst.x1[i] = Token(given[i]);
    inst.x0[3] = inst.x1[3] = Token(64);  // 8 * (4 * 2) or (8 * 4) * 2
    for (int i = 0; i <= 3; ++i) inst.clues[i] = 1;

    auto fill = [&](const std::vector<std::string>& items) {
        SequenceState s = inst.x0;
        auto region = expr(t, items);
        for (int i = 0; i < t.expr_len(); ++i) s[t.expr_begin() + i] = region[i];
        return s;
    };
    inst.x1 = fill({"4", "*", "2", "=", "8", ",", "8", "*", "8", "=", "64"});

    REQUIRE(task.oracle_check(inst.x1, inst));
    // a different but valid route to 64 must also count as solved
    auto alt = fill({"8", "*", "4", "=", "32", ",", "32", "*", "2", "=", "64"});
    REQUIRE(alt != inst.x1);
    REQUIRE(task.oracle_check(alt, inst));
    // clue tampering fails even when arithmetic is fine
    auto tampered = alt;
    tampered[0] = Token(9);
    REQUIRE_FALSE(task.oracle_check(tampered, inst));
}
