#pragma once

#include "refinelab/rng.hpp"
#include "refinelab/schedule.hpp"
#include "refinelab/types.hpp"

namespace refinelab {

// Masking path sample at time t: clue positions are copied from x0; every
// non-clue position independently carries the solution token with
// probability kappa_t and the mask token otherwise.
inline SequenceState sample_masking_path(const PuzzleInstance& inst, const Vocabulary& vocab,
                                         const Schedule& schedule, double t, Rng& rng) {
    const double k = schedule.value(t);
    SequenceState x(inst.x0.size());
    for (size_t i = 0; i < x.size(); ++i) {
        if (inst.clues[i]) {
            x[i] = inst.x0[i];
        } else {
            x[i] = rng.uniform01() < 1.0 - k ? vocab.mask_id : inst.x1[i];
        }
    }
    return x;
}

// Generalized path: each non-clue position is drawn from the mixture
// kappa^1 delta_{x0^i} + kappa^2 uniform(non-mask vocabulary) + kappa^3 delta_{x1^i}.
inline SequenceState sample_gidd_path(const PuzzleInstance& inst, const Vocabulary& vocab,
                                      const GiddSchedule& gidd, double t, Rng& rng) {
    const auto w = gidd.weights(t);
    SequenceState x(inst.x0.size());
    for (size_t i = 0; i < x.size(); ++i) {
        if (inst.clues[i]) {
            x[i] = inst.x0[i];
            continue;
        }
        const double u = rng.uniform01();
        if (u < w.source) {
            x[i] = inst.x0[i];
        } else if (u < w.source + w.uniform) {
            x[i] = Token(rng.below_int(vocab.size));
        } else {
            x[i] = inst.x1[i];
        }
    }
    return x;
}

// Ground-truth progress: fraction of non-clue positions already carrying the
// solution token (masks count as incorrect).
inline double tau_true(const SequenceState& x, const PuzzleInstance& inst) {
    int non_clue = 0, correct = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        if (inst.clues[i]) continue;
        ++non_clue;
        correct += (x[i] == inst.x1[i]);
    }
    if (non_clue == 0) throw input_error("tau_true needs at least one non-clue position");
    return double(correct) / double(non_clue);
}

}  // namespace refinelab
