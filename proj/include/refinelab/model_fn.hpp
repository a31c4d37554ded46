#pragma once

#include <optional>

#include "refinelab/kernel.hpp"
#include "refinelab/nn/backbone.hpp"

namespace refinelab {

// Wraps a backbone + parameter snapshot as a sample->output function for the
// inference side. Captures by reference: the model and parameters must
// outlive the returned callable. Thread-safe, every call uses its own
// activation workspace.
template <typename Real>
ModelFn make_model_fn(const nn::Backbone<Real>& model, const std::vector<Real>& params) {
    return [&model, &params](const SequenceState& x, const ClueMask& clues,
                             std::optional<double> t) {
        nn::Batch b;
        b.B = 1;
        b.d = int(x.size());
        b.tokens = x;
        b.clues = clues;
        if (t) {
            b.has_t = true;
            b.t = {*t};
        }
        nn::Activations<Real> acts;
        model.forward(params, b, false, nullptr, acts);

        ModelOutput out;
        out.d = b.d;
        out.n_tokens = model.config().vocab_size;
        out.logits.assign(acts.logits.begin(), acts.logits.end());
        out.confidence.assign(acts.conf.begin(), acts.conf.end());
        out.tau = double(acts.tau[0]);
        return out;
    };
}

}  // namespace refinelab
