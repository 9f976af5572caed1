#pragma once

#include <span>
#include <vector>

#include "core/autodiff.hpp"
#include "core/math.hpp"
#include "core/model.hpp"
#include "core/subsequence.hpp"

namespace prefopt {

// The four traces of one preference example plus its guide windows.
struct ExampleTraces {
    SequenceTrace policy_chosen;
    SequenceTrace policy_rejected;
    SequenceTrace ref_chosen;
    SequenceTrace ref_rejected;
    SpanSpec span;
};

// Log-space reward state of one example: full-sequence ratios (x1, x2),
// window ratios (y1, y2) and the derived residuals.
struct RewardQuad {
    double log_x1 = 0.0;
    double log_x2 = 0.0;
    double log_y1 = 0.0;
    double log_y2 = 0.0;

    double log_p1() const { return log_x1 - log_y1; }
    double log_p2() const { return log_x2 - log_y2; }
    double log_z() const { return log_y1 - log_y2; }
};

RewardQuad reward_quad(const ExampleTraces& traces);

// exp(r_w) / (exp(r_w) + exp(r_l)), computed through the stable log-sigmoid.
double bt_preference_prob(double reward_w, double reward_l);

// Which model supplies the guide windows. Only the current policy is
// implemented; the enum records the choice point.
enum class PilotSource { CurrentPolicy };

struct ExampleStats {
    double chosen_reward = 0.0;    // beta * log x1
    double rejected_reward = 0.0;  // beta * log x2
    double margin = 0.0;           // beta * (log x1 - log x2)
};

struct LossOutput {
    ad::Tape::Var loss = -1;
    std::vector<ExampleStats> per_example;
};

// One example wired onto a tape: differentiable policy log-prob nodes plus
// the frozen reference traces.
struct BatchItem {
    ad::Tape::Var policy_chosen = -1;    // per-token response log-probs [Lw]
    ad::Tape::Var policy_rejected = -1;  // [Ll]
    const SequenceTrace* ref_chosen = nullptr;
    const SequenceTrace* ref_rejected = nullptr;
    SpanSpec span;
};

// loss = -mean log sigmoid(beta (log x1 - log x2)). Gradients flow only
// through the policy nodes.
LossOutput dpo_loss(ad::Tape& tape, std::span<const BatchItem> batch, math::Beta beta);

// loss = -(1/2) mean [log sigmoid(beta log x1 - beta log y2)
//                     + log sigmoid(beta log y1 - beta log x2)]
// where y1, y2 are guide-window ratios of the current policy evaluated
// behind a stop-gradient.
LossOutput sgdpo_loss(ad::Tape& tape, std::span<const BatchItem> batch, math::Beta beta,
                      PilotSource source = PilotSource::CurrentPolicy);

// Value-only forms over plain traces, for evaluation and tests.
double dpo_loss_value(std::span<const ExampleTraces> batch, math::Beta beta);
double sgdpo_loss_value(std::span<const ExampleTraces> batch, math::Beta beta);

}  // namespace prefopt
