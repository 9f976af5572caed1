#include "core/losses.hpp"

#include <cmath>
#include <string>

namespace prefopt {

namespace {

bool trace_finite(const SequenceTrace& t) {
    if (!std::isfinite(t.total_logprob)) return false;
    for (double v : t.per_token_logprob)
        if (!std::isfinite(v)) return false;
    return true;
}

void check_batch_item(const BatchItem& item, std::size_t index) {
    if (item.ref_chosen == nullptr || item.ref_rejected == nullptr)
        throw_invalid("batch item " + std::to_string(index) + " has no reference traces");
    if (!trace_finite(*item.ref_chosen) || !trace_finite(*item.ref_rejected))
        throw_training("non-finite trace values in example " + std::to_string(index));
}

void check_traces(const ExampleTraces& t, std::size_t index) {
    if (t.policy_chosen.tokens != t.ref_chosen.tokens ||
        t.policy_rejected.tokens != t.ref_rejected.tokens)
        throw_invalid("example " + std::to_string(index) +
                      ": policy and reference traces cover different token sequences");
    if (!trace_finite(t.policy_chosen) || !trace_finite(t.policy_rejected) ||
        !trace_finite(t.ref_chosen) || !trace_finite(t.ref_rejected))
        throw_training("non-finite trace values in example " + std::to_string(index));
}

// Chained left-to-right mean of per-example scalars.
ad::Tape::Var ordered_mean(ad::Tape& tape, const std::vector<ad::Tape::Var>& terms) {
    ad::Tape::Var acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
    return tape.scale(acc, 1.0 / static_cast<double>(terms.size()));
}

// Differentiable log x = sum(policy per-token) - ref total.
ad::Tape::Var log_ratio_node(ad::Tape& tape, ad::Tape::Var policy_logprobs, double ref_total) {
    return tape.add_scalar(tape.sum_all(policy_logprobs), -ref_total);
}

// Stop-gradient guide window ratio of the current policy.
ad::Tape::Var guide_ratio_node(ad::Tape& tape, ad::Tape::Var policy_logprobs,
                               const SequenceTrace& ref_trace, std::size_t start,
                               std::size_t len) {
    const std::int64_t s = static_cast<std::int64_t>(start);
    const std::int64_t l = static_cast<std::int64_t>(len);
    ad::Tape::Var window = tape.sum_all(tape.slice_cols(policy_logprobs, s, s + l));
    return tape.add_scalar(tape.stop_gradient(window), -span_logprob(ref_trace, start, len));
}

}  // namespace

RewardQuad reward_quad(const ExampleTraces& traces) {
    check_traces(traces, 0);
    const SpanSpec& s = traces.span;
    RewardQuad q;
    q.log_x1 = traces.policy_chosen.total_logprob - traces.ref_chosen.total_logprob;
    q.log_x2 = traces.policy_rejected.total_logprob - traces.ref_rejected.total_logprob;
    q.log_y1 = pilot_log_ratio(traces.policy_chosen, traces.ref_chosen, s.start_w, s.len_w);
    q.log_y2 = pilot_log_ratio(traces.policy_rejected, traces.ref_rejected, s.start_l, s.len_l);
    return q;
}

double bt_preference_prob(double reward_w, double reward_l) {
    if (!std::isfinite(reward_w) || !std::isfinite(reward_l))
        throw_invalid("bt_preference_prob: rewards must be finite");
    return std::exp(math::log_sigmoid(reward_w - reward_l));
}

LossOutput dpo_loss(ad::Tape& tape, std::span<const BatchItem> batch, math::Beta beta) {
    if (batch.empty()) throw_invalid("dpo_loss: empty batch");
    const double b = beta.value();
    LossOutput out;
    std::vector<ad::Tape::Var> terms;
    terms.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const BatchItem& item = batch[i];
        check_batch_item(item, i);
        ad::Tape::Var lx1 = log_ratio_node(tape, item.policy_chosen, item.ref_chosen->total_logprob);
        ad::Tape::Var lx2 =
            log_ratio_node(tape, item.policy_rejected, item.ref_rejected->total_logprob);
        ad::Tape::Var delta = tape.sub(tape.scale(lx1, b), tape.scale(lx2, b));
        terms.push_back(tape.scale(tape.log_sigmoid(delta), -1.0));

        ExampleStats st;
        st.chosen_reward = b * tape.scalar_value(lx1);
        st.rejected_reward = b * tape.scalar_value(lx2);
        st.margin = st.chosen_reward - st.rejected_reward;
        out.per_example.push_back(st);
    }
    out.loss = ordered_mean(tape, terms);
    if (!std::isfinite(tape.scalar_value(out.loss))) throw_training("non-finite preference loss");
    return out;
}

LossOutput sgdpo_loss(ad::Tape& tape, std::span<const BatchItem> batch, math::Beta beta,
                      PilotSource source) {
    if (batch.empty()) throw_invalid("sgdpo_loss: empty batch");
    (void)source;  // CurrentPolicy is the only variant
    const double b = beta.value();
    LossOutput out;
    std::vector<ad::Tape::Var> terms;
    terms.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const BatchItem& item = batch[i];
        check_batch_item(item, i);
        const SpanSpec& sp = item.span;
        ad::Tape::Var lx1 = log_ratio_node(tape, item.policy_chosen, item.ref_chosen->total_logprob);
        ad::Tape::Var lx2 =
            log_ratio_node(tape, item.policy_rejected, item.ref_rejected->total_logprob);
        ad::Tape::Var ly1 =
            guide_ratio_node(tape, item.policy_chosen, *item.ref_chosen, sp.start_w, sp.len_w);
        ad::Tape::Var ly2 =
            guide_ratio_node(tape, item.policy_rejected, *item.ref_rejected, sp.start_l, sp.len_l);

        ad::Tape::Var t1 = tape.log_sigmoid(tape.sub(tape.scale(lx1, b), tape.scale(ly2, b)));
        ad::Tape::Var t2 = tape.log_sigmoid(tape.sub(tape.scale(ly1, b), tape.scale(lx2, b)));
        terms.push_back(tape.scale(tape.add(t1, t2), -0.5));

        ExampleStats st;
        st.chosen_reward = b * tape.scalar_value(lx1);
        st.rejected_reward = b * tape.scalar_value(lx2);
        st.margin = st.chosen_reward - st.rejected_reward;
        out.per_example.push_back(st);
    }
    out.loss = ordered_mean(tape, terms);
    if (!std::isfinite(tape.scalar_value(out.loss))) throw_training("non-finite preference loss");
    return out;
}

double dpo_loss_value(std::span<const ExampleTraces> batch, math::Beta beta) {
    if (batch.empty()) throw_invalid("dpo_loss_value: empty batch");
    double acc = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        check_traces(batch[i], i);
        const RewardQuad q = reward_quad(batch[i]);
        acc += -math::l_dpo_surrogate_from_logs(q.log_x1, q.log_x2, beta);
    }
    return acc / static_cast<double>(batch.size());
}

double sgdpo_loss_value(std::span<const ExampleTraces> batch, math::Beta beta) {
    if (batch.empty()) throw_invalid("sgdpo_loss_value: empty batch");
    double acc = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        check_traces(batch[i], i);
        const RewardQuad q = reward_quad(batch[i]);
        acc += -0.5 * math::l_pilot_surrogate_from_logs(q.log_x1, q.log_x2, q.log_y1, q.log_y2,
                                                        beta);
    }
    return acc / static_cast<double>(batch.size());
}

}  // namespace prefopt
