#include "core/subsequence.hpp"

#include <algorithm>
#include <cmath>

#include "core/rng.hpp"

namespace prefopt {

namespace {

std::size_t span_length(double r, std::size_t l_c) {
    const double raw = std::floor(r * static_cast<double>(l_c));
    return std::max<std::size_t>(1, static_cast<std::size_t>(raw));
}

}  // namespace

SpanSpec build_spans(std::size_t chosen_len, std::size_t rejected_len, double r1, double r2,
                     SpanMode mode, std::uint64_t seed) {
    if (chosen_len < 1 || rejected_len < 1) throw_invalid("response lengths must be at least 1");
    if (!(r1 > 0.0 && r1 <= 1.0) || !(r2 > 0.0 && r2 <= 1.0))
        throw_config("r1 and r2 must lie in (0, 1]");

    const std::size_t l_c = std::min(chosen_len, rejected_len);
    SpanSpec spec;
    spec.mode = mode;
    spec.r1 = r1;
    spec.r2 = r2;
    spec.len_w = span_length(r1, l_c);
    spec.len_l = span_length(r2, l_c);

    Rng rng(seed);
    if (mode == SpanMode::SameIndex) {
        // Shared start drawn from the intersection of both valid ranges.
        const std::size_t hi =
            std::min(chosen_len - spec.len_w, rejected_len - spec.len_l);
        const std::size_t start = static_cast<std::size_t>(rng.bounded(hi + 1));
        spec.start_w = start;
        spec.start_l = start;
    } else {
        spec.start_w = static_cast<std::size_t>(rng.bounded(chosen_len - spec.len_w + 1));
        spec.start_l = static_cast<std::size_t>(rng.bounded(rejected_len - spec.len_l + 1));
    }
    return spec;
}

double pilot_log_ratio(const SequenceTrace& policy_trace, const SequenceTrace& ref_trace,
                       std::size_t start, std::size_t len) {
    if (policy_trace.per_token_logprob.size() != ref_trace.per_token_logprob.size())
        throw_invalid("pilot_log_ratio: traces cover different responses");
    return span_logprob(policy_trace, start, len) - span_logprob(ref_trace, start, len);
}

}  // namespace prefopt
