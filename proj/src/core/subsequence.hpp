#pragma once

#include <cstdint>

#include "core/model.hpp"

namespace prefopt {

// Whether the chosen and rejected windows share one random start index.
enum class SpanMode { SameIndex, DifferentIndex };

// Contiguous guide windows over the chosen and rejected responses. Window
// lengths are floor(r * l_c) clamped to at least 1, where l_c is the shorter
// of the two response lengths.
struct SpanSpec {
    std::size_t start_w = 0;
    std::size_t len_w = 0;
    std::size_t start_l = 0;
    std::size_t len_l = 0;
    SpanMode mode = SpanMode::DifferentIndex;
    double r1 = 1.0;
    double r2 = 1.0;
};

SpanSpec build_spans(std::size_t chosen_len, std::size_t rejected_len, double r1, double r2,
                     SpanMode mode, std::uint64_t seed);

// log(policy(window)/ref(window)): the guide term consumed (stop-gradient)
// by the guided loss.
double pilot_log_ratio(const SequenceTrace& policy_trace, const SequenceTrace& ref_trace,
                       std::size_t start, std::size_t len);

}  // namespace prefopt
