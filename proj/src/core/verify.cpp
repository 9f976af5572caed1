#include "core/verify.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "core/autodiff.hpp"
#include "core/losses.hpp"
#include "core/math.hpp"
#include "core/model.hpp"
#include "core/subsequence.hpp"
#include "core/trainer.hpp"

namespace prefopt::verify {

namespace {

using math::Beta;

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

double central_diff(const std::function<double(double)>& f, double x) {
    const double h = 1e-6 * std::max(1.0, std::abs(x));
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

std::vector<double> grid_values() {
    std::vector<double> g;
    for (int i = 1; i <= 30; ++i) g.push_back(0.05 * i);
    return g;
}

std::vector<double> coarse_values() { return {0.05, 0.3, 0.55, 0.8, 1.05, 1.3}; }

const Beta kBetas[3] = {Beta(0.05), Beta(0.1), Beta(0.5)};

std::string fmt_err(double worst) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "max rel err %.3g", worst);
    return buf;
}

CheckResult check_dpo_partials_fd() {
    CheckResult r{"plain-loss partials match finite differences", true, ""};
    double worst = 0.0;
    for (const Beta beta : kBetas) {
        for (double x1 : grid_values()) {
            for (double x2 : grid_values()) {
                const math::RatioPoint p(x1, x2);
                const double fd1 = central_diff(
                    [&](double v) { return math::l_dpo_surrogate({v, x2}, beta); }, x1);
                const double fd2 = central_diff(
                    [&](double v) { return math::l_dpo_surrogate({x1, v}, beta); }, x2);
                worst = std::max(worst, rel_err(math::dpo_partial_x1(p, beta), fd1));
                worst = std::max(worst, rel_err(math::dpo_partial_x2(p, beta), fd2));
            }
        }
    }
    r.passed = worst < 1e-6;
    r.detail = fmt_err(worst);
    return r;
}

CheckResult check_pilot_partials_fd() {
    CheckResult r{"guided-loss partials match finite differences", true, ""};
    double worst = 0.0;
    for (const Beta beta : kBetas) {
        for (double x1 : grid_values()) {
            for (double x2 : grid_values()) {
                for (double y1 : coarse_values()) {
                    for (double y2 : coarse_values()) {
                        const double fd1 = central_diff(
                            [&](double v) {
                                return math::l_pilot_surrogate({v, x2, y1, y2}, beta);
                            },
                            x1);
                        const double fd2 = central_diff(
                            [&](double v) {
                                return math::l_pilot_surrogate({x1, v, y1, y2}, beta);
                            },
                            x2);
                        worst = std::max(worst, rel_err(math::pilot_partial_x1(x1, y2, beta), fd1));
                        worst = std::max(worst, rel_err(math::pilot_partial_x2(x2, y1, beta), fd2));
                    }
                }
            }
        }
    }
    r.passed = worst < 1e-6;
    r.detail = fmt_err(worst);
    return r;
}

CheckResult check_ratio_identities() {
    CheckResult r{"gradient-ratio identities", true, ""};
    double worst = 0.0;
    for (const Beta beta : kBetas) {
        for (double x1 : grid_values()) {
            for (double x2 : grid_values()) {
                const math::RatioPoint p(x1, x2);
                const double direct = std::abs(math::dpo_partial_x1(p, beta) /
                                               math::dpo_partial_x2(p, beta));
                worst = std::max(worst, std::abs(direct - math::dpo_grad_ratio(p)) /
                                            std::max(1.0, direct));
                for (double y1 : coarse_values()) {
                    for (double y2 : coarse_values()) {
                        const math::PilotPoint q(x1, x2, y1, y2);
                        const double dp = std::abs(math::pilot_partial_x1(x1, y2, beta) /
                                                   math::pilot_partial_x2(x2, y1, beta));
                        worst = std::max(worst, std::abs(dp - math::pilot_grad_ratio(q, beta)) /
                                                    std::max(1.0, dp));
                    }
                }
            }
        }
    }
    r.passed = worst < 1e-10;
    r.detail = fmt_err(worst);
    return r;
}

CheckResult check_monotonicity() {
    CheckResult r{"guided partials monotone in the guide ratios", true, ""};
    int violations = 0;
    const Beta beta(0.1);
    for (double x : {0.2, 0.5, 1.0, 1.4}) {
        double prev_chosen = -1.0;
        double prev_rejected = -1.0;
        for (int i = 0; i < 100; ++i) {
            const double y = 0.05 + (2.0 - 0.05) * i / 99.0;
            const double chosen = math::pilot_partial_x1(x, y, beta);
            const double rejected = std::abs(math::pilot_partial_x2(x, y, beta));
            if (i > 0 && !(chosen > prev_chosen)) ++violations;
            if (i > 0 && !(rejected < prev_rejected)) ++violations;
            prev_chosen = chosen;
            prev_rejected = rejected;
        }
    }
    r.passed = violations == 0;
    r.detail = std::to_string(violations) + " violations";
    return r;
}

CheckResult check_fz() {
    CheckResult r{"ratio factor f(z): unit value, sign law, amplification region", true, ""};
    const Beta beta(0.1);
    double worst_unit = 0.0;
    int sign_violations = 0;
    int region_violations = 0;
    for (double z : {0.1, 0.5, 1.0, 2.0, 7.5}) {
        for (double p : {0.25, 0.7, 1.0, 1.6}) {
            worst_unit = std::max(worst_unit, std::abs(math::f_z(z, 1.0, 1.0, beta) - 1.0));
            (void)p;
        }
    }
    const std::pair<double, double> residuals[4] = {{0.5, 0.5}, {0.9, 0.8}, {1.2, 1.1}, {2.0, 1.5}};
    for (auto [p1, p2] : residuals) {
        const double law = 1.0 - std::pow(p1 * p2, beta.value());
        double prev = 0.0;
        for (int i = 0; i < 200; ++i) {
            const double z = 0.1 + (10.0 - 0.1) * i / 199.0;
            const double f = math::f_z(z, p1, p2, beta);
            if (i > 0) {
                const double diff = f - prev;
                if (law > 0 && !(diff > 0)) ++sign_violations;
                if (law < 0 && !(diff < 0)) ++sign_violations;
            }
            if (p1 * p2 < 1.0 && !(f > 1.0)) ++region_violations;
            prev = f;
        }
    }
    r.passed = worst_unit < 1e-12 && sign_violations == 0 && region_violations == 0;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "unit err %.3g, %d sign / %d region violations", worst_unit,
                  sign_violations, region_violations);
    r.detail = buf;
    return r;
}

CheckResult check_chosen_amplification() {
    CheckResult r{"chosen partial amplified when the guide exceeds the rejected ratio", true, ""};
    int violations = 0;
    for (const Beta beta : kBetas) {
        for (double x1 : coarse_values()) {
            for (double x2 : coarse_values()) {
                for (double extra : {0.01, 0.1, 0.5, 1.0}) {
                    const double y2 = x2 + extra;
                    if (!(math::pilot_partial_x1(x1, y2, beta) >
                          math::dpo_partial_x1({x1, x2}, beta)))
                        ++violations;
                }
            }
        }
    }
    r.passed = violations == 0;
    r.detail = std::to_string(violations) + " violations";
    return r;
}

ModelConfig tiny_cfg() {
    ModelConfig c;
    c.vocab_size = 16;
    c.embed_dim = 8;
    c.n_layers = 1;
    c.n_heads = 2;
    c.max_context = 24;
    c.mlp_mult = 2;
    c.bos_id = 0;
    c.eos_id = -1;
    return c;
}

struct PairData {
    std::vector<int> prompt, chosen, rejected;
};

std::vector<PairData> tiny_pairs() {
    return {
        {{1, 2, 3}, {4, 5, 6, 7}, {8, 9, 10}},
        {{3, 1}, {11, 12, 13}, {14, 15, 2, 6}},
    };
}

double model_loss(const ModelConfig& cfg, std::span<const double> flat, const ModelParams& ref,
                  Method method, const std::vector<PairData>& pairs,
                  const std::vector<SpanSpec>& spans, Beta beta,
                  std::vector<double>* grad_out) {
    ModelParams params(cfg, 0);
    std::copy(flat.begin(), flat.end(), params.flat().begin());

    ad::Tape tape;
    BoundParams bound = bind_params(tape, params);
    std::vector<BatchItem> items(pairs.size());
    std::vector<SequenceTrace> ref_traces(2 * pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        ref_traces[2 * i] = seq_logprob(ref, pairs[i].prompt, pairs[i].chosen);
        ref_traces[2 * i + 1] = seq_logprob(ref, pairs[i].prompt, pairs[i].rejected);
        items[i].policy_chosen =
            response_logprob_graph(tape, bound, cfg, pairs[i].prompt, pairs[i].chosen);
        items[i].policy_rejected =
            response_logprob_graph(tape, bound, cfg, pairs[i].prompt, pairs[i].rejected);
        items[i].ref_chosen = &ref_traces[2 * i];
        items[i].ref_rejected = &ref_traces[2 * i + 1];
        items[i].span = spans[i];
    }
    LossOutput out = (method == Method::Dpo) ? dpo_loss(tape, items, beta)
                                             : sgdpo_loss(tape, items, beta);
    if (grad_out != nullptr) {
        tape.backward(out.loss);
        *grad_out = collect_param_grad(tape, bound, params);
    }
    return tape.scalar_value(out.loss);
}

CheckResult check_model_gradients() {
    CheckResult r{"model-level gradient check (plain and guided losses)", true, ""};
    const ModelConfig cfg = tiny_cfg();
    const ModelParams policy(cfg, 11);
    const ModelParams ref = clone_frozen(ModelParams(cfg, 23));
    const auto pairs = tiny_pairs();
    const Beta beta(0.1);
    std::vector<SpanSpec> spans;
    for (const auto& p : pairs)
        spans.push_back(build_spans(p.chosen.size(), p.rejected.size(), 0.7, 0.7,
                                    SpanMode::DifferentIndex, 99));

    double worst = 0.0;
    for (Method method : {Method::Dpo, Method::Sgdpo}) {
        auto value_fn = [&](std::span<const double> flat) {
            return model_loss(cfg, flat, ref, method, pairs, spans, beta, nullptr);
        };
        auto grad_fn = [&](std::span<const double> flat) {
            std::vector<double> g;
            model_loss(cfg, flat, ref, method, pairs, spans, beta, &g);
            return g;
        };
        ad::GradCheckOptions opt;
        opt.max_coords = 96;
        opt.seed = 5;
        auto report = ad::grad_check(value_fn, grad_fn, policy.flat(), 1e-6, opt);
        if (!report.pass) r.passed = false;
        worst = std::max(worst, report.max_rel_err);
    }
    r.detail = fmt_err(worst);
    return r;
}

CheckResult check_equivalence_limit() {
    CheckResult r{"full-window same-index guidance halves the plain gradient", true, ""};
    const ModelConfig cfg = tiny_cfg();
    const ModelParams policy(cfg, 31);
    const ModelParams ref = clone_frozen(ModelParams(cfg, 47));
    // Equal-length pair, full windows at a shared index.
    std::vector<PairData> pairs = {{{1, 2}, {4, 5, 6, 7}, {8, 9, 10, 11}}};
    std::vector<SpanSpec> spans = {
        build_spans(4, 4, 1.0, 1.0, SpanMode::SameIndex, 1)};

    std::vector<double> g_dpo, g_sg;
    model_loss(cfg, policy.flat(), ref, Method::Dpo, pairs, spans, Beta(0.1), &g_dpo);
    model_loss(cfg, policy.flat(), ref, Method::Sgdpo, pairs, spans, Beta(0.1), &g_sg);
    double worst = 0.0;
    for (std::size_t i = 0; i < g_dpo.size(); ++i)
        worst = std::max(worst, std::abs(g_sg[i] - 0.5 * g_dpo[i]));
    r.passed = worst < 1e-10;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "max abs diff %.3g", worst);
    r.detail = buf;
    return r;
}

}  // namespace

std::vector<CheckResult> run_all() {
    std::vector<CheckResult> results;
    results.push_back(check_dpo_partials_fd());
    results.push_back(check_pilot_partials_fd());
    results.push_back(check_ratio_identities());
    results.push_back(check_monotonicity());
    results.push_back(check_fz());
    results.push_back(check_chosen_amplification());
    results.push_back(check_model_gradients());
    results.push_back(check_equivalence_limit());
    return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
    for (const auto& r : results)
        if (!r.passed) return false;
    return true;
}

}  // namespace prefopt::verify
