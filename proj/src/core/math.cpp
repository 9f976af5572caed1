#include "core/math.hpp"

namespace prefopt::math {

namespace {

double checked_log(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw_invalid(std::string(name) + " must be a positive finite real");
    }
    return std::log(v);
}

void check_finite(double v, const char* name) {
    if (!std::isfinite(v)) throw_invalid(std::string(name) + " must be finite");
}

// beta * w^beta / (x * (x^beta + w^beta)) evaluated through logs. Shared by
// the plain and guided chosen-side partials so that substituting w == x2
// reproduces the plain value bit for bit.
double chosen_partial(double log_x, double log_w, double beta) {
    return beta * std::exp(-log_x) * sigmoid(beta * (log_w - log_x));
}

// -beta * x^(beta-1) / (w^beta + x^beta), same sharing for the rejected side.
double rejected_partial(double log_x, double log_w, double beta) {
    return -beta * std::exp(-log_x) * sigmoid(beta * (log_x - log_w));
}

}  // namespace

RatioPoint::RatioPoint(double x1, double x2) {
    lx1_ = checked_log(x1, "x1");
    lx2_ = checked_log(x2, "x2");
}

RatioPoint RatioPoint::from_logs(double log_x1, double log_x2) {
    check_finite(log_x1, "log_x1");
    check_finite(log_x2, "log_x2");
    RatioPoint p;
    p.lx1_ = log_x1;
    p.lx2_ = log_x2;
    return p;
}

PilotPoint::PilotPoint(double x1, double x2, double y1, double y2) {
    lx1_ = checked_log(x1, "x1");
    lx2_ = checked_log(x2, "x2");
    ly1_ = checked_log(y1, "y1");
    ly2_ = checked_log(y2, "y2");
}

PilotPoint PilotPoint::from_logs(double log_x1, double log_x2, double log_y1, double log_y2) {
    check_finite(log_x1, "log_x1");
    check_finite(log_x2, "log_x2");
    check_finite(log_y1, "log_y1");
    check_finite(log_y2, "log_y2");
    PilotPoint q;
    q.lx1_ = log_x1;
    q.lx2_ = log_x2;
    q.ly1_ = log_y1;
    q.ly2_ = log_y2;
    return q;
}

double log_sigmoid(double x) {
    if (!std::isfinite(x)) throw_invalid("log_sigmoid: input must be finite");
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

double log1p_exp(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double log_add_exp(double a, double b) {
    if (a >= b) return a + log1p_exp(b - a);
    return b + log1p_exp(a - b);
}

double dpo_partial_x1(const RatioPoint& p, Beta beta) {
    return chosen_partial(p.log_x1(), p.log_x2(), beta.value());
}

double dpo_partial_x2(const RatioPoint& p, Beta beta) {
    return rejected_partial(p.log_x2(), p.log_x1(), beta.value());
}

double pilot_partial_x1(double x1, double y2, Beta beta) {
    return chosen_partial(checked_log(x1, "x1"), checked_log(y2, "y2"), beta.value());
}

double pilot_partial_x2(double x2, double y1, Beta beta) {
    return rejected_partial(checked_log(x2, "x2"), checked_log(y1, "y1"), beta.value());
}

double f_z(double z, double p1, double p2, Beta beta) {
    double b = beta.value();
    double az = b * checked_log(z, "z");
    double a1 = b * checked_log(p1, "p1");
    double a2 = b * checked_log(p2, "p2");
    // log f = -a2 + log(e^az + e^a2) - log(e^(az+a1) + 1)
    return std::exp(-a2 + log_add_exp(az, a2) - log1p_exp(az + a1));
}

double dpo_grad_ratio(const RatioPoint& p) { return std::exp(p.log_x2() - p.log_x1()); }

double pilot_grad_ratio(const PilotPoint& q, Beta beta) {
    return std::exp(q.log_x2() - q.log_x1()) * f_z(q.z(), q.p1(), q.p2(), beta);
}

double l_dpo_surrogate(const RatioPoint& p, Beta beta) {
    return l_dpo_surrogate_from_logs(p.log_x1(), p.log_x2(), beta);
}

double l_pilot_surrogate(const PilotPoint& q, Beta beta) {
    return l_pilot_surrogate_from_logs(q.log_x1(), q.log_x2(), q.log_y1(), q.log_y2(), beta);
}

double l_dpo_surrogate_from_logs(double log_x1, double log_x2, Beta beta) {
    return log_sigmoid(beta.value() * (log_x1 - log_x2));
}

double l_pilot_surrogate_from_logs(double log_x1, double log_x2, double log_y1, double log_y2,
                                   Beta beta) {
    double b = beta.value();
    return log_sigmoid(b * (log_x1 - log_y2)) + log_sigmoid(b * (log_y1 - log_x2));
}

}  // namespace prefopt::math
