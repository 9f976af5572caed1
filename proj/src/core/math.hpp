#pragma once

#include <cmath>

#include "core/errors.hpp"

namespace prefopt::math {

// Scaling factor applied to log probability ratios. Strictly positive.
class Beta {
  public:
    Beta() : value_(0.1) {}
    explicit Beta(double v) : value_(v) {
        if (!(v > 0.0) || !std::isfinite(v)) throw_invalid("beta must be a positive finite real");
    }
    double value() const { return value_; }

  private:
    double value_;
};

// A (chosen, rejected) pair of policy/reference probability ratios.
// Stored in log space; the positive-real accessors convert at the boundary.
class RatioPoint {
  public:
    RatioPoint(double x1, double x2);
    static RatioPoint from_logs(double log_x1, double log_x2);

    double x1() const { return std::exp(lx1_); }
    double x2() const { return std::exp(lx2_); }
    double log_x1() const { return lx1_; }
    double log_x2() const { return lx2_; }

  private:
    RatioPoint() = default;
    double lx1_ = 0.0, lx2_ = 0.0;
};

// Full-sequence ratios (x1, x2) together with the guided sub-sequence
// ratios (y1, y2). p1, p2 are the residual factors with x = p * y, and
// z = y1 / y2.
class PilotPoint {
  public:
    PilotPoint(double x1, double x2, double y1, double y2);
    static PilotPoint from_logs(double log_x1, double log_x2, double log_y1, double log_y2);

    double x1() const { return std::exp(lx1_); }
    double x2() const { return std::exp(lx2_); }
    double y1() const { return std::exp(ly1_); }
    double y2() const { return std::exp(ly2_); }
    double p1() const { return std::exp(log_p1()); }
    double p2() const { return std::exp(log_p2()); }
    double z() const { return std::exp(log_z()); }

    double log_x1() const { return lx1_; }
    double log_x2() const { return lx2_; }
    double log_y1() const { return ly1_; }
    double log_y2() const { return ly2_; }
    double log_p1() const { return lx1_ - ly1_; }
    double log_p2() const { return lx2_ - ly2_; }
    double log_z() const { return ly1_ - ly2_; }

  private:
    PilotPoint() = default;
    double lx1_ = 0.0, lx2_ = 0.0, ly1_ = 0.0, ly2_ = 0.0;
};

// log(1/(1+exp(-x))), overflow-free over the full double range.
double log_sigmoid(double x);

// 1/(1+exp(-x)), computed without overflow.
double sigmoid(double x);

// log(exp(a) + exp(b)) without overflow.
double log_add_exp(double a, double b);

// log(1 + exp(x)) without overflow.
double log1p_exp(double x);

// d l/d x1 = beta * x2^beta / (x1 * (x1^beta + x2^beta)); strictly positive.
double dpo_partial_x1(const RatioPoint& p, Beta beta);

// d l/d x2 = -beta * x2^(beta-1) / (x1^beta + x2^beta); strictly negative.
double dpo_partial_x2(const RatioPoint& p, Beta beta);

// Chosen-side partial of the guided loss; x2 replaced by the guide ratio y2.
double pilot_partial_x1(double x1, double y2, Beta beta);

// Rejected-side partial of the guided loss; x1 replaced by the guide ratio y1.
double pilot_partial_x2(double x2, double y1, Beta beta);

// Multiplicative factor by which guidance rescales the chosen/rejected
// gradient ratio: f(z) = (1/p2^beta) * (z^beta + p2^beta) / (p1^beta z^beta + 1).
double f_z(double z, double p1, double p2, Beta beta);

// |d l/d x1| / |d l/d x2| for the plain preference loss: x2/x1.
double dpo_grad_ratio(const RatioPoint& p);

// Same ratio for the guided loss: (x2/x1) * f(z).
double pilot_grad_ratio(const PilotPoint& q, Beta beta);

// log(x1^beta / (x1^beta + x2^beta)); the finite-difference oracle target.
double l_dpo_surrogate(const RatioPoint& p, Beta beta);

// log(x1^b/(x1^b+y2^b)) + log(y1^b/(y1^b+x2^b)); oracle target for the
// guided partials.
double l_pilot_surrogate(const PilotPoint& q, Beta beta);

// Log-space primitives used by the loss modules (arguments are log ratios).
double l_dpo_surrogate_from_logs(double log_x1, double log_x2, Beta beta);
double l_pilot_surrogate_from_logs(double log_x1, double log_x2, double log_y1, double log_y2,
                                   Beta beta);

}  // namespace prefopt::math
