#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace prefopt::ad {

// Define-by-run reverse-mode tape. Builder calls evaluate eagerly; backward()
// walks the recorded nodes in reverse creation order, which is a valid
// topological order by construction. All reductions run left to right so
// repeated runs are bit-identical.
class Tape {
  public:
    using Var = std::int32_t;

    Var leaf(Tensor value);
    Var constant(Tensor value);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
    Var exp(Var a);
    Var log(Var a);
    Var pow_scalar(Var a, double p);
    Var tanh(Var a);
    Var log_sigmoid(Var a);
    Var softmax_rows(Var a);
    Var log_softmax_rows(Var a);
    // table [V,D] + ids [T] -> [T,D]
    Var gather_rows(Var table, std::span<const int> ids);
    // m [R,C] + (rows[k], cols[k]) -> [K]
    Var select_rc(Var m, std::span<const int> rows, std::span<const int> cols);
    Var sum_all(Var a);
    Var mean_all(Var a);
    // [T,D] -> [T], mean over the last dimension
    Var row_mean(Var a);
    // y[t,d] = x[t,d] * s[t]
    Var rows_scale(Var x, Var s);
    // y[t,d] = x[t,d] * g[d]
    Var cols_scale(Var x, Var g);
    // columns [c0, c1) of a rank-1 or rank-2 tensor
    Var slice_cols(Var a, std::int64_t c0, std::int64_t c1);
    // place a [T,w] block into columns [c0, c0+w) of a [T,total] zero tensor
    Var pad_cols(Var a, std::int64_t c0, std::int64_t total);
    // forward identity, zero gradient through it
    Var stop_gradient(Var a);

    const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v)].value; }
    double scalar_value(Var v) const;

    // Seeds the adjoint of a scalar root with 1 and accumulates gradients for
    // every node. Gradients of earlier backward calls are cleared.
    void backward(Var root);
    const Tensor& grad(Var v) const;

    std::size_t size() const { return nodes_.size(); }

  private:
    enum class Op : std::uint8_t {
        Leaf,
        Constant,
        Add,
        Mul,
        Scale,
        AddScalar,
        Matmul,
        Exp,
        Log,
        PowScalar,
        Tanh,
        LogSigmoid,
        SoftmaxRows,
        LogSoftmaxRows,
        GatherRows,
        SelectRC,
        SumAll,
        MeanAll,
        RowMean,
        RowsScale,
        ColsScale,
        SliceCols,
        PadCols,
        StopGrad,
    };

    struct Node {
        Op op;
        Var in0 = -1;
        Var in1 = -1;
        Tensor value;
        Tensor grad;
        double scalar = 0.0;
        std::int64_t i0 = 0;
        std::int64_t i1 = 0;
        std::vector<int> idx;
        std::vector<int> idx2;
        bool trans_a = false;
        bool trans_b = false;
    };

    Var push(Node n);
    const Tensor& val(Var v) const { return nodes_[static_cast<std::size_t>(v)].value; }
    void check_var(Var v) const;

    std::vector<Node> nodes_;
    bool has_grads_ = false;
};

struct GradCheckOptions {
    std::size_t max_coords = 64;   // sampled coordinates (all, if fewer params)
    std::uint64_t seed = 17;
    double step_scale = 1e-6;      // h = step_scale * max(1, |x|)
};

struct GradCheckCoord {
    std::size_t index;
    double analytic;
    double numeric;
    double rel_err;
};

struct GradCheckReport {
    bool pass = false;
    bool nonfinite = false;
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    std::string message;
    std::vector<GradCheckCoord> coords;
};

// Central-difference check of grad_fn against value_fn over a sampled subset
// of coordinates. Relative error uses max(1, |fd|, |analytic|) in the
// denominator so near-zero gradients are judged on absolute error.
GradCheckReport grad_check(const std::function<double(std::span<const double>)>& value_fn,
                           const std::function<std::vector<double>(std::span<const double>)>& grad_fn,
                           std::span<const double> params, double tol,
                           const GradCheckOptions& opt = {});

}  // namespace prefopt::ad
