#include "core/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "core/math.hpp"
#include "core/rng.hpp"

namespace prefopt::ad {

namespace {

// out (+)= op(a) * op(b) with optional transposes.
void matmul_into(const Tensor& a, bool ta, const Tensor& b, bool tb, Tensor& out,
                 bool accumulate) {
    const std::int64_t m = ta ? a.cols() : a.rows();
    const std::int64_t k = ta ? a.rows() : a.cols();
    const std::int64_t kb = tb ? b.cols() : b.rows();
    const std::int64_t n = tb ? b.rows() : b.cols();
    if (k != kb) throw_invalid("matmul: inner dimensions do not match");
    if (out.rows() != m || out.cols() != n) throw_invalid("matmul: bad output shape");
    if (!accumulate) std::fill(out.data().begin(), out.data().end(), 0.0);

    if (!ta && !tb) {
        for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t kk = 0; kk < k; ++kk) {
                const double av = a.at(i, kk);
                if (av == 0.0) continue;
                for (std::int64_t j = 0; j < n; ++j) out.at(i, j) += av * b.at(kk, j);
            }
        }
    } else if (!ta && tb) {
        for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::int64_t kk = 0; kk < k; ++kk) s += a.at(i, kk) * b.at(j, kk);
                out.at(i, j) += s;
            }
        }
    } else if (ta && !tb) {
        for (std::int64_t kk = 0; kk < k; ++kk) {
            for (std::int64_t i = 0; i < m; ++i) {
                const double av = a.at(kk, i);
                if (av == 0.0) continue;
                for (std::int64_t j = 0; j < n; ++j) out.at(i, j) += av * b.at(kk, j);
            }
        }
    } else {
        for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::int64_t kk = 0; kk < k; ++kk) s += a.at(kk, i) * b.at(j, kk);
                out.at(i, j) += s;
            }
        }
    }
}

}  // namespace

Tape::Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    has_grads_ = false;
    return static_cast<Var>(nodes_.size() - 1);
}

void Tape::check_var(Var v) const {
    if (v < 0 || static_cast<std::size_t>(v) >= nodes_.size()) throw_invalid("unknown tape node");
}

double Tape::scalar_value(Var v) const {
    check_var(v);
    const Tensor& t = val(v);
    if (t.size() != 1) throw_invalid("scalar_value: node is not a scalar");
    return t[0];
}

Tape::Var Tape::leaf(Tensor value) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    return push(std::move(n));
}

Tape::Var Tape::constant(Tensor value) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(value);
    return push(std::move(n));
}

Tape::Var Tape::add(Var a, Var b) {
    check_var(a);
    check_var(b);
    if (!val(a).same_shape(val(b))) throw_invalid("add: shape mismatch");
    Node n;
    n.op = Op::Add;
    n.in0 = a;
    n.in1 = b;
    n.value = Tensor::zeros_like(val(a));
    for (std::int64_t i = 0; i < n.value.size(); ++i)
        n.value[static_cast<std::size_t>(i)] = val(a)[static_cast<std::size_t>(i)] +
                                               val(b)[static_cast<std::size_t>(i)];
    return push(std::move(n));
}

Tape::Var Tape::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Tape::Var Tape::mul(Var a, Var b) {
    check_var(a);
    check_var(b);
    if (!val(a).same_shape(val(b))) throw_invalid("mul: shape mismatch");
    Node n;
    n.op = Op::Mul;
    n.in0 = a;
    n.in1 = b;
    n.value = Tensor::zeros_like(val(a));
    for (std::int64_t i = 0; i < n.value.size(); ++i)
        n.value[static_cast<std::size_t>(i)] = val(a)[static_cast<std::size_t>(i)] *
                                               val(b)[static_cast<std::size_t>(i)];
    return push(std::move(n));
}

Tape::Var Tape::scale(Var a, double c) {
    check_var(a);
    Node n;
    n.op = Op::Scale;
    n.in0 = a;
    n.scalar = c;
    n.value = Tensor::zeros_like(val(a));
    for (std::int64_t i = 0; i < n.value.size(); ++i)
        n.value[static_cast<std::size_t>(i)] = c * val(a)[static_cast<std::size_t>(i)];
    return push(std::move(n));
}

Tape::Var Tape::add_scalar(Var a, double c) {
    check_var(a);
    Node n;
    n.op = Op::AddScalar;
    n.in0 = a;
    n.scalar = c;
    n.value = Tensor::zeros_like(val(a));
    for (std::int64_t i = 0; i < n.value.size(); ++i)
        n.value[static_cast<std::size_t>(i)] = val(a)[static_cast<std::size_t>(i)] + c;
    return push(std::move(n));
}

Tape::Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
    check_var(a);
    check_var(b);
    if (val(a).rank() != 2 || val(b).rank() != 2) throw_invalid("matmul: operands must be rank 2");
    const std::int64_t m = trans_a ? val(a).cols() : val(a).rows();
    const std::int64_t n_cols = trans_b ? val(b).rows() : val(b).cols();
    Node n;
    n.op = Op::Matmul;
    n.in0 = a;
    n.in1 = b;
    n.trans_a = trans_a;
    n.trans_b = trans_b;
    n.value = Tensor({m, n_cols});
    matmul_into(val(a), trans_a, val(b), trans_b, n.value, false);
    return push(std::move(n));
}

Tape::Var Tape::exp(Var a) {
    check_var(a);
    Node n;
    n.op = Op::Exp;
    n.in0 = a;
    n.value = Tensor::zeros_like(val(a));
    for (std::int64_t i = 0; i < n.value.size(); ++i)
        n.value[static_cast<std::size_t>(i)] = std::exp(val(a)[static_cast<std::size_t>(i)]);
    return push(std::move(n));
}

Tape::Var Tape::log(Var a) {
    check_var(a);
    Node n;
    n.op = Op::Log;
    n.in0 = a;
    n.value = Tensor::zeros_like(val(a));
    for (std::int64_t i = 0; i < n.value.size(); ++i)
        n.value[static_cast<std::size_t>(i)] = std::log(val(a)[static_cast<std::size_t>(i)]);
    return push(std::move(n));
}

Tape::Var Tape::pow_scalar(Var a, double p) {
    check_var(a);
    Node n;
    n.op = Op::PowScalar;
    n.in0 = a;
    n.scalar = p;
    n.value = Tensor::zeros_like(val(a));
    for (std::int64_t i = 0; i < n.value.size(); ++i)
        n.value[static_cast<std::size_t>(i)] = std::pow(val(a)[static_cast<std::size_t>(i)], p);
    return push(std::move(n));
}

Tape::Var Tape::tanh(Var a) {
    check_var(a);
    Node n;
    n.op = Op::Tanh;
    n.in0 = a;
    n.value = Tensor::zeros_like(val(a));
    for (std::int64_t i = 0; i < n.value.size(); ++i)
        n.value[static_cast<std::size_t>(i)] = std::tanh(val(a)[static_cast<std::size_t>(i)]);
    return push(std::move(n));
}

Tape::Var Tape::log_sigmoid(Var a) {
    check_var(a);
    Node n;
    n.op = Op::LogSigmoid;
    n.in0 = a;
    n.value = Tensor::zeros_like(val(a));
    for (std::int64_t i = 0; i < n.value.size(); ++i)
        n.value[static_cast<std::size_t>(i)] =
            math::log_sigmoid(val(a)[static_cast<std::size_t>(i)]);
    return push(std::move(n));
}

Tape::Var Tape::softmax_rows(Var a) {
    check_var(a);
    Node n;
    n.op = Op::SoftmaxRows;
    n.in0 = a;
    n.value = Tensor::zeros_like(val(a));
    const Tensor& x = val(a);
    const std::int64_t rows = x.rows(), cols = x.cols();
    for (std::int64_t r = 0; r < rows; ++r) {
        double m = x.at(r, 0);
        for (std::int64_t c = 1; c < cols; ++c) m = std::max(m, x.at(r, c));
        double s = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) {
            const double e = std::exp(x.at(r, c) - m);
            n.value.at(r, c) = e;
            s += e;
        }
        for (std::int64_t c = 0; c < cols; ++c) n.value.at(r, c) /= s;
    }
    return push(std::move(n));
}

Tape::Var Tape::log_softmax_rows(Var a) {
    check_var(a);
    Node n;
    n.op = Op::LogSoftmaxRows;
    n.in0 = a;
    n.value = Tensor::zeros_like(val(a));
    const Tensor& x = val(a);
    const std::int64_t rows = x.rows(), cols = x.cols();
    for (std::int64_t r = 0; r < rows; ++r) {
        double m = x.at(r, 0);
        for (std::int64_t c = 1; c < cols; ++c) m = std::max(m, x.at(r, c));
        double s = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) s += std::exp(x.at(r, c) - m);
        const double lse = m + std::log(s);
        for (std::int64_t c = 0; c < cols; ++c) n.value.at(r, c) = x.at(r, c) - lse;
    }
    return push(std::move(n));
}

Tape::Var Tape::gather_rows(Var table, std::span<const int> ids) {
    check_var(table);
    const Tensor& t = val(table);
    if (t.rank() != 2) throw_invalid("gather_rows: table must be rank 2");
    Node n;
    n.op = Op::GatherRows;
    n.in0 = table;
    n.idx.assign(ids.begin(), ids.end());
    for (int id : n.idx)
        if (id < 0 || id >= t.rows()) throw_invalid("gather_rows: row index out of range");
    n.value = Tensor({static_cast<std::int64_t>(ids.size()), t.cols()});
    for (std::size_t r = 0; r < n.idx.size(); ++r)
        for (std::int64_t c = 0; c < t.cols(); ++c)
            n.value.at(static_cast<std::int64_t>(r), c) = t.at(n.idx[r], c);
    return push(std::move(n));
}

Tape::Var Tape::select_rc(Var m, std::span<const int> rows, std::span<const int> cols) {
    check_var(m);
    const Tensor& t = val(m);
    if (t.rank() != 2) throw_invalid("select_rc: operand must be rank 2");
    if (rows.size() != cols.size() || rows.empty())
        throw_invalid("select_rc: row/col index lists must be nonempty and equal length");
    Node n;
    n.op = Op::SelectRC;
    n.in0 = m;
    n.idx.assign(rows.begin(), rows.end());
    n.idx2.assign(cols.begin(), cols.end());
    n.value = Tensor({static_cast<std::int64_t>(rows.size())});
    for (std::size_t k = 0; k < n.idx.size(); ++k) {
        if (n.idx[k] < 0 || n.idx[k] >= t.rows() || n.idx2[k] < 0 || n.idx2[k] >= t.cols())
            throw_invalid("select_rc: index out of range");
        n.value[k] = t.at(n.idx[k], n.idx2[k]);
    }
    return push(std::move(n));
}

Tape::Var Tape::sum_all(Var a) {
    check_var(a);
    Node n;
    n.op = Op::SumAll;
    n.in0 = a;
    double s = 0.0;
    for (double v : val(a).data()) s += v;
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

Tape::Var Tape::mean_all(Var a) {
    check_var(a);
    Node n;
    n.op = Op::MeanAll;
    n.in0 = a;
    double s = 0.0;
    for (double v : val(a).data()) s += v;
    n.value = Tensor::scalar(s / static_cast<double>(val(a).size()));
    return push(std::move(n));
}

Tape::Var Tape::row_mean(Var a) {
    check_var(a);
    const Tensor& x = val(a);
    if (x.rank() != 2) throw_invalid("row_mean: operand must be rank 2");
    Node n;
    n.op = Op::RowMean;
    n.in0 = a;
    n.value = Tensor({x.rows()});
    for (std::int64_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (std::int64_t c = 0; c < x.cols(); ++c) s += x.at(r, c);
        n.value[static_cast<std::size_t>(r)] = s / static_cast<double>(x.cols());
    }
    return push(std::move(n));
}

Tape::Var Tape::rows_scale(Var x, Var s) {
    check_var(x);
    check_var(s);
    const Tensor& xv = val(x);
    const Tensor& sv = val(s);
    if (xv.rank() != 2 || sv.rank() != 1 || sv.size() != xv.rows())
        throw_invalid("rows_scale: expects [T,D] and [T]");
    Node n;
    n.op = Op::RowsScale;
    n.in0 = x;
    n.in1 = s;
    n.value = Tensor::zeros_like(xv);
    for (std::int64_t r = 0; r < xv.rows(); ++r)
        for (std::int64_t c = 0; c < xv.cols(); ++c)
            n.value.at(r, c) = xv.at(r, c) * sv[static_cast<std::size_t>(r)];
    return push(std::move(n));
}

Tape::Var Tape::cols_scale(Var x, Var g) {
    check_var(x);
    check_var(g);
    const Tensor& xv = val(x);
    const Tensor& gv = val(g);
    if (xv.rank() != 2 || gv.rank() != 1 || gv.size() != xv.cols())
        throw_invalid("cols_scale: expects [T,D] and [D]");
    Node n;
    n.op = Op::ColsScale;
    n.in0 = x;
    n.in1 = g;
    n.value = Tensor::zeros_like(xv);
    for (std::int64_t r = 0; r < xv.rows(); ++r)
        for (std::int64_t c = 0; c < xv.cols(); ++c)
            n.value.at(r, c) = xv.at(r, c) * gv[static_cast<std::size_t>(c)];
    return push(std::move(n));
}

Tape::Var Tape::slice_cols(Var a, std::int64_t c0, std::int64_t c1) {
    check_var(a);
    const Tensor& x = val(a);
    if (c0 < 0 || c1 <= c0 || c1 > x.cols()) throw_invalid("slice_cols: bad column range");
    Node n;
    n.op = Op::SliceCols;
    n.in0 = a;
    n.i0 = c0;
    n.i1 = c1;
    if (x.rank() == 1) {
        n.value = Tensor({c1 - c0});
        for (std::int64_t c = c0; c < c1; ++c)
            n.value[static_cast<std::size_t>(c - c0)] = x[static_cast<std::size_t>(c)];
    } else if (x.rank() == 2) {
        n.value = Tensor({x.rows(), c1 - c0});
        for (std::int64_t r = 0; r < x.rows(); ++r)
            for (std::int64_t c = c0; c < c1; ++c) n.value.at(r, c - c0) = x.at(r, c);
    } else {
        throw_invalid("slice_cols: operand must be rank 1 or 2");
    }
    return push(std::move(n));
}

Tape::Var Tape::pad_cols(Var a, std::int64_t c0, std::int64_t total) {
    check_var(a);
    const Tensor& x = val(a);
    if (x.rank() != 2) throw_invalid("pad_cols: operand must be rank 2");
    if (c0 < 0 || c0 + x.cols() > total) throw_invalid("pad_cols: block does not fit");
    Node n;
    n.op = Op::PadCols;
    n.in0 = a;
    n.i0 = c0;
    n.i1 = total;
    n.value = Tensor({x.rows(), total});
    for (std::int64_t r = 0; r < x.rows(); ++r)
        for (std::int64_t c = 0; c < x.cols(); ++c) n.value.at(r, c0 + c) = x.at(r, c);
    return push(std::move(n));
}

Tape::Var Tape::stop_gradient(Var a) {
    check_var(a);
    Node n;
    n.op = Op::StopGrad;
    n.in0 = a;
    n.value = val(a);
    return push(std::move(n));
}

const Tensor& Tape::grad(Var v) const {
    check_var(v);
    if (!has_grads_) throw_invalid("grad: backward() has not run on this tape");
    return nodes_[static_cast<std::size_t>(v)].grad;
}

void Tape::backward(Var root) {
    check_var(root);
    if (val(root).size() != 1) throw_invalid("backward: root must be a scalar");

    for (Node& n : nodes_) n.grad = Tensor::zeros_like(n.value);
    nodes_[static_cast<std::size_t>(root)].grad[0] = 1.0;

    for (std::size_t ni = nodes_.size(); ni-- > 0;) {
        Node& n = nodes_[ni];
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::Leaf:
            case Op::Constant:
            case Op::StopGrad:
                break;
            case Op::Add: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                Tensor& g1 = nodes_[static_cast<std::size_t>(n.in1)].grad;
                for (std::int64_t i = 0; i < g.size(); ++i) {
                    g0[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)];
                    g1[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)];
                }
                break;
            }
            case Op::Mul: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                Tensor& g1 = nodes_[static_cast<std::size_t>(n.in1)].grad;
                const Tensor& a = val(n.in0);
                const Tensor& b = val(n.in1);
                for (std::int64_t i = 0; i < g.size(); ++i) {
                    g0[static_cast<std::size_t>(i)] +=
                        g[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(i)];
                    g1[static_cast<std::size_t>(i)] +=
                        g[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(i)];
                }
                break;
            }
            case Op::Scale: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                for (std::int64_t i = 0; i < g.size(); ++i)
                    g0[static_cast<std::size_t>(i)] += n.scalar * g[static_cast<std::size_t>(i)];
                break;
            }
            case Op::AddScalar: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                for (std::int64_t i = 0; i < g.size(); ++i)
                    g0[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)];
                break;
            }
            case Op::Matmul: {
                const Tensor& a = val(n.in0);
                const Tensor& b = val(n.in1);
                Tensor& ga = nodes_[static_cast<std::size_t>(n.in0)].grad;
                Tensor& gb = nodes_[static_cast<std::size_t>(n.in1)].grad;
                if (!n.trans_a && !n.trans_b) {
                    matmul_into(g, false, b, true, ga, true);
                    matmul_into(a, true, g, false, gb, true);
                } else if (!n.trans_a && n.trans_b) {
                    matmul_into(g, false, b, false, ga, true);
                    matmul_into(g, true, a, false, gb, true);
                } else if (n.trans_a && !n.trans_b) {
                    matmul_into(b, false, g, true, ga, true);
                    matmul_into(a, false, g, false, gb, true);
                } else {
                    matmul_into(b, true, g, true, ga, true);
                    matmul_into(g, true, a, true, gb, true);
                }
                break;
            }
            case Op::Exp: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                for (std::int64_t i = 0; i < g.size(); ++i)
                    g0[static_cast<std::size_t>(i)] +=
                        g[static_cast<std::size_t>(i)] * n.value[static_cast<std::size_t>(i)];
                break;
            }
            case Op::Log: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                const Tensor& a = val(n.in0);
                for (std::int64_t i = 0; i < g.size(); ++i)
                    g0[static_cast<std::size_t>(i)] +=
                        g[static_cast<std::size_t>(i)] / a[static_cast<std::size_t>(i)];
                break;
            }
            case Op::PowScalar: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                const Tensor& a = val(n.in0);
                for (std::int64_t i = 0; i < g.size(); ++i)
                    g0[static_cast<std::size_t>(i)] +=
                        g[static_cast<std::size_t>(i)] * n.scalar *
                        std::pow(a[static_cast<std::size_t>(i)], n.scalar - 1.0);
                break;
            }
            case Op::Tanh: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                for (std::int64_t i = 0; i < g.size(); ++i) {
                    const double y = n.value[static_cast<std::size_t>(i)];
                    g0[static_cast<std::size_t>(i)] +=
                        g[static_cast<std::size_t>(i)] * (1.0 - y * y);
                }
                break;
            }
            case Op::LogSigmoid: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                const Tensor& a = val(n.in0);
                for (std::int64_t i = 0; i < g.size(); ++i)
                    g0[static_cast<std::size_t>(i)] +=
                        g[static_cast<std::size_t>(i)] *
                        math::sigmoid(-a[static_cast<std::size_t>(i)]);
                break;
            }
            case Op::SoftmaxRows: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                const Tensor& y = n.value;
                for (std::int64_t r = 0; r < y.rows(); ++r) {
                    double dot = 0.0;
                    for (std::int64_t c = 0; c < y.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
                    for (std::int64_t c = 0; c < y.cols(); ++c)
                        g0.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
                }
                break;
            }
            case Op::LogSoftmaxRows: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                const Tensor& y = n.value;
                for (std::int64_t r = 0; r < y.rows(); ++r) {
                    double gsum = 0.0;
                    for (std::int64_t c = 0; c < y.cols(); ++c) gsum += g.at(r, c);
                    for (std::int64_t c = 0; c < y.cols(); ++c)
                        g0.at(r, c) += g.at(r, c) - std::exp(y.at(r, c)) * gsum;
                }
                break;
            }
            case Op::GatherRows: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                const std::int64_t cols = g0.cols();
                for (std::size_t r = 0; r < n.idx.size(); ++r)
                    for (std::int64_t c = 0; c < cols; ++c)
                        g0.at(n.idx[r], c) += g.at(static_cast<std::int64_t>(r), c);
                break;
            }
            case Op::SelectRC: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                for (std::size_t k = 0; k < n.idx.size(); ++k)
                    g0.at(n.idx[k], n.idx2[k]) += g[k];
                break;
            }
            case Op::SumAll: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                for (std::int64_t i = 0; i < g0.size(); ++i)
                    g0[static_cast<std::size_t>(i)] += g[0];
                break;
            }
            case Op::MeanAll: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                const double inv = 1.0 / static_cast<double>(g0.size());
                for (std::int64_t i = 0; i < g0.size(); ++i)
                    g0[static_cast<std::size_t>(i)] += g[0] * inv;
                break;
            }
            case Op::RowMean: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                const double inv = 1.0 / static_cast<double>(g0.cols());
                for (std::int64_t r = 0; r < g0.rows(); ++r)
                    for (std::int64_t c = 0; c < g0.cols(); ++c)
                        g0.at(r, c) += g[static_cast<std::size_t>(r)] * inv;
                break;
            }
            case Op::RowsScale: {
                Tensor& gx = nodes_[static_cast<std::size_t>(n.in0)].grad;
                Tensor& gs = nodes_[static_cast<std::size_t>(n.in1)].grad;
                const Tensor& x = val(n.in0);
                const Tensor& s = val(n.in1);
                for (std::int64_t r = 0; r < x.rows(); ++r) {
                    double acc = 0.0;
                    for (std::int64_t c = 0; c < x.cols(); ++c) {
                        gx.at(r, c) += g.at(r, c) * s[static_cast<std::size_t>(r)];
                        acc += g.at(r, c) * x.at(r, c);
                    }
                    gs[static_cast<std::size_t>(r)] += acc;
                }
                break;
            }
            case Op::ColsScale: {
                Tensor& gx = nodes_[static_cast<std::size_t>(n.in0)].grad;
                Tensor& gg = nodes_[static_cast<std::size_t>(n.in1)].grad;
                const Tensor& x = val(n.in0);
                const Tensor& gv = val(n.in1);
                for (std::int64_t r = 0; r < x.rows(); ++r)
                    for (std::int64_t c = 0; c < x.cols(); ++c) {
                        gx.at(r, c) += g.at(r, c) * gv[static_cast<std::size_t>(c)];
                        gg[static_cast<std::size_t>(c)] += g.at(r, c) * x.at(r, c);
                    }
                break;
            }
            case Op::SliceCols: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                if (g0.rank() == 1) {
                    for (std::int64_t c = n.i0; c < n.i1; ++c)
                        g0[static_cast<std::size_t>(c)] += g[static_cast<std::size_t>(c - n.i0)];
                } else {
                    for (std::int64_t r = 0; r < g0.rows(); ++r)
                        for (std::int64_t c = n.i0; c < n.i1; ++c)
                            g0.at(r, c) += g.at(r, c - n.i0);
                }
                break;
            }
            case Op::PadCols: {
                Tensor& g0 = nodes_[static_cast<std::size_t>(n.in0)].grad;
                for (std::int64_t r = 0; r < g0.rows(); ++r)
                    for (std::int64_t c = 0; c < g0.cols(); ++c)
                        g0.at(r, c) += g.at(r, n.i0 + c);
                break;
            }
        }
    }
    has_grads_ = true;
}

GradCheckReport grad_check(const std::function<double(std::span<const double>)>& value_fn,
                           const std::function<std::vector<double>(std::span<const double>)>& grad_fn,
                           std::span<const double> params, double tol,
                           const GradCheckOptions& opt) {
    GradCheckReport report;
    const std::size_t n = params.size();
    if (n == 0) throw_invalid("grad_check: empty parameter vector");

    std::vector<double> work(params.begin(), params.end());
    std::vector<double> analytic = grad_fn(work);
    if (analytic.size() != n) throw_invalid("grad_check: gradient size mismatch");

    std::vector<std::size_t> coords;
    if (n <= opt.max_coords) {
        coords.resize(n);
        for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
        // Sample distinct coordinates via a partial Fisher-Yates shuffle.
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        Rng rng(opt.seed);
        for (std::size_t i = 0; i < opt.max_coords; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rng.bounded(n - i));
            std::swap(pool[i], pool[j]);
        }
        coords.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(opt.max_coords));
        std::sort(coords.begin(), coords.end());
    }

    for (std::size_t c : coords) {
        const double x0 = work[c];
        const double h = opt.step_scale * std::max(1.0, std::abs(x0));
        work[c] = x0 + h;
        const double fp = value_fn(work);
        work[c] = x0 - h;
        const double fm = value_fn(work);
        work[c] = x0;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            report.nonfinite = true;
            report.pass = false;
            report.message = "non-finite loss at coordinate " + std::to_string(c);
            return report;
        }
        const double numeric = (fp - fm) / (2.0 * h);
        const double an = analytic[c];
        const double rel =
            std::abs(numeric - an) / std::max({1.0, std::abs(numeric), std::abs(an)});
        report.coords.push_back({c, an, numeric, rel});
        if (rel >= report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_index = c;
        }
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

}  // namespace prefopt::ad
