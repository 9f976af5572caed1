#include "core/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <thread>

#include "core/rng.hpp"

namespace prefopt {

void TrainConfig::validate() const {
    if (!(r1 > 0.0 && r1 <= 1.0) || !(r2 > 0.0 && r2 <= 1.0))
        throw_config("r1 and r2 must lie in (0, 1]");
    if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0))
        throw_config("warmup_ratio must lie in [0, 1)");
    if (ccr_window < 1) throw_config("ccr_window must be at least 1");
    if (batch_size < 1) throw_config("batch_size must be at least 1");
    if (sft_lr < 0.0 || po_lr < 0.0) throw_config("learning rates must be nonnegative");
    if (sft_epochs < 0 || po_steps < 0) throw_config("epochs/steps must be nonnegative");
    if (threads < 1) throw_config("threads must be at least 1");
}

double lr_at(int step, int total_steps, double peak, double warmup_ratio) {
    if (total_steps <= 0) return 0.0;
    const int warmup = static_cast<int>(std::floor(warmup_ratio * total_steps));
    if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
    const int denom = std::max(1, total_steps - warmup);
    const double t = static_cast<double>(step - warmup) / static_cast<double>(denom);
    return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

Optimizer::Optimizer(OptimizerKind kind, std::size_t n, const TrainConfig& cfg)
    : kind_(kind),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_eps),
      weight_decay_(cfg.weight_decay) {
    if (kind_ == OptimizerKind::AdamW) {
        m_.assign(n, 0.0);
        v_.assign(n, 0.0);
    }
}

void Optimizer::step(std::span<double> params, std::span<const double> grad, double lr) {
    if (params.size() != grad.size()) throw_invalid("optimizer: size mismatch");
    if (kind_ == OptimizerKind::Sgd) {
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i] -= lr * (grad[i] + weight_decay_ * params[i]);
        return;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * params[i]);
    }
}

namespace {

// Cycles through shuffled example indices; reshuffles at each epoch boundary
// with a seed derived from (config seed, epoch).
class ExampleStream {
  public:
    ExampleStream(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {}

    std::pair<std::size_t, int> next() {
        if (cursor_ >= n_) {
            ++epoch_;
            reshuffle();
            cursor_ = 0;
        }
        return {order_[cursor_++], epoch_};
    }

  private:
    void reshuffle() {
        order_.resize(n_);
        std::iota(order_.begin(), order_.end(), 0);
        Rng rng(mix_seed(seed_, 0x5u, static_cast<std::uint64_t>(epoch_)));
        for (std::size_t i = n_; i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(rng.bounded(i));
            std::swap(order_[i - 1], order_[j]);
        }
    }

    std::size_t n_;
    std::uint64_t seed_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = static_cast<std::size_t>(-1);
    int epoch_ = -1;
};

struct ExampleResult {
    std::vector<double> grad;
    double loss = 0.0;
    ExampleStats stats;
};

// Runs fn(i) for i in [0, n) across the requested worker count. Results must
// be written into index-addressed slots; callers then reduce in index order.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mu;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (std::size_t i = static_cast<std::size_t>(w); i < n;
                     i += static_cast<std::size_t>(workers))
                    fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

double corpus_cross_entropy(const ModelParams& params, std::span<const std::vector<int>> corpus) {
    if (corpus.empty()) throw_invalid("corpus must be nonempty");
    double acc = 0.0;
    for (const auto& seq : corpus) {
        SequenceTrace t = seq_logprob(params, {}, seq);
        acc += -t.total_logprob / static_cast<double>(seq.size());
    }
    return acc / static_cast<double>(corpus.size());
}

void sft_train(ModelParams& params, std::span<const std::vector<int>> corpus,
               const TrainConfig& cfg) {
    cfg.validate();
    if (corpus.empty()) throw_invalid("sft corpus must be nonempty");
    if (params.frozen()) throw_invalid("cannot train a frozen model");
    for (const auto& seq : corpus)
        if (seq.empty()) throw_invalid("sft corpus contains an empty sequence");

    const std::size_t n = corpus.size();
    const int steps_per_epoch =
        static_cast<int>((n + static_cast<std::size_t>(cfg.batch_size) - 1) /
                         static_cast<std::size_t>(cfg.batch_size));
    const int total_steps = cfg.sft_epochs * steps_per_epoch;
    Optimizer opt(cfg.optimizer, params.param_count(), cfg);
    ExampleStream stream(n, mix_seed(cfg.seed, 0xAu, 0));

    for (int step = 0; step < total_steps; ++step) {
        const std::size_t batch_n = std::min<std::size_t>(cfg.batch_size, n);
        std::vector<std::size_t> batch(batch_n);
        for (std::size_t i = 0; i < batch_n; ++i) batch[i] = stream.next().first;

        std::vector<ExampleResult> results(batch_n);
        parallel_for(batch_n, cfg.threads, [&](std::size_t i) {
            ad::Tape tape;
            BoundParams bound = bind_params(tape, params);
            ad::Tape::Var lp =
                response_logprob_graph(tape, bound, params.config(), {}, corpus[batch[i]]);
            ad::Tape::Var loss = tape.scale(tape.mean_all(lp), -1.0);
            tape.backward(loss);
            results[i].loss = tape.scalar_value(loss);
            results[i].grad = collect_param_grad(tape, bound, params);
        });

        std::vector<double> grad(params.param_count(), 0.0);
        double loss = 0.0;
        for (const ExampleResult& r : results) {
            loss += r.loss;
            for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += r.grad[k];
        }
        const double inv = 1.0 / static_cast<double>(batch_n);
        loss *= inv;
        for (double& g : grad) g *= inv;
        if (!std::isfinite(loss))
            throw_training("sft diverged at step " + std::to_string(step));

        opt.step(params.flat(), grad, lr_at(step, total_steps, cfg.sft_lr, cfg.warmup_ratio));
    }
}

TrainHistory po_train(ModelParams& params, std::span<const TokenizedExample> dataset,
                      const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw_invalid("preference dataset must be nonempty");
    if (params.frozen()) throw_invalid("cannot train a frozen model");
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (dataset[i].chosen.empty() || dataset[i].rejected.empty())
            throw_invalid("example " + std::to_string(i) + " has an empty response");

    const ModelParams ref = clone_frozen(params);

    // The reference policy never changes during the run; trace it once.
    std::vector<SequenceTrace> ref_chosen(dataset.size()), ref_rejected(dataset.size());
    parallel_for(dataset.size(), cfg.threads, [&](std::size_t i) {
        ref_chosen[i] = seq_logprob(ref, dataset[i].prompt, dataset[i].chosen);
        ref_rejected[i] = seq_logprob(ref, dataset[i].prompt, dataset[i].rejected);
    });

    TrainHistory history;
    history.records.reserve(static_cast<std::size_t>(cfg.po_steps));
    Optimizer opt(cfg.optimizer, params.param_count(), cfg);
    ExampleStream stream(dataset.size(), mix_seed(cfg.seed, 0xBu, 0));

    for (int step = 0; step < cfg.po_steps; ++step) {
        const std::size_t batch_n = std::min<std::size_t>(cfg.batch_size, dataset.size());
        std::vector<std::pair<std::size_t, int>> batch(batch_n);
        for (std::size_t i = 0; i < batch_n; ++i) batch[i] = stream.next();

        std::vector<ExampleResult> results(batch_n);
        try {
            parallel_for(batch_n, cfg.threads, [&](std::size_t i) {
                const auto [idx, epoch] = batch[i];
                const TokenizedExample& ex = dataset[idx];
                // Guide windows are redrawn freshly every epoch per example.
                SpanSpec span = build_spans(ex.chosen.size(), ex.rejected.size(), cfg.r1, cfg.r2,
                                            cfg.span_mode,
                                            mix_seed(cfg.seed, idx, static_cast<std::uint64_t>(epoch)));
                ad::Tape tape;
                BoundParams bound = bind_params(tape, params);
                BatchItem item;
                item.policy_chosen =
                    response_logprob_graph(tape, bound, params.config(), ex.prompt, ex.chosen);
                item.policy_rejected =
                    response_logprob_graph(tape, bound, params.config(), ex.prompt, ex.rejected);
                item.ref_chosen = &ref_chosen[idx];
                item.ref_rejected = &ref_rejected[idx];
                item.span = span;

                LossOutput out = (cfg.method == Method::Dpo)
                                     ? dpo_loss(tape, {&item, 1}, cfg.beta)
                                     : sgdpo_loss(tape, {&item, 1}, cfg.beta);
                tape.backward(out.loss);
                results[i].loss = tape.scalar_value(out.loss);
                results[i].stats = out.per_example[0];
                results[i].grad = collect_param_grad(tape, bound, params);
            });
        } catch (const Error& e) {
            throw Error(e.kind(), "step " + std::to_string(step) + ": " + e.what());
        }

        std::vector<double> grad(params.param_count(), 0.0);
        HistoryRecord rec;
        rec.step = step;
        for (const ExampleResult& r : results) {
            rec.loss += r.loss;
            rec.chosen_reward += r.stats.chosen_reward;
            rec.rejected_reward += r.stats.rejected_reward;
            rec.margin += r.stats.margin;
            for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += r.grad[k];
        }
        const double inv = 1.0 / static_cast<double>(batch_n);
        rec.loss *= inv;
        rec.chosen_reward *= inv;
        rec.rejected_reward *= inv;
        rec.margin *= inv;
        for (double& g : grad) g *= inv;
        if (!std::isfinite(rec.loss))
            throw_training("preference optimization diverged at step " + std::to_string(step));

        rec.lr = lr_at(step, cfg.po_steps, cfg.po_lr, cfg.warmup_ratio);
        opt.step(params.flat(), grad, rec.lr);
        history.records.push_back(rec);
    }
    return history;
}

std::pair<double, double> ccr_crr(const TrainHistory& history, int window) {
    if (history.records.empty()) throw_invalid("ccr_crr: empty history");
    if (window < 1) throw_invalid("ccr_crr: window must be at least 1");
    const std::size_t n = history.records.size();
    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(window), n);
    double ccr = 0.0, crr = 0.0;
    for (std::size_t i = n - w; i < n; ++i) {
        ccr += history.records[i].chosen_reward;
        crr += history.records[i].rejected_reward;
    }
    return {ccr / static_cast<double>(w), crr / static_cast<double>(w)};
}

double evaluate_margin_accuracy(const ModelParams& params, const ModelParams& ref_params,
                                std::span<const TokenizedExample> heldout, math::Beta beta) {
    if (heldout.empty()) throw_invalid("heldout set must be nonempty");
    (void)beta;  // beta > 0 scales both rewards; the comparison is scale-free
    std::size_t wins = 0;
    for (const TokenizedExample& ex : heldout) {
        const double lx1 = seq_logprob(params, ex.prompt, ex.chosen).total_logprob -
                           seq_logprob(ref_params, ex.prompt, ex.chosen).total_logprob;
        const double lx2 = seq_logprob(params, ex.prompt, ex.rejected).total_logprob -
                           seq_logprob(ref_params, ex.prompt, ex.rejected).total_logprob;
        if (lx1 > lx2) ++wins;
    }
    return static_cast<double>(wins) / static_cast<double>(heldout.size());
}

void TrainHistory::save_csv(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw_io("cannot open history csv for writing: " + tmp);
        os << "step,loss,chosen_reward,rejected_reward,margin,lr\n";
        char buf[512];
        for (const HistoryRecord& r : records) {
            std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.loss,
                          r.chosen_reward, r.rejected_reward, r.margin, r.lr);
            os << buf;
        }
        if (!os) throw_io("failed writing history csv: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw_io("failed to move history csv into place: " + path);
}

}  // namespace prefopt
