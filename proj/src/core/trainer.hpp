#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "core/losses.hpp"
#include "core/model.hpp"

namespace prefopt {

enum class Method { Dpo, Sgdpo };
enum class OptimizerKind { AdamW, Sgd };

// A preference example after tokenization.
struct TokenizedExample {
    std::vector<int> prompt;
    std::vector<int> chosen;
    std::vector<int> rejected;
};

struct TrainConfig {
    math::Beta beta{};  // 0.1
    Method method = Method::Sgdpo;
    double r1 = 0.9;
    double r2 = 0.9;
    SpanMode span_mode = SpanMode::DifferentIndex;
    double sft_lr = 2e-3;   // reference settings scaled up for the tiny model
    double po_lr = 5e-4;
    int batch_size = 16;
    int sft_epochs = 3;
    int po_steps = 500;
    double warmup_ratio = 0.1;
    int ccr_window = 80;
    std::uint64_t seed = 1;
    OptimizerKind optimizer = OptimizerKind::AdamW;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    int threads = 1;

    void validate() const;
};

struct HistoryRecord {
    int step = 0;
    double loss = 0.0;
    double chosen_reward = 0.0;
    double rejected_reward = 0.0;
    double margin = 0.0;
    double lr = 0.0;
};

struct TrainHistory {
    std::vector<HistoryRecord> records;
    void save_csv(const std::string& path) const;
};

// Linear warmup to the peak, then a cosine decay to zero.
double lr_at(int step, int total_steps, double peak, double warmup_ratio);

// Decoupled-weight-decay adaptive moments, or plain gradient descent. Both
// are linear filters of the gradient stream except for the adaptive scaling.
class Optimizer {
  public:
    Optimizer(OptimizerKind kind, std::size_t n, const TrainConfig& cfg);
    void step(std::span<double> params, std::span<const double> grad, double lr);

  private:
    OptimizerKind kind_;
    double beta1_, beta2_, eps_, weight_decay_;
    std::int64_t t_ = 0;
    std::vector<double> m_, v_;
};

// Next-token cross-entropy of the corpus under the model (mean per token).
double corpus_cross_entropy(const ModelParams& params, std::span<const std::vector<int>> corpus);

// Supervised fine-tuning pass over the corpus; updates params in place.
void sft_train(ModelParams& params, std::span<const std::vector<int>> corpus,
               const TrainConfig& cfg);

// Preference optimization against a frozen clone of the incoming params.
TrainHistory po_train(ModelParams& params, std::span<const TokenizedExample> dataset,
                      const TrainConfig& cfg);

// Mean chosen/rejected reward over the final min(window, length) records.
std::pair<double, double> ccr_crr(const TrainHistory& history, int window);

// Fraction of examples whose implicit chosen reward strictly exceeds the
// rejected reward; ties count as failures.
double evaluate_margin_accuracy(const ModelParams& params, const ModelParams& ref_params,
                                std::span<const TokenizedExample> heldout, math::Beta beta);

}  // namespace prefopt
