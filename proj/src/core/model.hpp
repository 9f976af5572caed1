#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core/autodiff.hpp"

namespace prefopt {

// Byte-level vocabulary: ids 0..255 are raw bytes, followed by the reserved
// specials. No tokenizer training, no ambiguity.
struct Vocab {
    static constexpr int kBos = 256;
    static constexpr int kEos = 257;
    static constexpr int kPad = 258;
    static constexpr int kSize = 259;

    static std::vector<int> encode(std::string_view text);
    static std::string decode(std::span<const int> ids);
};

struct ModelConfig {
    int vocab_size = Vocab::kSize;
    int embed_dim = 64;
    int n_layers = 2;
    int n_heads = 4;
    int max_context = 256;
    int mlp_mult = 4;
    int bos_id = Vocab::kBos;  // conditions the first response token
    int eos_id = Vocab::kEos;  // stops sampling; -1 disables
    std::int64_t param_cap = 200000;

    void validate() const;
    std::int64_t param_count() const;
};

struct ParamInfo {
    std::string name;
    std::vector<std::int64_t> shape;
    std::size_t offset;
    std::size_t size;
};

// All weights of the causal self-attention policy, stored as one flat vector
// with a named layout. The flat form keeps the optimizer and the gradient
// checker trivial.
class ModelParams {
  public:
    ModelParams() = default;
    ModelParams(const ModelConfig& cfg, std::uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    const std::vector<ParamInfo>& layout() const { return layout_; }
    std::span<double> flat() { return flat_; }
    std::span<const double> flat() const { return flat_; }
    std::size_t param_count() const { return flat_.size(); }

    std::span<const double> view(std::size_t layout_index) const;
    bool frozen() const { return frozen_; }
    void mark_frozen() { frozen_ = true; }

  private:
    ModelConfig cfg_;
    std::vector<ParamInfo> layout_;
    std::vector<double> flat_;
    bool frozen_ = false;

    friend ModelParams load_checkpoint(const std::string& path);
    friend void load_flat_into(ModelParams&, std::vector<double>);
};

// Per-token conditional log-probabilities of one response under one model.
struct SequenceTrace {
    std::vector<int> tokens;                // response token ids
    std::vector<double> per_token_logprob;  // one entry per response token, all <= 0
    double total_logprob = 0.0;             // left-to-right sum of the entries
};

// Graph-side handle: parameter leaves bound onto a tape, layout-aligned.
struct BoundParams {
    std::vector<ad::Tape::Var> leaves;
};

BoundParams bind_params(ad::Tape& tape, const ModelParams& params);

// Builds the forward pass for one (prompt, response) pair and returns the
// per-token response log-probability vector as a differentiable node.
ad::Tape::Var response_logprob_graph(ad::Tape& tape, const BoundParams& bound,
                                     const ModelConfig& cfg, std::span<const int> prompt,
                                     std::span<const int> response);

SequenceTrace seq_logprob(const ModelParams& params, std::span<const int> prompt,
                          std::span<const int> response);

// Reads per-leaf gradients off a backward-run tape into the flat layout.
std::vector<double> collect_param_grad(const ad::Tape& tape, const BoundParams& bound,
                                       const ModelParams& params);

// Sum of per_token_logprob[start, start+len). This is where sub-sequence
// log-probabilities come from.
double span_logprob(const SequenceTrace& trace, std::size_t start, std::size_t len);

// Deep copy excluded from optimizer updates; serves as the reference policy.
ModelParams clone_frozen(const ModelParams& params);

// Ancestral sampling; temperature 0 means argmax. Deterministic per seed.
std::vector<int> sample(const ModelParams& params, std::span<const int> prompt, int max_len,
                        std::uint64_t seed, double temperature = 1.0);

// Versioned binary container; save/load round trips bit-exactly.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace prefopt
