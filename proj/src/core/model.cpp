#include "core/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "core/rng.hpp"

namespace prefopt {

namespace {

constexpr double kInitStd = 0.08;
constexpr double kNormEps = 1e-8;
constexpr double kMaskValue = -1e30;

void check_ids(std::span<const int> ids, int vocab_size, const char* what) {
    for (int id : ids)
        if (id < 0 || id >= vocab_size)
            throw_invalid(std::string(what) + ": token id out of vocabulary range");
}

}  // namespace

std::vector<int> Vocab::encode(std::string_view text) {
    std::vector<int> out;
    out.reserve(text.size());
    for (unsigned char b : text) out.push_back(static_cast<int>(b));
    return out;
}

std::string Vocab::decode(std::span<const int> ids) {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids)
        if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
    return out;
}

void ModelConfig::validate() const {
    if (vocab_size < 2 || vocab_size > 512) throw_config("vocab_size must be in [2, 512]");
    if (embed_dim < 1) throw_config("embed_dim must be positive");
    if (n_layers < 1) throw_config("n_layers must be positive");
    if (n_heads < 1 || embed_dim % n_heads != 0)
        throw_config("n_heads must be positive and divide embed_dim");
    if (max_context < 2) throw_config("max_context must be at least 2");
    if (mlp_mult < 1) throw_config("mlp_mult must be positive");
    if (bos_id < 0 || bos_id >= vocab_size) throw_config("bos_id must be a valid token id");
    if (eos_id >= vocab_size) throw_config("eos_id must be a valid token id or -1");
    if (param_cap > 0 && param_count() > param_cap)
        throw_config("parameter count " + std::to_string(param_count()) +
                     " exceeds cap " + std::to_string(param_cap));
}

std::int64_t ModelConfig::param_count() const {
    const std::int64_t v = vocab_size, d = embed_dim, m = mlp_mult;
    std::int64_t per_layer = d            // attention norm gain
                             + 4 * d * d  // wq, wk, wv, wo
                             + d          // mlp norm gain
                             + d * (m * d) + (m * d) * d;
    return v * d + max_context * d + n_layers * per_layer + d + d * v;
}

ModelParams::ModelParams(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    const std::int64_t d = cfg_.embed_dim;
    const std::int64_t md = static_cast<std::int64_t>(cfg_.mlp_mult) * d;

    auto push = [&](std::string name, std::vector<std::int64_t> shape) {
        std::size_t sz = 1;
        for (auto s : shape) sz *= static_cast<std::size_t>(s);
        layout_.push_back({std::move(name), std::move(shape), flat_.size(), sz});
        flat_.resize(flat_.size() + sz, 0.0);
    };

    push("tok_embed", {cfg_.vocab_size, d});
    push("pos_embed", {cfg_.max_context, d});
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        push(p + "attn_norm_gain", {d});
        push(p + "wq", {d, d});
        push(p + "wk", {d, d});
        push(p + "wv", {d, d});
        push(p + "wo", {d, d});
        push(p + "mlp_norm_gain", {d});
        push(p + "w_in", {d, md});
        push(p + "w_out", {md, d});
    }
    push("final_norm_gain", {d});
    push("w_vocab", {d, cfg_.vocab_size});

    Rng rng(init_seed);
    for (const ParamInfo& info : layout_) {
        const bool is_gain = info.name.find("norm_gain") != std::string::npos;
        for (std::size_t i = 0; i < info.size; ++i)
            flat_[info.offset + i] = is_gain ? 1.0 : rng.normal(0.0, kInitStd);
    }
}

std::span<const double> ModelParams::view(std::size_t layout_index) const {
    const ParamInfo& info = layout_.at(layout_index);
    return std::span<const double>(flat_).subspan(info.offset, info.size);
}

BoundParams bind_params(ad::Tape& tape, const ModelParams& params) {
    BoundParams bound;
    bound.leaves.reserve(params.layout().size());
    for (std::size_t i = 0; i < params.layout().size(); ++i) {
        const ParamInfo& info = params.layout()[i];
        ad::Tensor t(info.shape);
        auto src = params.view(i);
        std::copy(src.begin(), src.end(), t.data().begin());
        bound.leaves.push_back(tape.leaf(std::move(t)));
    }
    return bound;
}

namespace {

// Layout index bookkeeping mirrors the push order in the constructor.
struct LayerIdx {
    std::size_t attn_norm, wq, wk, wv, wo, mlp_norm, w_in, w_out;
};

struct ParamIdx {
    std::size_t tok_embed = 0, pos_embed = 1;
    std::vector<LayerIdx> layers;
    std::size_t final_norm, w_vocab;

    explicit ParamIdx(const ModelConfig& cfg) {
        std::size_t at = 2;
        for (int l = 0; l < cfg.n_layers; ++l) {
            LayerIdx li{};
            li.attn_norm = at++;
            li.wq = at++;
            li.wk = at++;
            li.wv = at++;
            li.wo = at++;
            li.mlp_norm = at++;
            li.w_in = at++;
            li.w_out = at++;
            layers.push_back(li);
        }
        final_norm = at++;
        w_vocab = at++;
    }
};

ad::Tape::Var rms_norm(ad::Tape& t, ad::Tape::Var x, ad::Tape::Var gain) {
    ad::Tape::Var sq = t.mul(x, x);
    ad::Tape::Var inv = t.pow_scalar(t.add_scalar(t.row_mean(sq), kNormEps), -0.5);
    return t.cols_scale(t.rows_scale(x, inv), gain);
}

// Full causal forward pass: token ids -> per-position next-token log-probs.
ad::Tape::Var logits_graph(ad::Tape& t, const BoundParams& bound, const ModelConfig& cfg,
                           std::span<const int> input_ids) {
    const ParamIdx idx(cfg);
    const std::int64_t seq_len = static_cast<std::int64_t>(input_ids.size());
    const std::int64_t d = cfg.embed_dim;
    const std::int64_t dh = d / cfg.n_heads;

    std::vector<int> positions(input_ids.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);

    ad::Tape::Var h = t.add(t.gather_rows(bound.leaves[idx.tok_embed], input_ids),
                            t.gather_rows(bound.leaves[idx.pos_embed], positions));

    ad::Tensor mask({seq_len, seq_len});
    for (std::int64_t r = 0; r < seq_len; ++r)
        for (std::int64_t c = r + 1; c < seq_len; ++c) mask.at(r, c) = kMaskValue;
    ad::Tape::Var mask_c = t.constant(std::move(mask));

    for (const LayerIdx& li : idx.layers) {
        ad::Tape::Var xn = rms_norm(t, h, bound.leaves[li.attn_norm]);
        ad::Tape::Var q = t.matmul(xn, bound.leaves[li.wq]);
        ad::Tape::Var k = t.matmul(xn, bound.leaves[li.wk]);
        ad::Tape::Var v = t.matmul(xn, bound.leaves[li.wv]);

        ad::Tape::Var merged = -1;
        for (int head = 0; head < cfg.n_heads; ++head) {
            const std::int64_t c0 = head * dh, c1 = (head + 1) * dh;
            ad::Tape::Var qh = t.slice_cols(q, c0, c1);
            ad::Tape::Var kh = t.slice_cols(k, c0, c1);
            ad::Tape::Var vh = t.slice_cols(v, c0, c1);
            ad::Tape::Var scores =
                t.scale(t.matmul(qh, kh, false, true), 1.0 / std::sqrt(static_cast<double>(dh)));
            ad::Tape::Var att = t.softmax_rows(t.add(scores, mask_c));
            ad::Tape::Var out = t.pad_cols(t.matmul(att, vh), c0, d);
            merged = (merged < 0) ? out : t.add(merged, out);
        }
        h = t.add(h, t.matmul(merged, bound.leaves[li.wo]));

        ad::Tape::Var mn = rms_norm(t, h, bound.leaves[li.mlp_norm]);
        ad::Tape::Var act = t.tanh(t.matmul(mn, bound.leaves[li.w_in]));
        h = t.add(h, t.matmul(act, bound.leaves[li.w_out]));
    }

    ad::Tape::Var fin = rms_norm(t, h, bound.leaves[idx.final_norm]);
    return t.matmul(fin, bound.leaves[idx.w_vocab]);
}

}  // namespace

ad::Tape::Var response_logprob_graph(ad::Tape& tape, const BoundParams& bound,
                                     const ModelConfig& cfg, std::span<const int> prompt,
                                     std::span<const int> response) {
    if (response.empty()) throw_invalid("response must be nonempty");
    check_ids(prompt, cfg.vocab_size, "prompt");
    check_ids(response, cfg.vocab_size, "response");
    const std::size_t total = 1 + prompt.size() + response.size();
    if (total > static_cast<std::size_t>(cfg.max_context))
        throw_invalid("prompt+response exceeds max context");

    std::vector<int> input;
    input.reserve(total);
    input.push_back(cfg.bos_id);
    input.insert(input.end(), prompt.begin(), prompt.end());
    input.insert(input.end(), response.begin(), response.end());

    ad::Tape::Var lsm = tape.log_softmax_rows(logits_graph(tape, bound, cfg, input));

    std::vector<int> rows(response.size());
    std::vector<int> cols(response.size());
    for (std::size_t j = 0; j < response.size(); ++j) {
        rows[j] = static_cast<int>(prompt.size() + j);
        cols[j] = response[j];
    }
    return tape.select_rc(lsm, rows, cols);
}

SequenceTrace seq_logprob(const ModelParams& params, std::span<const int> prompt,
                          std::span<const int> response) {
    ad::Tape tape;
    BoundParams bound = bind_params(tape, params);
    ad::Tape::Var lp = response_logprob_graph(tape, bound, params.config(), prompt, response);

    SequenceTrace trace;
    trace.tokens.assign(response.begin(), response.end());
    auto data = tape.value(lp).data();
    trace.per_token_logprob.assign(data.begin(), data.end());
    double total = 0.0;
    for (double v : trace.per_token_logprob) total += v;
    trace.total_logprob = total;
    return trace;
}

std::vector<double> collect_param_grad(const ad::Tape& tape, const BoundParams& bound,
                                       const ModelParams& params) {
    std::vector<double> flat(params.param_count(), 0.0);
    const auto& layout = params.layout();
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const ad::Tensor& g = tape.grad(bound.leaves[i]);
        std::copy(g.data().begin(), g.data().end(),
                  flat.begin() + static_cast<std::ptrdiff_t>(layout[i].offset));
    }
    return flat;
}

double span_logprob(const SequenceTrace& trace, std::size_t start, std::size_t len) {
    if (len < 1) throw_invalid("span length must be at least 1");
    if (start + len > trace.per_token_logprob.size()) throw_invalid("span out of range");
    double s = 0.0;
    for (std::size_t i = start; i < start + len; ++i) s += trace.per_token_logprob[i];
    return s;
}

ModelParams clone_frozen(const ModelParams& params) {
    ModelParams copy = params;
    copy.mark_frozen();
    return copy;
}

std::vector<int> sample(const ModelParams& params, std::span<const int> prompt, int max_len,
                        std::uint64_t seed, double temperature) {
    const ModelConfig& cfg = params.config();
    check_ids(prompt, cfg.vocab_size, "prompt");
    if (temperature < 0.0) throw_invalid("temperature must be nonnegative");

    std::vector<int> seq;
    seq.push_back(cfg.bos_id);
    seq.insert(seq.end(), prompt.begin(), prompt.end());

    Rng rng(seed);
    std::vector<int> out;
    for (int produced = 0; produced < max_len; ++produced) {
        if (seq.size() >= static_cast<std::size_t>(cfg.max_context)) break;
        ad::Tape tape;
        BoundParams bound = bind_params(tape, params);
        ad::Tape::Var logits = logits_graph(tape, bound, cfg, seq);
        const ad::Tensor& lv = tape.value(logits);
        const std::int64_t last = lv.rows() - 1;

        int next = 0;
        if (temperature == 0.0) {
            double best = lv.at(last, 0);
            for (int c = 1; c < cfg.vocab_size; ++c)
                if (lv.at(last, c) > best) {
                    best = lv.at(last, c);
                    next = c;
                }
        } else {
            double m = lv.at(last, 0);
            for (int c = 1; c < cfg.vocab_size; ++c) m = std::max(m, lv.at(last, c));
            std::vector<double> probs(static_cast<std::size_t>(cfg.vocab_size));
            double z = 0.0;
            for (int c = 0; c < cfg.vocab_size; ++c) {
                probs[static_cast<std::size_t>(c)] =
                    std::exp((lv.at(last, c) - m) / temperature);
                z += probs[static_cast<std::size_t>(c)];
            }
            double u = rng.uniform() * z;
            double acc = 0.0;
            next = cfg.vocab_size - 1;
            for (int c = 0; c < cfg.vocab_size; ++c) {
                acc += probs[static_cast<std::size_t>(c)];
                if (u < acc) {
                    next = c;
                    break;
                }
            }
        }
        if (next == cfg.eos_id) break;
        out.push_back(next);
        seq.push_back(next);
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ofstream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::ifstream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw_io("cannot open checkpoint for writing: " + tmp);
        os.write(kMagic, 4);
        write_pod(os, kVersion);
        const ModelConfig& c = params.config();
        write_pod(os, static_cast<std::int32_t>(c.vocab_size));
        write_pod(os, static_cast<std::int32_t>(c.embed_dim));
        write_pod(os, static_cast<std::int32_t>(c.n_layers));
        write_pod(os, static_cast<std::int32_t>(c.n_heads));
        write_pod(os, static_cast<std::int32_t>(c.max_context));
        write_pod(os, static_cast<std::int32_t>(c.mlp_mult));
        write_pod(os, static_cast<std::int32_t>(c.bos_id));
        write_pod(os, static_cast<std::int32_t>(c.eos_id));
        write_pod(os, static_cast<std::int64_t>(c.param_cap));
        write_pod(os, static_cast<std::uint64_t>(params.param_count()));
        auto flat = params.flat();
        os.write(reinterpret_cast<const char*>(flat.data()),
                 static_cast<std::streamsize>(flat.size() * sizeof(double)));
        if (!os) throw_io("failed writing checkpoint: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw_io("failed to move checkpoint into place: " + path);
}

void load_flat_into(ModelParams& params, std::vector<double> flat) {
    if (flat.size() != params.flat_.size()) throw_io("checkpoint parameter count mismatch");
    params.flat_ = std::move(flat);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw_io("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw_parse("not a checkpoint file: " + path);
    std::uint32_t version = 0;
    read_pod(is, version);
    if (version != kVersion)
        throw_parse("unsupported checkpoint version " + std::to_string(version));

    ModelConfig cfg;
    std::int32_t v32 = 0;
    read_pod(is, v32), cfg.vocab_size = v32;
    read_pod(is, v32), cfg.embed_dim = v32;
    read_pod(is, v32), cfg.n_layers = v32;
    read_pod(is, v32), cfg.n_heads = v32;
    read_pod(is, v32), cfg.max_context = v32;
    read_pod(is, v32), cfg.mlp_mult = v32;
    read_pod(is, v32), cfg.bos_id = v32;
    read_pod(is, v32), cfg.eos_id = v32;
    std::int64_t cap = 0;
    read_pod(is, cap), cfg.param_cap = cap;
    std::uint64_t count = 0;
    read_pod(is, count);
    if (!is) throw_parse("truncated checkpoint header: " + path);

    ModelParams params(cfg, 0);
    if (count != params.param_count()) throw_parse("checkpoint parameter count mismatch");
    std::vector<double> flat(count);
    is.read(reinterpret_cast<char*>(flat.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!is) throw_parse("truncated checkpoint payload: " + path);
    load_flat_into(params, std::move(flat));
    return params;
}

}  // namespace prefopt
