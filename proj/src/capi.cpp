#include "prefopt.h"

#include <cstring>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/errors.hpp"
#include "core/gradflow.hpp"
#include "core/losses.hpp"
#include "core/model.hpp"
#include "core/svg.hpp"
#include "core/trainer.hpp"
#include "core/verify.hpp"

struct prefopt_model {
    prefopt::ModelParams params;
};

struct prefopt_dataset {
    std::vector<prefopt::data::PreferenceExample> text;
    std::vector<prefopt::TokenizedExample> tokens;
};

struct prefopt_history {
    prefopt::TrainHistory history;
};

namespace {

thread_local std::string g_last_error;

prefopt_status status_of(prefopt::ErrorKind kind) {
    using prefopt::ErrorKind;
    switch (kind) {
        case ErrorKind::InvalidArgument: return PREFOPT_ERR_INVALID_ARGUMENT;
        case ErrorKind::Io: return PREFOPT_ERR_IO;
        case ErrorKind::Parse: return PREFOPT_ERR_PARSE;
        case ErrorKind::Config: return PREFOPT_ERR_CONFIG;
        case ErrorKind::Training: return PREFOPT_ERR_TRAINING;
        case ErrorKind::Verify: return PREFOPT_ERR_VERIFY;
        case ErrorKind::Internal: return PREFOPT_ERR_INTERNAL;
    }
    return PREFOPT_ERR_INTERNAL;
}

template <class Fn>
prefopt_status guarded(Fn&& fn) {
    try {
        fn();
        return PREFOPT_OK;
    } catch (const prefopt::Error& e) {
        g_last_error = e.what();
        return status_of(e.kind());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return PREFOPT_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return PREFOPT_ERR_INTERNAL;
    }
}

prefopt_status invalid_arg(const char* msg) {
    g_last_error = msg;
    return PREFOPT_ERR_INVALID_ARGUMENT;
}

prefopt::ModelConfig to_model_config(const prefopt_model_config* c) {
    prefopt::ModelConfig cfg;
    if (c == nullptr) return cfg;
    if (c->vocab_size != 0) cfg.vocab_size = c->vocab_size;
    if (c->embed_dim != 0) cfg.embed_dim = c->embed_dim;
    if (c->n_layers != 0) cfg.n_layers = c->n_layers;
    if (c->n_heads != 0) cfg.n_heads = c->n_heads;
    if (c->max_context != 0) cfg.max_context = c->max_context;
    if (c->mlp_mult != 0) cfg.mlp_mult = c->mlp_mult;
    if (c->param_cap < 0)
        cfg.param_cap = 0;  // uncapped
    else if (c->param_cap > 0)
        cfg.param_cap = c->param_cap;
    return cfg;
}

prefopt::TrainConfig to_train_config(const prefopt_train_config* c) {
    prefopt::TrainConfig cfg;
    if (c == nullptr) return cfg;
    cfg.beta = prefopt::math::Beta(c->beta);
    cfg.method = c->method == PREFOPT_METHOD_DPO ? prefopt::Method::Dpo : prefopt::Method::Sgdpo;
    cfg.r1 = c->r1;
    cfg.r2 = c->r2;
    cfg.span_mode = c->span_mode == PREFOPT_SPAN_SAME_INDEX
                        ? prefopt::SpanMode::SameIndex
                        : prefopt::SpanMode::DifferentIndex;
    cfg.sft_lr = c->sft_lr;
    cfg.po_lr = c->po_lr;
    cfg.batch_size = c->batch_size;
    cfg.sft_epochs = c->sft_epochs;
    cfg.po_steps = c->po_steps;
    cfg.warmup_ratio = c->warmup_ratio;
    cfg.ccr_window = c->ccr_window;
    cfg.seed = c->seed;
    cfg.optimizer = c->optimizer == PREFOPT_OPTIMIZER_SGD ? prefopt::OptimizerKind::Sgd
                                                          : prefopt::OptimizerKind::AdamW;
    cfg.weight_decay = c->weight_decay;
    cfg.threads = c->threads;
    return cfg;
}

prefopt::flow::FieldGrid to_field_grid(const prefopt_field_grid* g) {
    prefopt::flow::FieldGrid grid;
    if (g == nullptr) return grid;
    if (g->x1_lo != 0.0 || g->x1_hi != 0.0) {
        grid.x1_lo = g->x1_lo;
        grid.x1_hi = g->x1_hi;
    }
    if (g->x2_lo != 0.0 || g->x2_hi != 0.0) {
        grid.x2_lo = g->x2_lo;
        grid.x2_hi = g->x2_hi;
    }
    if (g->resolution != 0) grid.resolution = g->resolution;
    if (g->truncation != 0.0) grid.truncation = g->truncation;
    return grid;
}

std::vector<prefopt::flow::FieldPoint> build_field(int32_t method, double beta,
                                                   const prefopt_field_grid* grid,
                                                   const prefopt_pilot_params* pilot) {
    std::optional<prefopt::flow::PilotParams> pp;
    if (pilot != nullptr) {
        prefopt::flow::PilotParams p;
        p.fixed_y = pilot->fixed_y != 0;
        p.y1 = pilot->y1;
        p.y2 = pilot->y2;
        p.p1 = pilot->p1;
        p.p2 = pilot->p2;
        pp = p;
    }
    const auto m = method == PREFOPT_FIELD_PILOT ? prefopt::flow::FieldMethod::Pilot
                                                 : prefopt::flow::FieldMethod::Dpo;
    return prefopt::flow::field_grid(m, prefopt::math::Beta(beta == 0.0 ? 0.1 : beta),
                                     to_field_grid(grid), pp);
}

prefopt::flow::Landscape build_landscape(const prefopt_landscape_spec* spec) {
    if (spec == nullptr) prefopt::throw_invalid("landscape spec is required");
    const double beta_v = spec->beta == 0.0 ? 0.1 : spec->beta;
    prefopt::flow::Range a{0.05, 2.0}, b{0.05, 2.0};
    if (spec->a_lo != 0.0 || spec->a_hi != 0.0) a = {spec->a_lo, spec->a_hi};
    if (spec->b_lo != 0.0 || spec->b_hi != 0.0) b = {spec->b_lo, spec->b_hi};
    const int res = spec->resolution == 0 ? 40 : spec->resolution;
    const prefopt::math::Beta beta(beta_v);
    switch (spec->kind) {
        case PREFOPT_LANDSCAPE_FZ:
            return prefopt::flow::fz_landscape(spec->z == 0.0 ? 1.0 : spec->z, a, b, res, beta);
        case PREFOPT_LANDSCAPE_DX1:
            return prefopt::flow::partial_landscape(prefopt::flow::PartialAxis::ChosenPartial, a,
                                                    b, res, beta);
        case PREFOPT_LANDSCAPE_DX2:
            return prefopt::flow::partial_landscape(prefopt::flow::PartialAxis::RejectedPartial, a,
                                                    b, res, beta);
        default:
            prefopt::throw_invalid("unknown landscape kind");
    }
}

std::vector<std::vector<int>> sft_corpus(const prefopt_dataset* dataset) {
    std::vector<std::vector<int>> corpus;
    corpus.reserve(dataset->tokens.size());
    for (const auto& t : dataset->tokens) {
        std::vector<int> seq = t.prompt;
        seq.insert(seq.end(), t.chosen.begin(), t.chosen.end());
        corpus.push_back(std::move(seq));
    }
    return corpus;
}

}  // namespace

extern "C" {

const char* prefopt_last_error(void) { return g_last_error.c_str(); }

const char* prefopt_status_name(prefopt_status status) {
    switch (status) {
        case PREFOPT_OK: return "ok";
        case PREFOPT_ERR_INVALID_ARGUMENT: return "invalid argument";
        case PREFOPT_ERR_IO: return "io error";
        case PREFOPT_ERR_PARSE: return "parse error";
        case PREFOPT_ERR_CONFIG: return "config error";
        case PREFOPT_ERR_TRAINING: return "training error";
        case PREFOPT_ERR_VERIFY: return "verification failure";
        case PREFOPT_ERR_INTERNAL: return "internal error";
    }
    return "unknown";
}

prefopt_status prefopt_model_create(const prefopt_model_config* config, uint64_t init_seed,
                                    prefopt_model** out) {
    if (out == nullptr) return invalid_arg("out pointer is required");
    *out = nullptr;
    return guarded([&]() {
        auto model = std::make_unique<prefopt_model>();
        model->params = prefopt::ModelParams(to_model_config(config), init_seed);
        *out = model.release();
    });
}

prefopt_status prefopt_model_clone(const prefopt_model* model, prefopt_model** out) {
    if (model == nullptr || out == nullptr) return invalid_arg("model and out are required");
    *out = nullptr;
    return guarded([&]() {
        auto copy = std::make_unique<prefopt_model>();
        copy->params = prefopt::clone_frozen(model->params);
        *out = copy.release();
    });
}

void prefopt_model_free(prefopt_model* model) { delete model; }

int64_t prefopt_model_param_count(const prefopt_model* model) {
    return model == nullptr ? -1 : static_cast<int64_t>(model->params.param_count());
}

prefopt_status prefopt_model_save(const prefopt_model* model, const char* path) {
    if (model == nullptr || path == nullptr) return invalid_arg("model and path are required");
    return guarded([&]() { prefopt::save_checkpoint(model->params, path); });
}

prefopt_status prefopt_model_load(const char* path, prefopt_model** out) {
    if (path == nullptr || out == nullptr) return invalid_arg("path and out are required");
    *out = nullptr;
    return guarded([&]() {
        auto model = std::make_unique<prefopt_model>();
        model->params = prefopt::load_checkpoint(path);
        *out = model.release();
    });
}

prefopt_status prefopt_model_sample(const prefopt_model* model, const char* prompt,
                                    int32_t max_len, uint64_t seed, double temperature,
                                    char** out) {
    if (model == nullptr || out == nullptr) return invalid_arg("model and out are required");
    *out = nullptr;
    return guarded([&]() {
        std::vector<int> prompt_ids =
            prefopt::Vocab::encode(prompt == nullptr ? std::string_view() : prompt);
        std::vector<int> ids =
            prefopt::sample(model->params, prompt_ids, max_len, seed, temperature);
        const std::string text = prefopt::Vocab::decode(ids);
        char* buf = static_cast<char*>(::operator new(text.size() + 1));
        std::memcpy(buf, text.c_str(), text.size() + 1);
        *out = buf;
    });
}

void prefopt_string_free(char* s) { ::operator delete(s); }

prefopt_status prefopt_dataset_synth(const prefopt_synth_spec* spec, prefopt_dataset** out) {
    if (out == nullptr) return invalid_arg("out pointer is required");
    *out = nullptr;
    return guarded([&]() {
        prefopt::data::SynthSpec s;
        if (spec != nullptr) {
            if (spec->rule != nullptr) s.rule = prefopt::data::rule_from_id(spec->rule);
            if (spec->n_examples != 0) s.n_examples = spec->n_examples;
            if (spec->sym_lo != 0) s.sym_lo = spec->sym_lo;
            if (spec->sym_hi != 0) s.sym_hi = spec->sym_hi;
            if (spec->prompt_min != 0) s.prompt_min = spec->prompt_min;
            if (spec->prompt_max != 0) s.prompt_max = spec->prompt_max;
            if (spec->resp_min != 0) s.resp_min = spec->resp_min;
            if (spec->resp_max != 0) s.resp_max = spec->resp_max;
            if (spec->suffix_k != 0) s.suffix_k = spec->suffix_k;
            s.seed = spec->seed;
        }
        auto ds = std::make_unique<prefopt_dataset>();
        ds->text = prefopt::data::synth_dataset(s);
        ds->tokens = prefopt::data::tokenize_all(ds->text);
        *out = ds.release();
    });
}

prefopt_status prefopt_dataset_load_jsonl(const char* path, prefopt_dataset** out) {
    if (path == nullptr || out == nullptr) return invalid_arg("path and out are required");
    *out = nullptr;
    return guarded([&]() {
        auto ds = std::make_unique<prefopt_dataset>();
        ds->text = prefopt::data::load_jsonl(path);
        ds->tokens = prefopt::data::tokenize_all(ds->text);
        *out = ds.release();
    });
}

prefopt_status prefopt_dataset_save_jsonl(const prefopt_dataset* dataset, const char* path) {
    if (dataset == nullptr || path == nullptr) return invalid_arg("dataset and path are required");
    return guarded([&]() { prefopt::data::save_jsonl(dataset->text, path); });
}

size_t prefopt_dataset_size(const prefopt_dataset* dataset) {
    return dataset == nullptr ? 0 : dataset->text.size();
}

prefopt_status prefopt_dataset_truncate(prefopt_dataset* dataset, size_t n) {
    if (dataset == nullptr) return invalid_arg("dataset is required");
    return guarded([&]() {
        if (n < dataset->text.size()) {
            dataset->text.resize(n);
            dataset->tokens.resize(n);
        }
    });
}

void prefopt_dataset_free(prefopt_dataset* dataset) { delete dataset; }

void prefopt_train_config_init(prefopt_train_config* config) {
    if (config == nullptr) return;
    prefopt::TrainConfig d;
    config->beta = d.beta.value();
    config->method = PREFOPT_METHOD_SGDPO;
    config->r1 = d.r1;
    config->r2 = d.r2;
    config->span_mode = PREFOPT_SPAN_DIFFERENT_INDEX;
    config->sft_lr = d.sft_lr;
    config->po_lr = d.po_lr;
    config->batch_size = d.batch_size;
    config->sft_epochs = d.sft_epochs;
    config->po_steps = d.po_steps;
    config->warmup_ratio = d.warmup_ratio;
    config->ccr_window = d.ccr_window;
    config->seed = d.seed;
    config->optimizer = PREFOPT_OPTIMIZER_ADAMW;
    config->weight_decay = d.weight_decay;
    config->threads = d.threads;
}

prefopt_status prefopt_sft_train(prefopt_model* model, const prefopt_dataset* dataset,
                                 const prefopt_train_config* config) {
    if (model == nullptr || dataset == nullptr) return invalid_arg("model and dataset are required");
    return guarded([&]() {
        auto corpus = sft_corpus(dataset);
        prefopt::sft_train(model->params, corpus, to_train_config(config));
    });
}

prefopt_status prefopt_po_train(prefopt_model* model, const prefopt_dataset* dataset,
                                const prefopt_train_config* config,
                                prefopt_history** out_history) {
    if (model == nullptr || dataset == nullptr) return invalid_arg("model and dataset are required");
    if (out_history != nullptr) *out_history = nullptr;
    return guarded([&]() {
        auto history = std::make_unique<prefopt_history>();
        history->history = prefopt::po_train(model->params, dataset->tokens, to_train_config(config));
        if (out_history != nullptr) *out_history = history.release();
    });
}

prefopt_status prefopt_eval_margin_accuracy(const prefopt_model* model,
                                            const prefopt_model* ref_model,
                                            const prefopt_dataset* dataset, double beta,
                                            double* out) {
    if (model == nullptr || ref_model == nullptr || dataset == nullptr || out == nullptr)
        return invalid_arg("model, ref_model, dataset and out are required");
    return guarded([&]() {
        *out = prefopt::evaluate_margin_accuracy(model->params, ref_model->params, dataset->tokens,
                                                 prefopt::math::Beta(beta == 0.0 ? 0.1 : beta));
    });
}

size_t prefopt_history_size(const prefopt_history* history) {
    return history == nullptr ? 0 : history->history.records.size();
}

prefopt_status prefopt_history_row_at(const prefopt_history* history, size_t index,
                                      prefopt_history_row* out) {
    if (history == nullptr || out == nullptr) return invalid_arg("history and out are required");
    if (index >= history->history.records.size()) return invalid_arg("row index out of range");
    const prefopt::HistoryRecord& r = history->history.records[index];
    out->step = r.step;
    out->loss = r.loss;
    out->chosen_reward = r.chosen_reward;
    out->rejected_reward = r.rejected_reward;
    out->margin = r.margin;
    out->lr = r.lr;
    return PREFOPT_OK;
}

prefopt_status prefopt_history_save_csv(const prefopt_history* history, const char* path) {
    if (history == nullptr || path == nullptr) return invalid_arg("history and path are required");
    return guarded([&]() { history->history.save_csv(path); });
}

prefopt_status prefopt_history_ccr_crr(const prefopt_history* history, int32_t window, double* ccr,
                                       double* crr) {
    if (history == nullptr || ccr == nullptr || crr == nullptr)
        return invalid_arg("history, ccr and crr are required");
    return guarded([&]() {
        auto [c, r] = prefopt::ccr_crr(history->history, window);
        *ccr = c;
        *crr = r;
    });
}

void prefopt_history_free(prefopt_history* history) { delete history; }

prefopt_status prefopt_gradflow_csv(int32_t method, double beta, const prefopt_field_grid* grid,
                                    const prefopt_pilot_params* pilot, const char* path) {
    if (path == nullptr) return invalid_arg("path is required");
    return guarded([&]() {
        prefopt::flow::write_field_csv(build_field(method, beta, grid, pilot), path);
    });
}

prefopt_status prefopt_gradflow_svg(int32_t method, double beta, const prefopt_field_grid* grid,
                                    const prefopt_pilot_params* pilot, const char* path) {
    if (path == nullptr) return invalid_arg("path is required");
    return guarded([&]() {
        prefopt::svg::write_quiver(build_field(method, beta, grid, pilot), path);
    });
}

prefopt_status prefopt_landscape_csv(const prefopt_landscape_spec* spec, const char* path) {
    if (path == nullptr) return invalid_arg("path is required");
    return guarded([&]() { prefopt::flow::write_landscape_csv(build_landscape(spec), path); });
}

prefopt_status prefopt_landscape_svg(const prefopt_landscape_spec* spec, const char* path) {
    if (path == nullptr) return invalid_arg("path is required");
    return guarded([&]() { prefopt::svg::write_heatmap(build_landscape(spec), path); });
}

prefopt_status prefopt_verify_run(prefopt_verify_callback callback, void* user_data,
                                  int32_t* out_failures) {
    if (out_failures != nullptr) *out_failures = 0;
    int32_t failures = 0;
    prefopt_status status = guarded([&]() {
        auto results = prefopt::verify::run_all();
        for (const auto& r : results) {
            if (!r.passed) ++failures;
            if (callback != nullptr)
                callback(r.name.c_str(), r.passed ? 1 : 0, r.detail.c_str(), user_data);
        }
    });
    if (out_failures != nullptr) *out_failures = failures;
    if (status != PREFOPT_OK) return status;
    if (failures > 0) {
        g_last_error = std::to_string(failures) + " verification check(s) failed";
        return PREFOPT_ERR_VERIFY;
    }
    return PREFOPT_OK;
}

}  // extern "C"
