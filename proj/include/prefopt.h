/*
 * prefopt — a desk-scale preference-optimization laboratory.
 *
 * C API over the C++ core: opaque handles, status codes, and a thread-local
 * error message. Strings returned through out-parameters are owned by the
 * library and freed with the matching *_free call.
 */
#ifndef PREFOPT_H
#define PREFOPT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PREFOPT_API __declspec(dllexport)
#else
#define PREFOPT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum prefopt_status {
    PREFOPT_OK = 0,
    PREFOPT_ERR_INVALID_ARGUMENT = 1,
    PREFOPT_ERR_IO = 2,
    PREFOPT_ERR_PARSE = 3,
    PREFOPT_ERR_CONFIG = 4,
    PREFOPT_ERR_TRAINING = 5,
    PREFOPT_ERR_VERIFY = 6,
    PREFOPT_ERR_INTERNAL = 7
} prefopt_status;

/* Message for the most recent failing call on this thread. */
PREFOPT_API const char* prefopt_last_error(void);
PREFOPT_API const char* prefopt_status_name(prefopt_status status);

typedef struct prefopt_model prefopt_model;
typedef struct prefopt_dataset prefopt_dataset;
typedef struct prefopt_history prefopt_history;

/* ------------------------------------------------------------------ model */

typedef struct prefopt_model_config {
    int32_t vocab_size;  /* 0 -> byte vocabulary (259) */
    int32_t embed_dim;   /* 0 -> 64 */
    int32_t n_layers;    /* 0 -> 2 */
    int32_t n_heads;     /* 0 -> 4 */
    int32_t max_context; /* 0 -> 256 */
    int32_t mlp_mult;    /* 0 -> 4 */
    int64_t param_cap;   /* 0 -> 200000, -1 -> uncapped */
} prefopt_model_config;

PREFOPT_API prefopt_status prefopt_model_create(const prefopt_model_config* config,
                                                uint64_t init_seed, prefopt_model** out);
PREFOPT_API prefopt_status prefopt_model_clone(const prefopt_model* model, prefopt_model** out);
PREFOPT_API void prefopt_model_free(prefopt_model* model);
PREFOPT_API int64_t prefopt_model_param_count(const prefopt_model* model);

PREFOPT_API prefopt_status prefopt_model_save(const prefopt_model* model, const char* path);
PREFOPT_API prefopt_status prefopt_model_load(const char* path, prefopt_model** out);

/* Ancestral sampling from a text prompt. *out is a NUL-terminated string;
 * free with prefopt_string_free. temperature 0 selects the argmax token. */
PREFOPT_API prefopt_status prefopt_model_sample(const prefopt_model* model, const char* prompt,
                                                int32_t max_len, uint64_t seed, double temperature,
                                                char** out);
PREFOPT_API void prefopt_string_free(char* s);

/* ---------------------------------------------------------------- dataset */

typedef struct prefopt_synth_spec {
    const char* rule;    /* "a"/"repeat_last" or "b"/"suffix_contrast" */
    int32_t n_examples;  /* 0 -> 100 */
    int32_t sym_lo;      /* 0 -> 'a' */
    int32_t sym_hi;      /* 0 -> 'j' */
    int32_t prompt_min;  /* 0 -> 4 */
    int32_t prompt_max;  /* 0 -> 8 */
    int32_t resp_min;    /* 0 -> 8 */
    int32_t resp_max;    /* 0 -> 16 */
    int32_t suffix_k;    /* 0 -> 2 */
    uint64_t seed;
} prefopt_synth_spec;

PREFOPT_API prefopt_status prefopt_dataset_synth(const prefopt_synth_spec* spec,
                                                 prefopt_dataset** out);
PREFOPT_API prefopt_status prefopt_dataset_load_jsonl(const char* path, prefopt_dataset** out);
PREFOPT_API prefopt_status prefopt_dataset_save_jsonl(const prefopt_dataset* dataset,
                                                      const char* path);
PREFOPT_API size_t prefopt_dataset_size(const prefopt_dataset* dataset);
/* Keeps the first n examples (or everything when n >= size). */
PREFOPT_API prefopt_status prefopt_dataset_truncate(prefopt_dataset* dataset, size_t n);
PREFOPT_API void prefopt_dataset_free(prefopt_dataset* dataset);

/* --------------------------------------------------------------- training */

typedef enum prefopt_method { PREFOPT_METHOD_DPO = 0, PREFOPT_METHOD_SGDPO = 1 } prefopt_method;
typedef enum prefopt_span_mode {
    PREFOPT_SPAN_DIFFERENT_INDEX = 0,
    PREFOPT_SPAN_SAME_INDEX = 1
} prefopt_span_mode;
typedef enum prefopt_optimizer {
    PREFOPT_OPTIMIZER_ADAMW = 0,
    PREFOPT_OPTIMIZER_SGD = 1
} prefopt_optimizer;

typedef struct prefopt_train_config {
    double beta;          /* scaling of log ratios; default 0.1 */
    int32_t method;       /* prefopt_method; default SGDPO */
    double r1;            /* chosen guide-window fraction, (0,1]; default 0.9 */
    double r2;            /* rejected guide-window fraction; default 0.9 */
    int32_t span_mode;    /* prefopt_span_mode; default different index */
    double sft_lr;        /* default 2e-3 */
    double po_lr;         /* default 5e-4 */
    int32_t batch_size;   /* default 16 */
    int32_t sft_epochs;   /* default 3 */
    int32_t po_steps;     /* default 500 */
    double warmup_ratio;  /* default 0.1 */
    int32_t ccr_window;   /* default 80 */
    uint64_t seed;        /* default 1 */
    int32_t optimizer;    /* prefopt_optimizer; default AdamW */
    double weight_decay;  /* default 0 */
    int32_t threads;      /* default 1 */
} prefopt_train_config;

PREFOPT_API void prefopt_train_config_init(prefopt_train_config* config);

/* Next-token cross-entropy training on the dataset's prompt+chosen text. */
PREFOPT_API prefopt_status prefopt_sft_train(prefopt_model* model, const prefopt_dataset* dataset,
                                             const prefopt_train_config* config);

/* Preference optimization against a frozen clone of the incoming model. */
PREFOPT_API prefopt_status prefopt_po_train(prefopt_model* model, const prefopt_dataset* dataset,
                                            const prefopt_train_config* config,
                                            prefopt_history** out_history);

/* Fraction of examples whose implicit chosen reward strictly beats the
 * rejected reward (ties fail). */
PREFOPT_API prefopt_status prefopt_eval_margin_accuracy(const prefopt_model* model,
                                                        const prefopt_model* ref_model,
                                                        const prefopt_dataset* dataset,
                                                        double beta, double* out);

/* ---------------------------------------------------------------- history */

typedef struct prefopt_history_row {
    int32_t step;
    double loss;
    double chosen_reward;
    double rejected_reward;
    double margin;
    double lr;
} prefopt_history_row;

PREFOPT_API size_t prefopt_history_size(const prefopt_history* history);
PREFOPT_API prefopt_status prefopt_history_row_at(const prefopt_history* history, size_t index,
                                                  prefopt_history_row* out);
PREFOPT_API prefopt_status prefopt_history_save_csv(const prefopt_history* history,
                                                    const char* path);
/* Mean chosen/rejected reward over the final min(window, size) rows. */
PREFOPT_API prefopt_status prefopt_history_ccr_crr(const prefopt_history* history, int32_t window,
                                                   double* ccr, double* crr);
PREFOPT_API void prefopt_history_free(prefopt_history* history);

/* ------------------------------------------------- gradient-flow emitters */

typedef enum prefopt_field_method {
    PREFOPT_FIELD_DPO = 0,
    PREFOPT_FIELD_PILOT = 1
} prefopt_field_method;

typedef struct prefopt_field_grid {
    double x1_lo, x1_hi; /* 0,0 -> [0.05, 1.5] */
    double x2_lo, x2_hi;
    int32_t resolution;  /* 0 -> 30 */
    double truncation;   /* 0 -> 1.5 */
} prefopt_field_grid;

typedef struct prefopt_pilot_params {
    int32_t fixed_y; /* nonzero: use (y1, y2); zero: derive y from residuals (p1, p2) */
    double y1, y2;
    double p1, p2;
} prefopt_pilot_params;

/* Emits x1,x2,dx1,dx2 rows (ascent direction, magnitude clamped to the
 * truncation value). pilot may be NULL for the plain method. */
PREFOPT_API prefopt_status prefopt_gradflow_csv(int32_t method, double beta,
                                                const prefopt_field_grid* grid,
                                                const prefopt_pilot_params* pilot,
                                                const char* path);
PREFOPT_API prefopt_status prefopt_gradflow_svg(int32_t method, double beta,
                                                const prefopt_field_grid* grid,
                                                const prefopt_pilot_params* pilot,
                                                const char* path);

typedef enum prefopt_landscape_kind {
    PREFOPT_LANDSCAPE_FZ = 0,      /* ratio factor f(z) over residuals (p1, p2) */
    PREFOPT_LANDSCAPE_DX1 = 1,     /* chosen partial over (x1, y2) */
    PREFOPT_LANDSCAPE_DX2 = 2      /* rejected partial over (x2, y1) */
} prefopt_landscape_kind;

typedef struct prefopt_landscape_spec {
    int32_t kind;       /* prefopt_landscape_kind */
    double z;           /* FZ only; 0 -> 1.0 */
    double a_lo, a_hi;  /* first axis; 0,0 -> [0.05, 2.0] */
    double b_lo, b_hi;  /* second axis; 0,0 -> [0.05, 2.0] */
    int32_t resolution; /* 0 -> 40 */
    double beta;        /* 0 -> 0.1 */
} prefopt_landscape_spec;

PREFOPT_API prefopt_status prefopt_landscape_csv(const prefopt_landscape_spec* spec,
                                                 const char* path);
PREFOPT_API prefopt_status prefopt_landscape_svg(const prefopt_landscape_spec* spec,
                                                 const char* path);

/* ----------------------------------------------------------- verification */

/* Called once per check with passed in {0,1}. */
typedef void (*prefopt_verify_callback)(const char* check_name, int passed, const char* detail,
                                        void* user_data);

/* Runs the built-in oracle suite. Returns PREFOPT_OK when every check passes,
 * PREFOPT_ERR_VERIFY otherwise; *out_failures receives the failing count. */
PREFOPT_API prefopt_status prefopt_verify_run(prefopt_verify_callback callback, void* user_data,
                                              int32_t* out_failures);

#ifdef __cplusplus
}
#endif

#endif /* PREFOPT_H */
