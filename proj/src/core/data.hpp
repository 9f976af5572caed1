#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core/trainer.hpp"

namespace prefopt::data {

// One preference triple in text form. Text is treated as raw bytes end to
// end; the byte tokenizer applies no normalization.
struct PreferenceExample {
    std::string prompt;
    std::string chosen;
    std::string rejected;
};

TokenizedExample tokenize(const PreferenceExample& ex);
std::vector<TokenizedExample> tokenize_all(std::span<const PreferenceExample> examples);

// Expects one JSON object per line with string fields prompt/chosen/rejected.
// Errors carry the 1-based line number.
std::vector<PreferenceExample> load_jsonl(const std::string& path);
void save_jsonl(std::span<const PreferenceExample> examples, const std::string& path);

enum class SynthRule {
    RepeatLastToken,  // chosen repeats the prompt's trailing token; rejected is noise
    SuffixContrast,   // chosen and rejected differ only in the final k tokens
};

// "a"/"repeat_last" and "b"/"suffix_contrast".
SynthRule rule_from_id(std::string_view id);
std::string rule_id(SynthRule rule);

struct SynthSpec {
    SynthRule rule = SynthRule::RepeatLastToken;
    int n_examples = 100;
    int sym_lo = 'a';  // inclusive byte range used for tokens
    int sym_hi = 'j';
    int prompt_min = 4, prompt_max = 8;
    int resp_min = 8, resp_max = 16;
    int suffix_k = 2;  // SuffixContrast only
    std::uint64_t seed = 1;

    void validate() const;
};

std::vector<PreferenceExample> synth_dataset(const SynthSpec& spec);

}  // namespace prefopt::data
