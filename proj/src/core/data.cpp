#include "core/data.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "core/rng.hpp"

namespace prefopt::data {

namespace {

using nlohmann::json;

std::string require_string_field(const json& obj, const char* field, std::size_t line_no) {
    if (!obj.contains(field))
        throw_parse("line " + std::to_string(line_no) + ": missing field '" + field + "'");
    const json& v = obj.at(field);
    if (!v.is_string())
        throw_parse("line " + std::to_string(line_no) + ": field '" + field +
                    "' must be a string");
    return v.get<std::string>();
}

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

TokenizedExample tokenize(const PreferenceExample& ex) {
    if (ex.chosen.empty() || ex.rejected.empty())
        throw_invalid("preference example must have nonempty chosen and rejected responses");
    TokenizedExample t;
    t.prompt = Vocab::encode(ex.prompt);
    t.chosen = Vocab::encode(ex.chosen);
    t.rejected = Vocab::encode(ex.rejected);
    return t;
}

std::vector<TokenizedExample> tokenize_all(std::span<const PreferenceExample> examples) {
    std::vector<TokenizedExample> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(tokenize(ex));
    return out;
}

std::vector<PreferenceExample> load_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw_io("cannot open dataset: " + path);
    std::vector<PreferenceExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (blank(line)) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw_parse("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!obj.is_object())
            throw_parse("line " + std::to_string(line_no) + ": expected a JSON object");
        PreferenceExample ex;
        ex.prompt = require_string_field(obj, "prompt", line_no);
        ex.chosen = require_string_field(obj, "chosen", line_no);
        ex.rejected = require_string_field(obj, "rejected", line_no);
        if (ex.chosen.empty() || ex.rejected.empty())
            throw_parse("line " + std::to_string(line_no) +
                        ": chosen and rejected must be nonempty");
        out.push_back(std::move(ex));
    }
    return out;
}

void save_jsonl(std::span<const PreferenceExample> examples, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw_io("cannot open dataset for writing: " + tmp);
        for (const auto& ex : examples) {
            json obj;
            obj["prompt"] = ex.prompt;
            obj["chosen"] = ex.chosen;
            obj["rejected"] = ex.rejected;
            os << obj.dump() << '\n';
        }
        if (!os) throw_io("failed writing dataset: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw_io("failed to move dataset into place: " + path);
}

SynthRule rule_from_id(std::string_view id) {
    if (id == "a" || id == "repeat_last") return SynthRule::RepeatLastToken;
    if (id == "b" || id == "suffix_contrast") return SynthRule::SuffixContrast;
    throw_config("unknown synthetic rule id: " + std::string(id));
}

std::string rule_id(SynthRule rule) {
    return rule == SynthRule::RepeatLastToken ? "repeat_last" : "suffix_contrast";
}

void SynthSpec::validate() const {
    if (n_examples < 1) throw_config("n_examples must be at least 1");
    if (sym_lo < 0 || sym_hi > 255 || sym_hi < sym_lo)
        throw_config("symbol range must satisfy 0 <= lo <= hi <= 255");
    if (sym_hi == sym_lo) throw_config("symbol range must contain at least two symbols");
    if (prompt_min < 1 || prompt_max < prompt_min) throw_config("invalid prompt length range");
    if (resp_min < 1 || resp_max < resp_min) throw_config("invalid response length range");
    if (suffix_k < 1) throw_config("suffix_k must be at least 1");
}

std::vector<PreferenceExample> synth_dataset(const SynthSpec& spec) {
    spec.validate();
    const int n_sym = spec.sym_hi - spec.sym_lo + 1;
    std::vector<PreferenceExample> out;
    out.reserve(static_cast<std::size_t>(spec.n_examples));

    for (int i = 0; i < spec.n_examples; ++i) {
        Rng rng(mix_seed(spec.seed, 0xDA7Au, static_cast<std::uint64_t>(i)));
        auto sym = [&]() {
            return static_cast<char>(spec.sym_lo + static_cast<int>(rng.bounded(n_sym)));
        };
        auto rand_text = [&](int len) {
            std::string s;
            s.reserve(static_cast<std::size_t>(len));
            for (int k = 0; k < len; ++k) s.push_back(sym());
            return s;
        };
        const int plen =
            spec.prompt_min + static_cast<int>(rng.bounded(spec.prompt_max - spec.prompt_min + 1));
        const int rlen =
            spec.resp_min + static_cast<int>(rng.bounded(spec.resp_max - spec.resp_min + 1));

        PreferenceExample ex;
        ex.prompt = rand_text(plen);
        if (spec.rule == SynthRule::RepeatLastToken) {
            ex.chosen.assign(static_cast<std::size_t>(rlen), ex.prompt.back());
            do {
                ex.rejected = rand_text(rlen);
            } while (ex.rejected == ex.chosen);
        } else {
            const int k = std::min(spec.suffix_k, rlen);
            const int stem_len = rlen - k;
            std::string stem = rand_text(stem_len);
            // The chosen suffix continues the last shared symbol (or the
            // prompt's when the stem is empty); the rejected suffix is noise
            // forced to differ token-wise.
            const char cont = stem_len > 0 ? stem.back() : ex.prompt.back();
            ex.chosen = stem + std::string(static_cast<std::size_t>(k), cont);
            ex.rejected = stem;
            for (int j = 0; j < k; ++j) {
                char c = sym();
                while (c == cont) c = sym();
                ex.rejected.push_back(c);
            }
        }
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace prefopt::data
