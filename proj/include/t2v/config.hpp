#pragma once

// Run configuration: a human-readable key = value document with a versioned
// schema. Unknown keys are hard errors; CLI flags override file values.

#include <map>
#include <string>
#include <vector>

#include "t2v/util.hpp"

namespace t2v::cfg {

inline constexpr int kConfigVersion = 1;

struct KeySpec {
    enum class Type { integer, number, boolean, text };
    Type type;
    std::string default_value;
    const char* doc;
};

inline const std::map<std::string, KeySpec>& schema() {
    using T = KeySpec::Type;
    static const std::map<std::string, KeySpec> table = {
        {"config_version", {T::integer, "1", "schema version"}},
        {"seed", {T::integer, "0", "master seed for the run"}},
        {"prompt", {T::text, "", "text prompt"}},
        {"canvas", {T::integer, "512", "output canvas resolution (64|256|512)"}},
        {"vae_checkpoint", {T::text, "", "trained path-VAE checkpoint"}},
        {"backend", {T::text, "toy", "guidance backend id (toy|latent-diffusion)"}},
        {"backend.endpoint", {T::text, "", "model server endpoint for latent-diffusion"}},
        {"backend.model_cache", {T::text, "", "model cache dir (env T2V_MODEL_CACHE overrides)"}},
        {"backend.toy_side", {T::integer, "64", "toy backend latent side"}},

        {"vae.epochs", {T::integer, "100", "training epochs"}},
        {"vae.batch_size", {T::integer, "128", "training batch size"}},
        {"vae.lr", {T::number, "0.001", "initial learning rate"}},
        {"vae.dropout", {T::number, "0.1", "transformer dropout"}},
        {"vae.depth", {T::integer, "6", "transformer layers per branch"}},
        {"vae.init_seed", {T::integer, "1", "parameter init seed"}},

        {"stage1.mode", {T::text, "vsd", "distillation mode (vsd|sds)"}},
        {"stage1.iters", {T::integer, "1000", "stage-1 iterations"}},
        {"stage1.paths", {T::integer, "64", "initial path count m"}},
        {"stage1.guidance_scale", {T::number, "10", "classifier-free guidance scale"}},
        {"stage1.append_suffix", {T::boolean, "true", "append the style suffix to the prompt"}},
        {"stage1.suffix", {T::text, "minimal flat 2d vector", "style suffix"}},
        {"stage1.sharpness", {T::number, "2", "soft rasterizer slope during optimization"}},
        {"stage1.samples_per_segment", {T::integer, "12", "polygon densification"}},
        {"stage1.lr_z", {T::number, "0.05", "latent learning rate"}},
        {"stage1.lr_color", {T::number, "0.02", "color learning rate"}},
        {"stage1.lr_transform", {T::number, "0.01", "transform learning rate"}},
        {"stage1.snapshot_every", {T::integer, "100", "iterations between snapshots"}},

        {"stage2.iters", {T::integer, "800", "stage-2 total iterations"}},
        {"stage2.strength", {T::number, "0.4", "guidance-image noise strength"}},
        {"stage2.steps", {T::integer, "25", "guidance denoising steps"}},
        {"stage2.features", {T::text, "pyramid", "feature backend (pyramid|identity)"}},
        {"stage2.lambda_iou", {T::number, "0.01", "IoU loss weight"}},
        {"stage2.alpha_threshold", {T::number, "0.05", "simplify: opacity removal threshold"}},
        {"stage2.min_visible_px", {T::number, "10", "simplify: visible-area threshold"}},
        {"stage2.overlap_px", {T::integer, "5", "simplify: merge overlap threshold"}},
        {"stage2.reencode_eps", {T::number, "0.05", "re-encode chamfer tolerance"}},
        {"stage2.accounting_canvas", {T::integer, "512", "hard-mask accounting resolution"}},
        {"stage2.sharpness", {T::number, "2", "soft rasterizer slope during optimization"}},
        {"stage2.samples_per_segment", {T::integer, "12", "polygon densification"}},
        {"stage2.lr_z", {T::number, "0.05", "latent learning rate"}},
        {"stage2.lr_color", {T::number, "0.02", "color learning rate"}},
        {"stage2.lr_transform", {T::number, "0.01", "transform learning rate"}},

        {"eval.backend", {T::text, "pixel", "text-image backend id for metrics"}},
        {"eval.trials", {T::integer, "10", "layer-semantics trials"}},
        {"eval.drop", {T::number, "0.3", "layer-semantics drop fraction"}},
    };
    return table;
}

class Config {
public:
    Config() = default;

    static Config from_text(const std::string& text) {
        Config c;
        size_t pos = 0;
        int line_no = 0;
        while (pos < text.size()) {
            size_t eol = text.find('\n', pos);
            if (eol == std::string::npos) eol = text.size();
            std::string line = text.substr(pos, eol - pos);
            pos = eol + 1;
            ++line_no;
            if (size_t hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
            auto trim = [](std::string s) {
                while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
                while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
                return s;
            };
            if (trim(line).empty()) continue;
            size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
            c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        if (c.get_int("config_version") != kConfigVersion)
            throw ConfigError("unsupported config_version (expected " + std::to_string(kConfigVersion) + ")");
        return c;
    }

    static Config from_file(const std::filesystem::path& p) { return from_text(read_text_file(p)); }

    void set(const std::string& key, const std::string& value) {
        auto it = schema().find(key);
        if (it == schema().end()) throw ConfigError("unknown config key: " + key);
        validate_type(key, it->second.type, value);
        values_[key] = value;
    }

    std::string get(const std::string& key) const {
        auto spec = schema().find(key);
        if (spec == schema().end()) throw ConfigError("unknown config key: " + key);
        auto it = values_.find(key);
        return it != values_.end() ? it->second : spec->second.default_value;
    }

    int64_t get_int(const std::string& key) const { return std::stoll(get(key)); }
    double get_double(const std::string& key) const { return std::stod(get(key)); }
    bool get_bool(const std::string& key) const {
        std::string v = get(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ConfigError("config key " + key + " is not a boolean: " + v);
    }

    // resolved view (defaults + overrides), for run manifests
    std::map<std::string, std::string> resolved() const {
        std::map<std::string, std::string> out;
        for (const auto& [key, spec] : schema()) out[key] = get(key);
        return out;
    }

private:
    static void validate_type(const std::string& key, KeySpec::Type type, const std::string& value) {
        try {
            switch (type) {
                case KeySpec::Type::integer: {
                    size_t used = 0;
                    (void)std::stoll(value, &used);
                    if (used != value.size()) throw std::invalid_argument(value);
                    break;
                }
                case KeySpec::Type::number: {
                    size_t used = 0;
                    (void)std::stod(value, &used);
                    if (used != value.size()) throw std::invalid_argument(value);
                    break;
                }
                case KeySpec::Type::boolean:
                    if (value != "true" && value != "false" && value != "0" && value != "1" &&
                        value != "yes" && value != "no")
                        throw std::invalid_argument(value);
                    break;
                case KeySpec::Type::text:
                    break;
            }
        } catch (const std::exception&) {
            throw ConfigError("bad value for config key " + key + ": '" + value + "'");
        }
    }

    std::map<std::string, std::string> values_;
};

}  // namespace t2v::cfg
