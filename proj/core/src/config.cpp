#include "uwassess/config.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "uwassess/common.hpp"

namespace uwassess {

using nlohmann::json;

void DataConfig::validate() const {
    if (unlabeled_ratio < 0.0 || unlabeled_ratio > 1.0)
        throw ConfigError("data.unlabeled_ratio must lie in [0, 1]");
}

void ReportClientConfig::validate() const {
    if (mode != "mock" && mode != "http" && mode != "replay")
        throw ConfigError("report_client.mode must be one of mock, http, replay");
    if (mode == "replay" && transcript_path.empty())
        throw ConfigError("report_client.transcript_path is required in replay mode");
    if (max_retries < 0) throw ConfigError("report_client.max_retries must be >= 0");
    if (retry_backoff_seconds < 0.0) throw ConfigError("report_client.retry_backoff_seconds must be >= 0");
    if (max_in_flight < 1) throw ConfigError("report_client.max_in_flight must be >= 1");
    if (timeout_seconds <= 0.0) throw ConfigError("report_client.timeout_seconds must be positive");
    if (grid_rows < 1 || grid_cols < 1) throw ConfigError("report_client grid must be at least 1x1");
}

void OutputConfig::validate() const {
    if (eval_thresholds < 2) throw ConfigError("output.eval_thresholds must be >= 2");
    if (eval_workers < 1) throw ConfigError("output.eval_workers must be >= 1");
}

void RunConfig::validate() const {
    backbone.validate();
    adaptation.validate();
    augment.validate();
    s2match.validate();
    data.validate();
    report_client.validate();
    output.validate();
}

namespace {

// Pulls typed values out of one JSON object and complains, with the full dotted
// path, about anything it does not recognize or cannot convert.
class section_reader {
  public:
    section_reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("config section " + path_ + " must be a JSON object");
    }

    void get(const char* key, double& out) {
        if (const json* v = take(key)) {
            if (!v->is_number()) throw ConfigError(where(key) + " must be a number");
            out = v->get<double>();
        }
    }
    void get(const char* key, int64_t& out) {
        if (const json* v = take(key)) {
            if (!v->is_number_integer()) throw ConfigError(where(key) + " must be an integer");
            out = v->get<int64_t>();
        }
    }
    void get(const char* key, uint64_t& out) {
        if (const json* v = take(key)) {
            if (!v->is_number_integer()) throw ConfigError(where(key) + " must be a non-negative integer");
            if (!v->is_number_unsigned() && v->get<int64_t>() < 0)
                throw ConfigError(where(key) + " must be a non-negative integer");
            out = v->get<uint64_t>();
        }
    }
    void get(const char* key, bool& out) {
        if (const json* v = take(key)) {
            if (!v->is_boolean()) throw ConfigError(where(key) + " must be true or false");
            out = v->get<bool>();
        }
    }
    void get(const char* key, std::string& out) {
        if (const json* v = take(key)) {
            if (!v->is_string()) throw ConfigError(where(key) + " must be a string");
            out = v->get<std::string>();
        }
    }
    void get(const char* key, std::vector<int64_t>& out) {
        if (const json* v = take(key)) {
            if (!v->is_array()) throw ConfigError(where(key) + " must be an array of integers");
            std::vector<int64_t> vals;
            for (const auto& e : *v) {
                if (!e.is_number_integer()) throw ConfigError(where(key) + " must be an array of integers");
                vals.push_back(e.get<int64_t>());
            }
            out = std::move(vals);
        }
    }

    // Hands back the subsection object ({} when absent) so nesting recurses.
    json subsection(const char* key) {
        if (const json* v = take(key)) {
            if (!v->is_object()) throw ConfigError(where(key) + " must be a JSON object");
            return *v;
        }
        return json::object();
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) throw ConfigError("unknown config key " + where(item.key().c_str()));
        }
    }

  private:
    const json* take(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    std::string where(const char* key) const { return path_.empty() ? std::string(key) : path_ + "." + key; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

BackboneConfig parse_backbone(const json& j) {
    BackboneConfig c;
    section_reader r(j, "backbone");
    r.get("stage_depths", c.stage_depths);
    r.get("stage_channels", c.stage_channels);
    r.get("neck_channels", c.neck_channels);
    r.get("patch_stride", c.patch_stride);
    r.get("attention_heads", c.attention_heads);
    r.get("mlp_ratio", c.mlp_ratio);
    r.get("input_h", c.input_h);
    r.get("input_w", c.input_w);
    r.get("norm_mean", c.norm_mean);
    r.get("norm_std", c.norm_std);
    r.finish();
    return c;
}

AdaptationConfig parse_adaptation(const json& j) {
    AdaptationConfig c;
    section_reader r(j, "adaptation");
    r.get("enabled", c.enabled);
    r.get("lora_rank", c.lora_rank);
    r.get("lora_scale", c.lora_scale);
    r.get("adapter_hidden", c.adapter_hidden);
    r.get("signal_mask_ratio", c.signal_mask_ratio);
    r.get("gates_enabled", c.gates_enabled);
    r.get("encoder_tune_ratio", c.encoder_tune_ratio);
    r.finish();
    return c;
}

AugmentConfig parse_augment(const json& j) {
    AugmentConfig c;
    section_reader r(j, "augment");
    r.get("resize_lo", c.resize_lo);
    r.get("resize_hi", c.resize_hi);
    r.get("crop_h", c.crop_h);
    r.get("crop_w", c.crop_w);
    r.get("hflip_prob", c.hflip_prob);
    r.get("jitter_prob", c.jitter_prob);
    r.get("jitter_lo", c.jitter_lo);
    r.get("jitter_hi", c.jitter_hi);
    r.get("hue_lo", c.hue_lo);
    r.get("hue_hi", c.hue_hi);
    r.get("gray_prob", c.gray_prob);
    r.get("blur_prob", c.blur_prob);
    r.get("blur_sigma_lo", c.blur_sigma_lo);
    r.get("blur_sigma_hi", c.blur_sigma_hi);
    r.finish();
    return c;
}

S2MatchConfig parse_s2match(const json& j) {
    S2MatchConfig c;
    section_reader r(j, "s2match");
    r.get("tau", c.tau);
    r.get("tau_s", c.tau_s);
    r.get("lambda_u", c.lambda_u);
    r.get("p_skip", c.p_skip);
    r.get("gamma_cap", c.gamma_cap);
    r.get("batch_labeled", c.batch_labeled);
    r.get("batch_unlabeled", c.batch_unlabeled);
    r.get("lr0", c.lr0);
    r.get("epochs", c.epochs);
    r.get("poly_power", c.poly_power);
    r.get("binarize_threshold", c.binarize_threshold);
    r.get("sc_enabled", c.sc_enabled);
    r.get("sd_enabled", c.sd_enabled);
    r.finish();
    return c;
}

DataConfig parse_data(const json& j) {
    DataConfig c;
    section_reader r(j, "data");
    r.get("train_root", c.train_root);
    r.get("val_root", c.val_root);
    r.get("unlabeled_ratio", c.unlabeled_ratio);
    r.finish();
    return c;
}

ReportClientConfig parse_report_client(const json& j) {
    ReportClientConfig c;
    section_reader r(j, "report_client");
    r.get("mode", c.mode);
    r.get("endpoint", c.endpoint);
    r.get("model", c.model);
    r.get("auth_env", c.auth_env);
    r.get("transcript_path", c.transcript_path);
    r.get("template_dir", c.template_dir);
    r.get("max_retries", c.max_retries);
    r.get("retry_backoff_seconds", c.retry_backoff_seconds);
    r.get("max_in_flight", c.max_in_flight);
    r.get("timeout_seconds", c.timeout_seconds);
    r.get("s3cot", c.s3cot);
    r.get("semantic_prompt", c.semantic_prompt);
    r.get("spatial_prompt", c.spatial_prompt);
    r.get("structural_prompt", c.structural_prompt);
    r.get("grid_rows", c.grid_rows);
    r.get("grid_cols", c.grid_cols);
    r.finish();
    return c;
}

OutputConfig parse_output(const json& j) {
    OutputConfig c;
    section_reader r(j, "output");
    r.get("run_dir", c.run_dir);
    r.get("eval_thresholds", c.eval_thresholds);
    r.get("eval_workers", c.eval_workers);
    r.get("eval_macro", c.eval_macro);
    r.get("eval_student", c.eval_student);
    r.finish();
    return c;
}

RunConfig parse_root(const json& j) {
    RunConfig c;
    section_reader r(j, "");
    r.get("seed", c.seed);
    c.backbone = parse_backbone(r.subsection("backbone"));
    c.adaptation = parse_adaptation(r.subsection("adaptation"));
    c.augment = parse_augment(r.subsection("augment"));
    c.s2match = parse_s2match(r.subsection("s2match"));
    c.data = parse_data(r.subsection("data"));
    c.report_client = parse_report_client(r.subsection("report_client"));
    c.output = parse_output(r.subsection("output"));
    r.finish();
    c.validate();
    return c;
}

// "a.b.c=value"; the value is JSON when it parses as JSON, a bare string otherwise.
void apply_override(json& root, const std::string& spec) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like section.key=value, got \"" + spec + "\"");
    std::string path = spec.substr(0, eq);
    std::string raw = spec.substr(eq + 1);

    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    json* node = &root;
    size_t start = 0;
    while (true) {
        size_t dot = path.find('.', start);
        std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override path has an empty segment: \"" + path + "\"");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        json& next = (*node)[part];
        if (next.is_null()) next = json::object();
        if (!next.is_object()) throw ConfigError("override path " + path + " descends into a non-object");
        node = &next;
        start = dot + 1;
    }
}

json config_to_json_obj(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["backbone"] = {
        {"stage_depths", c.backbone.stage_depths},
        {"stage_channels", c.backbone.stage_channels},
        {"neck_channels", c.backbone.neck_channels},
        {"patch_stride", c.backbone.patch_stride},
        {"attention_heads", c.backbone.attention_heads},
        {"mlp_ratio", c.backbone.mlp_ratio},
        {"input_h", c.backbone.input_h},
        {"input_w", c.backbone.input_w},
        {"norm_mean", c.backbone.norm_mean},
        {"norm_std", c.backbone.norm_std},
    };
    j["adaptation"] = {
        {"enabled", c.adaptation.enabled},
        {"lora_rank", c.adaptation.lora_rank},
        {"lora_scale", c.adaptation.lora_scale},
        {"adapter_hidden", c.adaptation.adapter_hidden},
        {"signal_mask_ratio", c.adaptation.signal_mask_ratio},
        {"gates_enabled", c.adaptation.gates_enabled},
        {"encoder_tune_ratio", c.adaptation.encoder_tune_ratio},
    };
    j["augment"] = {
        {"resize_lo", c.augment.resize_lo},
        {"resize_hi", c.augment.resize_hi},
        {"crop_h", c.augment.crop_h},
        {"crop_w", c.augment.crop_w},
        {"hflip_prob", c.augment.hflip_prob},
        {"jitter_prob", c.augment.jitter_prob},
        {"jitter_lo", c.augment.jitter_lo},
        {"jitter_hi", c.augment.jitter_hi},
        {"hue_lo", c.augment.hue_lo},
        {"hue_hi", c.augment.hue_hi},
        {"gray_prob", c.augment.gray_prob},
        {"blur_prob", c.augment.blur_prob},
        {"blur_sigma_lo", c.augment.blur_sigma_lo},
        {"blur_sigma_hi", c.augment.blur_sigma_hi},
    };
    j["s2match"] = {
        {"tau", c.s2match.tau},
        {"tau_s", c.s2match.tau_s},
        {"lambda_u", c.s2match.lambda_u},
        {"p_skip", c.s2match.p_skip},
        {"gamma_cap", c.s2match.gamma_cap},
        {"batch_labeled", c.s2match.batch_labeled},
        {"batch_unlabeled", c.s2match.batch_unlabeled},
        {"lr0", c.s2match.lr0},
        {"epochs", c.s2match.epochs},
        {"poly_power", c.s2match.poly_power},
        {"binarize_threshold", c.s2match.binarize_threshold},
        {"sc_enabled", c.s2match.sc_enabled},
        {"sd_enabled", c.s2match.sd_enabled},
    };
    j["data"] = {
        {"train_root", c.data.train_root},
        {"val_root", c.data.val_root},
        {"unlabeled_ratio", c.data.unlabeled_ratio},
    };
    j["report_client"] = {
        {"mode", c.report_client.mode},
        {"endpoint", c.report_client.endpoint},
        {"model", c.report_client.model},
        {"auth_env", c.report_client.auth_env},
        {"transcript_path", c.report_client.transcript_path},
        {"template_dir", c.report_client.template_dir},
        {"max_retries", c.report_client.max_retries},
        {"retry_backoff_seconds", c.report_client.retry_backoff_seconds},
        {"max_in_flight", c.report_client.max_in_flight},
        {"timeout_seconds", c.report_client.timeout_seconds},
        {"s3cot", c.report_client.s3cot},
        {"semantic_prompt", c.report_client.semantic_prompt},
        {"spatial_prompt", c.report_client.spatial_prompt},
        {"structural_prompt", c.report_client.structural_prompt},
        {"grid_rows", c.report_client.grid_rows},
        {"grid_cols", c.report_client.grid_cols},
    };
    j["output"] = {
        {"run_dir", c.output.run_dir},
        {"eval_thresholds", c.output.eval_thresholds},
        {"eval_workers", c.output.eval_workers},
        {"eval_macro", c.output.eval_macro},
        {"eval_student", c.output.eval_student},
    };
    return j;
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON");
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    for (const auto& o : overrides) apply_override(j, o);
    return parse_root(j);
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    if (path.empty() || path == "-") {
        json j = json::object();
        for (const auto& o : overrides) apply_override(j, o);
        return parse_root(j);
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str(), overrides);
}

std::string run_config_to_json(const RunConfig& cfg) {
    // nlohmann objects keep keys sorted, so dump() is already canonical
    return config_to_json_obj(cfg).dump(2);
}

std::string config_hash(const RunConfig& cfg) {
    // The hash ties checkpoints to the settings that shaped their weights.
    // The output section only moves artifacts around or tunes evaluation
    // mechanics, and report_client only drives the downstream language-model
    // stage; a checkpoint must stay loadable when those knobs move (e.g.
    // report-prompt ablations against one trained model).
    json j = config_to_json_obj(cfg);
    j.erase("output");
    j.erase("report_client");
    uint64_t h = fnv1a(j.dump());
    std::ostringstream out;
    out << std::hex << std::setfill('0') << std::setw(16) << h;
    return out.str();
}

}  // namespace uwassess
