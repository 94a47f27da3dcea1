#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uwassess/adaptation.hpp"
#include "uwassess/augment.hpp"
#include "uwassess/backbone.hpp"
#include "uwassess/s2match.hpp"

namespace uwassess {

struct DataConfig {
    std::string train_root;        // root holding labeled/ (+ optional unlabeled/)
    std::string val_root;          // labeled-only root used for evaluation
    double unlabeled_ratio = 1.0;  // fraction of the surplus unlabeled pool to keep

    void validate() const;
};

struct ReportClientConfig {
    std::string mode = "mock";  // mock | http | replay
    std::string endpoint = "http://localhost:8000/v1/chat/completions";
    std::string model = "deepseek-vl2";
    std::string auth_env = "UWASSESS_API_TOKEN";  // name of the env var holding the token
    // In mock/http mode a non-empty path records every call here as JSONL;
    // replay mode reads the same file back and refuses diverging requests.
    std::string transcript_path;
    std::string template_dir;                     // optional prompt template overrides
    int64_t max_retries = 2;
    double retry_backoff_seconds = 0.5;
    int64_t max_in_flight = 4;
    double timeout_seconds = 60.0;
    bool s3cot = true;  // false: one bare-instruction call per report
    bool semantic_prompt = true;
    bool spatial_prompt = true;
    bool structural_prompt = true;
    int64_t grid_rows = 3;
    int64_t grid_cols = 3;

    void validate() const;
};

struct OutputConfig {
    std::string run_dir;  // empty: auto-named <timestamp>-<config hash> under runs/
    int64_t eval_thresholds = 19;
    int64_t eval_workers = 1;
    bool eval_macro = false;    // macro-average across worker shards instead of pooling counts
    bool eval_student = false;  // evaluate the student instead of the EMA teacher

    void validate() const;
};

// The whole experiment in one bag; every tool subcommand reads the pieces it needs.
struct RunConfig {
    uint64_t seed = 1;
    BackboneConfig backbone;
    AdaptationConfig adaptation;
    AugmentConfig augment;
    S2MatchConfig s2match;
    DataConfig data;
    ReportClientConfig report_client;
    OutputConfig output;

    void validate() const;
};

RunConfig default_run_config();

// Parse JSON text; unknown keys anywhere are an error naming the offending path.
// Overrides are "dotted.path=value" strings applied before parsing, so a typo in
// an override fails the same way a typo in the file does.
RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides = {});

// Same, reading the file at `path` ("" or "-" reads defaults).
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

// Canonical serialization (sorted keys, defaults filled in). Two configs with the
// same effective settings serialize identically.
std::string run_config_to_json(const RunConfig& cfg);

// 16 hex chars over the canonical serialization, stamped into every artifact.
// The output and report_client sections are excluded: they move artifacts
// around or drive the downstream reporting stage, so they must not
// invalidate checkpoints.
std::string config_hash(const RunConfig& cfg);

}  // namespace uwassess
