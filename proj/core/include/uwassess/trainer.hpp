#pragma once

#include <memory>
#include <string>

#include "uwassess/backbone.hpp"
#include "uwassess/config.hpp"
#include "uwassess/metrics.hpp"

namespace uwassess {

struct TrainArtifacts {
    std::string run_dir;
    std::string log_path;          // one JSON line per iteration
    std::string final_checkpoint;  // written after the last epoch
    MetricReport val_report;       // validation pass with the configured model (teacher by default)
    bool has_val = false;
};

// Full training run: epoch loop over the sampled batch plan, per-iteration
// loss logging, a checkpoint per epoch, and a closing validation pass.
// `resume_checkpoint` picks up bit-exactly where that checkpoint left off,
// appending to the same run directory. A positive `stop_after_epochs` pauses
// the run once that many epochs are complete (the validation pass is skipped);
// resuming later must reproduce the uninterrupted run byte for byte.
TrainArtifacts run_training(const RunConfig& cfg, const std::string& resume_checkpoint = "",
                            int64_t stop_after_epochs = 0);

// Teacher (default) or student weights from a checkpoint, loaded into a fresh
// model built from cfg. Refuses checkpoints whose config hash differs.
std::unique_ptr<Model> load_model(const RunConfig& cfg, const std::string& checkpoint_path, bool student = false);

// Where run_training puts things; reused by the other subcommands.
std::string resolve_run_dir(const RunConfig& cfg);

}  // namespace uwassess
