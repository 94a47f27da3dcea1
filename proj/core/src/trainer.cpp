#include "uwassess/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

#include "uwassess/checkpoint.hpp"
#include "uwassess/common.hpp"
#include "uwassess/data.hpp"
#include "uwassess/inference.hpp"
#include "uwassess/s2match.hpp"

namespace uwassess {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Small in-memory cache; the toy-scale datasets fit comfortably.
class raster_cache {
  public:
    const ImageBuffer& image(const std::string& path) {
        auto it = images_.find(path);
        if (it == images_.end()) it = images_.emplace(path, load_image(path)).first;
        return it->second;
    }
    const ImageBuffer& mask(const std::string& path) {
        auto it = masks_.find(path);
        if (it == masks_.end()) it = masks_.emplace(path, load_mask(path)).first;
        return it->second;
    }

  private:
    std::map<std::string, ImageBuffer> images_;
    std::map<std::string, ImageBuffer> masks_;
};

std::string checkpoint_name(int64_t completed_epochs) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "checkpoint_epoch%03lld.ckpt", static_cast<long long>(completed_epochs));
    return buf;
}

Checkpoint snapshot_engine(Engine& engine, const Rng& loop_rng, int64_t completed_epochs, const std::string& hash) {
    Checkpoint ck;
    put_params(ck, "student/", engine.student().params());
    put_params(ck, "teacher/", engine.teacher().params());
    put_params(ck, "", engine.optimizer().state());
    ck.meta["config_hash"] = hash;
    ck.set_meta_u64("iter", static_cast<uint64_t>(engine.iteration()));
    ck.set_meta_u64("epoch", static_cast<uint64_t>(completed_epochs));
    ck.set_meta_u64("optim_step", static_cast<uint64_t>(engine.optimizer().step_count()));
    ck.set_meta_u64("total_iters", static_cast<uint64_t>(engine.total_iters()));
    ck.meta["rng"] = loop_rng.serialize();
    return ck;
}

void restore_optimizer_state(const Checkpoint& ck, AdamW& opt) {
    for (const auto& [name, tensor] : ck.tensors) {
        if (name.rfind("optim/", 0) == 0) opt.state().add(name, tensor.clone());
    }
    opt.set_step_count(static_cast<int64_t>(ck.meta_u64("optim_step")));
}

void check_hash(const Checkpoint& ck, const RunConfig& cfg, const std::string& path) {
    std::string want = config_hash(cfg);
    if (ck.meta_str("config_hash") != want)
        throw ConfigError("checkpoint " + path + " was written under config hash " + ck.meta_str("config_hash") +
                          " but the current config hashes to " + want);
}

int64_t batches_per_epoch(const DatasetManifest& train, const RunConfig& cfg) {
    return static_cast<int64_t>(sample_epoch(train, cfg.s2match.batch_labeled, cfg.s2match.batch_unlabeled,
                                             cfg.data.unlabeled_ratio, cfg.seed, 0)
                                    .size());
}

}  // namespace

std::string resolve_run_dir(const RunConfig& cfg) {
    if (!cfg.output.run_dir.empty()) return cfg.output.run_dir;
    auto now = std::chrono::system_clock::now();
    std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
    return std::string("runs/") + stamp + "-" + config_hash(cfg);
}

TrainArtifacts run_training(const RunConfig& cfg, const std::string& resume_checkpoint, int64_t stop_after_epochs) {
    cfg.validate();
    const std::string hash = config_hash(cfg);
    if (cfg.data.train_root.empty()) throw ConfigError("data.train_root is required for training");

    DatasetManifest train = scan_dataset(cfg.data.train_root);
    const int64_t per_epoch = batches_per_epoch(train, cfg);
    const int64_t total_iters = cfg.s2match.epochs * per_epoch;

    Rng loop_rng(derive_seed(cfg.seed, "train-loop"));
    int64_t start_epoch = 0;
    std::string run_dir;

    std::unique_ptr<Engine> engine;
    if (resume_checkpoint.empty()) {
        engine = std::make_unique<Engine>(cfg.backbone, cfg.adaptation, cfg.augment, cfg.s2match, cfg.seed,
                                          total_iters);
        run_dir = resolve_run_dir(cfg);
    } else {
        Checkpoint ck = load_checkpoint(resume_checkpoint);
        check_hash(ck, cfg, resume_checkpoint);
        if (static_cast<int64_t>(ck.meta_u64("total_iters")) != total_iters)
            throw ConfigError("checkpoint expects " + ck.meta_str("total_iters") + " total iterations, config yields " +
                              std::to_string(total_iters));
        engine = std::make_unique<Engine>(cfg.backbone, cfg.adaptation, cfg.augment, cfg.s2match, cfg.seed,
                                          total_iters);
        take_params(ck, "student/", engine->student().params());
        take_params(ck, "teacher/", engine->teacher().params());
        restore_optimizer_state(ck, engine->optimizer());
        engine->set_iteration(static_cast<int64_t>(ck.meta_u64("iter")));
        loop_rng.deserialize(ck.meta_str("rng"));
        start_epoch = static_cast<int64_t>(ck.meta_u64("epoch"));
        run_dir = fs::path(resume_checkpoint).parent_path().string();
        if (run_dir.empty()) run_dir = ".";
    }

    fs::create_directories(run_dir);
    {
        std::ofstream cfg_out(run_dir + "/config.json", std::ios::trunc);
        cfg_out << run_config_to_json(cfg) << "\n";
    }

    TrainArtifacts art;
    art.run_dir = run_dir;
    art.log_path = run_dir + "/train_log.jsonl";

    std::ofstream log(art.log_path, resume_checkpoint.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw PipelineError("cannot open " + art.log_path);

    const int64_t end_epoch =
        stop_after_epochs > 0 ? std::min<int64_t>(stop_after_epochs, cfg.s2match.epochs) : cfg.s2match.epochs;
    const bool paused = end_epoch < cfg.s2match.epochs;

    raster_cache cache;
    for (int64_t epoch = start_epoch; epoch < end_epoch; ++epoch) {
        auto plan = sample_epoch(train, cfg.s2match.batch_labeled, cfg.s2match.batch_unlabeled,
                                 cfg.data.unlabeled_ratio, cfg.seed, epoch);
        double epoch_loss = 0.0;
        for (const auto& batch : plan) {
            std::vector<LabeledSample> labeled;
            labeled.reserve(batch.labeled.size());
            for (int64_t idx : batch.labeled)
                labeled.push_back({cache.image(train.labeled[idx].first), cache.mask(train.labeled[idx].second)});
            std::vector<ImageBuffer> unlabeled;
            unlabeled.reserve(batch.unlabeled.size());
            for (int64_t idx : batch.unlabeled) unlabeled.push_back(cache.image(train.unlabeled[idx]));

            StepStats s = engine->train_step(labeled, unlabeled, loop_rng);
            epoch_loss += s.loss_total;

            ordered_json line;
            line["iter"] = s.iter;
            line["L_l"] = s.loss_sup;
            line["L_ws"] = s.loss_ws;
            line["L_ss"] = s.loss_ss;
            line["L"] = s.loss_total;
            line["gamma"] = s.gamma;
            line["lr"] = s.lr;
            log << line.dump() << "\n";
        }
        log.flush();

        Checkpoint ck = snapshot_engine(*engine, loop_rng, epoch + 1, hash);
        art.final_checkpoint = run_dir + "/" + checkpoint_name(epoch + 1);
        save_checkpoint(art.final_checkpoint, ck);
        std::cerr << "epoch " << (epoch + 1) << "/" << cfg.s2match.epochs << " mean loss "
                  << (plan.empty() ? 0.0 : epoch_loss / static_cast<double>(plan.size())) << "\n";
    }

    if (start_epoch >= end_epoch && art.final_checkpoint.empty())
        art.final_checkpoint = run_dir + "/" + checkpoint_name(end_epoch);

    if (!paused && !cfg.data.val_root.empty()) {
        DatasetManifest val = scan_dataset(cfg.data.val_root);
        Model& m = cfg.output.eval_student ? engine->student() : engine->teacher();
        EvalOptions opt;
        opt.workers = cfg.output.eval_workers;
        opt.thresholds = cfg.output.eval_thresholds;
        opt.binarize_threshold = cfg.s2match.binarize_threshold;
        opt.macro = cfg.output.eval_macro;
        EvalResult ev = evaluate_dataset(m, val, opt);
        art.val_report = ev.report;
        art.has_val = true;

        ordered_json vj;
        vj["config_hash"] = hash;
        vj["images"] = ev.images;
        vj["model"] = cfg.output.eval_student ? "student" : "teacher";
        vj["precision"] = ev.report.precision;
        vj["recall"] = ev.report.recall;
        vj["specificity"] = ev.report.specificity;
        vj["iou"] = ev.report.iou;
        vj["dice"] = ev.report.dice;
        vj["g_mean"] = ev.report.g_mean;
        std::ofstream vout(run_dir + "/val_metrics.json", std::ios::trunc);
        vout << vj.dump(2) << "\n";
    }
    return art;
}

std::unique_ptr<Model> load_model(const RunConfig& cfg, const std::string& checkpoint_path, bool student) {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    check_hash(ck, cfg, checkpoint_path);
    auto model = std::make_unique<Model>(cfg.backbone, cfg.adaptation, cfg.seed);
    take_params(ck, student ? "student/" : "teacher/", model->params());
    return model;
}

}  // namespace uwassess
