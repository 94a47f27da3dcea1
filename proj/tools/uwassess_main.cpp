// uwassess: one binary for the whole workflow. Every subcommand reads the
// same JSON run configuration (defaults when omitted) plus --set overrides,
// so an experiment is reproducible from its config file and seed alone.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "uwassess/checkpoint.hpp"
#include "uwassess/common.hpp"
#include "uwassess/config.hpp"
#include "uwassess/data.hpp"
#include "uwassess/image.hpp"
#include "uwassess/inference.hpp"
#include "uwassess/metrics.hpp"
#include "uwassess/report.hpp"
#include "uwassess/s2match.hpp"
#include "uwassess/trainer.hpp"
#include "uwassess/vlm_client.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace uwassess;

namespace {

struct CommonOpts {
    std::string config;
    std::vector<std::string> sets;
};

RunConfig load_cfg(const CommonOpts& c) { return load_run_config(c.config, c.sets); }

// shortest decimal form that parses back to the same double
std::string csv_num(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_text(const std::string& path, const std::string& content) {
    if (!fs::path(path).parent_path().empty()) fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError("cannot write " + path);
    out << content;
    out.flush();
    if (!out) throw PipelineError("write failed for " + path);
}

std::vector<std::pair<int, json>> read_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path);
    std::vector<std::pair<int, json>> lines;
    std::string line;
    int no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ConfigError(path + " line " + std::to_string(no) + " is not valid JSON");
        lines.emplace_back(no, std::move(j));
    }
    return lines;
}

// stems double as ids and output names, so they must not collide
std::string claim_stem(const std::string& image_path, std::set<std::string>& used) {
    std::string stem = fs::path(image_path).stem().string();
    if (stem.empty()) throw ConfigError("image path has no file name: " + image_path);
    if (!used.insert(stem).second) throw ConfigError("duplicate image stem '" + stem + "' (" + image_path + ")");
    return stem;
}

ImageBuffer tensor_to_mask_image(const Tensor& t) {
    if (t.shape().size() != 2) throw InvariantViolation("expected an HxW map");
    ImageBuffer m(1, t.shape()[0], t.shape()[1]);
    for (int64_t i = 0; i < t.numel(); ++i) m.pixels[static_cast<size_t>(i)] = t.at(i);
    return m;
}

TemplateSet resolve_templates(const ReportClientConfig& rc) {
    if (rc.template_dir.empty()) return TemplateSet::defaults();
    if (!fs::is_directory(rc.template_dir)) throw ConfigError("template dir not found: " + rc.template_dir);
    return TemplateSet::from_dir(rc.template_dir);
}

ordered_json metrics_to_json(const RunConfig& cfg, const std::string& checkpoint, const std::string& split,
                             bool student, bool macro, const EvalResult& res) {
    ordered_json j;
    j["config_hash"] = config_hash(cfg);
    j["checkpoint"] = checkpoint;
    j["split"] = split;
    j["model"] = student ? "student" : "teacher";
    j["macro"] = macro;
    j["images"] = res.images;
    j["binarize_threshold"] = cfg.s2match.binarize_threshold;
    j["counts"] = {{"tp", res.report.counts.tp},
                   {"fp", res.report.counts.fp},
                   {"tn", res.report.counts.tn},
                   {"fn", res.report.counts.fn}};
    j["metrics"] = {{"precision", res.report.precision}, {"recall", res.report.recall},
                    {"specificity", res.report.specificity}, {"dice", res.report.dice},
                    {"iou", res.report.iou},               {"g_mean", res.report.g_mean}};
    j["break_even"] = {{"threshold", res.curve.break_even_threshold}, {"value", res.curve.break_even_value}};
    j["per_image_iou"] = res.per_image_iou;
    return j;
}

std::string pr_to_csv(const PRCurve& curve) {
    std::string csv = "threshold,precision,recall\n";
    for (const auto& p : curve.points)
        csv += csv_num(p.threshold) + "," + csv_num(p.precision) + "," + csv_num(p.recall) + "\n";
    return csv;
}

void emit(const ordered_json& j) { std::cout << j.dump() << "\n"; }

// ---- subcommands ------------------------------------------------------

int cmd_train(const CommonOpts& common, const std::string& resume) {
    RunConfig cfg = load_cfg(common);
    TrainArtifacts art = run_training(cfg, resume);
    ordered_json out;
    out["run_dir"] = art.run_dir;
    out["log"] = art.log_path;
    out["final_checkpoint"] = art.final_checkpoint;
    if (art.has_val) out["val_iou"] = art.val_report.iou;
    emit(out);
    return 0;
}

int cmd_evaluate(const CommonOpts& common, const std::string& checkpoint, const std::string& split, int64_t workers,
                 bool student, bool macro, std::string out_dir) {
    RunConfig cfg = load_cfg(common);
    if (workers > 0) cfg.output.eval_workers = workers;
    if (student) cfg.output.eval_student = true;
    if (macro) cfg.output.eval_macro = true;

    std::string root;
    if (split == "val") {
        root = cfg.data.val_root;
        if (root.empty()) throw ConfigError("data.val_root is empty; nothing to evaluate");
    } else if (split == "train") {
        root = cfg.data.train_root;
        if (root.empty()) throw ConfigError("data.train_root is empty; nothing to evaluate");
    } else {
        throw ConfigError("split must be 'val' or 'train', got '" + split + "'");
    }

    auto model = load_model(cfg, checkpoint, cfg.output.eval_student);
    DatasetManifest data = scan_dataset(root);
    EvalOptions opt;
    opt.workers = cfg.output.eval_workers;
    opt.thresholds = cfg.output.eval_thresholds;
    opt.binarize_threshold = cfg.s2match.binarize_threshold;
    opt.macro = cfg.output.eval_macro;
    EvalResult res = evaluate_dataset(*model, data, opt);

    if (out_dir.empty()) out_dir = fs::path(checkpoint).parent_path().string();
    if (out_dir.empty()) out_dir = ".";
    fs::create_directories(out_dir);
    std::string metrics_path = (fs::path(out_dir) / ("metrics_" + split + ".json")).string();
    std::string pr_path = (fs::path(out_dir) / ("pr_" + split + ".csv")).string();
    write_text(metrics_path, metrics_to_json(cfg, checkpoint, split, cfg.output.eval_student,
                                             cfg.output.eval_macro, res)
                                 .dump(2) +
                                 "\n");
    write_text(pr_path, pr_to_csv(res.curve));

    ordered_json out;
    out["metrics"] = metrics_path;
    out["pr_csv"] = pr_path;
    out["images"] = res.images;
    out["iou"] = res.report.iou;
    emit(out);
    return 0;
}

int cmd_infer(const CommonOpts& common, const std::string& checkpoint, const std::vector<std::string>& images,
              const std::string& out_dir, bool student) {
    RunConfig cfg = load_cfg(common);
    auto model = load_model(cfg, checkpoint, student);
    fs::create_directories(out_dir);

    ordered_json meta;
    meta["config_hash"] = config_hash(cfg);
    meta["checkpoint"] = checkpoint;
    meta["model"] = student ? "student" : "teacher";
    meta["images"] = ordered_json::array();

    std::set<std::string> stems;
    for (const auto& path : images) {
        std::string stem = claim_stem(path, stems);
        ImageBuffer img = load_image(path);
        Tensor prob = predict_probs(*model, img);
        std::string prob_path = (fs::path(out_dir) / (stem + "_prob.npy")).string();
        std::string mask_path = (fs::path(out_dir) / (stem + "_mask.png")).string();
        save_npy(prob_path, prob);
        save_image(mask_path, tensor_to_mask_image(binarize(prob, cfg.s2match.binarize_threshold)));
        meta["images"].push_back({{"path", path}, {"mask", mask_path}, {"prob", prob_path}});
    }
    write_text((fs::path(out_dir) / "infer_meta.json").string(), meta.dump(2) + "\n");

    ordered_json out;
    out["out_dir"] = out_dir;
    out["images"] = images.size();
    emit(out);
    return 0;
}

int cmd_report(const CommonOpts& common, const std::string& checkpoint, const std::vector<std::string>& images,
               std::string out_path, bool student, bool no_s3cot) {
    RunConfig cfg = load_cfg(common);
    if (no_s3cot) cfg.report_client.s3cot = false;
    auto model = load_model(cfg, checkpoint, student);
    auto client = make_client(cfg.report_client);
    TemplateSet templates = resolve_templates(cfg.report_client);
    const std::string hash = config_hash(cfg);

    if (out_path.empty()) out_path = (fs::path(checkpoint).parent_path() / "reports.jsonl").string();
    if (!fs::path(out_path).parent_path().empty()) fs::create_directories(fs::path(out_path).parent_path());
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError("cannot write " + out_path);

    std::set<std::string> stems;
    int64_t failures = 0;
    for (const auto& path : images) {
        std::string stem = claim_stem(path, stems);
        ordered_json line;
        line["image_id"] = stem;
        line["image_path"] = path;
        line["config_hash"] = hash;
        try {
            ImageBuffer img = load_image(path);
            ImageBuffer mask = tensor_to_mask_image(
                binarize(predict_probs(*model, img), cfg.s2match.binarize_threshold));
            AssessmentReport rep = generate_report(img, mask, stem, *client, templates, cfg.report_client);
            line["caption"] = rep.caption;
            line["parsed"] = rep.parsed;
            line["sections"] = rep.sections;
            line["raw"] = rep.raw;
            line["error"] = "";
        } catch (const std::exception& e) {
            // one bad image must not sink the batch
            line["error"] = e.what();
            ++failures;
        }
        out << line.dump() << "\n";
    }
    out.flush();
    if (!out) throw PipelineError("write failed for " + out_path);

    ordered_json summary;
    summary["out"] = out_path;
    summary["reports"] = static_cast<int64_t>(images.size()) - failures;
    summary["failures"] = failures;
    emit(summary);
    if (failures == static_cast<int64_t>(images.size()))
        throw PipelineError("all " + std::to_string(failures) + " reports failed");
    return 0;
}

int cmd_corpus(const CommonOpts& common, const std::vector<std::string>& images, const std::string& out_path) {
    RunConfig cfg = load_cfg(common);
    auto client = make_client(cfg.report_client);
    TemplateSet templates = resolve_templates(cfg.report_client);
    const std::string hash = config_hash(cfg);

    std::set<std::string> stems;
    std::vector<std::pair<std::string, ImageBuffer>> loaded;
    for (const auto& path : images) loaded.emplace_back(claim_stem(path, stems), load_image(path));
    std::vector<CorpusDraft> drafts = build_reference_corpus(loaded, *client, templates, cfg.report_client);

    if (!fs::path(out_path).parent_path().empty()) fs::create_directories(fs::path(out_path).parent_path());
    std::string text;
    int64_t failures = 0;
    for (const auto& d : drafts) {
        ordered_json line;
        line["image_id"] = d.image_id;
        line["config_hash"] = hash;
        line["reference"] = d.reference;
        line["reviewed"] = d.reviewed;
        line["error"] = d.error;
        if (!d.error.empty()) ++failures;
        text += line.dump() + "\n";
    }
    write_text(out_path, text);

    ordered_json out;
    out["out"] = out_path;
    out["drafts"] = static_cast<int64_t>(drafts.size()) - failures;
    out["failures"] = failures;
    emit(out);
    if (!drafts.empty() && failures == static_cast<int64_t>(drafts.size()))
        throw PipelineError("all " + std::to_string(failures) + " corpus drafts failed");
    return 0;
}

int cmd_score(const CommonOpts& common, const std::string& reports_path, const std::string& corpus_path,
              std::string out_path, std::string summary_path) {
    RunConfig cfg = load_cfg(common);
    auto client = make_client(cfg.report_client);

    std::map<std::string, std::string> references;
    for (const auto& [no, j] : read_jsonl(corpus_path)) {
        if (!j.contains("image_id") || !j.contains("reference"))
            throw ConfigError(corpus_path + " line " + std::to_string(no) + " lacks image_id/reference");
        if (j.value("error", std::string()).empty() && !j.at("reference").get<std::string>().empty())
            references[j.at("image_id").get<std::string>()] = j.at("reference").get<std::string>();
    }

    auto report_lines = read_jsonl(reports_path);
    if (report_lines.empty()) throw ConfigError("no reports in " + reports_path);

    if (out_path.empty()) out_path = (fs::path(reports_path).parent_path() / "scores.jsonl").string();
    if (summary_path.empty()) summary_path = (fs::path(out_path).parent_path() / "score_summary.json").string();
    if (!fs::path(out_path).parent_path().empty()) fs::create_directories(fs::path(out_path).parent_path());

    std::string text;
    std::vector<int> scores;
    int64_t failures = 0;
    for (const auto& [no, j] : report_lines) {
        ordered_json line;
        std::string id = j.value("image_id", std::string());
        line["image_id"] = id;
        try {
            if (id.empty()) throw ConfigError("reports line " + std::to_string(no) + " lacks image_id");
            if (!j.value("error", std::string()).empty())
                throw ConfigError("report for '" + id + "' carries an error, skipping");
            auto ref = references.find(id);
            if (ref == references.end()) throw ConfigError("no reference report for image id '" + id + "'");
            std::string generated = j.value("raw", std::string());
            if (generated.empty()) throw ConfigError("report for '" + id + "' has no text");
            ImageBuffer img = load_image(j.value("image_path", std::string()));
            ScoringReport sr =
                score_report(img, ref->second, generated, *client, resolve_templates(cfg.report_client),
                             cfg.report_client);
            line["score"] = sr.score;
            line["explanation"] = sr.explanation;
            line["error"] = "";
            scores.push_back(sr.score);
        } catch (const std::exception& e) {
            line["error"] = e.what();
            ++failures;
        }
        text += line.dump() + "\n";
    }
    write_text(out_path, text);

    ScoreSummary s = summarize_scores(scores);
    ordered_json sum;
    sum["config_hash"] = config_hash(cfg);
    sum["count"] = s.count;
    sum["mean"] = s.mean;
    sum["min"] = s.min;
    sum["max"] = s.max;
    ordered_json hist;
    for (int v = 1; v <= 10; ++v) hist[std::to_string(v)] = s.histogram[static_cast<size_t>(v - 1)];
    sum["histogram"] = hist;
    sum["failures"] = failures;
    write_text(summary_path, sum.dump(2) + "\n");

    ordered_json out;
    out["out"] = out_path;
    out["summary"] = summary_path;
    out["count"] = s.count;
    out["mean"] = s.mean;
    out["failures"] = failures;
    emit(out);
    if (scores.empty()) throw PipelineError("all " + std::to_string(failures) + " items failed to score");
    return 0;
}

int cmd_toygen(const std::string& out_root, int64_t labeled, int64_t unlabeled, int64_t val, int64_t size,
               double min_cov, double max_cov, uint64_t seed) {
    ToyConfig cfg;
    cfg.n_labeled = labeled;
    cfg.n_unlabeled = unlabeled;
    cfg.n_val = val;
    cfg.image_size = size;
    cfg.min_coverage = min_cov;
    cfg.max_coverage = max_cov;
    DatasetManifest train = generate_toy_dataset(cfg, seed, out_root);

    ordered_json out;
    out["out"] = out_root;
    out["train_labeled"] = train.labeled.size();
    out["train_unlabeled"] = train.unlabeled.size();
    out["val"] = val;
    emit(out);
    return 0;
}

int cmd_sweep(const CommonOpts& common, std::vector<double> values, std::string out_path) {
    RunConfig cfg = load_cfg(common);
    if (values.empty()) values = {0.5, 0.65, 0.8, 0.95};
    std::string base = cfg.output.run_dir.empty() ? resolve_run_dir(cfg) : cfg.output.run_dir;
    if (out_path.empty()) out_path = (fs::path(base) / "sweep_tau_s.csv").string();

    std::string csv = "tau_s,iou,dice,precision,recall,specificity,g_mean,config_hash\n";
    for (double v : values) {
        RunConfig arm = cfg;
        arm.s2match.tau_s = v;
        char tag[32];
        std::snprintf(tag, sizeof tag, "%g", v);
        arm.output.run_dir = (fs::path(base) / ("tau_s_" + std::string(tag))).string();
        TrainArtifacts art = run_training(arm);
        if (!art.has_val) throw ConfigError("sweep needs data.val_root for the comparison");
        const MetricReport& r = art.val_report;
        csv += csv_num(v) + "," + csv_num(r.iou) + "," + csv_num(r.dice) + "," + csv_num(r.precision) + "," +
               csv_num(r.recall) + "," + csv_num(r.specificity) + "," + csv_num(r.g_mean) + "," +
               config_hash(arm) + "\n";
        std::cerr << "sweep tau_s=" << tag << " val iou " << r.iou << "\n";
    }
    if (!fs::path(out_path).parent_path().empty()) fs::create_directories(fs::path(out_path).parent_path());
    write_text(out_path, csv);

    ordered_json out;
    out["out"] = out_path;
    out["rows"] = values.size();
    emit(out);
    return 0;
}

// ---- plotdata ---------------------------------------------------------

json load_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path + " is not valid JSON");
    return j;
}

int plot_radar(const std::string& metrics_path, const std::string& out_path) {
    json m = load_json_file(metrics_path);
    if (!m.contains("metrics")) throw ConfigError(metrics_path + " has no 'metrics' object");
    std::string csv = "metric,value\n";
    for (const char* name : {"precision", "recall", "specificity", "dice", "iou", "g_mean"}) {
        if (!m["metrics"].contains(name))
            throw ConfigError(metrics_path + " metrics lack '" + std::string(name) + "'");
        csv += std::string(name) + "," + csv_num(m["metrics"][name].get<double>()) + "\n";
    }
    write_text(out_path, csv);
    emit({{"out", out_path}, {"rows", 6}});
    return 0;
}

int plot_pr(const std::string& curve_path, const std::string& out_path) {
    std::ifstream in(curve_path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + curve_path);
    PRCurve curve;
    std::string line;
    int no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (no == 1 || line.empty()) continue;  // header
        PRPoint p;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &p.threshold, &p.precision, &p.recall) != 3)
            throw ConfigError(curve_path + " line " + std::to_string(no) + " is not threshold,precision,recall");
        curve.points.push_back(p);
    }
    if (curve.points.empty()) throw ConfigError(curve_path + " has no PR points");
    compute_break_even(curve);

    std::string csv = "threshold,precision,recall,kind\n";
    for (const auto& p : curve.points)
        csv += csv_num(p.threshold) + "," + csv_num(p.precision) + "," + csv_num(p.recall) + ",point\n";
    csv += csv_num(curve.break_even_threshold) + "," + csv_num(curve.break_even_value) + "," +
           csv_num(curve.break_even_value) + ",bep\n";
    write_text(out_path, csv);
    emit({{"out", out_path}, {"rows", curve.points.size() + 1}});
    return 0;
}

int plot_box(const std::string& values_path, const std::string& out_path, const std::string& label) {
    json j = load_json_file(values_path);
    std::vector<double> xs;
    const json* arr = nullptr;
    if (j.is_array()) arr = &j;
    else if (j.contains("per_image_iou")) arr = &j["per_image_iou"];
    else throw ConfigError(values_path + " is neither a number array nor a metrics file with per_image_iou");
    for (const auto& v : *arr) {
        if (!v.is_number()) throw ConfigError(values_path + " holds a non-numeric entry");
        xs.push_back(v.get<double>());
    }
    if (xs.empty()) throw ConfigError(values_path + " holds no values");

    std::string csv = "label,stat,value\n";
    const std::pair<const char*, double> stats[] = {
        {"min", 0.0}, {"q1", 0.25}, {"median", 0.5}, {"q3", 0.75}, {"max", 1.0}};
    for (const auto& [name, q] : stats) csv += label + "," + std::string(name) + "," + csv_num(quantile(xs, q)) + "\n";
    write_text(out_path, csv);
    emit({{"out", out_path}, {"values", xs.size()}});
    return 0;
}

int plot_violin(const std::string& scores_path, const std::string& out_path) {
    std::vector<int> scores;
    for (const auto& [no, j] : read_jsonl(scores_path)) {
        if (!j.value("error", std::string()).empty()) continue;
        if (!j.contains("score")) continue;
        if (!j["score"].is_number_integer())
            throw ConfigError(scores_path + " line " + std::to_string(no) + " has a non-integer score");
        scores.push_back(j["score"].get<int>());
    }
    if (scores.empty()) throw ConfigError(scores_path + " has no usable scores");
    ScoreSummary s = summarize_scores(scores);

    std::string csv = "score,count\n";
    for (int v = 1; v <= 10; ++v)
        csv += std::to_string(v) + "," + std::to_string(s.histogram[static_cast<size_t>(v - 1)]) + "\n";
    write_text(out_path, csv);
    emit({{"out", out_path}, {"scores", s.count}, {"mean", s.mean}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"water segmentation training, evaluation, and assessment reporting"};
    app.require_subcommand(1);

    // shared by every subcommand; fallthrough lets them sit on either side
    // of the subcommand name
    CommonOpts common;
    app.add_option("--config", common.config, "run configuration JSON; omit for built-in defaults");
    app.add_option("--set", common.sets, "dot-path override, e.g. s2match.tau=0.9 (repeatable)")
        ->type_size(1)
        ->allow_extra_args(false);

    auto sub = [&app](const char* name, const char* desc) {
        CLI::App* cmd = app.add_subcommand(name, desc);
        cmd->fallthrough();
        return cmd;
    };

    std::string train_resume;
    auto* train = sub("train", "run the semi-supervised training loop");
    train->add_option("--resume", train_resume, "checkpoint to continue from");
    train->callback([&] { cmd_train(common, train_resume); });

    std::string eval_ckpt, eval_split = "val", eval_out;
    int64_t eval_workers = 0;
    bool eval_student = false, eval_macro = false;
    auto* eval = sub("evaluate", "segmentation metrics on a dataset split");
    eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
    eval->add_option("--split", eval_split, "val or train")->capture_default_str();
    eval->add_option("--workers", eval_workers, "evaluation shards (0: from config)");
    eval->add_option("--out", eval_out, "output directory (default: next to the checkpoint)");
    eval->add_flag("--student", eval_student, "evaluate the student instead of the EMA teacher");
    eval->add_flag("--macro", eval_macro, "per-image macro average instead of pooled counts");
    eval->callback(
        [&] { cmd_evaluate(common, eval_ckpt, eval_split, eval_workers, eval_student, eval_macro, eval_out); });

    std::string infer_ckpt, infer_out;
    std::vector<std::string> infer_images;
    bool infer_student = false;
    auto* infer = sub("infer", "write water masks and probability maps for images");
    infer->add_option("--checkpoint", infer_ckpt, "trained checkpoint")->required();
    infer->add_option("--out", infer_out, "output directory")->required();
    infer->add_flag("--student", infer_student, "use the student weights");
    infer->add_option("images", infer_images, "input images")->required()->expected(-1);
    infer->callback([&] { cmd_infer(common, infer_ckpt, infer_images, infer_out, infer_student); });

    std::string report_ckpt, report_out;
    std::vector<std::string> report_images;
    bool report_student = false, report_bare = false;
    auto* report = sub("report", "assessment reports for images (segmentation + language model)");
    report->add_option("--checkpoint", report_ckpt, "trained checkpoint")->required();
    report->add_option("--out", report_out, "output JSONL (default: reports.jsonl next to the checkpoint)");
    report->add_flag("--student", report_student, "use the student weights");
    report->add_flag("--no-s3cot", report_bare, "single bare-instruction call, no captioning or mask prompts");
    report->add_option("images", report_images, "input images")->required()->expected(-1);
    report->callback([&] { cmd_report(common, report_ckpt, report_images, report_out, report_student, report_bare); });

    std::string corpus_out = "corpus.jsonl";
    std::vector<std::string> corpus_images;
    auto* corpus = sub("corpus", "draft reference reports for scoring (review before use)");
    corpus->add_option("--out", corpus_out, "output JSONL")->capture_default_str();
    corpus->add_option("images", corpus_images, "input images")->required()->expected(-1);
    corpus->callback([&] { cmd_corpus(common, corpus_images, corpus_out); });

    std::string score_reports, score_corpus, score_out, score_summary;
    auto* score = sub("score", "grade generated reports against a reference corpus");
    score->add_option("--reports", score_reports, "reports JSONL")->required();
    score->add_option("--corpus", score_corpus, "reference corpus JSONL")->required();
    score->add_option("--out", score_out, "scores JSONL (default: scores.jsonl next to the reports)");
    score->add_option("--summary", score_summary, "summary JSON (default: next to the scores)");
    score->callback([&] { cmd_score(common, score_reports, score_corpus, score_out, score_summary); });

    std::string toy_out;
    int64_t toy_labeled = 10, toy_unlabeled = 200, toy_val = 20, toy_size = 64;
    double toy_min = 0.05, toy_max = 0.40;
    uint64_t toy_seed = 1;
    auto* toy = sub("toygen", "generate the synthetic water dataset");
    toy->add_option("--out", toy_out, "dataset root to create")->required();
    toy->add_option("--labeled", toy_labeled)->capture_default_str();
    toy->add_option("--unlabeled", toy_unlabeled)->capture_default_str();
    toy->add_option("--val", toy_val)->capture_default_str();
    toy->add_option("--size", toy_size, "square image size")->capture_default_str();
    toy->add_option("--min-coverage", toy_min)->capture_default_str();
    toy->add_option("--max-coverage", toy_max)->capture_default_str();
    toy->add_option("--seed", toy_seed)->capture_default_str();
    toy->callback(
        [&] { cmd_toygen(toy_out, toy_labeled, toy_unlabeled, toy_val, toy_size, toy_min, toy_max, toy_seed); });

    std::vector<double> sweep_values;
    std::string sweep_out;
    auto* sweep = sub("sweep", "train once per strong-consistency threshold and tabulate val metrics");
    sweep->add_option("--values", sweep_values, "thresholds to try (default 0.5,0.65,0.8,0.95)")->delimiter(',');
    sweep->add_option("--out", sweep_out, "comparison CSV (default: sweep_tau_s.csv in the run dir)");
    sweep->callback([&] { cmd_sweep(common, sweep_values, sweep_out); });

    auto* plot = sub("plotdata", "tidy CSVs for radar / PR / box / violin figures");
    plot->require_subcommand(1);
    std::string radar_in, radar_out;
    auto* radar = plot->add_subcommand("radar", "metric JSON -> metric,value rows");
    radar->add_option("--metrics", radar_in, "metrics JSON from evaluate")->required();
    radar->add_option("--out", radar_out, "output CSV")->required();
    radar->callback([&] { plot_radar(radar_in, radar_out); });

    std::string prc_in, prc_out;
    auto* prc = plot->add_subcommand("pr", "PR CSV pass-through with the break-even row appended");
    prc->add_option("--curve", prc_in, "PR CSV from evaluate")->required();
    prc->add_option("--out", prc_out, "output CSV")->required();
    prc->callback([&] { plot_pr(prc_in, prc_out); });

    std::string box_in, box_out, box_label = "iou";
    auto* box = plot->add_subcommand("box", "value list -> five-number summary rows");
    box->add_option("--values", box_in, "JSON number array, or metrics JSON with per_image_iou")->required();
    box->add_option("--out", box_out, "output CSV")->required();
    box->add_option("--label", box_label, "label column value")->capture_default_str();
    box->callback([&] { plot_box(box_in, box_out, box_label); });

    std::string violin_in, violin_out;
    auto* violin = plot->add_subcommand("violin", "scores JSONL -> score,count rows");
    violin->add_option("--scores", violin_in, "scores JSONL from score")->required();
    violin->add_option("--out", violin_out, "output CSV")->required();
    violin->callback([&] { plot_violin(violin_in, violin_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const InvariantViolation& e) {
        std::cerr << "invariant violated: " << e.what() << "\n";
        return 2;
    } catch (const ScoringParseError& e) {
        std::cerr << "scoring error: " << e.what() << "\n";
        return 3;
    } catch (const PipelineError& e) {
        std::cerr << "pipeline error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
