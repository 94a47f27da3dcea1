#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "uwassess/config.hpp"
#include "uwassess/image.hpp"
#include "uwassess/vlm_client.hpp"

namespace uwassess {

struct Caption {
    std::string text;
    std::string image_id;
};

struct AssessmentReport {
    std::string image_id;
    std::string caption;  // empty when the caption step was skipped
    std::string raw;
    std::map<std::string, std::string> sections;  // keyed extent/depth/risk/impact
    bool parsed = false;                          // all four sections found non-empty
};

struct ScoringReport {
    int score = 0;  // 1..10
    std::string explanation;
};

const std::array<std::string, 4>& report_section_names();  // Extent, Depth, Risk, Impact

// Every instruction the pipeline sends, as editable text. A directory of
// <field>.txt files overrides individual entries; the rest keep defaults.
struct TemplateSet {
    std::string image_tag;               // marks the image slot in the language stream
    std::string caption_instruction;     // step 1: weather, lighting, road, surroundings
    std::string semantic_label;          // prefix wrapped around the caption
    std::string structural_instruction;  // step 2: mandates the four sections in order
    std::string bare_instruction;        // the no-prompting arm
    std::string score_system;
    std::string score_requirements;
    std::string corpus_system;

    static TemplateSet defaults();
    static TemplateSet from_dir(const std::string& dir);
    void validate() const;  // the structural instruction must name all four sections
};

// Water pixels as a fixed overlay color on black; same mask, same pixels.
ImageBuffer render_mask_overlay(const ImageBuffer& mask);

// Mask as text: overall coverage (one decimal), per-cell grid coverage listed
// top-left to bottom-right, connected regions (4-connectivity) and the
// normalized bounding box of the largest.
std::string build_spatial_prompt(const ImageBuffer& mask, int64_t grid_rows = 3, int64_t grid_cols = 3);

std::string build_semantic_prompt(const std::string& caption, const TemplateSet& t);
std::string build_structural_prompt(const TemplateSet& t);

// Header-matched section split; tolerant of case, numbering, and markdown
// decoration. Returns the map and whether all four sections came back.
std::pair<std::map<std::string, std::string>, bool> parse_report_sections(const std::string& raw);

// Step 1 of the pipeline: one generation call asking for a scene caption.
Caption caption_image(const ImageBuffer& image, const std::string& image_id, VlmClient& client, const TemplateSet& t,
                      const ReportClientConfig& opts);

// The full two-step pipeline (or the single bare call when s3cot is off).
// The prompt flags in `opts` decide which text parts ride along in step 2.
AssessmentReport generate_report(const ImageBuffer& image, const ImageBuffer& mask, const std::string& image_id,
                                 VlmClient& client, const TemplateSet& t, const ReportClientConfig& opts);

// First digit run after the word "score" (any case), else the first digit run
// anywhere. Out of 1..10 or absent entirely raises ScoringParseError.
int parse_score(const std::string& text);

ScoringReport score_report(const ImageBuffer& image, const std::string& reference, const std::string& generated,
                           VlmClient& evaluator, const TemplateSet& t, const ReportClientConfig& opts);

struct CorpusDraft {
    std::string image_id;
    std::string reference;
    bool reviewed = false;  // drafts always start unreviewed; a human flips this
    std::string error;      // non-empty when this item failed
};

// One draft per image; per-item failures are recorded and the batch continues.
std::vector<CorpusDraft> build_reference_corpus(const std::vector<std::pair<std::string, ImageBuffer>>& images,
                                                VlmClient& client, const TemplateSet& t,
                                                const ReportClientConfig& opts);

// Client call with the configured retry budget; empty responses count as
// failures. Attempts beyond the first are logged to stderr.
std::string generate_with_retry(VlmClient& client, const ChatRequest& request, const ReportClientConfig& opts);

struct ScoreSummary {
    int64_t count = 0;
    double mean = 0.0;
    int min = 0;
    int max = 0;
    std::array<int64_t, 10> histogram{};  // counts for scores 1..10
};

// Scores outside 1..10 raise; an empty list yields a zero summary.
ScoreSummary summarize_scores(const std::vector<int>& scores);

}  // namespace uwassess
