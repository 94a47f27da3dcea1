#include "uwassess/report.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "uwassess/common.hpp"

namespace uwassess {

namespace {

std::string lower_copy(const std::string& s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string percent1(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", fraction * 100.0);
    return buf;
}

std::string frac2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string cell_name(int64_t r, int64_t c, int64_t rows, int64_t cols) {
    if (rows == 3 && cols == 3) {
        static const char* rn[3] = {"top", "middle", "bottom"};
        static const char* cn[3] = {"left", "center", "right"};
        if (r == 1 && c == 1) return "center";
        return std::string(rn[r]) + "-" + cn[c];
    }
    return "r" + std::to_string(r + 1) + "c" + std::to_string(c + 1);
}

}  // namespace

const std::array<std::string, 4>& report_section_names() {
    static const std::array<std::string, 4> names = {"Extent", "Depth", "Risk", "Impact"};
    return names;
}

TemplateSet TemplateSet::defaults() {
    TemplateSet t;
    t.image_tag = "Image: <image>";
    t.caption_instruction =
        "Briefly describe this scene in one paragraph, covering the weather, the lighting conditions, the road "
        "condition, and the surroundings.";
    t.semantic_label = "Scene description: ";
    t.structural_instruction =
        "Using the provided image, segmentation overlay, scene description, and spatial summary, write an urban "
        "waterlogging assessment report with exactly four sections, in this order and with these headers: Extent, "
        "Depth, Risk, Impact. Write each section as 'Header: text' on its own lines and ground every statement in "
        "the provided mask and image.";
    t.bare_instruction = "Write an urban waterlogging assessment report for this image.";
    t.score_system =
        "You are a strict evaluator of urban waterlogging assessment reports. Given a test image, a reference "
        "report, and a generated report, respond with a numerical score from 1 to 10 and a short explanation.";
    t.score_requirements =
        "Evaluate the generated report against the reference report for comprehensiveness and details, grounded in "
        "the image. Respond with a score from 1 to 10 and explain your reasoning.";
    t.corpus_system =
        "You are an expert urban flood analyst. Write a concise reference assessment report for the provided "
        "surveillance image, covering waterlogging extent, depth, potential risks, and impacts. State only what is "
        "visible in the image.";
    return t;
}

TemplateSet TemplateSet::from_dir(const std::string& dir) {
    TemplateSet t = defaults();
    auto maybe = [&dir](const char* name, std::string& field) {
        std::filesystem::path p = std::filesystem::path(dir) / (std::string(name) + ".txt");
        std::ifstream in(p, std::ios::binary);
        if (!in) return;
        std::ostringstream buf;
        buf << in.rdbuf();
        std::string s = buf.str();
        while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
        field = s;
    };
    maybe("image_tag", t.image_tag);
    maybe("caption_instruction", t.caption_instruction);
    maybe("semantic_label", t.semantic_label);
    maybe("structural_instruction", t.structural_instruction);
    maybe("bare_instruction", t.bare_instruction);
    maybe("score_system", t.score_system);
    maybe("score_requirements", t.score_requirements);
    maybe("corpus_system", t.corpus_system);
    t.validate();
    return t;
}

void TemplateSet::validate() const {
    std::string low = lower_copy(structural_instruction);
    for (const auto& name : report_section_names()) {
        if (low.find(lower_copy(name)) == std::string::npos)
            throw ConfigError("structural instruction template does not name the " + name + " section");
    }
}

ImageBuffer render_mask_overlay(const ImageBuffer& mask) {
    if (mask.channels != 1) throw InvariantViolation("mask overlay expects a single-channel mask");
    ImageBuffer out(3, mask.height, mask.width);
    for (int64_t y = 0; y < mask.height; ++y)
        for (int64_t x = 0; x < mask.width; ++x) {
            if (mask.at(0, y, x) >= 0.5) {
                out.at(0, y, x) = 0.20;
                out.at(1, y, x) = 0.60;
                out.at(2, y, x) = 1.00;
            }
        }
    return out;
}

std::string build_spatial_prompt(const ImageBuffer& mask, int64_t grid_rows, int64_t grid_cols) {
    if (mask.channels != 1) throw InvariantViolation("spatial prompt expects a single-channel mask");
    if (grid_rows < 1 || grid_cols < 1) throw ConfigError("spatial grid must be at least 1x1");
    const int64_t h = mask.height, w = mask.width;
    for (const double v : mask.pixels)
        if (v != 0.0 && v != 1.0) throw InvariantViolation("spatial prompt expects a binary mask");

    int64_t water = 0;
    for (const double v : mask.pixels) water += v >= 0.5 ? 1 : 0;
    std::ostringstream out;
    out << "Water coverage: " << percent1(static_cast<double>(water) / static_cast<double>(h * w))
        << " of the image. Grid coverage (" << grid_rows << "x" << grid_cols
        << ", rows top to bottom, columns left to right): ";

    for (int64_t r = 0; r < grid_rows; ++r) {
        const int64_t y0 = r * h / grid_rows, y1 = (r + 1) * h / grid_rows;
        for (int64_t c = 0; c < grid_cols; ++c) {
            const int64_t x0 = c * w / grid_cols, x1 = (c + 1) * w / grid_cols;
            int64_t cell_water = 0, cell_total = std::max<int64_t>((y1 - y0) * (x1 - x0), 1);
            for (int64_t y = y0; y < y1; ++y)
                for (int64_t x = x0; x < x1; ++x) cell_water += mask.at(0, y, x) >= 0.5 ? 1 : 0;
            if (r || c) out << ", ";
            out << cell_name(r, c, grid_rows, grid_cols) << " "
                << percent1(static_cast<double>(cell_water) / static_cast<double>(cell_total));
        }
    }

    // 4-connected flood fill over the water pixels
    std::vector<uint8_t> seen(static_cast<size_t>(h * w), 0);
    int64_t regions = 0, best_size = 0;
    int64_t best_y0 = 0, best_y1 = 0, best_x0 = 0, best_x1 = 0;
    for (int64_t start = 0; start < h * w; ++start) {
        if (seen[start] || mask.pixels[start] < 0.5) continue;
        ++regions;
        int64_t size = 0, ry0 = h, ry1 = -1, rx0 = w, rx1 = -1;
        std::deque<int64_t> queue{start};
        seen[start] = 1;
        while (!queue.empty()) {
            int64_t p = queue.front();
            queue.pop_front();
            int64_t y = p / w, x = p % w;
            ++size;
            ry0 = std::min(ry0, y), ry1 = std::max(ry1, y);
            rx0 = std::min(rx0, x), rx1 = std::max(rx1, x);
            const int64_t ny[4] = {y - 1, y + 1, y, y};
            const int64_t nx[4] = {x, x, x - 1, x + 1};
            for (int k = 0; k < 4; ++k) {
                if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
                int64_t q = ny[k] * w + nx[k];
                if (!seen[q] && mask.pixels[q] >= 0.5) {
                    seen[q] = 1;
                    queue.push_back(q);
                }
            }
        }
        if (size > best_size) {
            best_size = size;
            best_y0 = ry0, best_y1 = ry1, best_x0 = rx0, best_x1 = rx1;
        }
    }

    out << ". Connected water regions: " << regions;
    if (regions > 0) {
        out << "; the largest spans rows " << frac2(static_cast<double>(best_y0) / static_cast<double>(h)) << "-"
            << frac2(static_cast<double>(best_y1 + 1) / static_cast<double>(h)) << " and columns "
            << frac2(static_cast<double>(best_x0) / static_cast<double>(w)) << "-"
            << frac2(static_cast<double>(best_x1 + 1) / static_cast<double>(w)) << " of the frame";
    }
    out << ".";
    return out.str();
}

std::string build_semantic_prompt(const std::string& caption, const TemplateSet& t) {
    if (caption.empty()) throw InvariantViolation("semantic prompt needs a non-empty caption");
    return t.semantic_label + caption;
}

std::string build_structural_prompt(const TemplateSet& t) {
    t.validate();
    return t.structural_instruction;
}

std::pair<std::map<std::string, std::string>, bool> parse_report_sections(const std::string& raw) {
    // A header line is a section name, optionally wrapped in markdown weight
    // or numbering, optionally followed by ':' and first content.
    auto match_header = [](const std::string& line, const std::string& name) -> std::pair<bool, std::string> {
        size_t i = 0;
        auto skip = [&](auto pred) {
            while (i < line.size() && pred(line[i])) ++i;
        };
        skip([](char c) { return c == ' ' || c == '\t'; });
        skip([](char c) { return c == '#'; });
        skip([](char c) { return c == '*' || c == '_'; });
        skip([](char c) { return c == ' ' || c == '\t'; });
        size_t digits = i;
        skip([](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
        if (i > digits) {
            if (i < line.size() && (line[i] == '.' || line[i] == ')')) ++i;
            skip([](char c) { return c == ' ' || c == '\t'; });
        }
        if (i + name.size() > line.size()) return {false, ""};
        for (size_t k = 0; k < name.size(); ++k) {
            if (std::tolower(static_cast<unsigned char>(line[i + k])) !=
                std::tolower(static_cast<unsigned char>(name[k])))
                return {false, ""};
        }
        i += name.size();
        skip([](char c) { return c == '*' || c == '_'; });
        skip([](char c) { return c == ' ' || c == '\t'; });
        if (i < line.size() && (line[i] == ':' || line[i] == '.' || line[i] == '-')) ++i;
        else if (i < line.size()) return {false, ""};  // extra words: not a header
        skip([](char c) { return c == ' ' || c == '\t'; });
        return {true, line.substr(i)};
    };

    std::map<std::string, std::string> sections;
    std::string current;
    std::istringstream in(raw);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        bool is_header = false;
        for (const auto& name : report_section_names()) {
            auto [ok, rest] = match_header(line, name);
            if (ok) {
                current = lower_copy(name);
                if (!rest.empty()) sections[current] = rest;
                is_header = true;
                break;
            }
        }
        if (is_header || current.empty()) continue;
        std::string& body = sections[current];
        if (!body.empty()) body += "\n";
        body += line;
    }

    bool complete = true;
    for (const auto& name : report_section_names()) {
        auto it = sections.find(lower_copy(name));
        if (it == sections.end() || it->second.empty()) complete = false;
    }
    return {std::move(sections), complete};
}

std::string generate_with_retry(VlmClient& client, const ChatRequest& request, const ReportClientConfig& opts) {
    std::string last_error = "empty response";
    for (int64_t attempt = 0; attempt <= opts.max_retries; ++attempt) {
        if (attempt > 0) {
            double backoff = opts.retry_backoff_seconds * std::pow(2.0, static_cast<double>(attempt - 1));
            std::cerr << "client retry " << attempt << "/" << opts.max_retries << " after: " << last_error << "\n";
            if (backoff > 0)
                std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
        }
        try {
            std::string response = client.generate(request);
            if (response.find_first_not_of(" \t\r\n") != std::string::npos) return response;
            last_error = "empty response";
        } catch (const PipelineError& e) {
            last_error = e.what();
        }
    }
    throw PipelineError("client failed after " + std::to_string(opts.max_retries) + " retries: " + last_error);
}

Caption caption_image(const ImageBuffer& image, const std::string& image_id, VlmClient& client, const TemplateSet& t,
                      const ReportClientConfig& opts) {
    ChatMessage user;
    user.role = "user";
    user.parts.push_back(text_part(t.image_tag));
    user.parts.push_back(image_part(image));
    user.parts.push_back(text_part(t.caption_instruction));
    std::string text = generate_with_retry(client, {user}, opts);

    // trim
    size_t b = text.find_first_not_of(" \t\r\n");
    size_t e = text.find_last_not_of(" \t\r\n");
    Caption cap;
    cap.image_id = image_id;
    cap.text = text.substr(b, e - b + 1);
    return cap;
}

AssessmentReport generate_report(const ImageBuffer& image, const ImageBuffer& mask, const std::string& image_id,
                                 VlmClient& client, const TemplateSet& t, const ReportClientConfig& opts) {
    AssessmentReport rep;
    rep.image_id = image_id;

    ChatMessage user;
    user.role = "user";
    if (!opts.s3cot) {
        user.parts.push_back(image_part(image));
        user.parts.push_back(text_part(t.bare_instruction));
    } else {
        Caption cap = caption_image(image, image_id, client, t, opts);
        rep.caption = cap.text;

        const bool any_prompt = opts.semantic_prompt || opts.spatial_prompt || opts.structural_prompt;
        if (!any_prompt) {
            // fully ablated step 2: just the image and a bare ask
            user.parts.push_back(image_part(image));
            user.parts.push_back(text_part(t.bare_instruction));
        } else {
            user.parts.push_back(text_part(t.image_tag));
            user.parts.push_back(image_part(image));
            user.parts.push_back(image_part(render_mask_overlay(mask)));
            if (opts.semantic_prompt) user.parts.push_back(text_part(build_semantic_prompt(rep.caption, t)));
            if (opts.spatial_prompt)
                user.parts.push_back(text_part(build_spatial_prompt(mask, opts.grid_rows, opts.grid_cols)));
            if (opts.structural_prompt) user.parts.push_back(text_part(build_structural_prompt(t)));
        }
    }

    rep.raw = generate_with_retry(client, {user}, opts);
    auto [sections, complete] = parse_report_sections(rep.raw);
    rep.sections = std::move(sections);
    rep.parsed = complete;
    return rep;
}

int parse_score(const std::string& text) {
    const std::string low = lower_copy(text);
    auto digit_run = [&](size_t from) -> int {
        for (size_t i = from; i < low.size(); ++i) {
            if (std::isdigit(static_cast<unsigned char>(low[i]))) {
                int v = 0;
                while (i < low.size() && std::isdigit(static_cast<unsigned char>(low[i]))) {
                    v = v * 10 + (low[i] - '0');
                    if (v > 1000) break;  // runaway digits cannot be a score anyway
                    ++i;
                }
                return v;
            }
        }
        return -1;
    };

    size_t at = low.find("score");
    int v = at == std::string::npos ? -1 : digit_run(at + 5);
    if (v < 0) v = digit_run(0);
    if (v < 0) throw ScoringParseError("no numeric score in evaluator response");
    if (v < 1 || v > 10) throw ScoringParseError("score " + std::to_string(v) + " outside 1..10");
    return v;
}

ScoringReport score_report(const ImageBuffer& image, const std::string& reference, const std::string& generated,
                           VlmClient& evaluator, const TemplateSet& t, const ReportClientConfig& opts) {
    if (reference.empty() || generated.empty())
        throw ConfigError("scoring needs both a reference and a generated report");

    ChatMessage system;
    system.role = "system";
    system.parts.push_back(text_part(t.score_system));
    ChatMessage user_image;
    user_image.role = "user";
    user_image.parts.push_back(image_part(image));
    ChatMessage user_text;
    user_text.role = "user";
    user_text.parts.push_back(text_part(t.score_requirements + "\n\nReference report:\n" + reference +
                                        "\n\nGenerated report:\n" + generated));

    ScoringReport sr;
    sr.explanation = generate_with_retry(evaluator, {system, user_image, user_text}, opts);
    sr.score = parse_score(sr.explanation);
    return sr;
}

std::vector<CorpusDraft> build_reference_corpus(const std::vector<std::pair<std::string, ImageBuffer>>& images,
                                                VlmClient& client, const TemplateSet& t,
                                                const ReportClientConfig& opts) {
    std::vector<CorpusDraft> drafts;
    drafts.reserve(images.size());
    for (const auto& [id, image] : images) {
        CorpusDraft d;
        d.image_id = id;
        try {
            ChatMessage system;
            system.role = "system";
            system.parts.push_back(text_part(t.corpus_system));
            ChatMessage user;
            user.role = "user";
            user.parts.push_back(image_part(image));
            d.reference = generate_with_retry(client, {system, user}, opts);
        } catch (const std::exception& e) {
            d.error = e.what();
        }
        drafts.push_back(std::move(d));
    }
    return drafts;
}

ScoreSummary summarize_scores(const std::vector<int>& scores) {
    ScoreSummary s;
    if (scores.empty()) return s;
    s.min = 11;
    s.max = 0;
    int64_t sum = 0;
    for (int v : scores) {
        if (v < 1 || v > 10) throw ConfigError("score " + std::to_string(v) + " outside 1..10");
        ++s.histogram[static_cast<size_t>(v - 1)];
        sum += v;
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
    }
    s.count = static_cast<int64_t>(scores.size());
    s.mean = static_cast<double>(sum) / static_cast<double>(s.count);
    return s;
}

}  // namespace uwassess
