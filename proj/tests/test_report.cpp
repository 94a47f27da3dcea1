#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include <json.hpp>

#include "uwassess/common.hpp"
#include "uwassess/report.hpp"
#include "uwassess/vlm_client.hpp"

using namespace uwassess;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("uwassess_rep_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

ImageBuffer gradient_image(int64_t h = 16, int64_t w = 16) {
    ImageBuffer img(3, h, w);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                img.at(c, y, x) = (static_cast<double>(x + y) / static_cast<double>(h + w - 2) + c * 0.1) / 1.3;
    return img;
}

ImageBuffer block_mask(int64_t h, int64_t w, int64_t y0, int64_t y1, int64_t x0, int64_t x1) {
    ImageBuffer m(1, h, w);
    for (int64_t y = y0; y < y1; ++y)
        for (int64_t x = x0; x < x1; ++x) m.at(0, y, x) = 1.0;
    return m;
}

// all text parts of one recorded request, concatenated
std::string transcript_text(const json& entry) {
    std::string out;
    for (const auto& msg : entry.at("request").at("messages"))
        for (const auto& part : msg.at("parts"))
            if (part.at("type") == "text") {
                out += part.at("text").get<std::string>();
                out += '\n';
            }
    return out;
}

int transcript_images(const json& entry) {
    int n = 0;
    for (const auto& msg : entry.at("request").at("messages"))
        for (const auto& part : msg.at("parts"))
            if (part.at("type") == "image") ++n;
    return n;
}

std::vector<json> read_transcript(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::vector<json> entries;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) entries.push_back(json::parse(line));
    return entries;
}

// fails (or answers empty) a fixed number of times, then succeeds
class FlakyClient : public VlmClient {
  public:
    FlakyClient(int failures, bool empty_instead) : failures_(failures), empty_(empty_instead) {}
    std::string generate(const ChatRequest&) override {
        ++calls_;
        if (calls_ <= failures_) {
            if (empty_) return "   \n";
            throw PipelineError("synthetic outage");
        }
        return "recovered on call " + std::to_string(calls_);
    }
    int calls_ = 0;

  private:
    int failures_;
    bool empty_;
};

}  // namespace

TEST_CASE("templates: defaults are valid and overridable per file") {
    TemplateSet t = TemplateSet::defaults();
    CHECK_NOTHROW(t.validate());
    for (const auto& name : report_section_names())
        CHECK(t.structural_instruction.find(name) != std::string::npos);

    fs::path dir = fresh_dir("tpl");
    std::ofstream(dir / "caption_instruction.txt") << "Describe the scene briefly.\n";
    TemplateSet o = TemplateSet::from_dir(dir.string());
    CHECK(o.caption_instruction == "Describe the scene briefly.");
    CHECK(o.image_tag == t.image_tag);  // untouched fields keep defaults

    std::ofstream(dir / "structural_instruction.txt") << "Sections: Extent, Depth, Impact only.\n";
    CHECK_THROWS_AS(TemplateSet::from_dir(dir.string()), ConfigError);  // Risk went missing
    fs::remove_all(dir);
}

TEST_CASE("mask overlay: fixed color on black, same mask same pixels") {
    ImageBuffer mask = block_mask(4, 4, 1, 3, 0, 2);
    ImageBuffer viz = render_mask_overlay(mask);
    REQUIRE(viz.channels == 3);
    CHECK(viz.at(0, 1, 0) == 0.20);
    CHECK(viz.at(1, 1, 0) == 0.60);
    CHECK(viz.at(2, 1, 0) == 1.00);
    CHECK(viz.at(0, 0, 0) == 0.0);
    CHECK(viz.at(1, 0, 0) == 0.0);
    CHECK(viz.at(2, 0, 0) == 0.0);
    ImageBuffer again = render_mask_overlay(mask);
    CHECK(viz.pixels == again.pixels);
}

TEST_CASE("spatial prompt: degenerate masks") {
    ImageBuffer zeros(1, 6, 6);
    std::string none = build_spatial_prompt(zeros);
    CHECK(none.find("Water coverage: 0.0%") != std::string::npos);
    CHECK(none.find("Connected water regions: 0.") != std::string::npos);
    CHECK(none.find("largest") == std::string::npos);
    CHECK(none.find("top-left 0.0%") != std::string::npos);
    CHECK(none.find("bottom-right 0.0%") != std::string::npos);

    ImageBuffer ones = block_mask(6, 6, 0, 6, 0, 6);
    std::string all = build_spatial_prompt(ones);
    CHECK(all.find("Water coverage: 100.0%") != std::string::npos);
    CHECK(all.find("center 100.0%") != std::string::npos);
    CHECK(all.find("Connected water regions: 1") != std::string::npos);
    CHECK(all.find("rows 0.00-1.00") != std::string::npos);
    CHECK(all.find("columns 0.00-1.00") != std::string::npos);
}

TEST_CASE("spatial prompt: left-half mask matches hand enumeration") {
    // 6x6, columns 0..2 water: cells are 2x2, so the left cell column is full,
    // the middle one half covered, the right one empty
    ImageBuffer m = block_mask(6, 6, 0, 6, 0, 3);
    std::string p = build_spatial_prompt(m);
    CHECK(p.find("Water coverage: 50.0%") != std::string::npos);
    CHECK(p.find("top-left 100.0%") != std::string::npos);
    CHECK(p.find("middle-left 100.0%") != std::string::npos);
    CHECK(p.find("bottom-left 100.0%") != std::string::npos);
    CHECK(p.find("top-center 50.0%") != std::string::npos);
    CHECK(p.find("center 50.0%") != std::string::npos);
    CHECK(p.find("top-right 0.0%") != std::string::npos);
    CHECK(p.find("bottom-right 0.0%") != std::string::npos);
    CHECK(p.find("Connected water regions: 1") != std::string::npos);
    CHECK(p.find("columns 0.00-0.50") != std::string::npos);
}

TEST_CASE("spatial prompt: connectivity is 4-neighbor and regions count correctly") {
    // two isolated corner pixels touch only diagonally in between: 2 regions
    ImageBuffer m(1, 4, 4);
    m.at(0, 0, 0) = 1.0;
    m.at(0, 3, 3) = 1.0;
    std::string p = build_spatial_prompt(m);
    CHECK(p.find("Connected water regions: 2") != std::string::npos);
    // equal sizes: the first found stays the reported largest
    CHECK(p.find("rows 0.00-0.25") != std::string::npos);
    CHECK(p.find("columns 0.00-0.25") != std::string::npos);

    // a plus shape is one region
    ImageBuffer plus(1, 5, 5);
    plus.at(0, 2, 1) = plus.at(0, 2, 2) = plus.at(0, 2, 3) = 1.0;
    plus.at(0, 1, 2) = plus.at(0, 3, 2) = 1.0;
    CHECK(build_spatial_prompt(plus).find("Connected water regions: 1") != std::string::npos);

    // diagonal line: every pixel its own region
    ImageBuffer diag(1, 4, 4);
    for (int64_t i = 0; i < 4; ++i) diag.at(0, i, i) = 1.0;
    CHECK(build_spatial_prompt(diag).find("Connected water regions: 4") != std::string::npos);
}

TEST_CASE("spatial prompt: printed coverage matches the mask to a tenth of a percent") {
    Rng rng(derive_seed(21, "cov"));
    for (int trial = 0; trial < 20; ++trial) {
        ImageBuffer m(1, 17, 13);  // deliberately not divisible by 3
        int64_t water = 0;
        for (auto& v : m.pixels) {
            v = rng.bernoulli(0.3) ? 1.0 : 0.0;
            water += v == 1.0 ? 1 : 0;
        }
        std::string p = build_spatial_prompt(m);
        auto at = p.find("Water coverage: ");
        REQUIRE(at != std::string::npos);
        double printed = std::stod(p.substr(at + 16));
        double actual = 100.0 * static_cast<double>(water) / static_cast<double>(17 * 13);
        CHECK(std::abs(printed - actual) <= 0.05 + 1e-12);
    }
}

TEST_CASE("spatial prompt: non-3x3 grids use coordinate labels; bad input throws") {
    ImageBuffer m = block_mask(4, 4, 0, 2, 0, 4);
    std::string p = build_spatial_prompt(m, 2, 2);
    CHECK(p.find("r1c1 100.0%") != std::string::npos);
    CHECK(p.find("r2c2 0.0%") != std::string::npos);
    CHECK(p.find("top-left") == std::string::npos);

    ImageBuffer soft(1, 4, 4);
    soft.at(0, 0, 0) = 0.3;
    CHECK_THROWS_AS(build_spatial_prompt(soft), InvariantViolation);
    CHECK_THROWS_AS(build_spatial_prompt(m, 0, 3), ConfigError);
}

TEST_CASE("semantic prompt wraps the caption and stays image-token free") {
    TemplateSet t = TemplateSet::defaults();
    std::string p = build_semantic_prompt("rainy night street", t);
    CHECK(p == "Scene description: rainy night street");
    CHECK(p.find("<image>") == std::string::npos);
    CHECK_THROWS_AS(build_semantic_prompt("", t), InvariantViolation);
}

TEST_CASE("section parser: clean, decorated, and broken inputs") {
    auto [clean, ok] = parse_report_sections("Extent: a\nDepth: b\nRisk: c\nImpact: d\n");
    CHECK(ok);
    CHECK(clean.at("extent") == "a");
    CHECK(clean.at("impact") == "d");

    std::string fancy =
        "## 1. Extent\nWater over half the road.\nStill spreading.\n"
        "**Depth:** roughly ankle height\n"
        "3) risk - slipping hazard\n"
        "IMPACT. buses rerouted\n";
    auto [dec, dok] = parse_report_sections(fancy);
    CHECK(dok);
    CHECK(dec.at("extent") == "Water over half the road.\nStill spreading.");
    CHECK(dec.at("depth").find("ankle height") != std::string::npos);
    CHECK(dec.at("risk").find("slipping") != std::string::npos);
    CHECK(dec.at("impact").find("buses") != std::string::npos);

    auto [partial, pok] = parse_report_sections("Extent: a\nDepth: b\n");
    CHECK_FALSE(pok);
    CHECK(partial.count("risk") == 0);

    // prose mentioning a section name mid-sentence is not a header
    auto [prose, prok] = parse_report_sections("Extent: a\nThe risk is high today.\nDepth: b\nRisk: c\nImpact: d\n");
    CHECK(prok);
    CHECK(prose.at("extent").find("The risk is high today.") != std::string::npos);

    // a header with trailing words is body, not a new section
    auto [trail, trok] = parse_report_sections("Extent of flooding: wide\n");
    CHECK_FALSE(trok);
    CHECK(trail.empty());
}

TEST_CASE("mock client: deterministic, payload-keyed answers per request flavor") {
    MockVlmClient mock;
    ImageBuffer img = gradient_image();

    ChatMessage cap_user;
    cap_user.role = "user";
    cap_user.parts = {text_part("Image: <image>"), image_part(img), text_part("Briefly describe this scene.")};
    std::string caption = mock.generate({cap_user});
    CHECK(caption.find("payload digest") != std::string::npos);
    CHECK(caption == mock.generate({cap_user}));
    CHECK(parse_report_sections(caption).second == false);

    ChatMessage rep_user;
    rep_user.role = "user";
    rep_user.parts = {text_part("Image: <image>"), image_part(img), image_part(render_mask_overlay(block_mask(4, 4, 0, 2, 0, 2))),
                      text_part("Scene description: x"), text_part("structure")};
    auto [secs, complete] = parse_report_sections(mock.generate({rep_user}));
    CHECK(complete);

    ChatMessage sys;
    sys.role = "system";
    sys.parts = {text_part("You are an evaluator.")};
    ChatMessage u_img;
    u_img.role = "user";
    u_img.parts = {image_part(img)};
    ChatMessage u_txt;
    u_txt.role = "user";
    u_txt.parts = {text_part("Reference...\nGenerated...")};
    int score = parse_score(mock.generate({sys, u_img, u_txt}));
    CHECK(score >= 1);
    CHECK(score <= 10);

    std::string draft = mock.generate({sys, u_img});
    CHECK(draft.find("Draft reference report") != std::string::npos);

    CHECK(mock.calls() == 5);

    // different image, different digest
    ChatMessage other = cap_user;
    other.parts[1] = image_part(gradient_image(8, 8));
    CHECK(mock.generate({other}) != caption);
}

TEST_CASE("caption step: one call, image token exactly once, trimmed result") {
    fs::path dir = fresh_dir("cap");
    fs::path transcript = dir / "t.jsonl";
    auto mock = std::make_unique<MockVlmClient>();
    RecordingVlmClient rec(std::move(mock), transcript.string());

    ReportClientConfig opts;
    Caption cap = caption_image(gradient_image(), "img0", rec, TemplateSet::defaults(), opts);
    CHECK(cap.image_id == "img0");
    CHECK_FALSE(cap.text.empty());
    CHECK(cap.text.front() != ' ');
    CHECK(cap.text.back() != '\n');

    auto entries = read_transcript(transcript);
    REQUIRE(entries.size() == 1);
    std::string payload = transcript_text(entries[0]);
    size_t first = payload.find("<image>");
    REQUIRE(first != std::string::npos);
    CHECK(payload.find("<image>", first + 1) == std::string::npos);
    CHECK(transcript_images(entries[0]) == 1);
    fs::remove_all(dir);
}

TEST_CASE("report pipeline: two calls, caption and coverage ride in step 2") {
    fs::path dir = fresh_dir("pipe");
    fs::path transcript = dir / "t.jsonl";
    auto owned = std::make_unique<MockVlmClient>();
    MockVlmClient* mock = owned.get();
    RecordingVlmClient rec(std::move(owned), transcript.string());

    ImageBuffer img = gradient_image();
    ImageBuffer mask = block_mask(16, 16, 4, 12, 2, 10);  // 64/256 = 25%
    ReportClientConfig opts;
    AssessmentReport rep = generate_report(img, mask, "img0", rec, TemplateSet::defaults(), opts);

    CHECK(mock->calls() == 2);
    CHECK(rep.parsed);
    CHECK(rep.sections.size() == 4);
    CHECK_FALSE(rep.caption.empty());

    auto entries = read_transcript(transcript);
    REQUIRE(entries.size() == 2);
    std::string step2 = transcript_text(entries[1]);
    CHECK(step2.find(rep.caption) != std::string::npos);
    CHECK(step2.find("Water coverage: 25.0%") != std::string::npos);
    for (const auto& name : report_section_names()) CHECK(step2.find(name) != std::string::npos);
    CHECK(transcript_images(entries[1]) == 2);
    fs::remove_all(dir);
}

TEST_CASE("report pipeline: prompt ablations change exactly the documented parts") {
    ImageBuffer img = gradient_image();
    ImageBuffer mask = block_mask(16, 16, 0, 8, 0, 16);
    TemplateSet t = TemplateSet::defaults();
    fs::path dir = fresh_dir("ablate");

    auto run = [&](ReportClientConfig opts, const char* tag) {
        fs::path transcript = dir / (std::string(tag) + ".jsonl");
        auto owned = std::make_unique<MockVlmClient>();
        MockVlmClient* mock = owned.get();
        RecordingVlmClient rec(std::move(owned), transcript.string());
        AssessmentReport rep = generate_report(img, mask, tag, rec, t, opts);
        return std::make_tuple(read_transcript(transcript), mock->calls(), rep);
    };

    ReportClientConfig base;
    auto [full_t, full_calls, full_rep] = run(base, "full");
    CHECK(full_calls == 2);
    std::string full2 = transcript_text(full_t[1]);
    CHECK(full2.find("Scene description: ") != std::string::npos);
    CHECK(full2.find("Water coverage: ") != std::string::npos);
    CHECK(full2.find("four sections") != std::string::npos);

    ReportClientConfig no_sem = base;
    no_sem.semantic_prompt = false;
    auto [sem_t, sem_calls, sem_rep] = run(no_sem, "nosem");
    CHECK(sem_calls == 2);  // the caption step still runs; only the payload thins out
    std::string sem2 = transcript_text(sem_t[1]);
    CHECK(sem2.find("Scene description: ") == std::string::npos);
    CHECK(sem2.find("Water coverage: ") != std::string::npos);

    ReportClientConfig no_spa = base;
    no_spa.spatial_prompt = false;
    auto [spa_t, spa_calls, spa_rep] = run(no_spa, "nospa");
    std::string spa2 = transcript_text(spa_t[1]);
    CHECK(spa2.find("Water coverage: ") == std::string::npos);
    CHECK(spa2.find("Scene description: ") != std::string::npos);

    ReportClientConfig no_str = base;
    no_str.structural_prompt = false;
    auto [str_t, str_calls, str_rep] = run(no_str, "nostr");
    std::string str2 = transcript_text(str_t[1]);
    CHECK(str2.find("four sections") == std::string::npos);
    CHECK(str2.find("Water coverage: ") != std::string::npos);

    ReportClientConfig none = base;
    none.semantic_prompt = none.spatial_prompt = none.structural_prompt = false;
    auto [none_t, none_calls, none_rep] = run(none, "none");
    CHECK(none_calls == 2);
    std::string none2 = transcript_text(none_t[1]);
    CHECK(none2.find(t.bare_instruction) != std::string::npos);
    CHECK(none2.find("Scene description: ") == std::string::npos);
    CHECK(none2.find("Water coverage: ") == std::string::npos);
    CHECK(none2.find("Image: <image>") == std::string::npos);
    CHECK(transcript_images(none_t[1]) == 1);

    ReportClientConfig off = base;
    off.s3cot = false;
    auto [off_t, off_calls, off_rep] = run(off, "off");
    CHECK(off_calls == 1);
    CHECK(off_rep.caption.empty());
    std::string bare = transcript_text(off_t[0]);
    CHECK(bare.find(t.bare_instruction) != std::string::npos);
    CHECK(transcript_images(off_t[0]) == 1);
    fs::remove_all(dir);
}

TEST_CASE("replay client: exact reproduction, divergence refused") {
    fs::path dir = fresh_dir("replay");
    fs::path transcript = dir / "t.jsonl";
    ImageBuffer img = gradient_image();
    ImageBuffer mask = block_mask(16, 16, 4, 12, 2, 10);
    TemplateSet t = TemplateSet::defaults();
    ReportClientConfig opts;
    opts.retry_backoff_seconds = 0.0;  // mismatch arms retry; no need to sleep

    AssessmentReport first;
    {
        RecordingVlmClient rec(std::make_unique<MockVlmClient>(), transcript.string());
        first = generate_report(img, mask, "img0", rec, t, opts);
    }
    {
        ReplayVlmClient replay(transcript.string());
        AssessmentReport second = generate_report(img, mask, "img0", replay, t, opts);
        CHECK(second.raw == first.raw);
        CHECK(second.caption == first.caption);
        CHECK(replay.remaining() == 0);
    }
    {
        ReplayVlmClient replay(transcript.string());
        ImageBuffer other_mask = block_mask(16, 16, 0, 4, 0, 4);
        // step 1 matches (same image), step 2 differs through the mask
        CHECK_THROWS_AS(generate_report(img, other_mask, "img0", replay, t, opts), PipelineError);
    }
    {
        ReplayVlmClient replay(transcript.string());
        generate_report(img, mask, "img0", replay, t, opts);
        ChatMessage extra;
        extra.role = "user";
        extra.parts = {text_part("one more")};
        CHECK_THROWS_AS(replay.generate({extra}), PipelineError);  // transcript exhausted
    }
    fs::remove_all(dir);
}

TEST_CASE("score parser: fixtures") {
    CHECK(parse_score("The report is comprehensive and receives a score of 8.") == 8);
    CHECK(parse_score("Score: 10/10, excellent detail.") == 10);
    CHECK(parse_score("I'd give this 7 out of 10.") == 7);  // keyword absent, first digit run
    CHECK(parse_score("score\nis\n3") == 3);
    CHECK_THROWS_AS(parse_score("no digits to be found here"), ScoringParseError);
    CHECK_THROWS_AS(parse_score("a score of 0 is too low"), ScoringParseError);
    CHECK_THROWS_AS(parse_score("score: 42"), ScoringParseError);
    CHECK_THROWS_AS(parse_score(""), ScoringParseError);
}

TEST_CASE("score_report: mock evaluator round trip and input validation") {
    MockVlmClient mock;
    ReportClientConfig opts;
    TemplateSet t = TemplateSet::defaults();
    ImageBuffer img = gradient_image();
    ScoringReport sr = score_report(img, "reference text", "generated text", mock, t, opts);
    CHECK(sr.score >= 1);
    CHECK(sr.score <= 10);
    CHECK_FALSE(sr.explanation.empty());
    CHECK(mock.calls() == 1);

    CHECK_THROWS_AS(score_report(img, "", "generated", mock, t, opts), ConfigError);
    CHECK_THROWS_AS(score_report(img, "reference", "", mock, t, opts), ConfigError);
}

TEST_CASE("reference corpus: drafts for every image, failures stay per-item") {
    TemplateSet t = TemplateSet::defaults();
    ReportClientConfig opts;
    std::vector<std::pair<std::string, ImageBuffer>> images = {
        {"a", gradient_image()}, {"b", gradient_image(8, 8)}, {"c", gradient_image(12, 10)}};

    MockVlmClient mock;
    auto drafts = build_reference_corpus(images, mock, t, opts);
    REQUIRE(drafts.size() == 3);
    for (const auto& d : drafts) {
        CHECK_FALSE(d.reviewed);
        CHECK(d.error.empty());
        CHECK(d.reference.find("Draft reference report") != std::string::npos);
    }
    CHECK(mock.calls() == 3);

    // an exhausted replay transcript fails every call, yet the batch finishes
    fs::path dir = fresh_dir("corpus");
    fs::path empty = dir / "empty.jsonl";
    std::ofstream(empty).close();
    ReportClientConfig fast = opts;
    fast.max_retries = 0;
    fast.retry_backoff_seconds = 0.0;
    ReplayVlmClient broken(empty.string());
    auto failed = build_reference_corpus(images, broken, t, fast);
    REQUIRE(failed.size() == 3);
    for (const auto& d : failed) {
        CHECK_FALSE(d.error.empty());
        CHECK(d.reference.empty());
    }
    fs::remove_all(dir);
}

TEST_CASE("retry loop: bounded attempts, empty responses retried") {
    ReportClientConfig opts;
    opts.max_retries = 2;
    opts.retry_backoff_seconds = 0.0;
    ChatMessage msg;
    msg.role = "user";
    msg.parts = {text_part("ping")};

    FlakyClient twice(2, false);
    CHECK(generate_with_retry(twice, {msg}, opts) == "recovered on call 3");
    CHECK(twice.calls_ == 3);

    FlakyClient empty_twice(2, true);
    CHECK(generate_with_retry(empty_twice, {msg}, opts) == "recovered on call 3");

    FlakyClient three(3, false);
    CHECK_THROWS_AS(generate_with_retry(three, {msg}, opts), PipelineError);
    CHECK(three.calls_ == 3);  // 1 try + 2 retries
}

TEST_CASE("request serialization is canonical and embeds images as base64") {
    ChatMessage msg;
    msg.role = "user";
    msg.parts = {text_part("hello"), image_part(gradient_image(4, 4))};
    std::string a = request_to_json({msg});
    std::string b = request_to_json({msg});
    CHECK(a == b);
    json j = json::parse(a);
    REQUIRE(j.at("messages").size() == 1);
    CHECK(j.at("messages")[0].at("role") == "user");
    CHECK(j.at("messages")[0].at("parts")[0].at("text") == "hello");
    std::string b64 = j.at("messages")[0].at("parts")[1].at("png_base64").get<std::string>();
    CHECK_FALSE(b64.empty());
    CHECK(b64.find_first_not_of("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/=") ==
          std::string::npos);
}

TEST_CASE("base64: reference vectors") {
    CHECK(base64_encode("") == "");
    CHECK(base64_encode("f") == "Zg==");
    CHECK(base64_encode("fo") == "Zm8=");
    CHECK(base64_encode("foo") == "Zm9v");
    CHECK(base64_encode("foob") == "Zm9vYg==");
    CHECK(base64_encode("fooba") == "Zm9vYmE=");
    CHECK(base64_encode("foobar") == "Zm9vYmFy");
}
