#include "uwassess/vlm_client.hpp"

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "uwassess/common.hpp"

namespace uwassess {

using nlohmann::json;

MessagePart text_part(std::string text) {
    MessagePart p;
    p.kind = MessagePart::Kind::text;
    p.text = std::move(text);
    return p;
}

MessagePart image_part(const ImageBuffer& img) {
    MessagePart p;
    p.kind = MessagePart::Kind::image;
    p.image_png = encode_png(img);
    return p;
}

std::string base64_encode(const std::string& bytes) {
    static const char* alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    size_t i = 0;
    while (i + 3 <= bytes.size()) {
        uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                     static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back(alphabet[v & 63]);
        i += 3;
    }
    if (i + 1 == bytes.size()) {
        uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out += "==";
    } else if (i + 2 == bytes.size()) {
        uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

std::string request_to_json(const ChatRequest& messages) {
    json msgs = json::array();
    for (const auto& m : messages) {
        json parts = json::array();
        for (const auto& p : m.parts) {
            if (p.kind == MessagePart::Kind::text)
                parts.push_back({{"type", "text"}, {"text", p.text}});
            else
                parts.push_back({{"type", "image"}, {"png_base64", base64_encode(p.image_png)}});
        }
        msgs.push_back({{"role", m.role}, {"parts", std::move(parts)}});
    }
    return json{{"messages", std::move(msgs)}}.dump();
}

namespace {

std::string hex16(uint64_t h) {
    std::ostringstream out;
    out << std::hex << std::setfill('0') << std::setw(16) << h;
    return out.str();
}

}  // namespace

std::string MockVlmClient::generate(const ChatRequest& messages) {
    calls_.fetch_add(1);
    const std::string digest = hex16(fnv1a(request_to_json(messages)));

    bool has_system = false, has_user_text = false;
    int images = 0;
    std::string all_text;
    for (const auto& m : messages) {
        if (m.role == "system") has_system = true;
        for (const auto& p : m.parts) {
            if (p.kind == MessagePart::Kind::image) {
                ++images;
            } else {
                all_text += p.text;
                all_text += '\n';
                if (m.role == "user") has_user_text = true;
            }
        }
    }
    std::string lower(all_text);
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

    if (has_system) {
        if (has_user_text) {
            int score = static_cast<int>(fnv1a(digest) % 10) + 1;
            return "After comparing both reports, the generated report earns a score of " + std::to_string(score) +
                   " out of 10. It covers the main observations with minor omissions (payload digest " + digest + ").";
        }
        return "Draft reference report (payload digest " + digest +
               "): Standing water is visible on the roadway surface, pooling toward the lower section of the frame. "
               "Pedestrian and vehicle movement appears constrained by the flooded area.";
    }

    if (images >= 2 || lower.find("report") != std::string::npos) {
        return "Extent: Standing water spans a noticeable portion of the scene (payload digest " + digest +
               ").\n"
               "Depth: The water appears shallow near the edges with deeper pooling toward the center of the "
               "flooded region.\n"
               "Risk: Slippery surfaces and concealed road hazards pose a danger to pedestrians and vehicles.\n"
               "Impact: Traffic flow is likely slowed and adjacent walkways partially obstructed.";
    }
    return "An urban street scene under wet conditions with overcast lighting, water accumulating on parts of the "
           "pavement, and buildings lining the roadway (payload digest " +
           digest + ").";
}

HttpVlmClient::HttpVlmClient(ReportClientConfig cfg) : cfg_(std::move(cfg)) {
    const std::string& url = cfg_.endpoint;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("report_client.endpoint must be a full URL: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        host_ = url;
        path_ = "/";
    } else {
        host_ = url.substr(0, path_start);
        path_ = url.substr(path_start);
    }
}

std::string HttpVlmClient::generate(const ChatRequest& messages) {
    json content_msgs = json::array();
    for (const auto& m : messages) {
        json content = json::array();
        for (const auto& p : m.parts) {
            if (p.kind == MessagePart::Kind::text) {
                content.push_back({{"type", "text"}, {"text", p.text}});
            } else {
                content.push_back({{"type", "image_url"},
                                   {"image_url", {{"url", "data:image/png;base64," + base64_encode(p.image_png)}}}});
            }
        }
        content_msgs.push_back({{"role", m.role}, {"content", std::move(content)}});
    }
    json body = {{"model", cfg_.model}, {"messages", std::move(content_msgs)}};

    httplib::Client cli(host_);
    cli.set_connection_timeout(static_cast<time_t>(cfg_.timeout_seconds), 0);
    cli.set_read_timeout(static_cast<time_t>(cfg_.timeout_seconds), 0);
    httplib::Headers headers;
    if (!cfg_.auth_env.empty()) {
        if (const char* token = std::getenv(cfg_.auth_env.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
    }

    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw PipelineError("client transport failure calling " + cfg_.endpoint);
    if (res->status != 200)
        throw PipelineError("client returned HTTP " + std::to_string(res->status) + ": " + res->body);

    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) throw PipelineError("client returned unparseable JSON");
    try {
        const json& msg = reply.at("choices").at(0).at("message").at("content");
        if (msg.is_string()) return msg.get<std::string>();
        // some servers answer with a parts array; keep the text pieces
        std::string joined;
        for (const auto& part : msg)
            if (part.value("type", "") == "text") joined += part.value("text", "");
        return joined;
    } catch (const json::exception& e) {
        throw PipelineError(std::string("client response missing choices[0].message.content: ") + e.what());
    }
}

RecordingVlmClient::RecordingVlmClient(std::unique_ptr<VlmClient> inner, const std::string& transcript_path)
    : inner_(std::move(inner)) {
    auto parent = std::filesystem::path(transcript_path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    out_.open(transcript_path, std::ios::trunc);
    if (!out_) throw ConfigError("cannot open transcript for writing: " + transcript_path);
}

std::string RecordingVlmClient::generate(const ChatRequest& messages) {
    std::lock_guard<std::mutex> lock(mu_);
    std::string response = inner_->generate(messages);
    json line = {{"request", json::parse(request_to_json(messages))}, {"response", response}};
    out_ << line.dump() << "\n";
    out_.flush();
    return response;
}

ReplayVlmClient::ReplayVlmClient(const std::string& transcript_path) {
    std::ifstream in(transcript_path);
    if (!in) throw ConfigError("cannot open transcript: " + transcript_path);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("request") || !j.contains("response"))
            throw ConfigError("transcript " + transcript_path + " line " + std::to_string(lineno) + " is malformed");
        entries_.emplace_back(j.at("request").dump(), j.at("response").get<std::string>());
    }
}

std::string ReplayVlmClient::generate(const ChatRequest& messages) {
    std::lock_guard<std::mutex> lock(mu_);
    if (next_ >= entries_.size()) throw PipelineError("replay transcript exhausted");
    const std::string canonical = request_to_json(messages);
    if (canonical != entries_[next_].first)
        throw PipelineError("replay request " + std::to_string(next_) + " differs from the recorded one");
    return entries_[next_++].second;
}

std::unique_ptr<VlmClient> make_client(const ReportClientConfig& cfg) {
    cfg.validate();
    std::unique_ptr<VlmClient> base;
    if (cfg.mode == "mock")
        base = std::make_unique<MockVlmClient>();
    else if (cfg.mode == "http")
        base = std::make_unique<HttpVlmClient>(cfg);
    else
        return std::make_unique<ReplayVlmClient>(cfg.transcript_path);
    if (!cfg.transcript_path.empty())
        return std::make_unique<RecordingVlmClient>(std::move(base), cfg.transcript_path);
    return base;
}

}  // namespace uwassess
