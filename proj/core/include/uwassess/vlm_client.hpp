#pragma once

#include <atomic>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "uwassess/config.hpp"
#include "uwassess/image.hpp"

namespace uwassess {

struct MessagePart {
    enum class Kind { text, image };
    Kind kind = Kind::text;
    std::string text;       // text parts
    std::string image_png;  // image parts, raw PNG bytes
};

MessagePart text_part(std::string text);
MessagePart image_part(const ImageBuffer& img);

struct ChatMessage {
    std::string role;  // "system" or "user"
    std::vector<MessagePart> parts;
};
using ChatRequest = std::vector<ChatMessage>;

// Canonical JSON for hashing, transcripts, and replay comparison. Image parts
// appear as base64 so the transcript is a plain-text file.
std::string request_to_json(const ChatRequest& messages);
std::string base64_encode(const std::string& bytes);

// One multimodal chat endpoint. generate() returns the assistant text or
// throws PipelineError; it never retries by itself, the pipeline owns that.
class VlmClient {
  public:
    virtual ~VlmClient() = default;
    virtual std::string generate(const ChatRequest& messages) = 0;
    // whether calls for distinct reports may run concurrently
    virtual bool parallel_safe() const { return false; }
};

// Deterministic canned answers, a pure function of the request. The request
// structure picks the flavor: a system message means scoring (when a user
// text part is present) or corpus drafting (image only); otherwise two images
// mean a full report, one image a caption, unless the instruction text asks
// for a report. Every response embeds a 16-hex digest of the payload so tests
// can tie answers back to exact requests.
class MockVlmClient : public VlmClient {
  public:
    std::string generate(const ChatRequest& messages) override;
    bool parallel_safe() const override { return true; }
    int64_t calls() const { return calls_.load(); }

  private:
    std::atomic<int64_t> calls_{0};
};

// Chat-completion HTTP JSON (OpenAI wire shape). The bearer token comes from
// the env var named in the config; images travel as data: URLs.
class HttpVlmClient : public VlmClient {
  public:
    explicit HttpVlmClient(ReportClientConfig cfg);
    std::string generate(const ChatRequest& messages) override;
    bool parallel_safe() const override { return true; }

  private:
    ReportClientConfig cfg_;
    std::string host_;  // scheme://host[:port]
    std::string path_;
};

// Appends {"request": ..., "response": ...} JSONL around an inner client.
// Serialized so the transcript order matches call order.
class RecordingVlmClient : public VlmClient {
  public:
    RecordingVlmClient(std::unique_ptr<VlmClient> inner, const std::string& transcript_path);
    std::string generate(const ChatRequest& messages) override;

  private:
    std::unique_ptr<VlmClient> inner_;
    std::ofstream out_;
    std::mutex mu_;
};

// Serves a recorded transcript back, in order. A request that differs from
// the recorded one, or runs past the end, is an error: replays must be exact.
class ReplayVlmClient : public VlmClient {
  public:
    explicit ReplayVlmClient(const std::string& transcript_path);
    std::string generate(const ChatRequest& messages) override;
    size_t remaining() const { return entries_.size() - next_; }

  private:
    std::vector<std::pair<std::string, std::string>> entries_;  // (canonical request, response)
    size_t next_ = 0;
    std::mutex mu_;
};

// The client the config asks for, with transcript recording layered on when a
// path is set in mock or http mode.
std::unique_ptr<VlmClient> make_client(const ReportClientConfig& cfg);

}  // namespace uwassess
