#include "patchlab/instructions/augment.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <future>
#include <json.hpp>
#include <map>
#include <regex>
#include <sstream>

#include "patchlab/codeprep/transforms.hpp"
#include "patchlab/error.hpp"

namespace patchlab::instructions {

using nlohmann::json;

void validate(const AugmentationConfig& cfg) {
  if (cfg.max_variants < 1) throw InputError("augmentation max_variants must be >= 1");
  if (cfg.max_concurrency < 1) throw InputError("augmentation max_concurrency must be >= 1");
}

namespace {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw InputError("bad augmentation endpoint: " + url);
  return Endpoint{m[1].str(), m[2].matched ? m[2].str() : "/"};
}

std::string answer_constraint(Task task) {
  switch (task) {
    case Task::identify:
      return "Every instruction must force a single-word answer, YES when the code is "
             "vulnerable and NO otherwise, with nothing else in the output.";
    case Task::describe:
      return "Every instruction must force the answer to begin with the weakness number in "
             "CWE-XXX form, followed only by the description.";
    case Task::repair:
      return "Every instruction must ask for the repaired code only, with no explanation.";
  }
  return {};
}

std::string task_goal(Task task) {
  switch (task) {
    case Task::identify: return "decide whether a piece of static source code is vulnerable";
    case Task::describe: return "describe the vulnerability present in a piece of code";
    case Task::repair: return "repair the vulnerability in a piece of code";
  }
  return {};
}

// Strips list markers ("1.", "2)", "-", "*") and surrounding quotes.
std::string clean_variant_line(std::string line) {
  static const std::regex marker(R"(^\s*(?:[0-9]+[.)]|[-*])\s*)");
  line = std::regex_replace(line, marker, "");
  while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
  std::size_t b = 0;
  while (b < line.size() && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
  line = line.substr(b);
  if (line.size() >= 2 && line.front() == '"' && line.back() == '"') {
    line = line.substr(1, line.size() - 2);
  }
  return line;
}

bool satisfies_task_contract(Task task, const std::string& text) {
  switch (task) {
    case Task::identify:
      return text.find("YES") != std::string::npos && text.find("NO") != std::string::npos;
    case Task::describe:
      return text.find("CWE-") != std::string::npos;
    case Task::repair:
      return true;
  }
  return false;
}

std::string first_text_payload(const json& body) {
  if (body.contains("choices") && body["choices"].is_array() && !body["choices"].empty()) {
    const auto& c = body["choices"][0];
    if (c.contains("message") && c["message"].contains("content") &&
        c["message"]["content"].is_string()) {
      return c["message"]["content"].get<std::string>();
    }
    if (c.contains("text") && c["text"].is_string()) return c["text"].get<std::string>();
  }
  if (body.contains("content") && body["content"].is_array()) {
    for (const auto& part : body["content"]) {
      if (part.contains("text") && part["text"].is_string()) return part["text"].get<std::string>();
    }
  }
  throw InputError("response has no text payload");
}

}  // namespace

std::string seed_variant_prompt(const SeedInstruction& seed, int max_variants) {
  std::ostringstream p;
  p << "You are helping a code security specialist build an instruction dataset. "
    << "Write " << max_variants << " different instructions that ask a language model to "
    << task_goal(seed.task) << ". " << answer_constraint(seed.task)
    << " Return one instruction per line without numbering.\n"
    << "Example instruction: " << seed.text;
  return p.str();
}

std::string description_prompt(const std::string& cwe, const std::string& stripped_code,
                               const std::vector<std::string>& comments) {
  std::ostringstream p;
  p << "The following function contains a " << cwe << " weakness. Using the reviewer notes and "
    << "the code, write a clear and complete description of the vulnerability. Start the "
    << "answer with " << cwe << " and output nothing but the description.\n";
  p << "Reviewer notes:\n";
  if (comments.empty()) p << "(none)\n";
  for (const auto& c : comments) p << c << "\n";
  p << "Code:\n" << stripped_code;
  return p.str();
}

std::vector<SeedInstruction> offline_variants(const SeedInstruction& seed, int max_variants) {
  static const std::array<const char*, 4> frames = {
      "[{task}] {text}",
      "[{task}] Read the code carefully. {text}",
      "[{task}] {text} Be precise.",
      "[{task}] Instruction: {text}",
  };
  std::vector<SeedInstruction> out;
  const std::string tag = to_string(seed.task);
  for (int i = 0; i < max_variants; ++i) {
    std::string frame = frames[static_cast<std::size_t>(i) % frames.size()];
    if (i >= static_cast<int>(frames.size())) {
      frame = "[{task}] (variant " + std::to_string(i + 1) + ") {text}";
    }
    frame.replace(frame.find("{task}"), 6, tag);
    frame.replace(frame.find("{text}"), 6, seed.text);
    out.push_back(SeedInstruction{seed.task, frame, Origin::augmented});
  }
  return out;
}

CompletionReply request_completion(const AugmentationConfig& cfg, const std::string& prompt) {
  CompletionReply reply;
  const Endpoint ep = split_url(cfg.endpoint);
  httplib::Client client(ep.base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  json body;
  body["model"] = cfg.model;
  body["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});
  auto res = client.Post(ep.path, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Connection || err == httplib::Error::ProxyConnection) {
      reply.status = CompletionReply::Status::unreachable;
    } else {
      reply.status = CompletionReply::Status::timeout;
    }
    reply.detail = httplib::to_string(err);
    return reply;
  }
  if (res->status != 200) {
    reply.status = CompletionReply::Status::malformed;
    reply.detail = "HTTP " + std::to_string(res->status);
    return reply;
  }
  try {
    reply.text = first_text_payload(json::parse(res->body));
  } catch (const std::exception& e) {
    reply.status = CompletionReply::Status::malformed;
    reply.detail = e.what();
  }
  return reply;
}

AugmentResult augment_seeds(const SeedInstruction& seed, const AugmentationConfig& cfg) {
  validate(cfg);
  AugmentResult result;
  if (cfg.endpoint.empty()) {
    result.variants = offline_variants(seed, cfg.max_variants);
    return result;
  }
  const CompletionReply reply = request_completion(cfg, seed_variant_prompt(seed, cfg.max_variants));
  switch (reply.status) {
    case CompletionReply::Status::unreachable:
      result.warnings.push_back("augmentation endpoint unreachable (" + reply.detail +
                                "); using offline variants");
      result.variants = offline_variants(seed, cfg.max_variants);
      return result;
    case CompletionReply::Status::timeout:
      result.warnings.push_back("augmentation request failed (" + reply.detail + "); no variants");
      return result;
    case CompletionReply::Status::malformed:
      result.warnings.push_back("malformed augmentation response (" + reply.detail + ")");
      return result;
    case CompletionReply::Status::ok:
      break;
  }
  std::istringstream lines(reply.text);
  std::string line;
  while (std::getline(lines, line) &&
         static_cast<int>(result.variants.size()) < cfg.max_variants) {
    std::string text = clean_variant_line(line);
    if (text.empty()) continue;
    if (!satisfies_task_contract(seed.task, text)) {
      result.warnings.push_back("dropped variant violating the " + to_string(seed.task) +
                                " answer format: " + text);
      continue;
    }
    result.variants.push_back(SeedInstruction{seed.task, std::move(text), Origin::augmented});
  }
  return result;
}

AugmentResult augment_all(const std::vector<SeedInstruction>& seeds, const AugmentationConfig& cfg) {
  validate(cfg);
  AugmentResult merged;
  const std::size_t window = static_cast<std::size_t>(cfg.max_concurrency);
  for (std::size_t begin = 0; begin < seeds.size(); begin += window) {
    const std::size_t end = std::min(seeds.size(), begin + window);
    std::vector<std::future<AugmentResult>> inflight;
    for (std::size_t i = begin; i < end; ++i) {
      inflight.push_back(std::async(std::launch::async,
                                    [&cfg, &seed = seeds[i]] { return augment_seeds(seed, cfg); }));
    }
    for (auto& f : inflight) {
      AugmentResult r = f.get();
      merged.variants.insert(merged.variants.end(), r.variants.begin(), r.variants.end());
      merged.warnings.insert(merged.warnings.end(), r.warnings.begin(), r.warnings.end());
    }
  }
  return merged;
}

std::string cwe_title(const std::string& cwe) {
  static const std::map<std::string, std::string> titles = {
      {"CWE-78", "OS Command Injection"},
      {"CWE-121", "Stack-based Buffer Overflow"},
      {"CWE-122", "Heap-based Buffer Overflow"},
      {"CWE-124", "Buffer Underwrite"},
      {"CWE-126", "Buffer Over-read"},
      {"CWE-127", "Buffer Under-read"},
      {"CWE-134", "Use of Externally-Controlled Format String"},
      {"CWE-194", "Unexpected Sign Extension"},
      {"CWE-195", "Signed to Unsigned Conversion Error"},
      {"CWE-197", "Numeric Truncation Error"},
      {"CWE-590", "Free of Memory not on the Heap"},
      {"CWE-690", "Unchecked Return Value to NULL Pointer Dereference"},
  };
  auto it = titles.find(cwe);
  return it == titles.end() ? "Weakness" : it->second;
}

namespace {

std::string comment_body(const std::string& raw) {
  std::string s = raw;
  if (s.starts_with("//")) {
    s = s.substr(2);
  } else if (s.starts_with("/*") && s.ends_with("*/") && s.size() >= 4) {
    s = s.substr(2, s.size() - 4);
  }
  const auto b = s.find_first_not_of(" \t\r\n*");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n*");
  return s.substr(b, e - b + 1);
}

std::string offline_description(const corpus::FunctionPair& pair,
                                const std::vector<std::string>& notes) {
  std::ostringstream d;
  d << pair.cwe << " " << cwe_title(pair.cwe) << ".";
  for (const auto& n : notes) {
    if (!n.empty()) d << " Note: " << n << ".";
  }
  return d.str();
}

}  // namespace

DescriptionResult augment_description(const corpus::FunctionPair& pair,
                                      const AugmentationConfig& cfg) {
  validate(cfg);
  const auto comments = codeprep::extract_comments(pair.vulnerable_source, pair.language);
  std::vector<std::string> notes;
  for (const auto& c : comments.comments) notes.push_back(comment_body(c.text));

  DescriptionResult result;
  if (!cfg.endpoint.empty()) {
    const std::string stripped = codeprep::strip_comments(pair.vulnerable_source, pair.language);
    std::vector<std::string> raw;
    for (const auto& c : comments.comments) raw.push_back(c.text);
    const CompletionReply reply = request_completion(cfg, description_prompt(pair.cwe, stripped, raw));
    if (reply.status == CompletionReply::Status::ok) {
      std::string text = normalize_description(reply.text);
      if (has_cwe_prefix(text)) {
        result.text = std::move(text);
        result.from_service = true;
        return result;
      }
      result.warnings.push_back("description for " + pair.id + " lacks a CWE prefix; using offline text");
    } else {
      result.warnings.push_back("description request for " + pair.id + " failed (" + reply.detail +
                                "); using offline text");
    }
  }
  result.text = offline_description(pair, notes);
  return result;
}

}  // namespace patchlab::instructions
