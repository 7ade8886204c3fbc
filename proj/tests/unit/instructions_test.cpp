#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <json.hpp>
#include <thread>

#include "patchlab/error.hpp"
#include "patchlab/instructions/augment.hpp"
#include "patchlab/instructions/dataset.hpp"
#include "patchlab/instructions/records.hpp"

namespace fs = std::filesystem;
using namespace patchlab;
using namespace patchlab::instructions;
using corpus::FunctionPair;
using corpus::LanguageTag;

namespace {

const fs::path kData = PATCHLAB_DATA_DIR;

std::vector<SeedInstruction> bundled_seeds() { return load_seeds(kData / "seeds.tsv").seeds; }

corpus::Corpus micro_corpus() {
  return corpus::ingest_pairs(kData / "microcorpus" / "pairs", kData / "microcorpus" / "labels.csv").corpus;
}

FunctionPair sample_pair() {
  return {"p1", "void f(char *s){ char b[4]; strcpy(b, s); }",
          "void f(char *s){ char b[4]; strncpy(b, s, 3); b[3] = 0; }", "CWE-121", LanguageTag::c};
}

// Serves canned chat-completion replies on a loopback port.
class MockService {
 public:
  explicit MockService(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockService() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string chat_reply(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

}  // namespace

TEST(Seeds, BundledFileHasTwentyPerTask) {
  const auto f = load_seeds(kData / "seeds.tsv");
  EXPECT_EQ(f.seeds.size(), 60u);
  for (Task t : {Task::identify, Task::describe, Task::repair}) EXPECT_EQ(f.for_task(t).size(), 20u);
  for (const auto& s : f.for_task(Task::identify)) {
    EXPECT_NE(s.text.find("YES"), std::string::npos);
    EXPECT_NE(s.text.find("NO"), std::string::npos);
  }
  for (const auto& s : f.for_task(Task::describe)) EXPECT_NE(s.text.find("CWE-"), std::string::npos);
}

TEST(Seeds, MissingTaskIsNamed) {
  try {
    parse_seeds("identify\tAnswer YES or NO.\nrepair\tFix it.\n");
    FAIL() << "expected an error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("describe"), std::string::npos) << e.what();
  }
}

TEST(Seeds, UnknownTaskNamesTheLine) {
  try {
    parse_seeds("identify\tAnswer YES or NO.\nsummarize\tx\n");
    FAIL() << "expected an error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

TEST(Seeds, DuplicatesAcceptedWithWarning) {
  const auto f = parse_seeds(
      "identify\tAnswer YES or NO.\nidentify\tAnswer YES or NO.\n"
      "describe\tStart with CWE-XXX.\nrepair\tFix it.\n");
  EXPECT_EQ(f.seeds.size(), 4u);
  EXPECT_EQ(f.warnings.size(), 1u);
}

TEST(Assemble, IdentificationYieldsYesAndNo) {
  Rng rng(3);
  const auto recs = assemble_identification(sample_pair(), bundled_seeds(), rng);
  EXPECT_EQ(recs[0].output, "YES");
  EXPECT_EQ(recs[0].input, sample_pair().vulnerable_source);
  EXPECT_EQ(recs[1].output, "NO");
  EXPECT_EQ(recs[1].input, sample_pair().repaired_source);
  Rng again(3);
  EXPECT_EQ(assemble_identification(sample_pair(), bundled_seeds(), again)[0].instruction,
            recs[0].instruction);
}

TEST(Assemble, RepairCopiesFields) {
  Rng rng(1);
  const auto r = assemble_repair(sample_pair(), bundled_seeds(), rng);
  EXPECT_EQ(r.task, Task::repair);
  EXPECT_EQ(r.input, sample_pair().vulnerable_source);
  EXPECT_EQ(r.output, sample_pair().repaired_source);
  EXPECT_EQ(r.source_pair_id, "p1");
}

TEST(Assemble, DescriptionPrefixRule) {
  Rng rng(1);
  EXPECT_NO_THROW(assemble_description(sample_pair(), "CWE-78 OS Command Injection Execute command",
                                       bundled_seeds(), rng));
  EXPECT_NO_THROW(assemble_description(sample_pair(), "CWE-121 stack overflow", bundled_seeds(), rng));
  EXPECT_THROW(assemble_description(sample_pair(), "injection bug", bundled_seeds(), rng), InputError);
}

TEST(Descriptions, NormalizeLooseCwePrefix) {
  EXPECT_EQ(normalize_description("CWE: 78 OS Command Injection"), "CWE-78 OS Command Injection");
  EXPECT_TRUE(has_cwe_prefix(normalize_description("cwe-121 overflow")));
  EXPECT_FALSE(has_cwe_prefix("CWE-x"));
}

TEST(Dataset, MicroCorpusRecordsAreBalancedAndValid) {
  const auto corpus = micro_corpus();
  const auto build = build_dataset(corpus, bundled_seeds(), DatasetOptions{});
  EXPECT_EQ(build.records.size(), 4 * corpus.size());
  const auto ident = filter_records(build.records, Task::identify);
  const auto yes = std::count_if(ident.begin(), ident.end(), [](const auto& r) { return r.output == "YES"; });
  EXPECT_EQ(static_cast<std::size_t>(yes) * 2, ident.size());
  for (const auto& r : build.records) {
    EXPECT_TRUE(validate(r, LanguageTag::c).empty()) << r.id;
  }
}

TEST(Dataset, DeterministicAndObfuscated) {
  const auto corpus = micro_corpus();
  const auto a = build_dataset(corpus, bundled_seeds(), DatasetOptions{});
  const auto b = build_dataset(corpus, bundled_seeds(), DatasetOptions{});
  EXPECT_EQ(a.records, b.records);
  // Function names are replaced on both sides of every repair record.
  for (const auto& r : filter_records(a.records, Task::repair)) {
    EXPECT_NE(r.input.find("func_"), std::string::npos) << r.id;
  }
}

TEST(RecordsProperty, JsonRoundTrip) {
  Rng rng(5);
  const auto seeds = bundled_seeds();
  for (const auto& pair : micro_corpus().pairs) {
    auto recs = assemble_identification(pair, seeds, rng);
    for (const auto& r : recs) EXPECT_EQ(from_json_line(to_json_line(r)), r);
    const auto rep = assemble_repair(pair, seeds, rng);
    EXPECT_EQ(from_json_line(to_json_line(rep)), rep);
  }
  InstructionRecord odd{"x", Task::describe, "i\n\"q\"", "tab\there", "CWE-1 ok", std::nullopt, "p"};
  EXPECT_EQ(from_json_line(to_json_line(odd)), odd);
}

TEST(RecordsProperty, JsonFieldsAreExactlyTheSchema) {
  Rng rng(5);
  const auto line = to_json_line(assemble_repair(sample_pair(), bundled_seeds(), rng));
  const auto j = nlohmann::json::parse(line);
  std::set<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
  EXPECT_EQ(keys, (std::set<std::string>{"id", "task", "instruction", "input", "output", "cwe",
                                         "source_pair_id"}));
}

TEST(RecordsProperty, RandomRecordsSatisfyInvariants) {
  // Random pairs built from fixture fragments always produce valid records.
  Rng rng(17);
  const auto corpus = micro_corpus();
  const auto seeds = bundled_seeds();
  for (int i = 0; i < 50; ++i) {
    const auto& a = corpus.pairs[rng.uniform_index(corpus.size())];
    FunctionPair p = a;
    p.id = "r" + std::to_string(i);
    auto ident = assemble_identification(p, seeds, rng);
    EXPECT_TRUE(validate(ident[0], LanguageTag::c).empty());
    EXPECT_TRUE(validate(ident[1], LanguageTag::c).empty());
    EXPECT_TRUE(validate(assemble_repair(p, seeds, rng), LanguageTag::c).empty());
  }
}

TEST(Augment, OfflineStubsCarryTheTaskTag) {
  const SeedInstruction seed{Task::repair, "Fix the bug.", Origin::handwritten};
  AugmentationConfig cfg;
  cfg.max_variants = 3;
  const auto r = augment_seeds(seed, cfg);
  ASSERT_EQ(r.variants.size(), 3u);
  for (const auto& v : r.variants) {
    EXPECT_EQ(v.origin, Origin::augmented);
    EXPECT_NE(v.text.find("repair"), std::string::npos);
  }
  EXPECT_EQ(augment_seeds(seed, cfg).variants, r.variants);
}

TEST(Augment, MaxVariantsMustBePositive) {
  AugmentationConfig cfg;
  cfg.max_variants = 0;
  EXPECT_THROW(augment_seeds({Task::repair, "x", Origin::handwritten}, cfg), InputError);
}

TEST(Augment, MockEndpointTwoLinesGivesTwoVariants) {
  std::string seen_body;
  MockService svc([&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    res.set_content(chat_reply("1. Repair this function.\n2. Return the fixed code only.\n"),
                    "application/json");
  });
  AugmentationConfig cfg;
  cfg.endpoint = svc.endpoint();
  const auto r = augment_seeds({Task::repair, "Fix it.", Origin::handwritten}, cfg);
  ASSERT_EQ(r.variants.size(), 2u);
  EXPECT_EQ(r.variants[0].text, "Repair this function.");
  const auto body = nlohmann::json::parse(seen_body);
  EXPECT_EQ(body["model"], cfg.model);
  EXPECT_EQ(body["messages"][0]["role"], "user");
}

TEST(Augment, VariantsBreakingTheAnswerFormatAreDropped) {
  MockService svc([](const httplib::Request&, httplib::Response& res) {
    res.set_content(chat_reply("Is it vulnerable? Answer YES or NO.\nIs it vulnerable?\n"),
                    "application/json");
  });
  AugmentationConfig cfg;
  cfg.endpoint = svc.endpoint();
  const auto r = augment_seeds({Task::identify, "Answer YES or NO.", Origin::handwritten}, cfg);
  EXPECT_EQ(r.variants.size(), 1u);
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(Augment, MalformedResponseDropsVariants) {
  MockService svc([](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"unexpected\": true}", "application/json");
  });
  AugmentationConfig cfg;
  cfg.endpoint = svc.endpoint();
  const auto r = augment_seeds({Task::repair, "Fix it.", Origin::handwritten}, cfg);
  EXPECT_TRUE(r.variants.empty());
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(Augment, TimeoutGivesNoVariantsAndAWarning) {
  MockService svc([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(800));
    res.set_content(chat_reply("late"), "application/json");
  });
  AugmentationConfig cfg;
  cfg.endpoint = svc.endpoint();
  cfg.timeout = std::chrono::milliseconds(150);
  const auto r = augment_seeds({Task::repair, "Fix it.", Origin::handwritten}, cfg);
  EXPECT_TRUE(r.variants.empty());
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(Augment, UnreachableFallsBackToOfflineStubs) {
  // Nothing listens on port 1, so the connection is refused at once.
  AugmentationConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  cfg.max_variants = 2;
  const auto r = augment_seeds({Task::repair, "Fix it.", Origin::handwritten}, cfg);
  EXPECT_EQ(r.variants.size(), 2u);
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(Augment, ConcurrentRequestsMergeInInputOrder) {
  std::atomic<int> inflight{0}, peak{0};
  MockService svc([&](const httplib::Request& req, httplib::Response& res) {
    const int now = ++inflight;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    --inflight;
    const auto body = nlohmann::json::parse(req.body);
    const std::string prompt = body["messages"][0]["content"];
    res.set_content(chat_reply("Variant of " + prompt.substr(prompt.rfind(':') + 2)), "application/json");
  });
  std::vector<SeedInstruction> seeds;
  for (int i = 0; i < 6; ++i) seeds.push_back({Task::repair, "seed " + std::to_string(i), Origin::handwritten});
  AugmentationConfig cfg;
  cfg.endpoint = svc.endpoint();
  cfg.max_concurrency = 2;
  const auto r = augment_all(seeds, cfg);
  ASSERT_EQ(r.variants.size(), 6u);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(r.variants[i].text, "Variant of seed " + std::to_string(i));
  EXPECT_LE(peak.load(), 2);
}

TEST(Augment, DescriptionFromServiceIsNormalized) {
  MockService svc([](const httplib::Request&, httplib::Response& res) {
    res.set_content(chat_reply("CWE: 121 the copy overruns the stack buffer"), "application/json");
  });
  AugmentationConfig cfg;
  cfg.endpoint = svc.endpoint();
  const auto d = augment_description(sample_pair(), cfg);
  EXPECT_TRUE(d.from_service);
  EXPECT_EQ(d.text, "CWE-121 the copy overruns the stack buffer");
}

TEST(Augment, OfflineDescriptionUsesCommentsAndPrefix) {
  FunctionPair p = sample_pair();
  p.vulnerable_source = "/* unbounded copy */ " + p.vulnerable_source;
  const auto d = augment_description(p, AugmentationConfig{});
  EXPECT_FALSE(d.from_service);
  EXPECT_TRUE(d.text.starts_with("CWE-121"));
  EXPECT_NE(d.text.find("unbounded copy"), std::string::npos);
}
