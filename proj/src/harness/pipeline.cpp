#include "patchlab/harness/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <json.hpp>
#include <map>

#include "patchlab/harness/hashing.hpp"
#include "patchlab/instructions/augment.hpp"
#include "patchlab/tinylm/checkpoint.hpp"

namespace patchlab::harness {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using instructions::InstructionRecord;
using instructions::Task;
using tinylm::TokenId;

RunDirectory::RunDirectory(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw Error("cannot create output directory " + root_.string() + ": " + ec.message());
}

fs::path RunDirectory::file(const std::string& name) {
  if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  const fs::path p = root_ / name;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

void RunDirectory::write(const std::string& name, const std::string& content) {
  std::ofstream out(file(name), std::ios::binary);
  if (!out) throw Error("cannot write " + (root_ / name).string());
  out << content;
}

fs::path RunDirectory::write_manifest(const std::string& config_hash, std::uint64_t seed) {
  std::vector<std::string> names = files_;
  std::sort(names.begin(), names.end());
  json entries = json::array();
  for (const auto& n : names) {
    entries.push_back({{"path", n}, {"sha256", sha256_file(root_ / n)}});
  }
  const json manifest{{"config_sha256", config_hash}, {"seed", seed}, {"files", std::move(entries)}};
  const fs::path p = root_ / "manifest.json";
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << manifest.dump(2) << '\n';
  return p;
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(render_config(cfg)); }

PreparedData prepare_data(const RunConfig& cfg) {
  PreparedData d;
  run_stage("ingest", [&] {
    auto ingested = corpus::ingest_pairs(cfg.paths.corpus, cfg.paths.labels);
    d.corpus = std::move(ingested.corpus);
    d.skipped = std::move(ingested.skipped);
  });
  run_stage("build-dataset", [&] {
    auto seeds = instructions::load_seeds(cfg.paths.seeds).seeds;
    std::vector<std::string> warnings;
    if (!cfg.dataset.augmentation.endpoint.empty()) {
      auto aug = instructions::augment_all(seeds, cfg.dataset.augmentation);
      seeds.insert(seeds.end(), aug.variants.begin(), aug.variants.end());
      warnings = std::move(aug.warnings);
    }
    d.dataset = instructions::build_dataset(d.corpus, seeds, cfg.dataset);
    d.dataset.warnings.insert(d.dataset.warnings.begin(), warnings.begin(), warnings.end());
  });
  run_stage("split", [&] {
    d.split = corpus::split(d.dataset.prepared, cfg.split, cfg.seed);
    d.train = instructions::filter_by_pairs(d.dataset.records, d.split.train);
    d.validation = instructions::filter_by_pairs(d.dataset.records, d.split.validation);
    d.test = instructions::filter_by_pairs(d.dataset.records, d.split.test);
  });
  return d;
}

std::string split_json(const corpus::SplitSet& split) {
  const json j{{"seed", split.seed},
               {"ratios",
                {{"train", split.ratios.train},
                 {"validation", split.ratios.validation},
                 {"test", split.ratios.test}}},
               {"train", split.train},
               {"validation", split.validation},
               {"test", split.test}};
  return j.dump(2) + "\n";
}

std::size_t generation_budget(Task task, const tinylm::DecodeConfig& decode) {
  // "YES" or "NO" plus EOS.
  if (task == Task::identify) return std::min<std::size_t>(decode.max_new_tokens, 4);
  return decode.max_new_tokens;
}

namespace {

std::size_t prompt_room(const tinylm::ModelConfig& model, std::size_t budget) {
  const auto context = static_cast<std::size_t>(model.context);
  // Keep at least half the context for the prompt.
  return context - std::min(budget, context / 2);
}

std::string rstrip(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

}  // namespace

std::string generations_jsonl(const std::vector<std::pair<std::string, std::string>>& generations) {
  std::string lines;
  for (const auto& [id, text] : generations) {
    lines += json{{"id", id}, {"output", text}}.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
  }
  return lines;
}

void write_evaluation(RunDirectory& dir, const std::string& slug, const Evaluation& ev) {
  dir.write("report_" + slug + "_identify.json", evalsuite::report_json(ev.identify));
  dir.write("report_" + slug + "_describe.json", evalsuite::report_json(ev.describe));
  dir.write("report_" + slug + "_repair.json", evalsuite::report_json(ev.repair));
  dir.write("generations_" + slug + ".jsonl", generations_jsonl(ev.generations));
}

std::vector<EvalItem> make_eval_items(const std::vector<InstructionRecord>& records,
                                      const tinylm::ModelConfig& model,
                                      const tinylm::DecodeConfig& decode) {
  std::vector<EvalItem> items;
  for (const auto& r : records) {
    const std::size_t budget = generation_budget(r.task, decode);
    items.push_back({r.id, r.task,
                     tinylm::build_prompt(r.instruction, r.input, prompt_room(model, budget)),
                     r.output});
  }
  return items;
}

std::string generate_text(const tinylm::Model& model, const EvalItem& item,
                          const tinylm::DecodeConfig& decode) {
  tinylm::DecodeConfig d = decode;
  d.max_new_tokens = generation_budget(item.task, decode);
  const auto gen = tinylm::generate(model, item.prompt, d);
  return tinylm::Tokenizer::decode(gen.ids);
}

WindowedEmbeddingProvider::WindowedEmbeddingProvider(std::shared_ptr<const tinylm::Model> model,
                                                     int layer, bool non_negative)
    : inner_(std::move(model), layer, non_negative) {}

reward::Mat WindowedEmbeddingProvider::embed(std::span<const TokenId> ids) const {
  const std::size_t cap = inner_.max_tokens();
  if (ids.size() <= cap) return inner_.embed(ids);
  reward::Mat out(static_cast<Eigen::Index>(ids.size()), dimension());
  for (std::size_t start = 0; start < ids.size(); start += cap) {
    const std::size_t n = std::min(cap, ids.size() - start);
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) =
        inner_.embed(ids.subspan(start, n));
  }
  return out;
}

namespace {

std::string task_title(Task t) {
  switch (t) {
    case Task::identify:
      return "identify";
    case Task::describe:
      return "describe";
    case Task::repair:
      return "repair";
  }
  return "?";
}

std::string decode_label(const tinylm::DecodeConfig& d) {
  std::ostringstream out;
  out << "t=" << d.temperature << ", beam=" << d.beam_size;
  return out.str();
}

}  // namespace

Evaluation evaluate_policy(const tinylm::Model& model, const std::vector<EvalItem>& items,
                           const RunConfig& cfg, const reward::EmbeddingProvider* provider,
                           const std::string& label) {
  Evaluation ev;
  std::map<Task, std::vector<std::string>> ids, cands, refs;
  for (const auto& item : items) {
    const std::string text = generate_text(model, item, cfg.decode);
    ev.generations.emplace_back(item.id, text);
    ids[item.task].push_back(item.id);
    cands[item.task].push_back(text);
    refs[item.task].push_back(item.reference);
  }
  const evalsuite::ScoringOptions opts{provider, provider, cfg.eval.bleu_smoothing, cfg.eval.rouge_beta};
  const std::vector<std::pair<std::string, std::string>> meta{
      {"model", label},
      {"decode", decode_label(cfg.decode)},
      {"top_p", std::to_string(cfg.decode.top_p)},
      {"seed", std::to_string(cfg.seed)}};
  auto build = [&](Task t) {
    evalsuite::MetricReport r;
    r.task = task_title(t);
    r.metadata = meta;
    r.samples = evalsuite::score_generations(ids[t], cands[t], refs[t], opts);
    r.means = evalsuite::mean_scores(r.samples);
    return r;
  };
  ev.identify = build(Task::identify);
  std::vector<std::string> preds;
  for (const auto& c : cands[Task::identify]) preds.push_back(rstrip(c));
  ev.identify.classification = evalsuite::classification_metrics(preds, refs[Task::identify]);
  ev.describe = build(Task::describe);
  ev.repair = build(Task::repair);
  ev.repair.compile = evalsuite::compile_tally(cands[Task::repair], cfg.eval.mode,
                                               cfg.eval.compiler_cmd, corpus::LanguageTag::c);
  return ev;
}

std::string render_evaluations(const std::vector<std::pair<std::string, Evaluation>>& runs) {
  std::vector<std::pair<std::string, evalsuite::ClassificationMetrics>> cls;
  std::vector<std::pair<std::string, evalsuite::GenerationMeans>> desc, rep;
  std::vector<std::pair<std::string, std::vector<evalsuite::CompileTally>>> tallies;
  std::string setting = "tally";
  for (const auto& [label, ev] : runs) {
    if (ev.identify.classification) cls.emplace_back(label, *ev.identify.classification);
    desc.emplace_back(label, ev.describe.means);
    rep.emplace_back(label, ev.repair.means);
    if (ev.repair.compile) tallies.push_back({label, {*ev.repair.compile}});
    for (const auto& [k, v] : ev.repair.metadata) {
      if (k == "decode") setting = v;
    }
  }
  std::string out;
  out += "Identification\n" + evalsuite::classification_table(cls) + "\n";
  out += "Description\n" + evalsuite::generation_table(desc) + "\n";
  out += "Repair\n" + evalsuite::generation_table(rep) + "\n";
  out += "Compilation\n" + evalsuite::tally_table({setting}, tallies);
  return out;
}

RlTask make_rl_task(const std::vector<InstructionRecord>& records, const tinylm::ModelConfig& model,
                    std::size_t max_new_tokens) {
  RlTask task;
  for (const auto& r : records) {
    if (r.task != Task::repair) continue;
    task.prompts.push_back(
        tinylm::build_prompt(r.instruction, r.input, prompt_room(model, max_new_tokens)));
    task.references.push_back(tinylm::Tokenizer::encode(r.output));
    task.inputs.push_back(tinylm::Tokenizer::encode(r.input));
  }
  return task;
}

namespace {

// Shortens (vulnerable, candidate) so [BOS, vul, SEP, cand] fits: the
// candidate keeps at most half the room, the vulnerable code keeps its tail.
std::pair<std::vector<TokenId>, std::vector<TokenId>> fit_reward_input(
    const tinylm::ModelConfig& model, std::span<const TokenId> vul, std::span<const TokenId> cand,
    std::size_t cand_room) {
  const auto room = static_cast<std::size_t>(model.context) - 2;
  const std::size_t c = std::min(cand.size(), cand_room);
  const std::size_t v = std::min(vul.size(), room - c);
  return {std::vector<TokenId>(vul.end() - static_cast<std::ptrdiff_t>(v), vul.end()),
          std::vector<TokenId>(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(c))};
}

}  // namespace

rlloop::RewardFn make_reward_fn(const RlTask& task, const RewardContext& ctx) {
  auto index = std::make_shared<std::map<std::vector<TokenId>, std::size_t>>();
  for (std::size_t i = 0; i < task.prompts.size(); ++i) index->emplace(task.prompts[i], i);
  auto provider = std::make_shared<WindowedEmbeddingProvider>(ctx.embedder, ctx.config.layer,
                                                              ctx.config.non_negative);
  return [index, provider, task, ctx](std::span<const TokenId> prompt,
                                      std::span<const TokenId> generated) {
    const auto it = index->find(std::vector<TokenId>(prompt.begin(), prompt.end()));
    if (it == index->end()) throw InputError("reward requested for an unknown prompt");
    const std::size_t i = it->second;
    double semantic = 0.0;
    if (!generated.empty()) {
      semantic = reward::scalar_reward(
          reward::semantic_reward(generated, task.references[i], *provider), ctx.config.form);
    }
    double rm = 0.0;
    if (ctx.reward_model && ctx.config.weights.model > 0.0) {
      const auto& m = *ctx.reward_model;
      const auto fitted = fit_reward_input(m.config(), task.inputs[i], generated,
                                           static_cast<std::size_t>(m.config().context) / 2);
      rm = reward::reward_model_score(m, fitted.first, fitted.second);
    }
    return reward::combined_reward(semantic, rm, ctx.config.weights);
  };
}

std::vector<reward::RewardTriple> make_reward_triples(const tinylm::Model& policy,
                                                      const RlTask& task,
                                                      const tinylm::DecodeConfig& sampling) {
  std::vector<reward::RewardTriple> triples;
  const tinylm::ModelLogitSource source(policy);
  const auto half = static_cast<std::size_t>(policy.config().context) / 2;
  Rng seeds(sampling.seed);
  for (std::size_t i = 0; i < task.prompts.size(); ++i) {
    tinylm::DecodeConfig d = sampling;
    d.seed = seeds.next();
    const auto gen = tinylm::sample_decode(source, task.prompts[i], d);
    auto ref = fit_reward_input(policy.config(), task.inputs[i], task.references[i], half);
    auto neg = fit_reward_input(policy.config(), task.inputs[i], gen.ids, half);
    // One vulnerable prefix shared by both sides: the shorter of the two.
    auto& vul = ref.first.size() <= neg.first.size() ? ref.first : neg.first;
    triples.push_back({vul, ref.second, neg.second});
  }
  return triples;
}

std::vector<double> default_grid(const std::string& axis) {
  if (axis == "temperature") return {0.0, 0.25, 0.50, 0.75, 1.0};
  if (axis == "beam") return {1, 2, 4, 6, 8};
  throw InputError("unknown sweep axis '" + axis + "' (expected temperature or beam)");
}

std::vector<double> normalize_times(const std::vector<double>& times) {
  std::vector<double> out(times.size(), 0.0);
  if (times.empty()) return out;
  const auto [lo, hi] = std::minmax_element(times.begin(), times.end());
  const double span = *hi - *lo;
  if (span <= 0.0) return out;
  for (std::size_t i = 0; i < times.size(); ++i) out[i] = (times[i] - *lo) / span;
  return out;
}

SweepResult run_sweep(const std::string& axis, std::vector<double> grid, const tinylm::Model& model,
                      const std::vector<EvalItem>& eval_set, const RunConfig& cfg) {
  if (grid.empty()) grid = default_grid(axis);
  default_grid(axis);  // validates the axis name
  if (eval_set.empty()) throw InputError("sweep needs a non-empty evaluation set");
  SweepResult result{axis, grid, {}};
  for (double value : grid) {
    SweepRow row;
    row.value = value;
    try {
      tinylm::DecodeConfig d = cfg.decode;
      if (axis == "temperature") {
        d.temperature = value;
      } else {
        if (value < 1.0 || value != std::floor(value)) throw InputError("beam width must be a positive integer");
        d.beam_size = static_cast<std::size_t>(value);
      }
      d.validate();
      std::vector<std::string> cands;
      const auto start = std::chrono::steady_clock::now();
      for (const auto& item : eval_set) cands.push_back(generate_text(model, item, d));
      row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const auto c = evalsuite::tokenize_code(cands[i]);
        const auto r = evalsuite::tokenize_code(eval_set[i].reference);
        if (!r.empty()) row.bleu += evalsuite::bleu(c, r, 4, cfg.eval.bleu_smoothing);
        if (!r.empty() && !c.empty()) row.rouge_l += evalsuite::rouge_l(c, r, cfg.eval.rouge_beta).f;
      }
      row.bleu /= static_cast<double>(eval_set.size());
      row.rouge_l /= static_cast<double>(eval_set.size());
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    result.rows.push_back(std::move(row));
  }
  if (axis == "beam") {
    std::vector<double> times;
    for (const auto& r : result.rows) {
      if (!r.failed) times.push_back(r.wall_seconds);
    }
    const auto norm = normalize_times(times);
    std::size_t k = 0;
    for (auto& r : result.rows) {
      if (!r.failed) r.normalized_time = norm[k++];
    }
  }
  return result;
}

std::string sweep_csv(const SweepResult& result) {
  const bool beam = result.axis == "beam";
  std::ostringstream out;
  out << "value,bleu,rouge_l,wall_seconds";
  if (beam) out << ",normalized_time";
  out << ",status\n";
  out.precision(10);
  for (const auto& r : result.rows) {
    out << r.value << ',' << r.bleu << ',' << r.rouge_l << ',' << r.wall_seconds;
    if (beam) {
      out << ',';
      if (r.normalized_time) out << *r.normalized_time;
    }
    out << ',' << (r.failed ? "failed" : "ok") << '\n';
  }
  return out.str();
}

namespace {

void note(std::ostream* log, const std::string& line) {
  if (log) *log << line << std::endl;
}

}  // namespace

RunSummary end_to_end(const RunConfig& input_cfg, std::ostream* log) {
  RunConfig cfg = input_cfg;
  derive_seeds(cfg);
  RunDirectory dir(cfg.paths.out);
  const std::string hash = config_hash(cfg);
  dir.write("config.txt", render_config(cfg));

  note(log, "[prepare] ingest, build-dataset, split");
  const PreparedData data = prepare_data(cfg);
  run_stage("build-dataset", [&] {
    dir.write("histogram.tsv", corpus::render_histogram(corpus::cwe_histogram(data.corpus)));
    instructions::write_jsonl(dir.file("dataset.jsonl"), data.dataset.records);
    dir.write("split.json", split_json(data.split));
  });
  note(log, "  " + std::to_string(data.corpus.size()) + " pairs, " +
                std::to_string(data.dataset.records.size()) + " records (train " +
                std::to_string(data.train.size()) + ", validation " +
                std::to_string(data.validation.size()) + ", test " + std::to_string(data.test.size()) + ")");

  note(log, "[train-sft]");
  tinylm::Model sft = run_stage("train-sft", [&] {
    tinylm::Model m(cfg.model);
    const auto result = tinylm::sft_train(m, data.train, data.validation, cfg.sft);
    tinylm::save_checkpoint(dir.file("sft.ckpt"), m);
    tinylm::write_loss_curve(dir.file("sft_loss.csv"), result.curve);
    return m;
  });
  auto frozen = std::make_shared<const tinylm::Model>(sft);
  const RlTask task = make_rl_task(data.train, cfg.model, cfg.ppo.decode.max_new_tokens);

  RewardContext ctx{frozen, nullptr, cfg.reward};
  if (cfg.reward.train || cfg.reward.weights.model > 0.0) {
    note(log, "[train-reward]");
    run_stage("train-reward", [&] {
      if (task.prompts.empty()) throw InputError("no repair records in the training split");
      tinylm::Model rm = sft;
      tinylm::DecodeConfig sampling = cfg.ppo.decode;
      sampling.seed = cfg.reward.training.seed;
      const auto triples = make_reward_triples(sft, task, sampling);
      const auto result = reward::train_reward_model(rm, triples, cfg.reward.training);
      tinylm::save_checkpoint(dir.file("reward.ckpt"), rm);
      std::ostringstream csv;
      csv.precision(10);
      csv << "epoch,loss,accuracy\n";
      for (const auto& e : result.epochs) csv << e.epoch << ',' << e.loss << ',' << e.accuracy << '\n';
      dir.write("reward_train.csv", csv.str());
      ctx.reward_model = std::make_shared<const tinylm::Model>(std::move(rm));
    });
  }

  note(log, "[train-rl]");
  tinylm::Model policy = sft;
  run_stage("train-rl", [&] {
    if (task.prompts.empty()) throw InputError("no repair records in the training split");
    const auto result = rlloop::train_rl(policy, *frozen, task.prompts, make_reward_fn(task, ctx),
                                         cfg.ppo, dir.file("policy.ckpt"));
    tinylm::save_checkpoint(dir.file("policy.ckpt"), policy);
    rlloop::write_reward_curve(dir.file("reward_curve.csv"), result.curve);
  });

  note(log, "[evaluate]");
  run_stage("evaluate", [&] {
    const auto items = make_eval_items(data.test, cfg.model, cfg.decode);
    const WindowedEmbeddingProvider provider(frozen, cfg.reward.layer, cfg.reward.non_negative);
    const Evaluation ev_sft = evaluate_policy(sft, items, cfg, &provider, "SFT");
    const Evaluation ev_rl = evaluate_policy(policy, items, cfg, &provider, "SFT+PPO");
    write_evaluation(dir, "sft", ev_sft);
    write_evaluation(dir, "rl", ev_rl);
    dir.write("report.txt", render_evaluations({{"SFT", ev_sft}, {"SFT+PPO", ev_rl}}));
  });

  RunSummary summary;
  summary.out = dir.root();
  summary.config_hash = hash;
  summary.manifest = run_stage("manifest", [&] { return dir.write_manifest(hash, cfg.seed); });
  summary.files = dir.files();
  note(log, "[done] " + summary.manifest.string());
  return summary;
}

}  // namespace patchlab::harness
