#include "patchlab/harness/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "patchlab/codeprep/transforms.hpp"
#include "patchlab/harness/pipeline.hpp"
#include "patchlab/tinylm/checkpoint.hpp"

namespace patchlab::harness {

namespace fs = std::filesystem;
using instructions::InstructionRecord;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string axis;
  std::string grid;
  std::string checkpoint;
  std::string mode;
  std::string compiler_cmd;
  std::vector<std::string> overrides;
  std::vector<std::string> files;
};

RunConfig resolve_config(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + kv + "'");
    set_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.paths.out = o.out;
  if (!o.axis.empty()) set_value(cfg, "sweep.axis", o.axis);
  if (!o.grid.empty()) set_value(cfg, "sweep.grid", o.grid);
  if (!o.mode.empty()) set_value(cfg, "eval.mode", o.mode);
  if (!o.compiler_cmd.empty()) cfg.eval.compiler_cmd = o.compiler_cmd;
  derive_seeds(cfg);
  return cfg;
}

struct Splits {
  std::vector<InstructionRecord> train, validation, test;
};

// Reuses the split written by build-dataset when present.
Splits load_splits(const RunConfig& cfg) {
  const fs::path out = cfg.paths.out;
  Splits s;
  if (fs::exists(out / "train.jsonl") && fs::exists(out / "validation.jsonl") &&
      fs::exists(out / "test.jsonl")) {
    s.train = instructions::read_jsonl(out / "train.jsonl");
    s.validation = instructions::read_jsonl(out / "validation.jsonl");
    s.test = instructions::read_jsonl(out / "test.jsonl");
    return s;
  }
  PreparedData d = prepare_data(cfg);
  s.train = std::move(d.train);
  s.validation = std::move(d.validation);
  s.test = std::move(d.test);
  return s;
}

fs::path checkpoint_path(const Options& o, const RunConfig& cfg, const std::string& fallback) {
  return o.checkpoint.empty() ? fs::path(cfg.paths.out) / fallback : fs::path(o.checkpoint);
}

tinylm::Model load_model(const fs::path& path) {
  return run_stage("load-checkpoint", [&] { return tinylm::load_checkpoint(path); });
}

void cmd_ingest(const RunConfig& cfg, std::ostream& out) {
  run_stage("ingest", [&] {
    RunDirectory dir(cfg.paths.out);
    const auto r = corpus::ingest_pairs(cfg.paths.corpus, cfg.paths.labels);
    dir.write("histogram.tsv", corpus::render_histogram(corpus::cwe_histogram(r.corpus)));
    std::string skipped = "id\treason\n";
    for (const auto& s : r.skipped) skipped += s.id + "\t" + s.reason + "\n";
    dir.write("skipped.tsv", skipped);
    out << r.corpus.size() << " pairs ingested, " << r.skipped.size() << " skipped\n";
  });
}

void cmd_obfuscate(const RunConfig& cfg, const Options& o, std::ostream& out) {
  run_stage("obfuscate", [&] {
    RunDirectory dir(cfg.paths.out);
    std::string maps = "source\toriginal\treplacement\n";
    auto emit = [&](const std::string& label, const codeprep::RenameMap& map) {
      for (const auto& [from, to] : map.entries) maps += label + "\t" + from + "\t" + to + "\n";
    };
    std::size_t count = 0;
    if (!o.files.empty()) {
      for (const auto& f : o.files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw InputError("cannot read " + f);
        std::stringstream buf;
        buf << in.rdbuf();
        const auto lang = corpus::language_from_extension(fs::path(f).extension().string());
        std::string text = buf.str();
        if (cfg.dataset.strip_comments) text = codeprep::strip_comments(text, lang);
        const auto r = codeprep::obfuscate(text, cfg.dataset.seed, cfg.dataset.rename_variables, lang);
        dir.write("obfuscated/" + fs::path(f).filename().string(), r.text);
        emit(fs::path(f).filename().string(), r.map);
        ++count;
      }
    } else {
      const auto r = corpus::ingest_pairs(cfg.paths.corpus, cfg.paths.labels);
      for (const auto& pair : r.corpus.pairs) {
        const auto p = instructions::prepare_pair(pair, cfg.dataset);
        const std::string ext = pair.language == corpus::LanguageTag::c ? ".c" : ".cpp";
        dir.write("obfuscated/" + pair.id + "_vuln" + ext, p.vulnerable_source);
        dir.write("obfuscated/" + pair.id + "_fixed" + ext, p.repaired_source);
        ++count;
      }
    }
    dir.write("renames.tsv", maps);
    out << count << (o.files.empty() ? " pairs" : " files") << " written to "
        << (fs::path(cfg.paths.out) / "obfuscated").string() << "\n";
  });
}

void cmd_build_dataset(const RunConfig& cfg, std::ostream& out) {
  RunDirectory dir(cfg.paths.out);
  const PreparedData d = prepare_data(cfg);
  run_stage("build-dataset", [&] {
    instructions::write_jsonl(dir.file("dataset.jsonl"), d.dataset.records);
    instructions::write_jsonl(dir.file("train.jsonl"), d.train);
    instructions::write_jsonl(dir.file("validation.jsonl"), d.validation);
    instructions::write_jsonl(dir.file("test.jsonl"), d.test);
    dir.write("split.json", split_json(d.split));
  });
  for (const auto& w : d.dataset.warnings) out << "warning: " << w << "\n";
  out << d.dataset.records.size() << " records (train " << d.train.size() << ", validation "
      << d.validation.size() << ", test " << d.test.size() << ")\n";
}

void cmd_train_sft(const RunConfig& cfg, std::ostream& out) {
  const Splits s = run_stage("build-dataset", [&] { return load_splits(cfg); });
  run_stage("train-sft", [&] {
    RunDirectory dir(cfg.paths.out);
    tinylm::Model m(cfg.model);
    const auto r = tinylm::sft_train(m, s.train, s.validation, cfg.sft);
    tinylm::save_checkpoint(dir.file("sft.ckpt"), m);
    tinylm::write_loss_curve(dir.file("sft_loss.csv"), r.curve);
    out << r.steps << " steps, " << r.rejected.size() << " rejected, " << r.truncated << " truncated\n";
  });
}

void cmd_train_reward(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const tinylm::Model sft = load_model(checkpoint_path(o, cfg, "sft.ckpt"));
  const Splits s = run_stage("build-dataset", [&] { return load_splits(cfg); });
  run_stage("train-reward", [&] {
    RunDirectory dir(cfg.paths.out);
    const RlTask task = make_rl_task(s.train, sft.config(), cfg.ppo.decode.max_new_tokens);
    if (task.prompts.empty()) throw InputError("no repair records in the training split");
    tinylm::DecodeConfig sampling = cfg.ppo.decode;
    sampling.seed = cfg.reward.training.seed;
    const auto triples = make_reward_triples(sft, task, sampling);
    tinylm::Model rm = sft;
    const auto r = reward::train_reward_model(rm, triples, cfg.reward.training);
    tinylm::save_checkpoint(dir.file("reward.ckpt"), rm);
    std::ostringstream csv;
    csv.precision(10);
    csv << "epoch,loss,accuracy\n";
    for (const auto& e : r.epochs) csv << e.epoch << ',' << e.loss << ',' << e.accuracy << '\n';
    dir.write("reward_train.csv", csv.str());
    out << "pairwise accuracy " << r.initial_accuracy << " -> "
        << (r.epochs.empty() ? r.initial_accuracy : r.epochs.back().accuracy) << "\n";
  });
}

void cmd_train_rl(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const tinylm::Model sft = load_model(checkpoint_path(o, cfg, "sft.ckpt"));
  const Splits s = run_stage("build-dataset", [&] { return load_splits(cfg); });
  auto frozen = std::make_shared<const tinylm::Model>(sft);
  RewardContext ctx{frozen, nullptr, cfg.reward};
  const fs::path rm_path = fs::path(cfg.paths.out) / "reward.ckpt";
  if (cfg.reward.weights.model > 0.0) {
    if (!fs::exists(rm_path)) throw StageError("train-rl", "reward.weight_model > 0 needs " + rm_path.string());
    ctx.reward_model = std::make_shared<const tinylm::Model>(load_model(rm_path));
  }
  run_stage("train-rl", [&] {
    RunDirectory dir(cfg.paths.out);
    const RlTask task = make_rl_task(s.train, sft.config(), cfg.ppo.decode.max_new_tokens);
    if (task.prompts.empty()) throw InputError("no repair records in the training split");
    tinylm::Model policy = sft;
    const auto r = rlloop::train_rl(policy, *frozen, task.prompts, make_reward_fn(task, ctx), cfg.ppo,
                                    dir.file("policy.ckpt"));
    tinylm::save_checkpoint(dir.file("policy.ckpt"), policy);
    rlloop::write_reward_curve(dir.file("reward_curve.csv"), r.curve);
    if (!r.curve.empty()) {
      out << "mean reward " << r.curve.front().mean_reward << " -> " << r.curve.back().mean_reward << "\n";
    }
  });
}

std::vector<EvalItem> test_items(const RunConfig& cfg, const tinylm::ModelConfig& model) {
  const Splits s = run_stage("build-dataset", [&] { return load_splits(cfg); });
  return make_eval_items(s.test, model, cfg.decode);
}

void cmd_generate(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const tinylm::Model m = load_model(checkpoint_path(o, cfg, "policy.ckpt"));
  const auto items = test_items(cfg, m.config());
  run_stage("generate", [&] {
    RunDirectory dir(cfg.paths.out);
    std::vector<std::pair<std::string, std::string>> gens;
    for (const auto& item : items) gens.emplace_back(item.id, generate_text(m, item, cfg.decode));
    dir.write("generations.jsonl", generations_jsonl(gens));
    out << gens.size() << " generations\n";
  });
}

Evaluation evaluate_checkpoint(const RunConfig& cfg, const fs::path& path, const std::string& label) {
  auto m = std::make_shared<const tinylm::Model>(load_model(path));
  const auto items = test_items(cfg, m->config());
  return run_stage("evaluate", [&] {
    const WindowedEmbeddingProvider provider(m, cfg.reward.layer, cfg.reward.non_negative);
    return evaluate_policy(*m, items, cfg, &provider, label);
  });
}

void cmd_evaluate(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const fs::path path = checkpoint_path(o, cfg, "policy.ckpt");
  const std::string slug = path.stem().string();
  const Evaluation ev = evaluate_checkpoint(cfg, path, slug);
  RunDirectory dir(cfg.paths.out);
  write_evaluation(dir, slug, ev);
  for (const auto& w : ev.repair.compile ? ev.repair.compile->warnings : std::vector<std::string>{}) {
    out << "warning: " << w << "\n";
  }
  out << render_evaluations({{slug, ev}});
}

// Renders the tables for every checkpoint found in the output directory
// (or the one named by --checkpoint).
void cmd_report(const RunConfig& cfg, const Options& o, std::ostream& out) {
  std::vector<std::pair<std::string, fs::path>> found;
  if (!o.checkpoint.empty()) {
    found.emplace_back(fs::path(o.checkpoint).stem().string(), o.checkpoint);
  } else {
    for (const auto& [label, name] : {std::pair<std::string, std::string>{"SFT", "sft.ckpt"},
                                      {"SFT+PPO", "policy.ckpt"}}) {
      const fs::path p = fs::path(cfg.paths.out) / name;
      if (fs::exists(p)) found.emplace_back(label, p);
    }
  }
  if (found.empty()) {
    throw StageError("report", "no checkpoints under " + fs::path(cfg.paths.out).string());
  }
  std::vector<std::pair<std::string, Evaluation>> runs;
  for (const auto& [label, p] : found) runs.emplace_back(label, evaluate_checkpoint(cfg, p, label));
  const std::string text = render_evaluations(runs);
  RunDirectory dir(cfg.paths.out);
  dir.write("report.txt", text);
  out << text;
}

void cmd_sweep(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const tinylm::Model m = load_model(checkpoint_path(o, cfg, "policy.ckpt"));
  auto items = test_items(cfg, m.config());
  if (cfg.sweep.max_samples > 0 && items.size() > cfg.sweep.max_samples) {
    items.resize(cfg.sweep.max_samples);
  }
  run_stage("sweep", [&] {
    const auto r = run_sweep(cfg.sweep.axis, cfg.sweep.grid, m, items, cfg);
    RunDirectory dir(cfg.paths.out);
    const std::string csv = sweep_csv(r);
    dir.write("sweep_" + r.axis + ".csv", csv);
    out << csv;
  });
}

void cmd_run(const RunConfig& cfg, std::ostream& out) {
  const RunSummary s = end_to_end(cfg, &out);
  out << s.files.size() << " artifacts, config " << s.config_hash << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vulnerability identification, description and repair with a small language model",
               "patchlab"};
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "flat key = value config file");
  app.add_option("--seed", o.seed, "global seed");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--axis", o.axis, "sweep axis: temperature or beam");
  app.add_option("--grid", o.grid, "comma-separated sweep grid");
  app.add_option("--checkpoint", o.checkpoint, "model checkpoint to load");
  app.add_option("--mode", o.mode, "compile check: parse_only or external_compiler");
  app.add_option("--compiler-cmd", o.compiler_cmd, "compiler command for external_compiler");
  app.add_option("--set", o.overrides, "config override key=value (repeatable)");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"ingest", "read function pairs and labels, write the CWE histogram"},
      {"obfuscate", "strip comments and rename identifiers in the corpus or the given files"},
      {"build-dataset", "build instruction records and the train/validation/test split"},
      {"train-sft", "supervised fine-tuning"},
      {"train-reward", "train the pairwise reward model"},
      {"train-rl", "PPO fine-tuning from the SFT checkpoint"},
      {"generate", "decode the test split"},
      {"evaluate", "score one checkpoint on the test split"},
      {"sweep", "temperature or beam ablation"},
      {"report", "render the comparison tables"},
      {"run", "every stage end to end, with a manifest"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    if (name == "obfuscate") sub->add_option("files", o.files, "source files");
  }
  app.require_subcommand(1);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (!args.empty() && args.front().rfind("-", 0) != 0 &&
        std::none_of(commands.begin(), commands.end(),
                     [&](const auto& c) { return c.first == args.front(); })) {
      err << "error: unknown subcommand '" << args.front() << "'\n";
    } else if (!args.empty()) {
      err << "error: " << e.what() << "\n";
    }
    err << app.help();
    return kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const RunConfig cfg = resolve_config(o);
    if (name == "ingest") cmd_ingest(cfg, out);
    else if (name == "obfuscate") cmd_obfuscate(cfg, o, out);
    else if (name == "build-dataset") cmd_build_dataset(cfg, out);
    else if (name == "train-sft") cmd_train_sft(cfg, out);
    else if (name == "train-reward") cmd_train_reward(cfg, o, out);
    else if (name == "train-rl") cmd_train_rl(cfg, o, out);
    else if (name == "generate") cmd_generate(cfg, o, out);
    else if (name == "evaluate") cmd_evaluate(cfg, o, out);
    else if (name == "sweep") cmd_sweep(cfg, o, out);
    else if (name == "report") cmd_report(cfg, o, out);
    else cmd_run(cfg, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace patchlab::harness
