// Command-line front end: corpus generation, training, evaluation, gradient
// checking, and metrics export. Exit codes: 0 ok, 2 config error, 3 runtime
// abort, 4 gradcheck failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "chord/config.hpp"
#include "chord/corpus.hpp"
#include "chord/oracle.hpp"
#include "chord/telemetry.hpp"
#include "chord/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitGradcheck = 4;

struct GenArgs {
  int base = 6;
  std::string kind = "reverse";
  int difficulty = 2;
  int sft = 256;
  int rl = 512;
  int eval = 64;
  std::string style = "verbose-verify";
  std::uint64_t seed = 1;
  int max_prompt_len = 32;
  std::string out;
};

int cmd_gen_corpus(const GenArgs& args) {
  const chord::Vocab vocab = chord::Vocab::with_base(args.base);
  const chord::TaskKind kind = chord::parse_task_kind(args.kind);
  const chord::ExpertStyle style = chord::parse_expert_style(args.style);
  const int total = args.sft + args.rl + args.eval;
  const std::vector<chord::TaskInstance> tasks =
      chord::generate_tasks(vocab, kind, total, args.difficulty, args.seed, args.max_prompt_len);
  std::vector<chord::ExpertExample> expert;
  expert.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    expert.push_back(chord::expert_response(vocab, tasks[i], style,
                                            chord::derive_seed(args.seed, {9000, i})));
  }
  const chord::DatasetSplit split =
      chord::split_dataset(tasks, expert, {args.sft, args.rl, args.eval}, args.seed);
  chord::save_split(vocab, split, args.out);
  std::cout << "wrote " << args.out << " (sft=" << split.sft.size() << " rl=" << split.rl.size()
            << " eval=" << split.eval.size() << ", base=" << args.base << ")\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config;
  std::string preset;
  std::vector<std::string> overrides;
};

chord::RunConfig resolve_config(const std::string& config, const std::string& preset,
                                const std::vector<std::string>& overrides) {
  chord::RunConfig cfg = chord::load_config(config);
  if (!preset.empty()) {
    cfg = chord::preset_config(chord::parse_preset(preset), cfg);
  }
  for (const std::string& entry : overrides) {
    chord::apply_override(cfg, entry);
  }
  cfg.validate();
  return cfg;
}

int cmd_train(const TrainArgs& args) {
  const chord::RunConfig cfg = resolve_config(args.config, args.preset, args.overrides);
  auto [vocab, split] = chord::load_split_file(args.data);
  const chord::TrainState state = chord::run(cfg, vocab, split, args.out);
  std::cout << "finished " << state.step << " steps; metrics at " << args.out
            << "/metrics.jsonl\n";
  return kExitOk;
}

struct EvalArgs {
  std::string data;
  std::string ckpt;
  std::string config;
  std::vector<std::string> overrides;
  int n = 8;
  bool greedy = false;
  std::uint64_t seed = 1;
};

int cmd_eval(const EvalArgs& args) {
  const chord::RunConfig cfg = resolve_config(args.config, "", args.overrides);
  auto [vocab, split] = chord::load_split_file(args.data);
  if (split.eval.empty()) {
    throw chord::ConfigError("dataset has no eval instances");
  }
  const chord::LoadedPolicy loaded = chord::load_policy(args.ckpt, vocab.hash());
  const double acc = chord::evaluate(loaded.params, vocab, split.eval, cfg, args.n,
                                     chord::derive_seed(args.seed, {chord::kStreamEval}),
                                     args.greedy);
  nlohmann::ordered_json j;
  j["checkpoint_step"] = loaded.step;
  j["instances"] = split.eval.size();
  j["n_samples"] = args.n;
  j["greedy"] = args.greedy;
  j["accuracy"] = acc;
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

struct GradcheckArgs {
  double tol = 1e-4;
  double h = 1e-5;
  std::string out;
};

int cmd_gradcheck(const GradcheckArgs& args) {
  const chord::GradcheckFixtures fixtures = chord::make_gradcheck_fixtures();
  const std::vector<chord::GradCheckReport> reports =
      chord::gradcheck_all(fixtures, args.tol, args.h);
  std::printf("%-24s %-14s %-8s %-10s %s\n", "loss", "max_rel_err", "worst", "h", "status");
  bool all_ok = true;
  for (const chord::GradCheckReport& r : reports) {
    std::printf("%-24s %-14.3e %-8lld %-10.1e %s\n", r.loss_name.c_str(), r.max_rel_error,
                static_cast<long long>(r.worst_index), r.step_size, r.pass ? "ok" : "FAIL");
    all_ok = all_ok && r.pass;
  }
  if (!args.out.empty()) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const chord::GradCheckReport& r : reports) {
      nlohmann::ordered_json item;
      item["loss"] = r.loss_name;
      item["max_rel_error"] = r.max_rel_error;
      item["worst_index"] = r.worst_index;
      item["step_size"] = r.step_size;
      item["pass"] = r.pass;
      j.push_back(item);
    }
    std::ofstream(args.out) << j.dump(2) << "\n";
  }
  return all_ok ? kExitOk : kExitGradcheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chord: hybrid on/off-policy post-training at desk scale"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-corpus", "generate a synthetic task dataset");
  gen_cmd->add_option("--base", gen.base, "payload alphabet size");
  gen_cmd->add_option("--kind", gen.kind, "copy|reverse|modular-sum");
  gen_cmd->add_option("--difficulty", gen.difficulty, "payload length");
  gen_cmd->add_option("--sft", gen.sft, "SFT example count");
  gen_cmd->add_option("--rl", gen.rl, "RL instance count");
  gen_cmd->add_option("--eval", gen.eval, "eval instance count");
  gen_cmd->add_option("--style", gen.style, "expert style: terse|verbose-verify");
  gen_cmd->add_option("--seed", gen.seed, "generation seed");
  gen_cmd->add_option("--max-prompt-len", gen.max_prompt_len, "prompt length bound");
  gen_cmd->add_option("--out", gen.out, "output dataset path")->required();

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "run the training loop");
  train_cmd->add_option("--data", train.data, "dataset file")->required();
  train_cmd->add_option("--out", train.out, "run directory")->required();
  train_cmd->add_option("--config", train.config,
                        "config path or builtin name (desk-defaults, paper-defaults, presets)");
  train_cmd->add_option("--preset", train.preset,
                        "pure-rl|sft-then-rl|chord-mu|chord-phi|sft-is-mix|unweighted-mix");
  train_cmd->add_option("--override", train.overrides, "key=value config override (repeatable)");

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a policy checkpoint");
  eval_cmd->add_option("--data", eval.data, "dataset file")->required();
  eval_cmd->add_option("--ckpt", eval.ckpt, "policy checkpoint")->required();
  eval_cmd->add_option("--config", eval.config, "config path or builtin name");
  eval_cmd->add_option("--override", eval.overrides, "key=value config override (repeatable)");
  eval_cmd->add_option("--n", eval.n, "samples per instance (avg@n)");
  eval_cmd->add_flag("--greedy", eval.greedy, "argmax decoding instead of sampling");
  eval_cmd->add_option("--seed", eval.seed, "evaluation seed");

  GradcheckArgs gc;
  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every loss");
  gc_cmd->add_option("--tol", gc.tol, "max relative error tolerance");
  gc_cmd->add_option("--step-size", gc.h, "central difference step");
  gc_cmd->add_option("--out", gc.out, "machine-readable report path");

  std::string metrics_path, export_out, columns_arg;
  CLI::App* export_cmd = app.add_subcommand("export", "metrics stream to CSV");
  export_cmd->add_option("--metrics", metrics_path, "metrics.jsonl path")->required();
  export_cmd->add_option("--columns", columns_arg, "comma-separated column list")->required();
  export_cmd->add_option("--out", export_out, "output CSV path")->required();

  std::string sum_metrics;
  long sum_window = 100;
  CLI::App* sum_cmd = app.add_subcommand("summarize", "trailing-window metric means");
  sum_cmd->add_option("--metrics", sum_metrics, "metrics.jsonl path")->required();
  sum_cmd->add_option("--window", sum_window, "trailing window length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen_cmd->parsed()) {
      return cmd_gen_corpus(gen);
    }
    if (train_cmd->parsed()) {
      return cmd_train(train);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(eval);
    }
    if (gc_cmd->parsed()) {
      return cmd_gradcheck(gc);
    }
    if (export_cmd->parsed()) {
      std::vector<std::string> columns;
      std::size_t start = 0;
      while (start <= columns_arg.size()) {
        const std::size_t comma = columns_arg.find(',', start);
        columns.push_back(columns_arg.substr(
            start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) {
          break;
        }
        start = comma + 1;
      }
      chord::export_csv(metrics_path, columns, export_out);
      std::cout << "wrote " << export_out << "\n";
      return kExitOk;
    }
    if (sum_cmd->parsed()) {
      const chord::MetricsSummary s = chord::summarize(sum_metrics, sum_window);
      std::cout << chord::summary_to_json(s) << "\n";
      return kExitOk;
    }
  } catch (const chord::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const chord::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const chord::TrainAbort& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
