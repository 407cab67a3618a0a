#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "chord/config.hpp"

using namespace chord;

namespace {

namespace fs = std::filesystem;

std::string temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CHORD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("desk and paper default profiles validate") {
  CHECK_NOTHROW(desk_defaults().validate());
  const RunConfig paper = paper_defaults();
  CHECK_NOTHROW(paper.validate());
  CHECK(paper.batch_prompts == 32);
  CHECK(paper.rollouts_per_prompt == 8);
  CHECK(paper.sft_batch == 64);
  CHECK(paper.temperature == 1.0);
  CHECK(paper.total_steps == 1500);
}

TEST_CASE("every preset resolves to a valid configuration") {
  for (const std::string& name : preset_names()) {
    const RunConfig cfg = preset_config(parse_preset(name), desk_defaults());
    CHECK_NOTHROW(cfg.validate());
  }
  CHECK(preset_config(Preset::pure_rl, desk_defaults()).mu == "constant:0");
  CHECK(preset_config(Preset::chord_mu, desk_defaults()).mu == "decay:0.9:0.05:200:linear");
  const RunConfig phi = preset_config(Preset::chord_phi, desk_defaults());
  CHECK(phi.mu == "constant:0.1");
  CHECK(phi.sft_variant == SftVariant::phi);
  const RunConfig is_mix = preset_config(Preset::sft_is_mix, desk_defaults());
  CHECK(is_mix.sft_variant == SftVariant::is);
  const RunConfig unweighted = preset_config(Preset::unweighted_mix, desk_defaults());
  CHECK(unweighted.mu == "constant:0.1");
  CHECK(unweighted.sft_variant == SftVariant::plain);
  CHECK(parse_schedule(preset_config(Preset::sft_then_rl, desk_defaults()).mu).kind ==
        ScheduleKind::binary);
  CHECK_THROWS_AS(parse_preset("warmup"), ConfigError);
}

TEST_CASE("config json round trips and rejects unknown keys") {
  RunConfig cfg = desk_defaults();
  cfg.backend = Backend::neural;
  cfg.embed_dim = 12;
  cfg.sft_variant = SftVariant::phi;
  cfg.mu = "decay:0.9:0.05:200:cosine";
  cfg.reward.length_limit = 33;
  const std::string text = config_to_json(cfg);
  const RunConfig back = config_from_json(text);
  CHECK(config_to_json(back) == text);

  CHECK_THROWS_AS(config_from_json(R"({"learning_rate": 0.1})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"reward": {"bonus": 1}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json("not json"), ConfigError);
}

TEST_CASE("overrides mutate known keys only, including nested ones") {
  RunConfig cfg = desk_defaults();
  apply_override(cfg, "lr=0.125");
  CHECK(cfg.lr == 0.125);
  apply_override(cfg, "mu=decay:0.9:0.05:200:linear");
  CHECK(cfg.mu == "decay:0.9:0.05:200:linear");
  apply_override(cfg, "sft_variant=phi");
  CHECK(cfg.sft_variant == SftVariant::phi);
  apply_override(cfg, "reward.correct=2.0");
  CHECK(cfg.reward.correct == 2.0);
  apply_override(cfg, "backend=neural");
  CHECK(cfg.backend == Backend::neural);

  CHECK_THROWS_AS(apply_override(cfg, "nope=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "reward.nope=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "lr"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "sft_variant=XXL"), ConfigError);
}

TEST_CASE("validation rejects out-of-contract configurations") {
  RunConfig cfg = desk_defaults();
  cfg.rollouts_per_prompt = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = desk_defaults();
  cfg.temperature = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = desk_defaults();
  cfg.mu = "constant:0.5";
  cfg.sft_batch = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.mu = "constant:0";  // pure RL never needs expert data
  CHECK_NOTHROW(cfg.validate());

  cfg = desk_defaults();
  cfg.reward.over_length = 5.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("load_config resolves builtins, files, and CHORD_CONFIG_DIR") {
  CHECK(load_config("desk-defaults").total_steps == desk_defaults().total_steps);
  CHECK(load_config("paper-defaults").batch_prompts == 32);
  CHECK(load_config("chord-phi").sft_variant == SftVariant::phi);

  const std::string dir = temp_dir("chord_config_dir");
  RunConfig cfg = desk_defaults();
  cfg.lr = 0.0625;
  std::ofstream(dir + "/custom.json") << config_to_json(cfg);
  CHECK(load_config(dir + "/custom.json").lr == 0.0625);

  setenv("CHORD_CONFIG_DIR", dir.c_str(), 1);
  CHECK(load_config("custom.json").lr == 0.0625);
  CHECK(load_config("custom").lr == 0.0625);  // extension added by the resolver
  unsetenv("CHORD_CONFIG_DIR");
  CHECK_THROWS_AS(load_config("custom.json"), ConfigError);
}

TEST_CASE("cli: exit codes across the verbs") {
  const std::string dir = temp_dir("chord_cli_smoke");
  const std::string data = dir + "/data.txt";

  CHECK(run_cli("gen-corpus --base 5 --kind copy --difficulty 3 --sft 12 --rl 12 --eval 6 "
                "--style terse --seed 3 --out " +
                data) == 0);

  // config error: unknown override key
  CHECK(run_cli("train --data " + data + " --out " + dir + "/run_bad --override nope=1") == 2);
  // config error: missing dataset
  CHECK(run_cli("train --data " + dir + "/missing.txt --out " + dir + "/run_bad2") == 2);
  // config error: unknown flag
  CHECK(run_cli("train --frobnicate") == 2);
  // config error: unknown preset
  CHECK(run_cli("train --data " + data + " --out " + dir + "/run_bad3 --preset warmup") == 2);

  const std::string overrides =
      " --override total_steps=3 --override batch_prompts=2 --override rollouts_per_prompt=2 "
      "--override sft_batch=2 --override max_response_len=10 --override eval_samples=1 "
      "--override context_order=1 --override eval_interval=2";
  CHECK(run_cli("train --data " + data + " --out " + dir + "/run --preset chord-phi" +
                overrides) == 0);
  CHECK(fs::exists(dir + "/run/metrics.jsonl"));
  CHECK(fs::exists(dir + "/run/config.json"));
  CHECK(fs::exists(dir + "/run/policy.ckpt"));
  CHECK(fs::exists(dir + "/run/summary.json"));

  CHECK(run_cli("eval --data " + data + " --ckpt " + dir + "/run/policy.ckpt --n 2" +
                " --override max_response_len=10") == 0);

  CHECK(run_cli("export --metrics " + dir + "/run/metrics.jsonl --columns step,mean_reward "
                "--out " + dir + "/out.csv") == 0);
  CHECK(run_cli("export --metrics " + dir + "/run/metrics.jsonl --columns step,bogus --out " +
                dir + "/out2.csv") == 2);
  CHECK(run_cli("summarize --metrics " + dir + "/run/metrics.jsonl --window 2") == 0);

  // a run re-fed its own effective config echo reproduces byte-identical metrics
  const std::string rerun = dir + "/rerun";
  CHECK(run_cli("train --data " + data + " --out " + rerun + " --config " + dir +
                "/run/config.json") == 0);
  std::ifstream a(dir + "/run/config.json"), b(rerun + "/config.json");
  const std::string echo_a((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  const std::string echo_b((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(echo_a == echo_b);
}

TEST_CASE("cli: gradcheck passes with shipped fixtures and signals failure at tol 0") {
  CHECK(run_cli("gradcheck") == 0);
  const std::string dir = temp_dir("chord_cli_gradcheck");
  CHECK(run_cli("gradcheck --out " + dir + "/report.json") == 0);
  CHECK(fs::exists(dir + "/report.json"));
  CHECK(run_cli("gradcheck --tol 0") == 4);
}
