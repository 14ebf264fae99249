#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "boed/dist/distributions.hpp"
#include "boed/env/tasks.hpp"
#include "boed/errors.hpp"
#include "boed/harness/commands.hpp"
#include "boed/harness/history_io.hpp"
#include "doctest.h"

using namespace boed;
using namespace boed::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("boed_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(cells);
  }
  return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  FAIL("missing column " << name);
  return 0;
}

Json small_trainer() {
  return Json{{"iterations", 20},   {"agent_hidden", 32}, {"flow_layers", 2},      {"flow_hidden", 32},
              {"embed_dim", 16},    {"attention_heads", 2}, {"encoder_hidden", 32}, {"batch_size", 32},
              {"warmup_rollouts", 4}, {"updates_per_iter", 1}, {"eval_rollouts", 0}, {"buffer_size", 1000}};
}

std::ostringstream sink;

}  // namespace

TEST_CASE("config defaults carry the published hyperparameters") {
  const Json src = default_config_json("source");
  CHECK(src["trainer"]["iterations"] == 100000);
  CHECK(src["trainer"]["gamma"] == 0.9);
  CHECK(src["trainer"]["tau"] == 1e-3);
  CHECK(src["trainer"]["policy_lr"] == 1e-4);
  CHECK(src["trainer"]["critic_lr"] == 3e-4);
  CHECK(src["trainer"]["buffer_size"] == 10000000);
  CHECK(src["trainer"]["flow_layers"] == 6);
  CHECK(src["trainer"]["agent_hidden"] == 128);
  CHECK(src["trainer"]["flow_hidden"] == 128);
  CHECK(src["trainer"]["attention_heads"] == 8);
  CHECK(src["trainer"]["ensemble"] == 2);
  CHECK(src["env"]["params"]["T"] == 30);

  const Json ces = default_config_json("ces");
  CHECK(ces["trainer"]["tau"] == 5e-3);
  CHECK(ces["trainer"]["policy_lr"] == 3e-4);
  CHECK(ces["env"]["params"]["T"] == 10);

  const Json prey = default_config_json("prey");
  CHECK(prey["trainer"]["iterations"] == 20000);
  CHECK(prey["trainer"]["gamma"] == 0.95);
  CHECK(prey["trainer"]["tau"] == 1e-2);
  CHECK(prey["trainer"]["critic_lr"] == 1e-3);
  CHECK(prey["trainer"]["buffer_size"] == 1000000);

  for (const auto& name : env::environment_names()) {
    const Json d = default_config_json(name);
    for (const auto& [k, v] : env::default_parameters(name)) CHECK(d["env"]["params"][k] == v);
  }
  const auto text = default_config_json("source").dump();
  for (const char* needle : {"0.0001", "0.0003", "0.001", "10000000", "100000"}) {
    CHECK(text.find(needle) != std::string::npos);
  }
  const auto tasks = table1_tasks();
  REQUIRE(tasks.size() == 7);
  CHECK(tasks.back() == std::array<double, 3>{20, 4, 0.5});
}

TEST_CASE("config resolution") {
  SUBCASE("unknown keys are rejected at any depth") {
    CHECK_THROWS_AS(resolve_config(Json{{"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(resolve_config(Json{{"trainer", {{"gama", 0.5}}}}), ConfigError);
    CHECK_THROWS_AS(resolve_config(Json{{"env", {{"name", "source"}, {"params", {{"k", 3}}}}}}), ConfigError);
    CHECK_THROWS_AS(resolve_config(Json{{"estimator", 3}}), ConfigError);
  }
  SUBCASE("bad values") {
    CHECK_THROWS_AS(resolve_config(Json{{"trainer", {{"gamma", "high"}}}}), ConfigError);
    CHECK_THROWS_AS(resolve_config(Json{{"trainer", {{"tau", 0.0}}}}), ConfigError);
    CHECK_THROWS_AS(resolve_config(Json{{"seeds", Json::array()}}), ConfigError);
    CHECK_THROWS_AS(resolve_config(Json{{"env", {{"name", "nope"}}}}), ConfigError);
    CHECK_THROWS_AS(resolve_config(Json{{"estimate", {{"estimators", {"spce", "magic"}}}}}), ConfigError);
    CHECK_THROWS_AS(resolve_config(Json{{"ablate", {{"variants", {"target_maybe"}}}}}), ConfigError);
    CHECK_THROWS_AS(resolve_config(Json{{"estimator", {{"n", -3}}}}), ConfigError);
  }
  SUBCASE("file values and environment overrides") {
    const auto c = resolve_config(Json{{"env", {{"name", "source"}, {"params", {{"T", 5}}}}}, {"seeds", {3, 4}}},
                                  {{"BOED_TRAINER__ITERATIONS", "77"},
                                   {"BOED_estimator__l", "123"},
                                   {"BOED_OUT", "somewhere"},
                                   {"BOED_TRAINER__REWARD", "spce"},
                                   {"UNRELATED", "x"}});
    CHECK(c.env_name == "source");
    CHECK(c.env_params.at("T") == 5.0);
    CHECK(c.env_params.at("bound") == 4.0);
    CHECK(c.trainer.iterations == 77);
    CHECK(c.trainer.tau == 1e-3);
    CHECK(c.trainer.reward == rl::RewardMode::kSpce);
    CHECK(c.estimator.L == 123);
    CHECK(c.out == "somewhere");
    CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
    CHECK_THROWS_AS(resolve_config(Json::object(), {{"BOED_TRAINER__NOPE", "1"}}), ConfigError);
    const auto p = resolve_config(Json::object(), {{"BOED_ENV__NAME", "prey"}});
    CHECK(p.trainer.gamma == 0.95);
  }
  SUBCASE("dump round trips") {
    const auto c = resolve_config(Json{{"env", {{"name", "ces"}}}, {"workers", 3}});
    const auto again = resolve_config(to_json(c));
    CHECK(to_json(again) == to_json(c));
  }
}

TEST_CASE("sha1 and manifests") {
  CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
  CHECK(sha1_hex("") == "da39a3ee5e6b4b0d3255bfef95601890afd80709");
  const fs::path dir = scratch("manifest");
  const Json cfg = to_json(resolve_config(Json::object()));
  std::ofstream(dir / "in.txt") << "one";
  const auto h1 = input_hash("train", cfg, {(dir / "in.txt").string()});
  std::ofstream(dir / "in.txt") << "two";
  const auto h2 = input_hash("train", cfg, {(dir / "in.txt").string()});
  CHECK(h1 != h2);
  CHECK(input_hash("train", cfg, {}) != input_hash("eval", cfg, {}));
  CHECK_THROWS_AS(input_hash("train", cfg, {(dir / "missing").string()}), ConfigError);

  RunManifest m;
  m.command = "estimate";
  m.config = cfg;
  m.input_hash = h1;
  m.outputs["a"] = {"x.csv"};
  m.notes = {"n1"};
  write_manifest(m, (dir / "manifest.json").string());
  const auto back = read_manifest((dir / "manifest.json").string());
  CHECK(manifest_to_json(back) == manifest_to_json(m));
  CHECK(to_json(load_config((dir / "manifest.json").string())) == cfg);
}

TEST_CASE("history files") {
  auto src = env::make_environment("source", {{"T", 3.0}});
  env::History h = src->empty_history();
  h.push(std::vector<double>{0.25, -1.5}, std::vector<double>{0.123456789012345});
  h.push(std::vector<double>{3.0, 4.0}, std::vector<double>{-2.0});
  std::stringstream ss;
  write_history(ss, *src, h);
  const auto back = read_history(ss, *src);
  CHECK(back.designs() == h.designs());
  CHECK(back.outcomes() == h.outcomes());

  auto parse = [&](const std::string& text) {
    std::istringstream in(text);
    return read_history(in, *src);
  };
  CHECK(parse("source\n").empty());
  CHECK(parse("# comment\nenv=source\n\n1 1 0.5\n").size() == 1);
  auto line_of = [&](const std::string& text) -> std::size_t {
    try {
      parse(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("env source\n1 1 0.5\n1 x 0.5\n") == 3);
  CHECK(line_of("env source\n1 1\n") == 2);
  CHECK(line_of("env source\n1 1 0.5 7\n") == 2);
  CHECK(line_of("env prey\n") == 1);
  CHECK(line_of("\n\n") == 1);
  CHECK(line_of("env source\n\n9 0 1\n") == 3);
  CHECK(line_of("env source\n0 0 nan\n") == 2);
  CHECK_THROWS_AS(read_history_file("/nonexistent/h.txt", *src), ConfigError);
}

TEST_CASE("estimate command") {
  const fs::path dir = scratch("estimate");
  Json j{{"out", (dir / "a").string()},
         {"estimator", {{"n", 10000}}},
         {"estimate", {{"estimators", {"scee"}}, {"tasks", {{10, 0.5, 5}, {10, -1, 1}, {20, 4, 0.5}}}}}};
  const auto cfg = resolve_config(j);
  const auto m = cmd_estimate(cfg, sink);
  const auto rows = read_csv(dir / "a" / "table1.csv");
  REQUIRE(rows.size() == 4);
  const auto& hd = rows[0];
  CHECK(rows[0].size() == 14);
  const auto ci = column(hd, "estimator"), vi = column(hd, "value"), si = column(hd, "stderr"),
             ti = column(hd, "true_eig"), ni = column(hd, "note");
  CHECK(std::abs(std::stod(rows[1][ti]) - 3.47) < 0.01);
  CHECK(std::abs(std::stod(rows[1][vi]) - 3.47) < 0.05 + 1e-9);
  CHECK(std::stod(rows[1][si]) < 0.05);
  CHECK(rows[2][ci] == "skipped");
  CHECK(rows[2][ni].find("prior variance") != std::string::npos);
  CHECK(std::abs(std::stod(rows[3][ti]) - 43.94) < 0.01);
  CHECK(fs::exists(dir / "a" / "manifest.json"));
  CHECK(m.notes.size() >= 2);

  // Same config, same bytes; the manifest reproduces the run.
  auto again = cfg;
  again.out = (dir / "b").string();
  cmd_estimate(again, sink);
  CHECK(slurp(dir / "a" / "table1.csv") == slurp(dir / "b" / "table1.csv"));
  auto rerun = load_config((dir / "a" / "manifest.json").string());
  rerun.out = (dir / "c").string();
  cmd_estimate(rerun, sink);
  CHECK(slurp(dir / "a" / "table1.csv") == slurp(dir / "c" / "table1.csv"));
}

TEST_CASE("estimate command: contrastive rows") {
  const fs::path dir = scratch("estimate_spce");
  Json j{{"out", dir.string()},
         {"estimator", {{"n", 300}}},
         {"estimate", {{"estimators", {"spce", "snmc", "sace"}}, {"L", {100, 10000}}, {"tasks", {{20, 4, 0.5}}}}}};
  cmd_estimate(resolve_config(j), sink);
  const auto rows = read_csv(dir / "table1.csv");
  REQUIRE(rows.size() == 7);
  const auto ci = column(rows[0], "estimator"), li = column(rows[0], "L"), vi = column(rows[0], "value");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    // Values are written with 10 significant digits.
    if (rows[r][ci] == "spce") CHECK(std::stod(rows[r][vi]) <= std::log(std::stod(rows[r][li]) + 1) + 1e-9);
    if (rows[r][ci] == "spce" && rows[r][li] == "10000") CHECK(std::stod(rows[r][vi]) > 8.9);
  }
}

TEST_CASE("train command") {
  const fs::path dir = scratch("train");
  Json tr = small_trainer();
  tr["iterations"] = 200;
  Json j{{"out", (dir / "a").string()}, {"env", {{"name", "conjugate"}, {"params", {{"T", 2}, {"k", 2}}}}},
         {"trainer", tr}, {"seeds", {4}}};
  const auto cfg = resolve_config(j);
  const auto m = cmd_train(cfg, sink);
  CHECK_FALSE(manifest_reports_divergence(m));
  const auto ckpt = dir / "a" / "seed_4" / "checkpoint.bin";
  REQUIRE(fs::exists(ckpt));
  const auto ck = grad::load_checkpoint(ckpt);
  CHECK(ck.metadata.at("env") == "conjugate");
  CHECK(ck.metadata.at("iteration") == "200");
  CHECK(read_csv(dir / "a" / "seed_4" / "train_log.csv").size() == 101);

  auto again = cfg;
  again.out = (dir / "b").string();
  cmd_train(again, sink);
  CHECK(slurp(dir / "a" / "seed_4" / "train_log.csv") == slurp(dir / "b" / "seed_4" / "train_log.csv"));

  SUBCASE("eval and posterior from the checkpoint") {
    auto ev = cfg;
    ev.out = (dir / "eval").string();
    ev.eval.checkpoint = ckpt.string();
    ev.estimator.n = 50;
    ev.estimator.L = 100;
    cmd_eval(ev, sink);
    const auto rows = read_csv(dir / "eval" / "eig_curve.csv");
    CHECK(rows[0] == std::vector<std::string>{"t", "estimator", "L", "n", "value", "stderr"});
    REQUIRE(rows.size() == 4);
    CHECK(rows[1][4] == "0");

    auto wrong = ev;
    wrong.env_name = "source";
    wrong.env_params = env::default_parameters("source");
    CHECK_THROWS_AS(cmd_eval(wrong, sink), ConfigError);

    std::ofstream(dir / "h.txt") << "env conjugate\n0 0.5 -0.25\n0 1 1\n";
    auto po = cfg;
    po.out = (dir / "post").string();
    po.posterior.checkpoint = ckpt.string();
    po.posterior.history = (dir / "h.txt").string();
    po.posterior.n = 20;
    cmd_posterior(po, sink);
    const auto s = read_csv(dir / "post" / "samples.csv");
    CHECK(s.size() == 21);
    CHECK(s[0] == std::vector<std::string>{"theta_0", "theta_1", "log_q"});
  }
}

TEST_CASE("eval command with a random policy on the conjugate task") {
  const fs::path dir = scratch("eval");
  Json j{{"out", dir.string()},
         {"env", {{"name", "conjugate"}, {"params", {{"T", 5}, {"k", 2}}}}},
         {"estimator", {{"name", "spce"}, {"n", 2000}, {"L", 10000}}},
         {"eval", {{"policy", "random"}}},
         {"seeds", {11}}};
  cmd_eval(resolve_config(j), sink);
  const auto rows = read_csv(dir / "eig_curve.csv");
  REQUIRE(rows.size() == 7);
  CHECK(rows[1] == std::vector<std::string>{"0", "spce", "10000", "2000", "0", "0"});
  for (std::size_t t = 1; t <= 5; ++t) {
    const double v = std::stod(rows[t + 1][4]), se = std::stod(rows[t + 1][5]);
    CHECK(std::abs(v - dist::closed_form_eig(2, 0.5, 1.0, t)) < 4 * se);
    const double pv = std::stod(rows[t][4]), pse = std::stod(rows[t][5]);
    CHECK(v >= pv - 2 * (se + pse));
  }
  auto learned = resolve_config(j);
  learned.eval.policy = "learned";
  CHECK_THROWS_AS(cmd_eval(learned, sink), ConfigError);
}

TEST_CASE("posterior command in analytic mode") {
  const fs::path dir = scratch("posterior");
  env::ConjugateGaussianTask task(3, 0.0, 0.5, 1.0, 4);
  std::ofstream(dir / "h.txt") << "env conjugate\n0 1 2 0.5\n0 0.5 1.5 -1\n0 1.2 0.2 0\n";
  Json j{{"out", dir.string()},
         {"env", {{"name", "conjugate"}, {"params", {{"k", 3}, {"T", 4}}}}},
         {"posterior", {{"history", (dir / "h.txt").string()}, {"n", 4000}, {"mode", "analytic"}}}};
  cmd_posterior(resolve_config(j), sink);
  const auto rows = read_csv(dir / "samples.csv");
  REQUIRE(rows.size() == 4001);
  std::ifstream hin(dir / "h.txt");
  const auto post = task.posterior(read_history(hin, task));
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) mean += std::stod(rows[r][c]);
    mean /= 4000;
    CHECK(std::abs(mean - post.mean()[c]) < 4 * std::sqrt(post.var() / 4000));
  }
  const double lq = std::stod(rows[1][3]);
  std::vector<double> th = {std::stod(rows[1][0]), std::stod(rows[1][1]), std::stod(rows[1][2])};
  CHECK(lq == doctest::Approx(post.log_prob(th)).epsilon(1e-8));

  auto none = resolve_config(j);
  none.posterior.n = 0;
  none.out = (dir / "empty").string();
  cmd_posterior(none, sink);
  CHECK(slurp(dir / "empty" / "samples.csv") == "theta_0,theta_1,theta_2,log_q\n");

  std::ofstream(dir / "bad.txt") << "env conjugate\n0 1 2 0.5\n0 1 2\n";
  auto bad = resolve_config(j);
  bad.posterior.history = (dir / "bad.txt").string();
  CHECK_THROWS_AS(cmd_posterior(bad, sink), ParseError);
  auto src = resolve_config(j);
  src.env_name = "source";
  src.env_params = env::default_parameters("source");
  CHECK_THROWS_AS(cmd_posterior(src, sink), ParseError);
}

TEST_CASE("ablate command") {
  const fs::path dir = scratch("ablate");
  Json j{{"out", dir.string()},
         {"env", {{"name", "source"}, {"params", {{"T", 3}}}}},
         {"trainer", small_trainer()},
         {"seeds", {1, 2}}};
  const auto m = cmd_ablate(resolve_config(j), sink);
  CHECK_FALSE(manifest_reports_divergence(m));
  std::map<std::string, std::vector<std::string>> grids;
  std::set<std::string> labels;
  std::size_t logs = 0;
  for (const auto& v : all_variant_labels()) {
    for (int s : {1, 2}) {
      const auto p = dir / "ablate" / v / ("seed_" + std::to_string(s)) / "train_log.csv";
      REQUIRE(fs::exists(p));
      ++logs;
      const auto rows = read_csv(p);
      std::vector<std::string> grid;
      for (std::size_t r = 1; r < rows.size(); ++r) {
        CHECK(rows[r][0] == v);
        grid.push_back(rows[r][2]);
      }
      grids[v + std::to_string(s)] = grid;
    }
  }
  CHECK(logs == 8);
  for (const auto& [k, g] : grids) CHECK(g == grids.begin()->second);
  const auto merged = read_csv(dir / "ablation.csv");
  CHECK(merged.size() == 1 + 8 * 20);
  for (std::size_t r = 1; r < merged.size(); ++r) labels.insert(merged[r][0]);
  CHECK(labels.size() == 4);
}

TEST_CASE("command dispatch") {
  CHECK(command_names().size() == 5);
  CHECK_THROWS_AS(run_command("plot", resolve_config(Json::object()), sink), ConfigError);
}
