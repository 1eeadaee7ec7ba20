#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "preflab/error.hpp"
#include "preflab/hash.hpp"
#include "preflab/pipeline.hpp"

namespace fs = std::filesystem;
using namespace preflab;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("preflab_test_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig tiny_reacher(const fs::path& out) {
  RunConfig c = RunConfig::defaults(EnvId::reacher);
  c.out = out;
  c.seed = 5;
  c.n_prefs = 200;
  c.net = "16";
  c.cem.iterations = 2;
  c.cem.population = 8;
  c.cem.episodes = 1;
  c.cem.hidden = 4;
  c.eval_episodes = 5;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct SeedEnv {
  explicit SeedEnv(const char* v) { setenv("PREFLAB_SEED", v, 1); }
  ~SeedEnv() { unsetenv("PREFLAB_SEED"); }
};

int cli(const std::string& args) {
  const std::string cmd = std::string(PREFLAB_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST(Config, ParseAndRoundTrip) {
  const RunConfig c = RunConfig::parse(
      "# comment\n"
      "env = itch\n"
      "seed=9   # trailing\n"
      "features=augmented:4\n"
      "net=linear\n"
      "cem.iterations=7\n");
  EXPECT_EQ(c.env, EnvId::itch);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.features, FeatureConfig::augmented_with(4));
  EXPECT_EQ(c.cem.iterations, 7);
  EXPECT_EQ(c.cem.population, default_cem(EnvId::itch).population);
  const RunConfig back = RunConfig::parse(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.hash(), c.hash());
}

TEST(Config, Rejections) {
  EXPECT_THROW(RunConfig::parse("seed=1\nseed=2\n"), InvalidInput);
  EXPECT_THROW(RunConfig::parse("colour=blue\n"), InvalidInput);
  EXPECT_THROW(RunConfig::parse("seed=abc\n"), InvalidInput);
  EXPECT_THROW(RunConfig::parse("just words\n"), InvalidInput);
  RunConfig c = RunConfig::defaults(EnvId::reacher);
  c.datagen = DatagenScheme::tiered;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, HashIgnoresOutputLocationAndWorkers) {
  RunConfig a = RunConfig::defaults(EnvId::feeding), b = a;
  b.out = "elsewhere";
  b.cem.workers = 4;
  EXPECT_EQ(a.hash(), b.hash());
  b.seed = 1;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Config, SeedOverride) {
  RunConfig c;
  {
    SeedEnv env("42");
    EXPECT_TRUE(apply_seed_override(c));
    EXPECT_EQ(c.seed, 42u);
  }
  {
    SeedEnv env("4x");
    EXPECT_THROW(apply_seed_override(c), InvalidInput);
  }
  EXPECT_FALSE(apply_seed_override(c));
}

TEST(Stages, ChainAndRerunDeterminism) {
  const fs::path a = scratch("chain_a"), b = scratch("chain_b");
  const auto ma = run_pipeline(tiny_reacher(a));
  const auto mb = run_pipeline(tiny_reacher(b));
  ASSERT_EQ(ma.size(), 5u);
  EXPECT_EQ(ma, mb);
  for (const char* stage : {"gen", "prefs", "train-reward", "train-policy", "eval"}) {
    EXPECT_EQ(verify_stage(a, stage), read_manifest(manifest_path(a, stage)));
  }
  // rerunning a stage in place reproduces its manifest
  EXPECT_EQ(stage_train_reward(tiny_reacher(a)), ma[2]);
  EXPECT_EQ(slurp(a / files::kReport), slurp(b / files::kReport));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Stages, PrefsSplitAndPrivilegedModel) {
  const fs::path dir = scratch("split");
  RunConfig c = tiny_reacher(dir);
  c.n_prefs = 2000;
  c.features = FeatureConfig::privileged();
  c.net = "linear";
  stage_gen(c);
  stage_prefs(c);
  std::ifstream in(dir / files::kDataset);
  const auto ds = read_dataset(in);
  EXPECT_EQ(ds.count(Split::train), 1800u);
  EXPECT_EQ(ds.count(Split::val), 200u);
  stage_train_reward(c);
  std::ifstream min(dir / files::kModel);
  EXPECT_EQ(read_model(min).spec.input_dim, 1u);
  fs::remove_all(dir);
}

TEST(Stages, TamperDetected) {
  const fs::path dir = scratch("tamper");
  const RunConfig c = tiny_reacher(dir);
  stage_gen(c);
  stage_prefs(c);
  {
    std::ofstream out(dir / files::kTrajectories, std::ios::app);
    out << "\n";
  }
  EXPECT_THROW(verify_stage(dir, "gen"), IntegrityError);
  EXPECT_THROW(stage_train_reward(c), IntegrityError);

  // regenerating with another seed breaks the dataset's lineage
  RunConfig other = c;
  other.seed = 6;
  stage_gen(other);
  EXPECT_THROW(stage_train_reward(other), IntegrityError);
  fs::remove_all(dir);
}

TEST(Stages, MissingUpstream) {
  const fs::path dir = scratch("missing");
  EXPECT_THROW(stage_prefs(tiny_reacher(dir)), IoError);
  fs::remove_all(dir);
}

TEST(Sweep, ResumeGivesIdenticalReport) {
  const fs::path dir = scratch("sweep");
  SweepOptions opt;
  opt.kind = SweepKind::feature;
  opt.env = EnvId::reacher;
  opt.seeds = {0};
  opt.k_values = {0, 11};
  opt.out = dir;
  CemConfig cem = default_cem(EnvId::reacher);
  cem.iterations = 2;
  cem.population = 8;
  opt.cem = cem;

  const SweepOutcome first = run_sweep(opt);
  ASSERT_EQ(first.rows.size(), 2u);
  EXPECT_EQ(first.computed, 2u);
  const std::string report = slurp(first.report);

  // drop one finished row, as if the run had been interrupted
  std::vector<fs::path> records;
  for (const auto& e : fs::directory_iterator(dir / "rows")) {
    if (e.path().extension() == ".json") records.push_back(e.path());
  }
  ASSERT_EQ(records.size(), 2u);
  std::sort(records.begin(), records.end());
  fs::remove(records[1]);
  fs::remove(fs::path(records[1]).replace_extension(".sha256"));

  const SweepOutcome second = run_sweep(opt);
  EXPECT_EQ(second.reused, 1u);
  EXPECT_EQ(second.computed, 1u);
  EXPECT_EQ(slurp(second.report), report);
  EXPECT_EQ(second.rows, first.rows);

  {
    std::ofstream out(records[0], std::ios::app);
    out << " ";
  }
  EXPECT_THROW(run_sweep(opt), IntegrityError);

  SweepOptions changed = opt;
  changed.k_values = {0, 5};
  EXPECT_THROW(run_sweep(changed), ConfigError);
  fs::remove_all(dir);
}

TEST(Sweep, Kinds) {
  EXPECT_EQ(parse_sweep("capacity"), SweepKind::capacity);
  EXPECT_EQ(to_string(SweepKind::datagen), "datagen");
  EXPECT_THROW(parse_sweep("everything"), ConfigError);
  SweepOptions opt;
  opt.kind = SweepKind::capacity;
  EXPECT_EQ(sweep_plan(opt).size(), 48u);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  const std::string out = " --out " + dir.string();
  const std::string small = " --n 200 --net 16 --iterations 2 --population 8 --cem-episodes 1 --episodes 5";
  EXPECT_EQ(cli("prefs" + out), 2);                       // nothing generated yet
  EXPECT_EQ(cli("gen --env moon" + out), 1);              // bad value
  EXPECT_EQ(cli("gen --env reacher --scheme tiered" + out), 1);
  EXPECT_EQ(cli("gen --bogus-flag" + out), 1);
  EXPECT_EQ(cli("run --env reacher --seed 3" + small + out), 0);
  EXPECT_TRUE(fs::exists(dir / files::kReport));
  EXPECT_EQ(cli("eval" + out), 0);  // later stages pick up config.txt
  EXPECT_EQ(cli("sweep nonsense --out " + (dir / "s").string()), 1);
  EXPECT_EQ(cli("--help"), 0);
  fs::remove_all(dir);
}

TEST(Cli, SeedEnvironmentVariable) {
  const fs::path a = scratch("cli_seed_a"), b = scratch("cli_seed_b");
  EXPECT_EQ(cli("gen --env reacher --seed 11 --out " + a.string()), 0);
  EXPECT_EQ(std::system(("PREFLAB_SEED=11 " + std::string(PREFLAB_CLI) + " gen --env reacher --out " +
                         b.string() + " >/dev/null 2>&1").c_str()),
            0);
  EXPECT_EQ(sha256_file(a / files::kTrajectories), sha256_file(b / files::kTrajectories));
  fs::remove_all(a);
  fs::remove_all(b);
}
