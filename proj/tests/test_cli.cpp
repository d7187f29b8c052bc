#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "scu/cli/cli.hpp"
#include "support/fixtures.hpp"

namespace scu {
namespace {

using testing::read_tree;

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  return {code, o.str(), e.str()};
}

struct Scratch {
  fs::path root;
  explicit Scratch(const std::string& name) : root(fs::temp_directory_path() / ("scu_cli_" + name)) { fs::remove_all(root); }
  ~Scratch() { fs::remove_all(root); }
  std::string operator/(const std::string& p) const { return (root / p).string(); }
};

double metric(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    std::istringstream l(line);
    std::string k, v;
    if (l >> k >> v && k == name) return parse_double(v, name);
  }
  ADD_FAILURE() << name << " missing from:\n" << text;
  return 0;
}

TEST(CliHelp, EveryCommandListsItsFlagsAndDefaults) {
  const auto top = cli({"--help"});
  EXPECT_EQ(top.code, 0);
  auto app = cli::build_app();
  for (const auto& [name, cmd] : app.commands) {
    EXPECT_NE(top.out.find(name), std::string::npos) << name;
    const auto r = cli({name, "--help"});
    EXPECT_EQ(r.code, 0) << name;
    for (const auto* opt : cmd->get_options()) {
      const auto flag = "--" + opt->get_lnames().front();
      EXPECT_NE(r.out.find(flag), std::string::npos) << name << " " << flag;
      if (opt->get_required()) EXPECT_NE(r.out.find("REQUIRED"), std::string::npos) << name << " " << flag;
      const auto def = opt->get_default_str();
      if (!def.empty() && flag != "--help") EXPECT_NE(r.out.find("[" + def + "]"), std::string::npos) << name << " " << flag;
    }
  }
}

TEST(CliSynth, SameSeedGivesIdenticalDirectories) {
  Scratch s("synth");
  for (const char* d : {"a", "b"}) ASSERT_EQ(cli({"synth", "--seed", "1", "--count", "32", "--size", "64", "--out", s / d}).code, 0);
  const auto a = read_tree(s / "a");
  EXPECT_EQ(a, read_tree(s / "b"));
  EXPECT_EQ(a.count("run_config.txt"), 1u);
  const auto ds = load_dataset(s / "a");
  ASSERT_EQ(ds.records.size(), 32u);
  EXPECT_EQ(std::count_if(ds.records.begin(), ds.records.end(), [](const auto& r) { return r.domain == Domain::fire; }), 16);
  ASSERT_EQ(cli({"synth", "--seed", "2", "--count", "32", "--size", "64", "--out", s / "c"}).code, 0);
  EXPECT_NE(a, read_tree(s / "c"));
}

TEST(CliSynth, SeedComesFromEnvironmentWhenFlagIsAbsent) {
  Scratch s("env");
  ASSERT_EQ(cli({"synth", "--seed", "7", "--count", "4", "--size", "32", "--out", s / "flag"}).code, 0);
  setenv("SCU_SEED", "7", 1);
  const auto r = cli({"synth", "--count", "4", "--size", "32", "--out", s / "env"});
  setenv("SCU_SEED", "x7", 1);
  const auto bad = cli({"synth", "--count", "4", "--size", "32", "--out", s / "bad"});
  unsetenv("SCU_SEED");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(read_tree(s / "flag"), read_tree(s / "env"));
  EXPECT_EQ(bad.code, cli::kUsage);
}

TEST(CliConfig, FileIsOverriddenByFlagsAndEchoed) {
  Scratch s("config");
  fs::create_directories(s.root);
  write_text_file(s.root / "c.txt", "count=3\nsize=32\nfire_fraction=1\n");
  ASSERT_EQ(cli({"synth", "--config", s / "c.txt", "--count", "5", "--out", s / "d"}).code, 0);
  const auto echo = read_key_values(s.root / "d" / "run_config.txt");
  EXPECT_EQ(echo.at("count"), "5");
  EXPECT_EQ(echo.at("size"), "32");
  EXPECT_EQ(echo.at("fire_fraction"), "1");
  EXPECT_EQ(echo.count("out"), 0u);
  EXPECT_EQ(echo.at("config"), s / "c.txt");
  EXPECT_EQ(load_dataset(s / "d").records.size(), 5u);

  write_text_file(s.root / "bad.txt", "count=3\nbatchsize=2\n");
  const auto r = cli({"synth", "--config", s / "bad.txt", "--out", s / "e"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("batchsize"), std::string::npos);
  EXPECT_EQ(cli({"synth", "--config", s / "missing.txt", "--out", s / "e"}).code, cli::kUsage);
}

TEST(CliExitCodes, UsageDataAndNumerical) {
  Scratch s("codes");
  EXPECT_EQ(cli({}).code, cli::kUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, cli::kUsage);
  EXPECT_EQ(cli({"synth", "--out", s / "x", "--bogus"}).code, cli::kUsage);
  EXPECT_EQ(cli({"synth"}).code, cli::kUsage);
  EXPECT_EQ(cli({"synth", "--out", s / "x", "--count", "abc"}).code, cli::kUsage);
  EXPECT_EQ(cli({"train", "--data", s / "x", "--out", s / "y", "--variant", "gan"}).code, cli::kUsage);
  EXPECT_EQ(cli({"mix", "--original", s / "a", "--generated", s / "b", "--ratio", "1-5", "--out", s / "m"}).code, cli::kUsage);
  EXPECT_EQ(cli({"evaluate", "--set-a", s / "none", "--set-b", s / "none"}).code, cli::kData);
  EXPECT_EQ(cli({"generate", "--source", s / "none", "--checkpoint", s / "none", "--out", s / "g"}).code, cli::kData);

  fs::create_directories(s.root);
  write_text_file(s.root / "e.txt", "1e300 1e300\n-1e300 2\n3 -1e300\n");
  EXPECT_EQ(cli({"evaluate", "--embeddings-a", s / "e.txt", "--embeddings-b", s / "e.txt"}).code, cli::kNumerical);
  write_text_file(s.root / "ragged.txt", "1 2\n3\n");
  EXPECT_EQ(cli({"evaluate", "--embeddings-a", s / "ragged.txt", "--embeddings-b", s / "e.txt"}).code, cli::kData);
}

TEST(CliEvaluate, IdenticalSetsHaveZeroFid) {
  Scratch s("eval");
  ASSERT_EQ(cli({"synth", "--seed", "3", "--count", "12", "--size", "32", "--out", s / "d"}).code, 0);
  const auto r = cli({"evaluate", "--set-a", s / "d", "--set-b", s / "d", "--paired", "--out", s / "m"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LE(std::abs(metric(r.out, "fid")), 1e-6);
  EXPECT_NEAR(metric(r.out, "perceptual"), 0.0, 1e-12);
  EXPECT_TRUE(fs::exists(s.root / "m" / "metrics.csv"));
}

// Shared tiny pipeline: two datasets, a flame generator and a short training run.
struct Pipeline {
  Scratch s{"pipeline"};
  std::vector<std::string> tiny{"--set", "gen_widths=8,16", "--set", "disc_widths=8,16", "--set", "crop_size=16",
                                "--set", "res_blocks=1", "--set", "latent_dim=8", "--batch-size", "4"};

  std::vector<std::string> with_tiny(std::vector<std::string> a) const {
    a.insert(a.end(), tiny.begin(), tiny.end());
    return a;
  }
};

TEST(CliPipeline, TrainGenerateMixDetect) {
  Pipeline p;
  const auto& s = p.s;
  ASSERT_EQ(cli({"synth", "--seed", "1", "--count", "8", "--size", "32", "--out", s / "d"}).code, 0);
  ASSERT_EQ(cli({"synth", "--seed", "2", "--count", "8", "--size", "32", "--fire-fraction", "0", "--out", s / "src"}).code, 0);
  ASSERT_EQ(cli({"pretrain-flame", "--patches", "16", "--epochs", "1", "--latent-dim", "8", "--base-width", "16", "--out", s / "f"}).code, 0);
  for (const char* run : {"r1", "r2"}) {
    const auto r = cli(p.with_tiny({"train", "--data", s / "d", "--flame", s / "f", "--epochs", "2", "--out", s / run}));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(read_tree(s / "r1"), read_tree(s / "r2"));
  EXPECT_EQ(Trainer::load(s.root / "r1" / "checkpoint").step(), 2);
  const auto used = read_key_values(s.root / "r1" / "config.txt");
  EXPECT_EQ(used.at("gen_widths"), "8,16");
  EXPECT_EQ(used.at("latent_dim"), "8");
  EXPECT_EQ(used.at("resolution"), "32");

  // Interrupted and resumed run reaches the same weights.
  ASSERT_EQ(cli(p.with_tiny({"train", "--data", s / "d", "--flame", s / "f", "--epochs", "2", "--max-steps", "1", "--out", s / "r3"})).code, 0);
  ASSERT_EQ(cli({"train", "--data", s / "d", "--resume", s / "r3", "--out", s / "r3"}).code, 0);
  EXPECT_EQ(read_tree(s / "r1")["checkpoint/manifest.txt"], read_tree(s / "r3")["checkpoint/manifest.txt"]);
  const auto a = Trainer::load(s.root / "r1" / "checkpoint"), b = Trainer::load(s.root / "r3" / "checkpoint");
  for (const auto& c : a.component_names()) EXPECT_EQ(param_hash(a.params(c)), param_hash(b.params(c))) << c;

  for (const char* g : {"g1", "g2"})
    ASSERT_EQ(cli({"generate", "--source", s / "src", "--checkpoint", s / "r1", "--count", "6", "--seed", "4", "--out", s / g}).code, 0);
  EXPECT_EQ(read_tree(s / "g1"), read_tree(s / "g2"));
  EXPECT_EQ(load_dataset(s / "g1").records.size(), 6u);

  ASSERT_EQ(cli({"mix", "--original", s / "d", "--generated", s / "g1", "--ratio", "1:5", "--out", s / "mix"}).code, 0);
  EXPECT_EQ(load_dataset(s / "mix").records.size(), 14u);

  const auto det = cli({"detect-smoke", "--baseline", s / "d", "--augmented", s / "mix", "--test", s / "d", "--epochs", "1", "--out", s / "det"});
  ASSERT_EQ(det.code, 0) << det.err;
  const auto csv = read_tree(s / "det").at("detect_report.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "dataset,precision,recall,map50,map5095");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);

  // Wrong-resolution source and a training set without fire images.
  ASSERT_EQ(cli({"synth", "--count", "4", "--size", "64", "--out", s / "big"}).code, 0);
  EXPECT_EQ(cli({"generate", "--source", s / "big", "--checkpoint", s / "r1", "--count", "2", "--out", s / "g3"}).code, cli::kData);
  EXPECT_EQ(cli(p.with_tiny({"train", "--data", s / "src", "--flame", s / "f", "--out", s / "r4"})).code, cli::kData);
}

TEST(CliAblate, WritesSixRowReport) {
  Pipeline p;
  const auto& s = p.s;
  ASSERT_EQ(cli({"synth", "--seed", "5", "--count", "8", "--size", "32", "--out", s / "d"}).code, 0);
  ASSERT_EQ(cli({"pretrain-flame", "--patches", "16", "--epochs", "1", "--latent-dim", "8", "--base-width", "16", "--out", s / "f"}).code, 0);
  const auto r = cli(p.with_tiny({"ablate", "--data", s / "d", "--flame", s / "f", "--out", s / "abl"}));
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream csv(read_tree(s / "abl").at("ablation_report.csv"));
  std::vector<std::string> lines;
  for (std::string l; std::getline(csv, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], kAblationCsvHeader);
  for (std::size_t i = 0; i < kAblationOrder.size(); ++i) EXPECT_EQ(lines[i + 1].substr(0, lines[i + 1].find(',')), to_string(kAblationOrder[i]));
  EXPECT_EQ(lines[1].substr(lines[1].rfind(',')), ",-");
}

}  // namespace
}  // namespace scu
