#pragma once

// Command-line front end. `run` parses, dispatches and maps errors to exit
// codes: 0 success, 2 usage or configuration, 3 data, 4 numerical/training.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "scu/augment/augment.hpp"
#include "scu/augment/detector.hpp"
#include "scu/train/ablation.hpp"

namespace scu::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kNumerical = 4 };

inline std::uint64_t env_seed() {
  const char* s = std::getenv("SCU_SEED");
  if (!s || !*s) return 0;
  return static_cast<std::uint64_t>(parse_int(s, "SCU_SEED"));
}

// Option values for every command; defaults here are the documented ones.
struct Options {
  std::uint64_t seed = 0;
  std::string out, config;

  // synth
  int count = 32, size = 64;
  double fire_fraction = 0.5;

  // pretrain-flame
  int patches = 64, patch_size = 16, latent_dim = 16, base_width = 64, flame_epochs = 2, flame_batch = 4;

  // train / ablate
  std::string data, eval, flame, resume, variant = "scu_cgan";
  int epochs = 1, batch_size = 1, resolution = 0;
  long max_steps = 0, checkpoint_every = 0;
  double lr_g = 2e-4, lr_d = 2e-4, lambda_cyc = 10, lambda_id = 5, lambda_tr = 1, lambda_bg = 10;
  std::vector<std::string> set;

  // generate
  std::string source, checkpoint;
  int gen_count = 200;

  // evaluate
  std::string set_a, set_b, embeddings_a, embeddings_b, predictions, dataset;
  bool paired = false;
  double threshold = kLocalizeThreshold;

  // detect-smoke
  std::string baseline, augmented, test;
  int det_epochs = 30;

  // mix
  std::string original, generated, ratio = "1:5";
};

struct App {
  std::unique_ptr<CLI::App> app;
  Options o;
  std::map<std::string, CLI::App*> commands;
};

inline void common(CLI::App* c, Options& o, bool out_required = true) {
  c->add_option("--seed", o.seed, "Random seed (default from $SCU_SEED, else 0)")->capture_default_str();
  auto* out = c->add_option("--out", o.out, "Output directory");
  if (out_required) out->required();
  c->add_option("--config", o.config, "key=value file; keys are flag names with '_' for '-'");
}

inline void train_flags(CLI::App* c, Options& o) {
  c->add_option("--flame", o.flame, "Flame generator from pretrain-flame (default: pre-train one with default settings)");
  c->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  c->add_option("--batch-size", o.batch_size, "Batch size")->capture_default_str();
  c->add_option("--max-steps", o.max_steps, "Stop after this many steps (0: epochs decide)")->capture_default_str();
  c->add_option("--checkpoint-every", o.checkpoint_every, "Checkpoint interval in steps (0: only at the end)")->capture_default_str();
  c->add_option("--resolution", o.resolution, "Image side (0: the dataset's)")->capture_default_str();
  c->add_option("--lr-g", o.lr_g, "Generator learning rate")->capture_default_str();
  c->add_option("--lr-d", o.lr_d, "Discriminator learning rate")->capture_default_str();
  c->add_option("--lambda-cyc", o.lambda_cyc, "Cycle-consistency weight")->capture_default_str();
  c->add_option("--lambda-id", o.lambda_id, "Identity weight")->capture_default_str();
  c->add_option("--lambda-tr", o.lambda_tr, "Target-region weight")->capture_default_str();
  c->add_option("--lambda-bg", o.lambda_bg, "Background weight")->capture_default_str();
  c->add_option("--set", o.set, "Any training config key as key=value, repeatable (e.g. gen_widths=16,32,64)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
}

inline App build_app() {
  App a;
  a.app = std::make_unique<CLI::App>("Region-conditioned fire image synthesis and evaluation", "scu_cgan");
  a.app->require_subcommand(1);
  a.app->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  auto& o = a.o;
  o.seed = env_seed();

  auto* c = a.app->add_subcommand("synth", "Write a procedural dataset of fire and non-fire scenes");
  common(c, o);
  c->add_option("--count", o.count, "Number of records")->capture_default_str()->check(CLI::PositiveNumber);
  c->add_option("--size", o.size, "Image height and width")->capture_default_str();
  c->add_option("--fire-fraction", o.fire_fraction, "Fraction of fire records (written first)")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  a.commands["synth"] = c;

  c = a.app->add_subcommand("pretrain-flame", "Pre-train the flame-patch LSGAN");
  common(c, o);
  c->add_option("--patches", o.patches, "Procedural training patches")->capture_default_str();
  c->add_option("--patch-size", o.patch_size, "Patch side")->capture_default_str();
  c->add_option("--latent-dim", o.latent_dim, "Latent size")->capture_default_str();
  c->add_option("--base-width", o.base_width, "Generator width")->capture_default_str();
  c->add_option("--epochs", o.flame_epochs, "Epochs")->capture_default_str();
  c->add_option("--batch-size", o.flame_batch, "Batch size")->capture_default_str();
  c->add_option("--lr-g", o.lr_g, "Generator learning rate")->capture_default_str();
  c->add_option("--lr-d", o.lr_d, "Discriminator learning rate")->capture_default_str();
  a.commands["pretrain-flame"] = c;

  c = a.app->add_subcommand("train", "Train one model variant");
  common(c, o);
  c->add_option("--data", o.data, "Training dataset with fire and non-fire records")->required();
  c->add_option("--variant", o.variant, "Model variant")
      ->capture_default_str()
      ->check(CLI::IsMember({"lsgan_only", "cyclegan", "cyclegan_unet", "cyclegan_unet_cbam", "cyclegan_unet_bg_tr", "scu_cgan"}));
  c->add_option("--resume", o.resume, "Continue from this checkpoint (its config is used)");
  train_flags(c, o);
  a.commands["train"] = c;

  c = a.app->add_subcommand("ablate", "Train and score all six variants");
  common(c, o);
  c->add_option("--data", o.data, "Training dataset")->required();
  c->add_option("--eval", o.eval, "Evaluation dataset (default: the training dataset)");
  train_flags(c, o);
  a.commands["ablate"] = c;

  c = a.app->add_subcommand("generate", "Generate labeled fire images from non-fire records");
  common(c, o);
  c->add_option("--source", o.source, "Dataset holding non-fire source records")->required();
  c->add_option("--checkpoint", o.checkpoint, "Checkpoint or training run directory")->required();
  c->add_option("--count", o.gen_count, "Images to generate")->capture_default_str()->check(CLI::PositiveNumber);
  a.commands["generate"] = c;

  c = a.app->add_subcommand("evaluate", "Image-quality metrics or scoring of a predictions file");
  common(c, o, false);
  c->add_option("--set-a", o.set_a, "Reference image dataset");
  c->add_option("--set-b", o.set_b, "Compared image dataset");
  c->add_flag("--paired", o.paired, "Pair records by index: adds perceptual distance and IoU of set-b labels")
      ->capture_default_str();
  c->add_option("--threshold", o.threshold, "Change threshold for localising generated fire")->capture_default_str();
  c->add_option("--embeddings-a", o.embeddings_a, "Precomputed embeddings for set A (one vector per line)");
  c->add_option("--embeddings-b", o.embeddings_b, "Precomputed embeddings for set B");
  c->add_option("--predictions", o.predictions, "Detector predictions file to score");
  c->add_option("--dataset", o.dataset, "Labeled dataset for --predictions");
  a.commands["evaluate"] = c;

  c = a.app->add_subcommand("detect-smoke", "Train the toy detector on baseline and augmented data and compare");
  common(c, o);
  c->add_option("--baseline", o.baseline, "Baseline training dataset")->required();
  c->add_option("--augmented", o.augmented, "Augmented training dataset")->required();
  c->add_option("--test", o.test, "Test dataset")->required();
  c->add_option("--epochs", o.det_epochs, "Detector epochs")->capture_default_str();
  a.commands["detect-smoke"] = c;

  c = a.app->add_subcommand("mix", "Merge original and generated datasets");
  common(c, o);
  c->add_option("--original", o.original, "Original dataset")->required();
  c->add_option("--generated", o.generated, "Generated dataset")->required();
  c->add_option("--ratio", o.ratio, "original:generated ratio")->capture_default_str();
  a.commands["mix"] = c;
  return a;
}

inline bool is_train_key(const std::string& k) {
  for (const auto& [key, _] : TrainConfig{}.to_key_values())
    if (key == k) return true;
  return false;
}

// Turns a --config file into flag tokens placed before the user's own flags,
// so flags given on the command line take precedence.
inline std::vector<std::string> expand_config(const App& a, const std::vector<std::string>& args) {
  if (args.empty()) return args;
  auto it = a.commands.find(args[0]);
  if (it == a.commands.end()) return args;
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  const auto kv = read_key_values(path);
  const bool has_set = it->second->get_option_no_throw("--set") != nullptr;
  std::vector<std::string> out{args[0]};
  for (const auto& [k, v] : kv) {
    std::string flag = "--" + k;
    std::replace(flag.begin(), flag.end(), '_', '-');
    const auto* opt = it->second->get_option_no_throw(flag);
    if (opt && flag != "--config" && flag != "--help") {
      if (opt->get_expected_min() == 0) {
        if (v == "1" || v == "true") out.push_back(flag);
      } else {
        out.push_back(flag);
        out.push_back(v);
      }
    } else if (has_set && is_train_key(k)) {
      out.push_back("--set");
      out.push_back(k + "=" + v);
    } else {
      throw ConfigError("unknown config key '" + k + "' in " + path);
    }
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

// Effective options of the command, written next to its outputs. The output
// path itself is left out so reruns into another directory compare equal.
inline std::string effective_config(const CLI::App* c) {
  std::string s = "command=" + c->get_name() + "\n";
  for (const auto* opt : c->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = "--" + opt->get_lnames().front();
    if (name == "--help" || name == "--out") continue;
    std::string v;
    if (opt->count() > 0) {
      if (opt->get_multi_option_policy() == CLI::MultiOptionPolicy::TakeAll)
        for (const auto& r : opt->results()) v += (v.empty() ? "" : " ") + r;
      else
        v = opt->get_expected_min() == 0 ? "1" : opt->results().back();
    } else {
      v = opt->get_default_str();
    }
    std::string key = name.substr(2);
    std::replace(key.begin(), key.end(), '-', '_');
    s += key + "=" + v + "\n";
  }
  return s;
}

inline void echo_config(const CLI::App* c, const fs::path& out) {
  fs::create_directories(out);
  write_text_file(out / "run_config.txt", effective_config(c));
}

// ---------------------------------------------------------------- commands

inline int cmd_synth(const Options& o, const CLI::App* c, std::ostream& os) {
  require_scene_size({o.size, o.size});
  const int n_fire = static_cast<int>(std::lround(o.count * o.fire_fraction));
  std::vector<SceneRecord> recs;
  for (int i = 0; i < o.count; ++i)
    recs.push_back(synth_scene(o.seed * 1000003ULL + static_cast<std::uint64_t>(i), {o.size, o.size},
                               i < n_fire ? Domain::fire : Domain::non_fire));
  save_dataset(o.out, recs, o.seed);
  echo_config(c, o.out);
  os << "wrote " << o.count << " records (" << n_fire << " fire) to " << o.out << "\n";
  return kOk;
}

inline FlameTrainConfig flame_config(const Options& o) {
  FlameTrainConfig f;
  f.seed = o.seed;
  f.epochs = o.flame_epochs;
  f.batch_size = o.flame_batch;
  f.patches = o.patches;
  f.lr_g = o.lr_g;
  f.lr_d = o.lr_d;
  f.generator = {o.latent_dim, o.patch_size, o.base_width, 3};
  return f;
}

inline int cmd_pretrain_flame(const Options& o, const CLI::App* c, std::ostream& os) {
  const auto f = flame_config(o);
  f.validate();
  const auto r = pretrain_flame_lsgan(flame_patch_set(o.seed, f.patches, f.generator.out_size), f);
  r.generator.save(fs::path(o.out) / "flame");
  std::string csv = "step,d_loss,d_real,g_loss\n";
  for (std::size_t i = 0; i < r.d_loss.size(); ++i)
    csv += std::to_string(i) + "," + format_number(r.d_loss[i]) + "," + format_number(r.d_real[i]) + "," + format_number(r.g_loss[i]) + "\n";
  write_text_file(fs::path(o.out) / "flame_losses.csv", csv);
  echo_config(c, o.out);
  os << "flame generator trained for " << r.d_loss.size() << " steps, saved to " << (fs::path(o.out) / "flame").string() << "\n";
  return kOk;
}

inline FlameGenerator load_or_pretrain_flame(const Options& o) {
  if (!o.flame.empty()) {
    const fs::path p = fs::exists(fs::path(o.flame) / "flame" / "manifest.txt") ? fs::path(o.flame) / "flame" : fs::path(o.flame);
    auto f = FlameGenerator::load(p);
    f.params.freeze();
    return f;
  }
  Options d;
  d.seed = o.seed;
  const auto f = flame_config(d);
  return pretrain_flame_lsgan(flame_patch_set(o.seed, f.patches, f.generator.out_size), f).generator;
}

inline TrainData split_domains(const Dataset& ds) {
  TrainData d;
  for (const auto& r : ds.records) (r.domain == Domain::fire ? d.fire : d.non_fire).push_back(r);
  return d;
}

inline TrainConfig train_config(const Options& o, const Dataset& data) {
  TrainConfig t;
  t.seed = o.seed;
  t.variant = parse_variant(o.variant);
  t.epochs = o.epochs;
  t.batch_size = o.batch_size;
  t.checkpoint_every = o.checkpoint_every;
  t.lr_g = o.lr_g;
  t.lr_d = o.lr_d;
  t.weights = {o.lambda_cyc, o.lambda_id, o.lambda_tr, o.lambda_bg};
  if (data.size().height != data.size().width) throw DimensionError("training images must be square");
  t.resolution = o.resolution > 0 ? o.resolution : data.size().height;
  KeyValues kv;
  for (const auto& s : o.set) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  t.apply(kv, "--set");
  t.validate();
  return t;
}

inline std::function<void(long, const LossBreakdown&)> progress(std::ostream& os, long total, const std::string& label) {
  const long every = std::max(1L, total / 10);
  return [&os, total, every, label](long step, const LossBreakdown& b) {
    if ((step + 1) % every == 0 || step + 1 == total)
      os << label << "step " << step + 1 << "/" << total << " total_g=" << format_number(b.total_g)
         << " total_d=" << format_number(b.total_d) << " bg=" << format_number(b.bg) << "\n";
  };
}

inline int cmd_train(const Options& o, const CLI::App* c, std::ostream& os) {
  const auto ds = load_dataset(o.data);
  if (ds.records.empty()) throw LoadError("dataset " + o.data + " is empty");
  const auto data = split_domains(ds);
  Trainer t = o.resume.empty() ? Trainer::create(train_config(o, ds), load_or_pretrain_flame(o))
                               : Trainer::load(resolve_checkpoint(o.resume));
  const long end = o.max_steps > 0 ? o.max_steps : t.total_steps(data);
  echo_config(c, o.out);
  auto r = train(std::move(t), data, o.out, end, progress(os, end, ""));
  os << "trained " << to_string(r.trainer.config().variant) << " to step " << r.trainer.step() << ", checkpoint "
     << (fs::path(o.out) / "checkpoint").string() << "\n";
  return kOk;
}

inline int cmd_ablate(const Options& o, const CLI::App* c, std::ostream& os) {
  const auto ds = load_dataset(o.data);
  if (ds.records.empty()) throw LoadError("dataset " + o.data + " is empty");
  const auto eval_ds = o.eval.empty() ? ds : load_dataset(o.eval);
  const auto data = split_domains(ds);
  const auto cfg = train_config(o, ds);
  echo_config(c, o.out);
  const auto rows = run_ablation(cfg, load_or_pretrain_flame(o), data, make_eval_set(split_domains(eval_ds)), o.out);
  std::vector<MetricReport> reports;
  for (const auto& r : rows) reports.push_back(r.report);
  os << report_csv(reports, "variant", kAblationColumns);
  return kOk;
}

inline int cmd_generate(const Options& o, const CLI::App* c, std::ostream& os) {
  AugmentPlan p{o.source, o.checkpoint, o.out, o.gen_count, o.seed, {}};
  generate_augmented(p);
  echo_config(c, o.out);
  os << "generated " << o.gen_count << " labeled fire images in " << o.out << "\n";
  return kOk;
}

inline std::vector<ImageTensor> images_of(const Dataset& ds) {
  std::vector<ImageTensor> v;
  for (const auto& r : ds.records) v.push_back(r.image);
  return v;
}

inline int cmd_evaluate(const Options& o, const CLI::App* c, std::ostream& os) {
  MetricReport r;
  if (!o.predictions.empty()) {
    if (o.dataset.empty()) throw ConfigError("--predictions needs --dataset");
    r = score_predictions_file(o.predictions, o.dataset);
    r.label = "predictions";
  } else if (!o.embeddings_a.empty() || !o.embeddings_b.empty()) {
    if (o.embeddings_a.empty() || o.embeddings_b.empty()) throw ConfigError("--embeddings-a and --embeddings-b go together");
    const auto a = read_embeddings(o.embeddings_a), b = read_embeddings(o.embeddings_b);
    r.fid = fid_from_features(a, b);
    r.kid = kid_from_features(a, b);
    r.label = "embeddings";
  } else {
    if (o.set_a.empty() || o.set_b.empty()) throw ConfigError("evaluate needs --set-a and --set-b, --embeddings-a/-b, or --predictions");
    const auto a = load_dataset(o.set_a), b = load_dataset(o.set_b);
    const auto fx = FeatureExtractor::builtin();
    const auto ia = images_of(a), ib = images_of(b);
    r.fid = fid(ia, ib, fx);
    r.kid = kid(ia, ib, fx);
    if (o.paired) {
      if (ia.size() != ib.size()) throw ArgumentError("--paired needs sets of equal size");
      r.perceptual = mean_perceptual_distance(ib, ia, fx);
      std::vector<RegionBox> boxes;
      for (const auto& rec : b.records) {
        if (rec.boxes.empty()) throw DataError("--paired: set-b record without a label box");
        boxes.push_back(rec.target());
      }
      r.iou = generation_iou(ib, ia, boxes, o.threshold);
    }
    r.label = "images";
  }
  if (!r.all_finite()) throw NumericalError("evaluation produced a non-finite metric");
  os << report_text(r);
  if (!o.out.empty()) {
    std::vector<std::string> cols;
    for (const auto& [name, v] : r.fields())
      if (v) cols.push_back(name);
    write_text_file(fs::path(o.out) / "metrics.csv", report_csv({r}, "run", cols));
    write_text_file(fs::path(o.out) / "metrics.txt", report_text(r));
    echo_config(c, o.out);
  }
  return kOk;
}

inline int cmd_detect_smoke(const Options& o, const CLI::App* c, std::ostream& os) {
  ToyDetectorConfig cfg;
  cfg.seed = o.seed;
  cfg.epochs = o.det_epochs;
  const auto test = load_dataset(o.test);
  std::vector<MetricReport> rows;
  for (const auto& [label, dir] : {std::pair{"baseline", o.baseline}, std::pair{"augmented", o.augmented}}) {
    auto r = toy_detector_train_eval(load_dataset(dir), test, cfg);
    if (!r.all_finite()) throw NumericalError("detector metrics are not finite");
    r.label = label;
    rows.push_back(r);
  }
  const auto csv = report_csv(rows, "dataset", {"precision", "recall", "map50", "map5095"});
  write_text_file(fs::path(o.out) / "detect_report.csv", csv);
  echo_config(c, o.out);
  os << csv;
  return kOk;
}

inline int cmd_mix(const Options& o, const CLI::App* c, std::ostream& os) {
  mix_datasets(o.original, o.generated, MixRatio::parse(o.ratio), o.seed, o.out);
  echo_config(c, o.out);
  const auto m = read_key_values(fs::path(o.out) / "manifest.txt");
  os << "mixed " << m.at("original_count") << " original + " << m.at("generated_count") << " generated records into " << o.out
     << "\n";
  return kOk;
}

// ---------------------------------------------------------------- entry point

inline int run(const std::vector<std::string>& args, std::ostream& os = std::cout, std::ostream& es = std::cerr) {
  try {
    App a = build_app();
    auto expanded = expand_config(a, args);
    std::reverse(expanded.begin(), expanded.end());
    try {
      a.app->parse(expanded);
    } catch (const CLI::ParseError& e) {
      const int code = a.app->exit(e, os, es);
      return code == 0 ? kOk : kUsage;
    }
    for (const auto& [name, c] : a.commands) {
      if (!c->parsed()) continue;
      if (name == "synth") return cmd_synth(a.o, c, os);
      if (name == "pretrain-flame") return cmd_pretrain_flame(a.o, c, os);
      if (name == "train") return cmd_train(a.o, c, os);
      if (name == "ablate") return cmd_ablate(a.o, c, os);
      if (name == "generate") return cmd_generate(a.o, c, os);
      if (name == "evaluate") return cmd_evaluate(a.o, c, os);
      if (name == "detect-smoke") return cmd_detect_smoke(a.o, c, os);
      if (name == "mix") return cmd_mix(a.o, c, os);
    }
    return kUsage;
  } catch (const ConfigError& e) {
    es << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    es << "error: " << e.what() << "\n";
    return kData;
  } catch (const ArgumentError& e) {
    es << "error: " << e.what() << "\n";
    return kData;
  } catch (const NumericalError& e) {
    es << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    es << "error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace scu::cli
