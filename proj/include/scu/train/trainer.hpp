#pragma once

// Adversarial training of the two translation generators against the four
// discriminators, plus the unconditional LSGAN used both for the flame-patch
// generator and for the lsgan_only ablation row.
//
// Every step draws its randomness from Rng(seed, step) and every epoch its
// ordering from Rng(seed, epoch), so a run resumed from a checkpoint replays
// exactly the same sequence as an uninterrupted one.

#include <fstream>
#include <functional>

#include "scu/data/dataset.hpp"
#include "scu/train/config.hpp"

namespace scu {

inline constexpr double kDivergenceLimit = 1e6;

struct TrainData {
  std::vector<SceneRecord> non_fire;
  std::vector<SceneRecord> fire;
};

struct TrainPair {
  const SceneRecord* non_fire = nullptr;
  const SceneRecord* fire = nullptr;
};

inline void check_finite_loss(long step, const std::string& component, double v) {
  if (!std::isfinite(v) || std::abs(v) > kDivergenceLimit) throw DivergenceError(step, component, v);
}

inline void check_breakdown(long step, const LossBreakdown& b) {
  const std::pair<const char*, double> fields[] = {{"adv_g", b.adv_g}, {"adv_d", b.adv_d}, {"cyc", b.cyc},
                                                   {"id", b.id},       {"tr_g", b.tr_g},   {"tr_d", b.tr_d},
                                                   {"bg", b.bg},       {"total_g", b.total_g}, {"total_d", b.total_d}};
  for (const auto& [name, v] : fields) check_finite_loss(step, name, v);
}

inline std::vector<int> epoch_order(std::uint64_t seed, long epoch, std::uint64_t which, int n) {
  Rng rng(seed ^ (0x9E3779B97F4A7C15ULL * (which + 1)), 0xE90C0000ULL + static_cast<std::uint64_t>(epoch));
  return rng.permutation(n);
}

// Parameters, architecture manifest and optimiser state of one network.
struct Component {
  KeyValues arch;
  ParamStore<float> params;
  Adam<float> opt;
};

class Trainer {
 public:
  static Trainer create(const TrainConfig& cfg, FlameGenerator flame) {
    cfg.validate();
    Trainer t;
    t.cfg_ = cfg;
    t.flame_ = std::move(flame);
    t.flame_.params.freeze();
    const auto pd = cfg.patch_disc();
    if (!features_of(cfg.variant).conditional) {
      const auto ic = cfg.image_generator();
      t.add("g_image", ic.to_manifest(), init_noise_generator<float>(ic, cfg.seed ^ 0x11), cfg.adam_g());
      t.add("d_f", pd.to_manifest(), init_discriminator<float>(pd, cfg.seed ^ 0x21), cfg.adam_d());
      return t;
    }
    const auto gc = cfg.generator();
    const auto rd = cfg.region_disc();
    t.add("g_nf2f", gc.to_manifest(), init_generator<float>(gc, cfg.seed ^ 0x12), cfg.adam_g());
    t.add("g_f2nf", gc.to_manifest(), init_generator<float>(gc, cfg.seed ^ 0x13), cfg.adam_g());
    t.add("d_f", pd.to_manifest(), init_discriminator<float>(pd, cfg.seed ^ 0x21), cfg.adam_d());
    t.add("d_nf", pd.to_manifest(), init_discriminator<float>(pd, cfg.seed ^ 0x22), cfg.adam_d());
    t.add("d_fr", rd.to_manifest(), init_discriminator<float>(rd, cfg.seed ^ 0x23), cfg.adam_d());
    t.add("d_nfr", rd.to_manifest(), init_discriminator<float>(rd, cfg.seed ^ 0x24), cfg.adam_d());
    return t;
  }

  const TrainConfig& config() const { return cfg_; }
  long step() const { return step_; }
  const FlameGenerator& flame() const { return flame_; }
  bool conditional() const { return features_of(cfg_.variant).conditional; }

  const ParamStore<float>& params(const std::string& name) const { return component(name).params; }
  std::vector<std::string> component_names() const {
    std::vector<std::string> n;
    for (const auto& [k, _] : comps_) n.push_back(k);
    return n;
  }

  long steps_per_epoch(const TrainData& data) const {
    const long b = cfg_.batch_size;
    const long n = conditional() ? static_cast<long>(std::max(data.non_fire.size(), data.fire.size()))
                                 : static_cast<long>(data.fire.size());
    return (n + b - 1) / b;
  }

  long total_steps(const TrainData& data) const {
    return cfg_.max_steps > 0 ? cfg_.max_steps : cfg_.epochs * steps_per_epoch(data);
  }

  void require_data(const TrainData& data) const {
    if (data.fire.empty()) throw DataError("training needs at least one fire record");
    if (conditional() && data.non_fire.empty()) throw DataError("training needs at least one non-fire record");
    for (const auto* set : {&data.fire, &data.non_fire})
      for (const auto& r : *set) {
        if (size_of(r.image) != ImageSize{cfg_.resolution, cfg_.resolution})
          throw DimensionError("training record resolution " + std::to_string(r.image.dim(1)) + "x" +
                               std::to_string(r.image.dim(2)) + " does not match configured " +
                               std::to_string(cfg_.resolution));
        if (r.boxes.empty()) throw DataError("training record without a target box");
      }
  }

  // Records used at `step`; positions wrap around the shorter domain.
  std::vector<TrainPair> batch_for_step(const TrainData& data, long step) const {
    const long spe = steps_per_epoch(data);
    const long epoch = step / spe, local = step % spe;
    const auto nf = conditional() ? epoch_order(cfg_.seed, epoch, 0, static_cast<int>(data.non_fire.size())) : std::vector<int>{};
    const auto fi = epoch_order(cfg_.seed, epoch, 1, static_cast<int>(data.fire.size()));
    std::vector<TrainPair> batch;
    for (long b = 0; b < cfg_.batch_size; ++b) {
      const long pos = local * cfg_.batch_size + b;
      TrainPair p;
      if (conditional()) p.non_fire = &data.non_fire[static_cast<std::size_t>(nf[static_cast<std::size_t>(pos % nf.size())])];
      p.fire = &data.fire[static_cast<std::size_t>(fi[static_cast<std::size_t>(pos % fi.size())])];
      batch.push_back(p);
    }
    return batch;
  }

  LossBreakdown train_step(const TrainData& data) { return train_step(batch_for_step(data, step_)); }

  // One generator update followed by one update of every active discriminator.
  LossBreakdown train_step(const std::vector<TrainPair>& batch) {
    if (batch.empty()) throw ArgumentError("train_step: empty batch");
    auto b = conditional() ? conditional_step(batch) : unconditional_step(batch);
    ++step_;
    return b;
  }

  // G_NF2F applied to a non-fire image composed with `patch` inside `box`.
  ImageTensor generate_fire(const ImageTensor& image, const RegionBox& box, const ImageTensor& patch,
                            std::uint64_t seed) const {
    if (!conditional()) throw ConfigError("generate_fire: " + to_string(cfg_.variant) + " is not a conditional model");
    const auto x6 = compose_six_channel(image, box, patch, cfg_.noise_std, seed);
    return generator_forward(x6, params("g_nf2f"), cfg_.generator());
  }

  ImageTensor generate_non_fire(const ImageTensor& image, const RegionBox& box, std::uint64_t seed) const {
    if (!conditional()) throw ConfigError("generate_non_fire: not a conditional model");
    const auto x6 = compose_six_channel(image, box, mean_background_patch(image, box, flame_.config.out_size), cfg_.noise_std, seed);
    return generator_forward(x6, params("g_f2nf"), cfg_.generator());
  }

  ImageTensor sample_image(std::uint64_t seed) const {
    if (conditional()) throw ConfigError("sample_image: only the unconditional model samples from noise");
    Rng rng(seed, 0x5A11);
    return noise_generate(sample_latent(cfg_.latent_dim, rng), params("g_image"), cfg_.image_generator());
  }

  void save(const fs::path& dir) const {
    fs::create_directories(dir);
    KeyValues m{{"kind", "scu_checkpoint"}, {"step", std::to_string(step_)}};
    for (const auto& [k, v] : cfg_.to_key_values()) m["config." + k] = v;
    std::string names;
    for (const auto& [name, c] : comps_) {
      names += (names.empty() ? "" : ",") + name;
      save_params(dir / name, c.params, c.arch);
      c.opt.save(dir / ("opt_" + name));
    }
    m["components"] = names;
    flame_.save(dir / "flame");
    write_key_values(dir / "manifest.txt", m);
  }

  static Trainer load(const fs::path& dir) {
    const std::string where = dir.string();
    if (!fs::exists(dir / "manifest.txt")) throw LoadError("no training checkpoint at " + where);
    const auto m = read_key_values(dir / "manifest.txt");
    if (require_key(m, "kind", where) != "scu_checkpoint") throw LoadError(where + ": not a training checkpoint");
    KeyValues cfg;
    for (const auto& [k, v] : m)
      if (k.rfind("config.", 0) == 0) cfg[k.substr(7)] = v;
    Trainer t;
    t.cfg_ = TrainConfig::from_key_values(cfg, where);
    t.step_ = parse_int(require_key(m, "step", where), where);
    t.flame_ = FlameGenerator::load(dir / "flame");
    t.flame_.params.freeze();
    std::stringstream ss(require_key(m, "components", where));
    for (std::string name; std::getline(ss, name, ',');) {
      Component c;
      c.arch = load_params(dir / name, c.params);
      c.arch.erase("frozen");
      for (auto it = c.arch.begin(); it != c.arch.end();) it = it->first.rfind("param.", 0) == 0 ? c.arch.erase(it) : std::next(it);
      c.opt.load(dir / ("opt_" + name));
      t.comps_.emplace(name, std::move(c));
    }
    return t;
  }

 private:
  void add(const std::string& name, KeyValues arch, ParamStore<float> p, AdamConfig a) {
    comps_.emplace(name, Component{std::move(arch), std::move(p), Adam<float>(a)});
  }
  Component& component(const std::string& name) {
    auto it = comps_.find(name);
    if (it == comps_.end()) throw ConfigError("model has no component '" + name + "'");
    return it->second;
  }
  const Component& component(const std::string& name) const {
    auto it = comps_.find(name);
    if (it == comps_.end()) throw ConfigError("model has no component '" + name + "'");
    return it->second;
  }
  void update(const std::string& name, const ParamBinder<float>& binder) {
    auto& c = component(name);
    c.opt.step(c.params, binder.grads());
  }

  LossBreakdown conditional_step(const std::vector<TrainPair>& batch) {
    const auto feat = features_of(cfg_.variant);
    const auto& w = cfg_.weights;
    const auto form = cfg_.adv_form;
    const auto gc = cfg_.generator();
    const auto pd = cfg_.patch_disc();
    const auto rd = cfg_.region_disc();
    const int cs = cfg_.crop_size, ps = flame_.config.out_size;
    const ComposeOptions opt{cfg_.noise_std, 1.0};
    const float inv_b = 1.0f / static_cast<float>(batch.size());
    Rng rng(cfg_.seed, 0x57E90000ULL + static_cast<std::uint64_t>(step_));
    LossBreakdown b;
    std::vector<ImageTensor> fakes_f, fakes_nf;

    {
      ag::Tape<float> tape;
      ParamBinder<float> g1(tape, component("g_nf2f").params), g2(tape, component("g_f2nf").params);
      ParamBinder<float> df(tape, component("d_f").params, false), dnf(tape, component("d_nf").params, false);
      ParamBinder<float> dfr(tape, component("d_fr").params, false), dnfr(tape, component("d_nfr").params, false);
      std::vector<ag::Var<float>> terms;
      for (const auto& pair : batch) {
        const auto& nf = *pair.non_fire;
        const auto& fi = *pair.fire;
        const RegionBox bn = nf.target(), bf = fi.target();
        const auto patch = flame_.sample(rng);
        std::uint64_t s[6];
        for (auto& v : s) v = rng.next_u64();
        auto nf_img = tape.constant(nf.image), f_img = tape.constant(fi.image);

        auto fake_f = generator_forward(g1, gc, compose_six_channel(nf_img, bn, patch, opt, s[0]));
        auto fake_nf = generator_forward(g2, gc, compose_six_channel(f_img, bf, mean_background_patch(fi.image, bf, ps), opt, s[1]));
        auto rec_nf = generator_forward(g2, gc, compose_six_channel(fake_f, bn, mean_background_patch(fake_f.value(), bn, ps), opt, s[2]));
        auto rec_f = generator_forward(g1, gc, compose_six_channel(fake_nf, bf, crop(fi.image, bf), opt, s[3]));
        auto id_f = generator_forward(g1, gc, compose_six_channel(f_img, bf, crop(fi.image, bf), opt, s[4]));
        auto id_nf = generator_forward(g2, gc, compose_six_channel(nf_img, bn, mean_background_patch(nf.image, bn, ps), opt, s[5]));
        fakes_f.push_back(fake_f.value());
        fakes_nf.push_back(fake_nf.value());

        auto adv = ag::add(loss::adversarial_generator(patchgan_forward(df, pd, fake_f), form),
                           loss::adversarial_generator(patchgan_forward(dnf, pd, fake_nf), form));
        auto cyc = ag::add(loss::cycle(rec_nf, nf_img), loss::cycle(rec_f, f_img));
        auto idl = ag::add(loss::identity(id_f, f_img), loss::identity(id_nf, nf_img));
        std::vector<ag::Var<float>> parts{adv, ag::scale(cyc, static_cast<float>(w.cyc)), ag::scale(idl, static_cast<float>(w.id))};
        b.adv_g += adv.item();
        b.cyc += cyc.item();
        b.id += idl.item();
        if (feat.region_losses) {
          auto tr = ag::add(loss::target_region_g(region_disc_forward(dfr, rd, crop_region(fake_f, bn, cs, cs)), form),
                            loss::target_region_g(region_disc_forward(dnfr, rd, crop_region(fake_nf, bf, cs, cs)), form));
          auto bg = ag::add(loss::background(fake_f, nf_img, box_to_mask(bn, size_of(nf.image))),
                            loss::background(fake_nf, f_img, box_to_mask(bf, size_of(fi.image))));
          parts.push_back(ag::scale(tr, static_cast<float>(w.tr)));
          parts.push_back(ag::scale(bg, static_cast<float>(w.bg)));
          b.tr_g += tr.item();
          b.bg += bg.item();
        }
        terms.push_back(ag::add_all(parts));
      }
      auto total = ag::scale(ag::add_all(terms), inv_b);
      average(b, batch.size(), false);
      b.total_g = total_generator_loss(b, w);
      check_generator_side(b);
      tape.backward(total);
      update("g_nf2f", g1);
      update("g_f2nf", g2);
    }

    {
      ag::Tape<float> tape;
      ParamBinder<float> df(tape, component("d_f").params), dnf(tape, component("d_nf").params);
      ParamBinder<float> dfr(tape, component("d_fr").params), dnfr(tape, component("d_nfr").params);
      std::vector<ag::Var<float>> terms;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& nf = *batch[i].non_fire;
        const auto& fi = *batch[i].fire;
        const RegionBox bn = nf.target(), bf = fi.target();
        auto real_f = tape.constant(fi.image), real_nf = tape.constant(nf.image);
        auto fake_f = tape.constant(fakes_f[i]), fake_nf = tape.constant(fakes_nf[i]);
        auto adv = ag::add_all({loss::adversarial(patchgan_forward(df, pd, real_f), true, form),
                                loss::adversarial(patchgan_forward(df, pd, fake_f), false, form),
                                loss::adversarial(patchgan_forward(dnf, pd, real_nf), true, form),
                                loss::adversarial(patchgan_forward(dnf, pd, fake_nf), false, form)});
        b.adv_d += adv.item();
        if (feat.region_losses) {
          auto tr = ag::add(
              loss::target_region_d(region_disc_forward(dfr, rd, crop_region(real_f, bf, cs, cs)),
                                    region_disc_forward(dfr, rd, crop_region(fake_f, bn, cs, cs)), form),
              loss::target_region_d(region_disc_forward(dnfr, rd, crop_region(real_nf, bn, cs, cs)),
                                    region_disc_forward(dnfr, rd, crop_region(fake_nf, bf, cs, cs)), form));
          b.tr_d += tr.item();
          terms.push_back(ag::add(adv, tr));
        } else {
          terms.push_back(adv);
        }
      }
      auto total = ag::scale(ag::add_all(terms), inv_b);
      average(b, batch.size(), true);
      b.total_d = total_discriminator_loss(b);
      check_breakdown(step_, b);
      tape.backward(total);
      update("d_f", df);
      update("d_nf", dnf);
      if (feat.region_losses) {
        update("d_fr", dfr);
        update("d_nfr", dnfr);
      }
    }
    return b;
  }

  LossBreakdown unconditional_step(const std::vector<TrainPair>& batch) {
    const auto ic = cfg_.image_generator();
    const auto pd = cfg_.patch_disc();
    const auto form = cfg_.adv_form;
    const float inv_b = 1.0f / static_cast<float>(batch.size());
    Rng rng(cfg_.seed, 0x57E90000ULL + static_cast<std::uint64_t>(step_));
    LossBreakdown b;
    std::vector<ImageTensor> fakes;
    {
      ag::Tape<float> tape;
      ParamBinder<float> g(tape, component("g_image").params);
      ParamBinder<float> df(tape, component("d_f").params, false);
      std::vector<ag::Var<float>> terms;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        auto fake = noise_generator_forward(g, ic, tape.constant(sample_latent(ic.latent_dim, rng)));
        fakes.push_back(fake.value());
        terms.push_back(loss::adversarial_generator(patchgan_forward(df, pd, fake), form));
        b.adv_g += terms.back().item();
      }
      auto total = ag::scale(ag::add_all(terms), inv_b);
      average(b, batch.size(), false);
      b.total_g = total_generator_loss(b, cfg_.weights);
      check_generator_side(b);
      tape.backward(total);
      update("g_image", g);
    }
    {
      ag::Tape<float> tape;
      ParamBinder<float> df(tape, component("d_f").params);
      std::vector<ag::Var<float>> terms;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        terms.push_back(ag::add(loss::adversarial(patchgan_forward(df, pd, tape.constant(batch[i].fire->image)), true, form),
                                loss::adversarial(patchgan_forward(df, pd, tape.constant(fakes[i])), false, form)));
        b.adv_d += terms.back().item();
      }
      auto total = ag::scale(ag::add_all(terms), inv_b);
      average(b, batch.size(), true);
      b.total_d = total_discriminator_loss(b);
      check_breakdown(step_, b);
      tape.backward(total);
      update("d_f", df);
    }
    return b;
  }

  static void average(LossBreakdown& b, std::size_t n, bool disc) {
    const double k = static_cast<double>(n);
    if (disc) {
      b.adv_d /= k;
      b.tr_d /= k;
    } else {
      b.adv_g /= k;
      b.cyc /= k;
      b.id /= k;
      b.tr_g /= k;
      b.bg /= k;
    }
  }

  void check_generator_side(const LossBreakdown& b) const {
    const std::pair<const char*, double> fields[] = {{"adv_g", b.adv_g}, {"cyc", b.cyc},   {"id", b.id},
                                                     {"tr_g", b.tr_g},   {"bg", b.bg},     {"total_g", b.total_g}};
    for (const auto& [name, v] : fields) check_finite_loss(step_, name, v);
  }

  TrainConfig cfg_;
  long step_ = 0;
  FlameGenerator flame_;
  std::map<std::string, Component> comps_;
};

struct TrainResult {
  Trainer trainer;
  std::vector<LossBreakdown> losses;  // one per step run by this call
};

// Runs steps until `until_step` (default: the configured total). Writes
// losses.csv, config.txt and checkpoint/ under `out_dir` when it is non-empty.
inline TrainResult train(Trainer trainer, const TrainData& data, const fs::path& out_dir = {}, long until_step = -1,
                         const std::function<void(long, const LossBreakdown&)>& on_step = {}) {
  trainer.require_data(data);
  const long end = until_step >= 0 ? until_step : trainer.total_steps(data);
  std::ofstream csv;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_key_values(out_dir / "config.txt", trainer.config().to_key_values());
    const bool append = trainer.step() > 0 && fs::exists(out_dir / "losses.csv");
    csv.open(out_dir / "losses.csv", append ? std::ios::app : std::ios::trunc);
    if (!csv) throw LoadError("cannot write " + (out_dir / "losses.csv").string());
    if (!append) csv << kLossCsvHeader << '\n';
  }
  TrainResult r{std::move(trainer), {}};
  const long every = r.trainer.config().checkpoint_every;
  while (r.trainer.step() < end) {
    const long step = r.trainer.step();
    auto b = r.trainer.train_step(data);
    r.losses.push_back(b);
    if (csv.is_open()) csv << loss_csv_row(step, b) << '\n' << std::flush;
    if (on_step) on_step(step, b);
    if (!out_dir.empty() && every > 0 && r.trainer.step() % every == 0) r.trainer.save(out_dir / "checkpoint");
  }
  if (!out_dir.empty()) r.trainer.save(out_dir / "checkpoint");
  return r;
}

// ---------------------------------------------------------------- flame patches

inline std::vector<ImageTensor> flame_patch_set(std::uint64_t seed, int count, int size) {
  std::vector<ImageTensor> out;
  for (int i = 0; i < count; ++i) out.push_back(synth_flame_patch(seed * 1000003ULL + static_cast<std::uint64_t>(i), size, size));
  return out;
}

struct FlameTrainResult {
  FlameGenerator generator;
  std::vector<double> d_real;  // least-squares loss of the discriminator on real patches, per step
  std::vector<double> d_loss;
  std::vector<double> g_loss;
};

// Least-squares GAN on flame patches; the returned generator is frozen.
inline FlameTrainResult pretrain_flame_lsgan(const std::vector<ImageTensor>& patches, const FlameTrainConfig& cfg) {
  cfg.validate();
  if (patches.size() < 16)
    throw ConfigError("flame pre-training needs at least 16 patches, got " + std::to_string(patches.size()));
  const auto& gc = cfg.generator;
  const auto dc = cfg.discriminator();
  for (const auto& p : patches)
    if (p.shape != Shape{gc.out_channels, gc.out_size, gc.out_size})
      throw DimensionError("flame patch shape " + shape_str(p.shape) + " does not match generator output");
  FlameTrainResult r;
  r.generator.config = gc;
  r.generator.params = init_noise_generator<float>(gc, cfg.seed ^ 0xF1);
  auto dparams = init_discriminator<float>(dc, cfg.seed ^ 0xF2);
  Adam<float> og({cfg.lr_g, 0.5, 0.999, 1e-8}), od({cfg.lr_d, 0.5, 0.999, 1e-8});
  const int n = static_cast<int>(patches.size());
  const long spe = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long steps = cfg.epochs * spe;
  for (long step = 0; step < steps; ++step) {
    const auto order = epoch_order(cfg.seed, step / spe, 7, n);
    Rng rng(cfg.seed, 0xF1A30000ULL + static_cast<std::uint64_t>(step));
    std::vector<ImageTensor> fakes;
    double gl = 0, dl = 0, dr = 0;
    {
      ag::Tape<float> tape;
      ParamBinder<float> g(tape, r.generator.params);
      ParamBinder<float> d(tape, dparams, false);
      std::vector<ag::Var<float>> terms;
      for (int b = 0; b < cfg.batch_size; ++b) {
        auto fake = noise_generator_forward(g, gc, tape.constant(sample_latent(gc.latent_dim, rng)));
        fakes.push_back(fake.value());
        terms.push_back(loss::adversarial_generator(region_disc_forward(d, dc, fake)));
        gl += terms.back().item();
      }
      auto total = ag::scale(ag::add_all(terms), 1.0f / static_cast<float>(cfg.batch_size));
      check_finite_loss(step, "flame_g", gl);
      tape.backward(total);
      og.step(r.generator.params, g.grads());
    }
    {
      ag::Tape<float> tape;
      ParamBinder<float> d(tape, dparams);
      std::vector<ag::Var<float>> terms;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const long pos = (step % spe) * cfg.batch_size + b;
        const auto& real = patches[static_cast<std::size_t>(order[static_cast<std::size_t>(pos % n)])];
        auto lr = loss::adversarial(region_disc_forward(d, dc, tape.constant(real)), true);
        auto lf = loss::adversarial(region_disc_forward(d, dc, tape.constant(fakes[static_cast<std::size_t>(b)])), false);
        dr += lr.item();
        terms.push_back(ag::add(lr, lf));
        dl += terms.back().item();
      }
      auto total = ag::scale(ag::add_all(terms), 1.0f / static_cast<float>(cfg.batch_size));
      check_finite_loss(step, "flame_d", dl);
      tape.backward(total);
      od.step(dparams, d.grads());
    }
    r.g_loss.push_back(gl / cfg.batch_size);
    r.d_loss.push_back(dl / cfg.batch_size);
    r.d_real.push_back(dr / cfg.batch_size);
  }
  r.generator.params.freeze();
  return r;
}

// Untrained but frozen flame generator; enough for tests that only need the interface.
inline FlameGenerator untrained_flame_generator(std::uint64_t seed, NoiseGeneratorConfig cfg = {}) {
  FlameGenerator g{cfg, init_noise_generator<float>(cfg, seed)};
  g.params.freeze();
  return g;
}

}  // namespace scu
