#pragma once

#include <cmath>

#include "scu/core/params.hpp"

namespace scu {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive moment estimation with bias correction. Moments are kept per
// parameter name so the state can be checkpointed next to the parameters.
template <typename T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(ParamStore<T>& params, const Grads<T>& grads) {
    if (params.frozen()) throw ConfigError("optimizer step on frozen parameters");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params) {
      auto git = grads.find(name);
      if (git == grads.end()) continue;
      const auto& g = git->second;
      auto& m = moment(m_, name, p);
      auto& v = moment(v_, name, p);
      for (std::size_t i = 0; i < p.numel(); ++i) {
        const double gi = g.data[i];
        m.data[i] = static_cast<T>(cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * gi);
        v.data[i] = static_cast<T>(cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * gi * gi);
        const double mh = m.data[i] / c1;
        const double vh = v.data[i] / c2;
        p.data[i] = static_cast<T>(p.data[i] - cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
      }
    }
  }

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // Moments are stored as "m.<name>" / "v.<name>" in the checkpoint format.
  void save(const fs::path& dir) const {
    ParamStore<T> s;
    for (const auto& [k, t] : m_) s.add("m." + k, t);
    for (const auto& [k, t] : v_) s.add("v." + k, t);
    save_params(dir, s,
                {{"kind", "adam"},
                 {"t", std::to_string(t_)},
                 {"lr", format_number(cfg_.lr)},
                 {"beta1", format_number(cfg_.beta1)},
                 {"beta2", format_number(cfg_.beta2)},
                 {"eps", format_number(cfg_.eps)}});
  }

  void load(const fs::path& dir) {
    ParamStore<T> s;
    auto kv = load_params(dir, s);
    const std::string where = dir.string();
    t_ = parse_int(require_key(kv, "t", where), where);
    cfg_.lr = parse_double(require_key(kv, "lr", where), where);
    cfg_.beta1 = parse_double(require_key(kv, "beta1", where), where);
    cfg_.beta2 = parse_double(require_key(kv, "beta2", where), where);
    cfg_.eps = parse_double(require_key(kv, "eps", where), where);
    m_.clear();
    v_.clear();
    for (const auto& [k, t] : s) (k[0] == 'm' ? m_ : v_).emplace(k.substr(2), t);
  }

 private:
  static Tensor<T>& moment(std::map<std::string, Tensor<T>>& store, const std::string& name, const Tensor<T>& like) {
    auto it = store.find(name);
    if (it == store.end()) it = store.emplace(name, Tensor<T>::zeros_like(like)).first;
    return it->second;
  }

  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Tensor<T>> m_, v_;
};

}  // namespace scu
