#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "scu/core/autograd.hpp"
#include "scu/core/rng.hpp"

namespace scu {

namespace fs = std::filesystem;

// Ordered key=value record used by every manifest.txt in the project.
using KeyValues = std::map<std::string, std::string>;

// Shortest round-trip text form of a double.
inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline void write_key_values(const fs::path& path, const KeyValues& kv) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
}

inline KeyValues read_key_values(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read " + path.string());
  KeyValues kv;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) throw ParseError(path.string(), n, "expected key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline const std::string& require_key(const KeyValues& kv, const std::string& key, const std::string& where) {
  auto it = kv.find(key);
  if (it == kv.end()) throw LoadError(where + ": missing key '" + key + "'");
  return it->second;
}

inline long long parse_int(const std::string& s, const std::string& what) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ConfigError(what + ": not an integer: '" + s + "'");
  return v;
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ConfigError(what + ": not a number: '" + s + "'");
  return v;
}

// Named parameter tree. Names are dotted paths ("enc2.conv.weight"); std::map
// keeps iteration order stable, which the hash and checkpoints rely on.
template <typename T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    if (name.empty() || name.find('/') != std::string::npos || name.front() == '.')
      throw ConfigError("invalid parameter name '" + name + "'");
    auto [it, inserted] = params_.emplace(name, std::move(t));
    if (!inserted) throw ConfigError("duplicate parameter name '" + name + "'");
    return it->second;
  }

  const Tensor<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }
  Tensor<T>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.numel();
    return n;
  }

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [k, v] : params_) out.add(k, v.template cast<U>());
    if (frozen_) out.freeze();
    return out;
  }

  bool operator==(const ParamStore& o) const { return params_ == o.params_ && frozen_ == o.frozen_; }

 private:
  std::map<std::string, Tensor<T>> params_;
  bool frozen_ = false;
};

template <typename T>
using Grads = std::map<std::string, Tensor<T>>;

// FNV-1a over names, shapes and the raw float32 bytes of every parameter.
template <typename T>
std::uint64_t param_hash(const ParamStore<T>& store) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, t] : store) {
    mix(name.data(), name.size());
    for (int d : t.shape) mix(&d, sizeof d);
    for (T v : t.data) {
      const float f = static_cast<float>(v);
      mix(&f, sizeof f);
    }
  }
  return h;
}

// Exposes a ParamStore to a Tape: each parameter becomes one leaf node the
// first time it is referenced. Frozen or non-trainable stores produce constants.
template <typename T>
class ParamBinder {
 public:
  ParamBinder(ag::Tape<T>& tape, const ParamStore<T>& store, bool trainable = true)
      : tape_(&tape), store_(&store), trainable_(trainable && !store.frozen()) {}

  ag::Var<T> operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const auto& t = store_->at(name);
    auto v = trainable_ ? tape_->variable(t) : tape_->constant(t);
    bound_.emplace(name, v);
    return v;
  }

  bool contains(const std::string& name) const { return store_->contains(name); }
  ag::Tape<T>& tape() { return *tape_; }

  // Gradients for every parameter of the store; unreferenced ones are zero.
  Grads<T> grads() const {
    Grads<T> g;
    for (const auto& [name, t] : *store_) {
      auto it = bound_.find(name);
      if (it != bound_.end() && tape_->has_grad(it->second.id))
        g.emplace(name, tape_->grad(it->second.id));
      else
        g.emplace(name, Tensor<T>::zeros_like(t));
    }
    return g;
  }

 private:
  ag::Tape<T>* tape_;
  const ParamStore<T>* store_;
  bool trainable_;
  std::map<std::string, ag::Var<T>> bound_;
};

// ---------------------------------------------------------------- init

template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.normal() * stddev);
  return t;
}

// ---------------------------------------------------------------- checkpoint I/O

inline void write_f32_le(const fs::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  for (float f : values) {
    std::uint32_t u = std::bit_cast<std::uint32_t>(f);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    out.write(reinterpret_cast<const char*>(&u), 4);
  }
}

inline std::vector<float> read_f32_le(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) throw LoadError(path.string() + ": size is not a multiple of 4 bytes");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

// Checkpoint directory: manifest.txt (config key=value lines plus one
// `param.<name>=<shape>` line per tensor) and one raw little-endian float32
// file per parameter, named by its path.
template <typename T>
void save_params(const fs::path& dir, const ParamStore<T>& store, KeyValues manifest) {
  fs::create_directories(dir);
  manifest["frozen"] = store.frozen() ? "1" : "0";
  for (const auto& [name, t] : store) {
    std::string s;
    for (std::size_t i = 0; i < t.shape.size(); ++i) s += (i ? "x" : "") + std::to_string(t.shape[i]);
    manifest["param." + name] = s;
    std::vector<float> f(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) f[i] = static_cast<float>(t.data[i]);
    write_f32_le(dir / name, f);
  }
  write_key_values(dir / "manifest.txt", manifest);
}

// Returns the manifest; `store` receives every parameter listed in it.
template <typename T>
KeyValues load_params(const fs::path& dir, ParamStore<T>& store) {
  if (!fs::exists(dir / "manifest.txt")) throw LoadError("no checkpoint manifest in " + dir.string());
  auto kv = read_key_values(dir / "manifest.txt");
  ParamStore<T> out;
  for (const auto& [k, v] : kv) {
    if (k.rfind("param.", 0) != 0) continue;
    const std::string name = k.substr(6);
    Shape shape;
    std::size_t start = 0;
    while (start <= v.size()) {
      const auto x = v.find('x', start);
      shape.push_back(static_cast<int>(parse_int(v.substr(start, x - start), dir.string() + "/" + k)));
      if (x == std::string::npos) break;
      start = x + 1;
    }
    auto raw = read_f32_le(dir / name);
    if (raw.size() != shape_numel(shape))
      throw LoadError(dir.string() + "/" + name + ": expected " + std::to_string(shape_numel(shape)) + " values, found " +
                      std::to_string(raw.size()));
    Tensor<T> t(shape);
    for (std::size_t i = 0; i < raw.size(); ++i) t.data[i] = static_cast<T>(raw[i]);
    out.add(name, std::move(t));
  }
  if (kv.count("frozen") && kv["frozen"] == "1") out.freeze();
  store = std::move(out);
  return kv;
}

}  // namespace scu
