#pragma once

// Convolutional block attention: channel gate from a shared two-layer MLP
// over average- and max-pooled descriptors, followed by a spatial gate from a
// k x k convolution over the channel-wise mean and max maps.

#include "scu/core/params.hpp"

namespace scu {

struct CbamConfig {
  int channels = 0;
  int reduction = 4;
  int kernel = 7;

  int hidden() const { return channels / reduction; }

  void validate() const {
    if (channels <= 0 || reduction <= 0) throw ConfigError("cbam: channels and reduction must be positive");
    if (channels % reduction != 0)
      throw ConfigError("cbam: channel count " + std::to_string(channels) + " not divisible by reduction ratio " +
                        std::to_string(reduction));
    if (kernel <= 0 || kernel % 2 == 0) throw ConfigError("cbam: spatial kernel must be a positive odd size");
  }
};

// Parameters under `prefix`: mlp.fc1 [C/r, C], mlp.fc2 [C, C/r] (bias-free),
// spatial.weight [1, 2, k, k], spatial.bias [1].
template <typename T>
void init_cbam(ParamStore<T>& store, const std::string& prefix, const CbamConfig& cfg, Rng& rng, double stddev = 0.02) {
  cfg.validate();
  store.add(prefix + ".mlp.fc1", normal_tensor<T>({cfg.hidden(), cfg.channels}, stddev, rng));
  store.add(prefix + ".mlp.fc2", normal_tensor<T>({cfg.channels, cfg.hidden()}, stddev, rng));
  store.add(prefix + ".spatial.weight", normal_tensor<T>({1, 2, cfg.kernel, cfg.kernel}, stddev, rng));
  store.add(prefix + ".spatial.bias", Tensor<T>({1}));
}

template <typename T>
ag::Var<T> channel_attention(ParamBinder<T>& p, const std::string& prefix, ag::Var<T> f) {
  auto fc1 = p(prefix + ".mlp.fc1");
  auto fc2 = p(prefix + ".mlp.fc2");
  if (fc1.value().dim(1) != f.value().dim(0))
    throw DimensionError(prefix + ": feature map has " + std::to_string(f.value().dim(0)) + " channels, attention expects " +
                         std::to_string(fc1.value().dim(1)));
  auto mlp = [&](ag::Var<T> v) { return ag::linear(ag::relu(ag::linear(v, fc1)), fc2); };
  return ag::sigmoid(ag::add(mlp(ag::spatial_mean(f)), mlp(ag::spatial_max(f))));
}

template <typename T>
ag::Var<T> spatial_attention(ParamBinder<T>& p, const std::string& prefix, ag::Var<T> f) {
  auto w = p(prefix + ".spatial.weight");
  auto b = p(prefix + ".spatial.bias");
  const int k = w.value().dim(2);
  auto pooled = ag::concat_channels(ag::channel_mean(f), ag::channel_max(f));
  return ag::sigmoid(ag::conv2d(pooled, w, &b, 1, k / 2));
}

template <typename T>
ag::Var<T> cbam(ParamBinder<T>& p, const std::string& prefix, ag::Var<T> f) {
  auto fc = ag::mul_channelwise(f, channel_attention(p, prefix, f));
  return ag::mul_spatial(fc, spatial_attention(p, prefix, fc));
}

// Tensor-level conveniences (no gradient recording).
template <typename T>
Tensor<T> channel_attention(const Tensor<T>& f, const ParamStore<T>& params, const std::string& prefix) {
  ag::Tape<T> tape(false);
  ParamBinder<T> p(tape, params, false);
  return channel_attention(p, prefix, tape.constant(f)).value();
}

template <typename T>
Tensor<T> spatial_attention(const Tensor<T>& f, const ParamStore<T>& params, const std::string& prefix) {
  ag::Tape<T> tape(false);
  ParamBinder<T> p(tape, params, false);
  return spatial_attention(p, prefix, tape.constant(f)).value();
}

template <typename T>
Tensor<T> cbam(const Tensor<T>& f, const ParamStore<T>& params, const std::string& prefix) {
  ag::Tape<T> tape(false);
  ParamBinder<T> p(tape, params, false);
  return cbam(p, prefix, tape.constant(f)).value();
}

}  // namespace scu
