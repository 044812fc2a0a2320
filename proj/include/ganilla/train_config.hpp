#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ganilla/discriminator.hpp"
#include "ganilla/generator.hpp"
#include "ganilla/losses.hpp"

namespace ganilla {

struct TrainConfig {
  std::size_t epochs = 200;
  double lr = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::size_t batch_size = 1;
  double lambda_cycle = 10.0;
  double lambda_identity = 5.0;
  GanLoss gan_loss = GanLoss::least_squares;
  std::size_t pool_size = 50;
  std::uint64_t seed = 0;
  std::size_t decay_start_epoch = 100;
  std::size_t image_size = 256;
  std::size_t checkpoint_every = 10;
  std::size_t sample_every = 10;
  bool flip = false;
  double init_std = 0.02;
  GeneratorSpec generator;
  DiscriminatorSpec discriminator = DiscriminatorSpec::patch70();

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs: must be >= 1");
    if (!(lr > 0)) throw ConfigError("lr: must be > 0");
    if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("beta1: must be in [0, 1)");
    if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("beta2: must be in [0, 1)");
    if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
    if (!(lambda_cycle >= 0)) throw ConfigError("lambda_cycle: must be >= 0");
    if (!(lambda_identity >= 0)) throw ConfigError("lambda_identity: must be >= 0");
    if (image_size < kGeneratorStride || image_size % kGeneratorStride)
      throw ConfigError("image_size: must be a positive multiple of 32");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every: must be >= 1");
    if (!(init_std > 0)) throw ConfigError("init_std: must be > 0");
    generator.validate();
    discriminator.validate();
    if (score_map_extent(discriminator, image_size) == 0)
      throw ConfigError("image_size: too small for the discriminator");
  }
};

namespace config_detail {

inline std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline std::string fmt(std::size_t v) { return std::to_string(v); }

template <typename U>
U parse_number(const std::string& key, const std::string& value) {
  U out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) throw ConfigError(key + ": cannot parse '" + value + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

}  // namespace config_detail

/// Flat key=value view of a config; the order is stable.
inline std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& c) {
  using config_detail::fmt;
  const auto& w = c.generator.layer_widths;
  return {
      {"epochs", fmt(c.epochs)},
      {"lr", fmt(c.lr)},
      {"beta1", fmt(c.beta1)},
      {"beta2", fmt(c.beta2)},
      {"batch_size", fmt(c.batch_size)},
      {"lambda_cycle", fmt(c.lambda_cycle)},
      {"lambda_identity", fmt(c.lambda_identity)},
      {"gan_loss", to_string(c.gan_loss)},
      {"pool_size", fmt(c.pool_size)},
      {"seed", std::to_string(c.seed)},
      {"decay_start_epoch", fmt(c.decay_start_epoch)},
      {"image_size", fmt(c.image_size)},
      {"checkpoint_every", fmt(c.checkpoint_every)},
      {"sample_every", fmt(c.sample_every)},
      {"flip", c.flip ? "true" : "false"},
      {"init_std", fmt(c.init_std)},
      {"generator.variant", to_string(c.generator.variant)},
      {"generator.stem_width", fmt(c.generator.stem_width)},
      {"generator.layer_widths", fmt(w[0]) + "," + fmt(w[1]) + "," + fmt(w[2]) + "," + fmt(w[3])},
      {"generator.fpn_width", fmt(c.generator.fpn_width)},
      {"generator.padding", to_string(c.generator.padding)},
      {"discriminator.base_width", fmt(c.discriminator.base_width)},
  };
}

/// Sets one field from text; unknown keys and malformed values throw ConfigError.
inline void set_field(TrainConfig& c, const std::string& key, const std::string& value) {
  using namespace config_detail;
  auto size = [&] { return parse_number<std::size_t>(key, value); };
  auto real = [&] { return parse_number<double>(key, value); };
  if (key == "epochs") c.epochs = size();
  else if (key == "lr") c.lr = real();
  else if (key == "beta1") c.beta1 = real();
  else if (key == "beta2") c.beta2 = real();
  else if (key == "batch_size") c.batch_size = size();
  else if (key == "lambda_cycle") c.lambda_cycle = real();
  else if (key == "lambda_identity") c.lambda_identity = real();
  else if (key == "gan_loss") c.gan_loss = parse_gan_loss(value);
  else if (key == "pool_size") c.pool_size = size();
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "decay_start_epoch") c.decay_start_epoch = size();
  else if (key == "image_size") c.image_size = size();
  else if (key == "checkpoint_every") c.checkpoint_every = size();
  else if (key == "sample_every") c.sample_every = size();
  else if (key == "flip") c.flip = parse_bool(key, value);
  else if (key == "init_std") c.init_std = real();
  else if (key == "generator.variant") c.generator.variant = parse_variant(value);
  else if (key == "generator.stem_width") c.generator.stem_width = size();
  else if (key == "generator.layer_widths") {
    std::array<std::size_t, 4> w{};
    std::size_t i = 0, start = 0;
    while (true) {
      const auto comma = value.find(',', start);
      if (i >= 4) throw ConfigError(key + ": expected exactly 4 comma-separated widths");
      w[i++] = parse_number<std::size_t>(key, value.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (i != 4) throw ConfigError(key + ": expected exactly 4 comma-separated widths");
    c.generator.layer_widths = w;
  } else if (key == "generator.fpn_width") c.generator.fpn_width = size();
  else if (key == "generator.padding") c.generator.padding = parse_padding(value);
  else if (key == "discriminator.base_width") c.discriminator = DiscriminatorSpec::patch70(size());
  else throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace ganilla
