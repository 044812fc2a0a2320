#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ganilla/checkpoint.hpp"
#include "ganilla/data.hpp"
#include "ganilla/discriminator.hpp"
#include "ganilla/generator.hpp"
#include "ganilla/image_pool.hpp"
#include "ganilla/losses.hpp"
#include "ganilla/optim.hpp"
#include "ganilla/rng.hpp"
#include "ganilla/train_config.hpp"

namespace ganilla {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-step losses. adv_G/adv_F are the generators' adversarial terms,
/// d_X/d_Y the discriminator losses, cyc and idt the unweighted sums of the
/// two L1 terms each.
struct StepMetrics {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double adv_G = 0;
  double adv_F = 0;
  double d_X = 0;
  double d_Y = 0;
  double cyc = 0;
  double idt = 0;
  double lr = 0;
};

inline constexpr const char* kMetricsHeader = "step,epoch,adv_G,adv_F,d_X,d_Y,cyc,idt,lr";

inline std::string metrics_csv_row(const StepMetrics& m) {
  std::ostringstream os;
  os << std::setprecision(9) << m.step << ',' << m.epoch << ',' << m.adv_G << ',' << m.adv_F << ',' << m.d_X << ','
     << m.d_Y << ',' << m.cyc << ',' << m.idt << ',' << m.lr;
  return os.str();
}

/// Constant until decay_start_epoch, then linear to zero at `epochs`.
inline double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch < cfg.decay_start_epoch || cfg.decay_start_epoch >= cfg.epochs) return cfg.lr;
  const double span = static_cast<double>(cfg.epochs - cfg.decay_start_epoch);
  const double done = static_cast<double>(std::min(epoch, cfg.epochs) - cfg.decay_start_epoch);
  return cfg.lr * (1.0 - done / span);
}

/// Both generator/discriminator couples with optimizer state, pools and rng.
/// G maps source to target and is judged by D_Y; F maps target to source
/// and is judged by D_X.
template <typename T>
struct TrainState {
  TrainConfig cfg;
  Engine rng;
  GeneratorNet<T> G;
  GeneratorNet<T> F;
  DiscriminatorNet<T> D_Y;
  DiscriminatorNet<T> D_X;
  Adam<T> gen_opt;
  Adam<T> disc_opt;
  ImagePool<T> pool_X;
  ImagePool<T> pool_Y;
  std::size_t epoch = 0;
  std::size_t step = 0;

  explicit TrainState(const TrainConfig& c)
      : cfg((c.validate(), c)),
        rng(cfg.seed),
        G(cfg.generator, rng, cfg.init_std),
        F(cfg.generator, rng, cfg.init_std),
        D_Y(cfg.discriminator, rng, cfg.init_std),
        D_X(cfg.discriminator, rng, cfg.init_std),
        gen_opt(collect_params<T>({&G.params(), &F.params()}), {cfg.beta1, cfg.beta2}),
        disc_opt(collect_params<T>({&D_Y.params(), &D_X.params()}), {cfg.beta1, cfg.beta2}),
        pool_X(cfg.pool_size),
        pool_Y(cfg.pool_size) {}
};

namespace train_detail {

inline void require_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw TrainingError(std::string("non-finite loss term: ") + term);
}

}  // namespace train_detail

/// One generator update on the joint objective followed by one update of
/// both discriminators (real images vs pooled fakes).
template <typename T>
StepMetrics train_step(TrainState<T>& s, const Tensor<T>& x_src, const Tensor<T>& y_tgt, double lr) {
  if (x_src.shape() != y_tgt.shape())
    throw ShapeError("train_step: source " + shape_str(x_src.shape()) + " vs target " + shape_str(y_tgt.shape()));
  using train_detail::require_finite;
  const auto& cfg = s.cfg;
  const auto x = Var<T>::constant(x_src);
  const auto y = Var<T>::constant(y_tgt);

  s.gen_opt.zero_grad();
  const Var<T> fake_y = s.G.forward(x);
  const Var<T> rec_x = s.F.forward(fake_y);
  const Var<T> fake_x = s.F.forward(y);
  const Var<T> rec_y = s.G.forward(fake_x);
  GeneratorLossParts<Var<T>> parts{adversarial_loss(s.D_Y.forward(fake_y), true, cfg.gan_loss),
                                   adversarial_loss(s.D_X.forward(fake_x), true, cfg.gan_loss),
                                   cycle_loss(x, rec_x),
                                   cycle_loss(y, rec_y),
                                   {},
                                   {}};
  if (cfg.lambda_identity > 0) {
    parts.idt_src = identity_loss(x, s.F.forward(x));
    parts.idt_tgt = identity_loss(y, s.G.forward(y));
  }
  StepMetrics m;
  m.adv_G = parts.adv_g.item();
  m.adv_F = parts.adv_f.item();
  m.cyc = parts.cycle_src.item() + parts.cycle_tgt.item();
  m.idt = parts.idt_src.defined() ? parts.idt_src.item() + parts.idt_tgt.item() : 0.0;
  require_finite(m.adv_G, "adv_G");
  require_finite(m.adv_F, "adv_F");
  require_finite(m.cyc, "cyc");
  require_finite(m.idt, "idt");
  total_generator_objective(parts, cfg.lambda_cycle, cfg.lambda_identity).backward();
  s.gen_opt.step(lr);

  s.disc_opt.zero_grad();  // also drops grads leaked in by the generator pass
  const auto pooled_y = Var<T>::constant(s.pool_Y.query(fake_y.value(), s.rng));
  const auto pooled_x = Var<T>::constant(s.pool_X.query(fake_x.value(), s.rng));
  const T half{0.5};
  const Var<T> d_y = ops::scale(ops::add(adversarial_loss(s.D_Y.forward(y), true, cfg.gan_loss),
                                         adversarial_loss(s.D_Y.forward(pooled_y), false, cfg.gan_loss)),
                                half);
  const Var<T> d_x = ops::scale(ops::add(adversarial_loss(s.D_X.forward(x), true, cfg.gan_loss),
                                         adversarial_loss(s.D_X.forward(pooled_x), false, cfg.gan_loss)),
                                half);
  m.d_Y = d_y.item();
  m.d_X = d_x.item();
  require_finite(m.d_Y, "d_Y");
  require_finite(m.d_X, "d_X");
  ops::add(d_y, d_x).backward();
  s.disc_opt.step(lr);

  m.step = ++s.step;
  m.epoch = s.epoch + 1;  // 1-based, matching checkpoint names
  m.lr = lr;
  return m;
}

// ---- checkpoints ----

namespace train_detail {

template <typename T>
void put_params(Archive& a, const std::string& prefix, const ParamSet<T>& ps) {
  for (const auto& p : ps) a.put(prefix + p.name, p.var.value());
}

template <typename T>
void get_params(const Archive& a, const std::string& prefix, ParamSet<T>& ps) {
  for (auto& p : ps) {
    Tensor<T> t = a.get<T>(prefix + p.name);
    if (t.shape() != p.var.shape())
      throw CheckpointError("shape mismatch for " + prefix + p.name + ": " + shape_str(t.shape()) + " vs " +
                            shape_str(p.var.shape()));
    p.var.mutable_value() = std::move(t);
  }
}

template <typename T>
void put_adam(Archive& a, const std::string& prefix, const Adam<T>& opt) {
  a.meta[prefix + ".steps"] = std::to_string(opt.steps());
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    a.put(prefix + ".m/" + std::to_string(i), opt.first_moments()[i]);
    a.put(prefix + ".v/" + std::to_string(i), opt.second_moments()[i]);
  }
}

template <typename T>
void get_adam(const Archive& a, const std::string& prefix, Adam<T>& opt) {
  opt.set_steps(std::stoull(a.meta_at(prefix + ".steps")));
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    opt.first_moments()[i] = a.get<T>(prefix + ".m/" + std::to_string(i));
    opt.second_moments()[i] = a.get<T>(prefix + ".v/" + std::to_string(i));
  }
}

template <typename T>
void put_pool(Archive& a, const std::string& prefix, const ImagePool<T>& pool) {
  a.meta[prefix + ".size"] = std::to_string(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) a.put(prefix + "/" + std::to_string(i), pool.images()[i]);
}

template <typename T>
void get_pool(const Archive& a, const std::string& prefix, ImagePool<T>& pool) {
  const std::size_t n = std::stoull(a.meta_at(prefix + ".size"));
  pool.images().clear();
  for (std::size_t i = 0; i < n; ++i) pool.images().push_back(a.get<T>(prefix + "/" + std::to_string(i)));
}

inline TrainConfig config_from_archive(const Archive& a) {
  TrainConfig cfg;
  for (const auto& [k, v] : a.meta)
    if (k.rfind("config.", 0) == 0) set_field(cfg, k.substr(7), v);
  cfg.validate();
  return cfg;
}

}  // namespace train_detail

/// Writes the full training state: config echo, counters, rng, parameters,
/// optimizer moments and pool contents.
template <typename T>
void save_checkpoint(const TrainState<T>& s, const fs::path& path) {
  using namespace train_detail;
  Archive a;
  a.meta["kind"] = "ganilla-train-state";
  for (const auto& [k, v] : to_key_values(s.cfg)) a.meta["config." + k] = v;
  a.meta["epoch"] = std::to_string(s.epoch);
  a.meta["step"] = std::to_string(s.step);
  a.meta["rng"] = engine_state(s.rng);
  put_params(a, "G/", s.G.params());
  put_params(a, "F/", s.F.params());
  put_params(a, "D_Y/", s.D_Y.params());
  put_params(a, "D_X/", s.D_X.params());
  put_adam(a, "opt_gen", s.gen_opt);
  put_adam(a, "opt_disc", s.disc_opt);
  put_pool(a, "pool_X", s.pool_X);
  put_pool(a, "pool_Y", s.pool_Y);
  a.save(path);
}

template <typename T>
TrainState<T> load_checkpoint(const fs::path& path) {
  using namespace train_detail;
  const Archive a = Archive::load(path);
  if (a.meta.count("kind") == 0 || a.meta.at("kind") != "ganilla-train-state")
    throw CheckpointError(path.string() + " is not a training checkpoint");
  TrainState<T> s(config_from_archive(a));
  s.epoch = std::stoull(a.meta_at("epoch"));
  s.step = std::stoull(a.meta_at("step"));
  s.rng = engine_from_state(a.meta_at("rng"));
  get_params(a, "G/", s.G.params());
  get_params(a, "F/", s.F.params());
  get_params(a, "D_Y/", s.D_Y.params());
  get_params(a, "D_X/", s.D_X.params());
  get_adam(a, "opt_gen", s.gen_opt);
  get_adam(a, "opt_disc", s.disc_opt);
  get_pool(a, "pool_X", s.pool_X);
  get_pool(a, "pool_Y", s.pool_Y);
  return s;
}

/// The source-to-target generator of a training checkpoint, plus its config.
template <typename T>
std::pair<GeneratorNet<T>, TrainConfig> load_generator(const fs::path& path) {
  using namespace train_detail;
  const Archive a = Archive::load(path);
  TrainConfig cfg = config_from_archive(a);
  Engine rng(cfg.seed);
  GeneratorNet<T> g(cfg.generator, rng, cfg.init_std);
  get_params(a, "G/", g.params());
  return {std::move(g), cfg};
}

// ---- loop ----

struct TrainOptions {
  fs::path out_dir;                  // empty: keep everything in memory
  std::optional<fs::path> resume_from;
  std::size_t stop_after_epoch = 0;  // 0 = run to cfg.epochs; otherwise simulate an interruption
  std::size_t cache_limit_bytes = std::size_t{1} << 30;
};

struct TrainResult {
  std::vector<StepMetrics> metrics;
  std::vector<fs::path> checkpoints;
  std::vector<double> epoch_mean_cycle;  // per epoch run in this call
};

/// Decoded, resized images keyed by path, bounded by a byte budget.
class ImageCache {
 public:
  ImageCache(std::size_t image_size, std::size_t limit_bytes) : size_(image_size), limit_(limit_bytes) {}

  Tensor<float> get(const fs::path& p) {
    if (auto it = cache_.find(p); it != cache_.end()) return it->second;
    Tensor<float> t = load_preprocessed(p, size_);
    const std::size_t bytes = t.size() * sizeof(float);
    if (used_ + bytes <= limit_) {
      used_ += bytes;
      cache_.emplace(p, t);
    }
    return t;
  }

 private:
  std::size_t size_;
  std::size_t limit_;
  std::size_t used_ = 0;
  std::map<fs::path, Tensor<float>> cache_;
};

/// Trains both couples over an unpaired dataset.
///
/// Each epoch draws independent shuffles of the two domains from the state
/// rng and runs min(|A|, |B|) / batch_size steps. A checkpoint is written
/// every cfg.checkpoint_every epochs and after the last one. When resuming,
/// the checkpoint's config is used except for `epochs`, which comes from
/// `cfg`. `on_epoch_end` runs after each epoch's checkpoint.
template <typename T>
TrainResult train_loop(const TrainConfig& cfg, const DomainPair& data, const TrainOptions& opt = {},
                       const std::function<void(const TrainState<T>&)>& on_epoch_end = {}) {
  if (data.source_train.empty() || data.target_train.empty()) throw DataError("train_loop: empty domain dataset");
  TrainState<T> s = opt.resume_from ? load_checkpoint<T>(*opt.resume_from) : TrainState<T>(cfg);
  s.cfg.epochs = cfg.epochs;
  s.cfg.validate();
  const std::size_t steps = std::min(data.source_train.size(), data.target_train.size()) / s.cfg.batch_size;
  if (steps == 0) throw ConfigError("batch_size: larger than the smaller domain");

  std::ofstream metrics_csv;
  fs::path ckpt_dir;
  if (!opt.out_dir.empty()) {
    ckpt_dir = opt.out_dir / "checkpoints";
    fs::create_directories(ckpt_dir);
    const fs::path mpath = opt.out_dir / "metrics.csv";
    const bool fresh = !opt.resume_from || !fs::exists(mpath);
    metrics_csv.open(mpath, fresh ? std::ios::trunc : std::ios::app);
    if (!metrics_csv) throw TrainingError("cannot write " + mpath.string());
    if (fresh) metrics_csv << kMetricsHeader << '\n';
  }

  ImageCache cache(s.cfg.image_size, opt.cache_limit_bytes);
  auto load = [&](const fs::path& p) {
    Tensor<float> t = cache.get(p);
    if (s.cfg.flip && uniform01(s.rng) < 0.5) t = flip_horizontal(t);
    if constexpr (std::is_same_v<T, float>) return t;
    else return t.template cast<T>();
  };

  TrainResult result;
  const std::size_t last = opt.stop_after_epoch ? std::min(opt.stop_after_epoch, s.cfg.epochs) : s.cfg.epochs;
  for (std::size_t epoch = s.epoch; epoch < last; ++epoch) {
    const double lr = lr_schedule(epoch, s.cfg);
    std::vector<std::size_t> order_a(data.source_train.size()), order_b(data.target_train.size());
    std::iota(order_a.begin(), order_a.end(), 0);
    std::iota(order_b.begin(), order_b.end(), 0);
    shuffle_in_place(order_a, s.rng);
    shuffle_in_place(order_b, s.rng);
    double cyc_sum = 0;
    for (std::size_t k = 0; k < steps; ++k) {
      std::vector<Tensor<T>> xa, yb;
      for (std::size_t j = 0; j < s.cfg.batch_size; ++j) {
        xa.push_back(load(data.source_train[order_a[k * s.cfg.batch_size + j]]));
        yb.push_back(load(data.target_train[order_b[k * s.cfg.batch_size + j]]));
      }
      StepMetrics m = train_step(s, stack_batch<T>(xa), stack_batch<T>(yb), lr);
      cyc_sum += m.cyc;
      if (metrics_csv.is_open()) metrics_csv << metrics_csv_row(m) << '\n';
      result.metrics.push_back(m);
    }
    metrics_csv.flush();
    s.epoch = epoch + 1;
    result.epoch_mean_cycle.push_back(cyc_sum / static_cast<double>(steps));
    if (!ckpt_dir.empty() && (s.epoch % s.cfg.checkpoint_every == 0 || s.epoch == last)) {
      std::ostringstream name;
      name << "epoch_" << std::setw(4) << std::setfill('0') << s.epoch << ".ckpt";
      save_checkpoint(s, ckpt_dir / name.str());
      fs::copy_file(ckpt_dir / name.str(), ckpt_dir / "latest.ckpt", fs::copy_options::overwrite_existing);
      result.checkpoints.push_back(ckpt_dir / name.str());
    }
    if (on_epoch_end) on_epoch_end(s);
  }
  return result;
}

}  // namespace ganilla
