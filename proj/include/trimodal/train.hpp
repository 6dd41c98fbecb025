#pragma once

// AdamW, the learning-rate schedule, evaluation helpers and the training loop.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trimodal/alignment.hpp"
#include "trimodal/model.hpp"
#include "trimodal/retrieval.hpp"
#include "trimodal/synth.hpp"

namespace trimodal {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t epochs = 150;
  std::size_t batch_size = 16;
  std::size_t latent_dim = 32;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ffn_dim = 0;  // 0 means 2 * latent_dim
  double epsilon = 0.8;
  double lambda_recon = 0.1;
  double lr_start = 1e-4;
  double lr_end = 1e-5;
  std::size_t decay_start_epoch = 100;
  FusionMode fusion_mode = FusionMode::kJoint;
  std::size_t fusion_heads = 1;
  ModalityMode modality_mode = ModalityMode::kThreeModal;
  AdamWHyper adamw;
  double feature_noise = 0.0;  // Gaussian noise on video frame features; 0 disables

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
    if (batch_size < 2) fail("batch_size must be at least 2");
    if (!(lr_end <= lr_start)) fail("lr_end must not exceed lr_start");
    if (!(lr_end > 0)) fail("learning rates must be positive");
    if (decay_start_epoch > epochs) fail("decay_start_epoch must not exceed epochs");
    if (!(epsilon >= 0 && epsilon <= 1)) fail("epsilon must lie in [0, 1]");
    if (!(lambda_recon >= 0)) fail("lambda_recon must be >= 0");
    if (latent_dim == 0 || heads == 0 || latent_dim % heads != 0) fail("heads must divide latent_dim");
    if (fusion_heads == 0 || latent_dim % fusion_heads != 0) fail("fusion_heads must divide latent_dim");
    if (layers == 0) fail("layers must be positive");
    if (!(adamw.beta1 >= 0 && adamw.beta1 < 1 && adamw.beta2 >= 0 && adamw.beta2 < 1)) fail("betas must lie in [0, 1)");
    if (!(adamw.eps > 0) || !(adamw.weight_decay >= 0)) fail("AdamW eps must be > 0 and weight decay >= 0");
    if (!(feature_noise >= 0)) fail("feature_noise must be >= 0");
  }

  TransformerShape transformer() const {
    return TransformerShape{latent_dim, heads, layers, ffn_dim ? ffn_dim : 2 * latent_dim};
  }

  LossConfig loss() const { return LossConfig{epsilon, lambda_recon, modality_mode}; }

  ModelConfig model_for(const GeneratorConfig& g) const {
    ModelConfig m = ModelConfig::for_data(g, transformer());
    m.fusion_mode = fusion_mode;
    m.fusion_heads = fusion_heads;
    m.init_seed = seed;
    return m;
  }

  // Settings of the reference full-scale run.
  static TrainConfig full_scale() {
    TrainConfig c;
    c.epochs = 400;
    c.batch_size = 64;
    c.latent_dim = 512;
    c.heads = 8;
    return c;
  }
};

// Constant lr_start before decay_start_epoch, then linear to lr_end at the final epoch.
inline double lr_schedule(std::size_t epoch, const TrainConfig& c) {
  if (epoch < c.decay_start_epoch || c.epochs == 0) return c.lr_start;
  const std::size_t last = c.epochs - 1;
  if (last <= c.decay_start_epoch) return c.lr_end;
  const double frac = std::min(1.0, static_cast<double>(epoch - c.decay_start_epoch) /
                                        static_cast<double>(last - c.decay_start_epoch));
  return c.lr_start + (c.lr_end - c.lr_start) * frac;
}

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t step = 0;
};

// One decoupled-weight-decay Adam update of a single tensor.
template <typename T>
void adamw_update(Tensor<T>& p, AdamState& s, double lr, const AdamWHyper& h, bool decay = true) {
  if (p.grad.size() != p.values.size()) throw ShapeError("adamw: gradient and parameter sizes differ");
  for (T g : p.grad)
    if (!std::isfinite(g)) throw NumericalError("adamw: non-finite gradient");
  if (s.m.empty()) {
    s.m.assign(p.values.size(), 0.0);
    s.v.assign(p.values.size(), 0.0);
  }
  ++s.step;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double g = static_cast<double>(p.grad[i]);
    double x = static_cast<double>(p.values[i]);
    if (decay) x -= lr * h.weight_decay * x;
    s.m[i] = h.beta1 * s.m[i] + (1.0 - h.beta1) * g;
    s.v[i] = h.beta2 * s.v[i] + (1.0 - h.beta2) * g * g;
    const double mhat = s.m[i] / bc1;
    const double vhat = s.v[i] / bc2;
    x -= lr * mhat / (std::sqrt(vhat) + h.eps);
    p.values[i] = static_cast<T>(x);
  }
}

// Optimizer over a model's parameter list. The temperature is not decayed.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWHyper h) : hyper_(h) {}

  void step(const ParamList<T>& params, double lr) {
    if (state_.empty()) state_.resize(params.size());
    if (state_.size() != params.size()) throw ShapeError("adamw: parameter list changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = *params[i].second;
      if (p.grad.empty()) p.grad.assign(p.values.size(), T(0));
      adamw_update(p, state_[i], lr, hyper_, params[i].first != "log_temperature");
    }
  }

 private:
  AdamWHyper hyper_;
  std::vector<AdamState> state_;
};

inline std::string direction_name(Modality query, Modality gallery) {
  return std::string(modality_name(query)) + "->" + std::string(modality_name(gallery));
}

template <typename T>
RetrievalSet retrieval_set(Model<T>& m, const std::vector<const TriModalSample*>& samples, Modality query,
                           Modality gallery) {
  RetrievalSet set;
  set.queries = embed(m, samples, query);
  set.gallery = embed(m, samples, gallery);
  set.labels = label_matrix(samples);
  for (const auto* s : samples) set.ids.push_back(s->id);
  return set;
}

template <typename T>
RetrievalReport evaluate(Model<T>& m, const std::vector<const TriModalSample*>& samples, Modality query,
                         Modality gallery, Protocol protocol, const ProtocolConfig& pc) {
  return run_protocol(protocol, retrieval_set(m, samples, query, gallery), direction_name(query, gallery), pc);
}

// Mean loss over consecutive batches in id order, without gradients.
template <typename T>
LossBreakdown evaluate_loss(Model<T>& m, const std::vector<const TriModalSample*>& samples, const LossConfig& lc,
                            std::size_t batch_size) {
  LossBreakdown acc;
  std::size_t n = 0;
  for (std::size_t start = 0; start + 2 <= samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    if (end - start < 2) break;
    std::vector<const TriModalSample*> batch(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                             samples.begin() + static_cast<std::ptrdiff_t>(end));
    Graph<T> g(false);
    const auto b = total_loss(g, m, batch, lc).breakdown;
    acc.l_mt += b.l_mt;
    acc.l_mv += b.l_mv;
    acc.l_tv += b.l_tv;
    acc.l_align += b.l_align;
    acc.l_recon += b.l_recon;
    acc.l_total += b.l_total;
    ++n;
  }
  if (n == 0) throw ShapeError("evaluate_loss: need at least 2 samples");
  for (double* x : {&acc.l_mt, &acc.l_mv, &acc.l_tv, &acc.l_align, &acc.l_recon, &acc.l_total})
    *x /= static_cast<double>(n);
  return acc;
}

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0;
  LossBreakdown loss;  // mean over the epoch's batches
  double val_t2m_r1 = 0;
};

struct TrainResult {
  Model<float> model;                 // after the final epoch
  std::optional<Model<float>> best;   // highest validation text->motion R@1
  std::size_t best_epoch = 0;
  std::vector<EpochLog> log;
};

// Called after each backward pass, before the optimizer step.
using StepObserver = std::function<void(std::size_t epoch, std::size_t step, Model<float>&)>;
using EpochObserver = std::function<void(const EpochLog&)>;

inline TrainResult train(const Dataset& data, const TrainConfig& cfg, const StepObserver& on_step = {},
                         const EpochObserver& on_epoch = {}) {
  cfg.validate();
  if (data.train.size() < 2) throw ConfigError("train: need at least 2 training samples");
  TrainResult res{Model<float>::init(cfg.model_for(data.config)), std::nullopt, 0, {}};
  Model<float>& model = res.model;
  AdamW<float> opt(cfg.adamw);
  const LossConfig lc = cfg.loss();
  const auto train_ptrs = pointers(data.train);
  const auto val_ptrs = pointers(data.val);
  double best_r1 = -1;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    std::vector<std::size_t> order = identity_index(train_ptrs.size());
    SplitMix64 shuffle_rng = stream(cfg.seed, "epoch-shuffle", epoch);
    shuffle(order, shuffle_rng);
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 2) break;
      std::vector<const TriModalSample*> batch;
      std::vector<TriModalSample> augmented;
      if (cfg.feature_noise > 0) {
        SplitMix64 noise = stream(cfg.seed, "augment", step);
        for (std::size_t i = start; i < end; ++i) {
          TriModalSample s = *train_ptrs[order[i]];
          for (auto& v : s.video.values) v += static_cast<float>(noise.normal(0.0, cfg.feature_noise));
          augmented.push_back(std::move(s));
        }
        for (const auto& s : augmented) batch.push_back(&s);
      } else {
        for (std::size_t i = start; i < end; ++i) batch.push_back(train_ptrs[order[i]]);
      }

      model.zero_grad();
      Graph<float> g;
      BatchLoss<float> bl = total_loss(g, model, batch, lc);
      if (!std::isfinite(bl.breakdown.l_total))
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                             std::to_string(step));
      g.backward(bl.total);
      if (on_step) on_step(epoch, step, model);
      opt.step(model.parameters(), lr);

      log.loss.l_mt += bl.breakdown.l_mt;
      log.loss.l_mv += bl.breakdown.l_mv;
      log.loss.l_tv += bl.breakdown.l_tv;
      log.loss.l_align += bl.breakdown.l_align;
      log.loss.l_recon += bl.breakdown.l_recon;
      log.loss.l_total += bl.breakdown.l_total;
      ++batches;
      ++step;
    }
    for (double* x : {&log.loss.l_mt, &log.loss.l_mv, &log.loss.l_tv, &log.loss.l_align, &log.loss.l_recon,
                      &log.loss.l_total})
      *x /= static_cast<double>(std::max<std::size_t>(batches, 1));
    if (!val_ptrs.empty()) {
      log.val_t2m_r1 = protocol_all(retrieval_set(model, val_ptrs, Modality::kText, Modality::kMotion),
                                    direction_name(Modality::kText, Modality::kMotion))
                           .recall_at(1);
      if (log.val_t2m_r1 > best_r1) {
        best_r1 = log.val_t2m_r1;
        res.best = model;
        res.best_epoch = epoch;
      }
    }
    res.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return res;
}

}  // namespace trimodal
