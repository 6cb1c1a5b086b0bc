#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "ganevent/core/optim.hpp"
#include "ganevent/data/events.hpp"
#include "ganevent/gan/losses.hpp"

namespace ganevent::gan {

struct GanConfig {
  EncoderConfig encoder;
  double mask_fraction = 0.25;
  double lambda_r = 10.0;
  double lambda_d = 1.0;
  nn::Distance distance = nn::Distance::cosine;
  bool use_hausdorff = true;
  bool saturating_g_loss = false;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  double weight_decay = 1e-3;
  int lag = 1;
  std::uint64_t seed = 1;
};

inline void validate(const GanConfig& cfg) {
  validate(cfg.encoder);
  require(cfg.mask_fraction > 0.0 && cfg.mask_fraction < 1.0, "mask_fraction must lie in (0, 1)");
  require(cfg.lambda_r >= 0.0 && cfg.lambda_d >= 0.0, "lambda_r and lambda_d must be non-negative");
  require(cfg.lambda_r > 0.0 || cfg.lambda_d > 0.0, "lambda_r and lambda_d cannot both be zero");
  require(cfg.batch_size >= 1, "batch_size must be at least 1");
  require(cfg.learning_rate > 0.0, "learning_rate must be positive");
  require(cfg.weight_decay >= 0.0, "weight_decay must be non-negative");
  require(cfg.lag >= 0, "lag must be non-negative");
}

/// One training example: the id-sorted event matrix of a day.
struct DaySample {
  data::Date date;
  nn::Tensor events;
};

inline nn::Tensor event_matrix(const std::vector<data::Event>& events, std::size_t dim) {
  nn::Tensor m = nn::Tensor::zeros(events.size(), dim);
  for (std::size_t i = 0; i < events.size(); ++i) {
    require(events[i].embedding.size() == dim, "event " + events[i].id + " has the wrong dimension");
    std::copy(events[i].embedding.begin(), events[i].embedding.end(), m.values().begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return m;
}

/// Day sets over [from, to] holding at least `min_events` events.
inline std::vector<DaySample> day_samples(const data::EventCalendar& calendar, data::Date from, data::Date to, int lag,
                                          std::size_t min_events = 2) {
  std::vector<DaySample> out;
  for (data::Date t = from; t <= to; ++t) {
    auto events = data::day_event_set(calendar, t, lag);
    if (events.size() >= min_events) out.push_back({t, event_matrix(events, calendar.dimension())});
  }
  return out;
}

inline std::vector<DaySample> day_samples(const data::EventCalendar& calendar, int lag) {
  if (calendar.empty()) return {};
  return day_samples(calendar, *calendar.first_day(), *calendar.last_day() + lag, lag);
}

struct GanEpochLog {
  std::size_t epoch = 0;
  std::optional<double> d_loss;    // absent when the discriminator is off
  std::optional<double> g_loss;
  std::optional<double> rec_loss;  // absent when lambda_r = 0
  std::size_t days = 0;
};

/// Owns both networks and their optimizers. Epoch e draws its batch order and
/// masks from a generator seeded by (seed, e), so a run restored after epoch e
/// continues exactly like an uninterrupted one.
class GanTrainer {
 public:
  GanTrainer(std::size_t dim, GanConfig cfg) : cfg_(std::move(cfg)) {
    validate(cfg_);
    require(dim >= 1, "event dimension must be positive");
    Rng g_rng(derive_seed(cfg_.seed, "gan.generator.init"));
    Rng d_rng(derive_seed(cfg_.seed, "gan.discriminator.init"));
    generator_ = Generator(dim, cfg_.encoder, g_rng);
    discriminator_ = Discriminator(dim, cfg_.encoder, d_rng);
    const nn::AdamWConfig opt{.learning_rate = cfg_.learning_rate, .weight_decay = cfg_.weight_decay};
    g_opt_ = nn::AdamW(opt);
    d_opt_ = nn::AdamW(opt);
  }

  GanTrainer(const GanTrainer&) = delete;
  GanTrainer& operator=(const GanTrainer&) = delete;

  const GanConfig& config() const { return cfg_; }
  Generator& generator() { return generator_; }
  const Generator& generator() const { return generator_; }
  Discriminator& discriminator() { return discriminator_; }
  const Discriminator& discriminator() const { return discriminator_; }
  nn::AdamW& generator_optimizer() { return g_opt_; }
  nn::AdamW& discriminator_optimizer() { return d_opt_; }
  std::size_t epochs_done() const { return epoch_; }
  void set_epochs_done(std::size_t e) { epoch_ = e; }
  const std::vector<GanEpochLog>& log() const { return log_; }
  std::vector<GanEpochLog>& log() { return log_; }
  bool discriminator_active() const { return cfg_.lambda_d > 0.0; }

  GanEpochLog run_epoch(const std::vector<DaySample>& samples) {
    std::vector<const DaySample*> trainable;
    for (const auto& s : samples)
      if (s.events.rows() >= 2) trainable.push_back(&s);
    require(!trainable.empty(), "no trainable days: every day has fewer than two events");

    Rng rng(derive_seed(derive_seed(cfg_.seed, "gan.epoch"), epoch_));
    const auto batches = make_batches(trainable, rng);
    Totals totals;
    for (const auto& batch : batches) train_batch(batch, rng, totals);

    GanEpochLog entry;
    entry.epoch = epoch_ + 1;
    entry.days = trainable.size();
    const double n = static_cast<double>(trainable.size());
    if (discriminator_active()) {
      entry.d_loss = totals.d / n;
      entry.g_loss = totals.g / n;
    }
    if (cfg_.lambda_r > 0.0) entry.rec_loss = totals.rec / n;
    ++epoch_;
    log_.push_back(entry);
    return entry;
  }

  /// Runs the remaining epochs up to cfg.epochs.
  void train(const std::vector<DaySample>& samples, const std::function<void(const GanEpochLog&)>& on_epoch = {}) {
    while (epoch_ < cfg_.epochs) {
      auto entry = run_epoch(samples);
      if (on_epoch) on_epoch(entry);
    }
  }

 private:
  struct Totals {
    double d = 0.0, g = 0.0, rec = 0.0;
  };

  using Batch = std::vector<const DaySample*>;

  // Days of equal size are grouped, shuffled and cut into batches; the batch
  // order is shuffled as well.
  std::vector<Batch> make_batches(const std::vector<const DaySample*>& days, Rng& rng) const {
    std::map<std::size_t, std::vector<const DaySample*>> by_size;
    for (const DaySample* s : days) by_size[s->events.rows()].push_back(s);
    std::vector<Batch> batches;
    for (auto& [size, group] : by_size) {
      rng.shuffle(group);
      for (std::size_t i = 0; i < group.size(); i += cfg_.batch_size)
        batches.emplace_back(group.begin() + static_cast<std::ptrdiff_t>(i),
                             group.begin() + static_cast<std::ptrdiff_t>(std::min(group.size(), i + cfg_.batch_size)));
    }
    rng.shuffle(batches);
    return batches;
  }

  void train_batch(const Batch& batch, Rng& rng, Totals& totals) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    std::vector<std::vector<std::size_t>> masks;
    masks.reserve(batch.size());
    for (const DaySample* s : batch) masks.push_back(choose_masked(s->events.rows(), cfg_.mask_fraction, rng));

    Tape g_tape;
    std::vector<Var> reconstructions;
    for (std::size_t i = 0; i < batch.size(); ++i)
      reconstructions.push_back(generator_.reconstruct(g_tape, batch[i]->events, masks[i]));

    if (discriminator_active()) {
      auto d_params = discriminator_.parameters();
      nn::zero_grad(d_params);
      Tape d_tape;
      Var total = d_tape.constant(nn::Tensor::scalar(0.0));
      for (std::size_t i = 0; i < batch.size(); ++i) {
        Var real = d_tape.constant(batch[i]->events);
        Var fake = generated_day(real, d_tape.constant(reconstructions[i].value()), masks[i]);
        auto losses = adversarial_losses(discriminator_, real, fake, cfg_.saturating_g_loss);
        totals.d += losses.d_loss.item();
        total = nn::add(total, losses.d_loss);
      }
      d_tape.backward(nn::scale(total, inv));
      d_opt_.step(d_params);
    }

    auto g_params = generator_.parameters();
    nn::zero_grad(g_params);
    Var total = g_tape.constant(nn::Tensor::scalar(0.0));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Var real = g_tape.constant(batch[i]->events);
      if (cfg_.lambda_r > 0.0) {
        Var rec = masked_reconstruction_loss(real, reconstructions[i], masks[i], cfg_.use_hausdorff, cfg_.distance);
        totals.rec += rec.item();
        total = nn::add(total, nn::scale(rec, cfg_.lambda_r));
      }
      if (discriminator_active()) {
        Var fake = generated_day(real, reconstructions[i], masks[i]);
        Var logit = discriminator_.logit(g_tape, fake);
        Var g_loss = cfg_.saturating_g_loss ? nn::sum(nn::log_sigmoid(nn::neg(logit)))
                                            : nn::neg(nn::sum(nn::log_sigmoid(logit)));
        totals.g += g_loss.item();
        total = nn::add(total, nn::scale(g_loss, cfg_.lambda_d));
      }
    }
    g_tape.backward(nn::scale(total, inv));
    g_opt_.step(g_params);
    if (discriminator_active()) nn::zero_grad(discriminator_.parameters());
  }

  GanConfig cfg_;
  Generator generator_;
  Discriminator discriminator_;
  nn::AdamW g_opt_;
  nn::AdamW d_opt_;
  std::size_t epoch_ = 0;
  std::vector<GanEpochLog> log_;
};

/// Mean cosine similarity between masked targets and their reconstructions,
/// with k-fraction masks drawn from `seed`.
inline double masked_reconstruction_similarity(const Generator& g, const std::vector<DaySample>& samples, double k,
                                               std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gan.similarity"));
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    if (s.events.rows() < 2) continue;
    auto masked = choose_masked(s.events.rows(), k, rng);
    Tape tape;
    Var out = g.reconstruct(tape, s.events, masked);
    for (std::size_t i : masked) {
      total += nn::cosine_similarity(s.events.row_span(i), out.value().row_span(i));
      ++count;
    }
  }
  require(count > 0, "no days with at least two events to score");
  return total / static_cast<double>(count);
}

}  // namespace ganevent::gan
