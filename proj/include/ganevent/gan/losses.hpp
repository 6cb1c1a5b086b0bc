#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ganevent/gan/model.hpp"

namespace ganevent::gan {

/// Number of events masked in a day of n events: max(1, round(k n)).
inline std::size_t mask_count(std::size_t n, double k) {
  require(n >= 1, "cannot mask an empty day");
  require(k > 0.0 && k < 1.0, "mask fraction must lie in (0, 1)");
  return std::min(n, std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(k * static_cast<double>(n)))));
}

/// Uniformly chosen distinct positions to mask, in ascending order.
inline std::vector<std::size_t> choose_masked(std::size_t n, double k, Rng& rng) {
  auto idx = rng.sample_without_replacement(n, mask_count(n, k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct MaskedEvents {
  nn::Tensor events;  // masked rows hold the mask vector
  std::vector<std::size_t> masked;
};

/// Value-level masking: the chosen rows are overwritten by `mask_vector`,
/// every other row is left untouched.
inline MaskedEvents mask_events(const nn::Tensor& events, const nn::Tensor& mask_vector, double k, Rng& rng) {
  require(events.cols() == mask_vector.size(), "mask vector dimension mismatch");
  MaskedEvents out{events, choose_masked(events.rows(), k, rng)};
  const std::size_t d = events.cols();
  for (std::size_t i : out.masked)
    for (std::size_t j = 0; j < d; ++j) out.events[i * d + j] = mask_vector[j];
  return out;
}

/// Sum over masked positions of 1 - cos(target, reconstruction).
inline Var reconstruction_loss_elementwise(Var targets, Var outputs, const std::vector<std::size_t>& masked) {
  require(!masked.empty(), "reconstruction loss over an empty masked set");
  Var cos = nn::rowwise_cosine(nn::take_rows(targets, masked), nn::take_rows(outputs, masked));
  return nn::add_scalar(nn::neg(nn::sum(cos)), static_cast<double>(masked.size()));
}

/// Averaged Hausdorff distance between two equal-size sets of row vectors:
/// half the sum of the mean row minimum and the mean column minimum of the
/// pairwise distance matrix.
inline Var hausdorff_loss(Var targets, Var outputs, nn::Distance kind) {
  if (targets.rows() != outputs.rows() || targets.rows() == 0)
    throw ContractError("hausdorff loss needs two nonempty sets of equal size");
  Var dist = nn::pairwise_distance(targets, outputs, kind);
  Var forward = nn::mean(nn::row_min(dist));
  Var backward = nn::mean(nn::row_min(nn::transpose(dist)));
  return nn::scale(nn::add(forward, backward), 0.5);
}

/// Reconstruction loss on the masked rows, by Hausdorff or elementwise cosine.
inline Var masked_reconstruction_loss(Var targets, Var outputs, const std::vector<std::size_t>& masked,
                                      bool use_hausdorff, nn::Distance kind) {
  if (!use_hausdorff) return reconstruction_loss_elementwise(targets, outputs, masked);
  return hausdorff_loss(nn::take_rows(targets, masked), nn::take_rows(outputs, masked), kind);
}

struct AdversarialLosses {
  Var d_loss;
  Var g_loss;
};

/// Discriminator and generator losses from the two logits, via log-sigmoid:
/// d = -[log D(real) + log(1 - D(generated))]; g = -log D(generated), or
/// log(1 - D(generated)) when `saturating`.
inline AdversarialLosses adversarial_losses_from_logits(Var real_logit, Var generated_logit, bool saturating = false) {
  Var d_loss = nn::neg(nn::add(nn::sum(nn::log_sigmoid(real_logit)), nn::sum(nn::log_sigmoid(nn::neg(generated_logit)))));
  Var g_loss = saturating ? nn::sum(nn::log_sigmoid(nn::neg(generated_logit)))
                          : nn::neg(nn::sum(nn::log_sigmoid(generated_logit)));
  return {d_loss, g_loss};
}

inline AdversarialLosses adversarial_losses(const Discriminator& dsc, Var real, Var generated, bool saturating = false) {
  require(real.rows() >= 1 && generated.rows() >= 1, "adversarial loss needs nonempty days");
  return adversarial_losses_from_logits(dsc.logit(real.tape(), real), dsc.logit(generated.tape(), generated), saturating);
}

/// The day with its masked rows replaced by the generator's reconstructions.
inline Var generated_day(Var events, Var reconstruction, const std::vector<std::size_t>& masked) {
  return nn::scatter_rows(events, masked, nn::take_rows(reconstruction, masked));
}

}  // namespace ganevent::gan
