#pragma once

#include <string>
#include <vector>

#include "ganevent/gan/encoder.hpp"

namespace ganevent::gan {

/// Maps a day's (possibly masked) event matrix (n x d) to reconstructions (n x d).
struct Generator {
  Encoder encoder;
  nn::Linear output;
  nn::Parameter mask_vector;

  Generator() = default;
  Generator(std::size_t dim, const EncoderConfig& cfg, Rng& rng)
      : encoder("generator.encoder", dim, cfg, rng),
        output("generator.output", cfg.hidden, dim, rng),
        mask_vector("generator.mask_vector", nn::init_uniform(1, dim, dim, rng)) {}

  std::size_t dim() const { return mask_vector.value.size(); }

  /// The event matrix with the listed rows replaced by the mask vector.
  Var masked_input(Tape& tape, const nn::Tensor& events, const std::vector<std::size_t>& masked) const {
    require(events.cols() == dim(), "event dimension " + std::to_string(events.cols()) + " does not match the generator (" +
                                        std::to_string(dim()) + ")");
    Var v = tape.constant(events);
    if (masked.empty()) return v;
    return nn::replace_rows(v, masked, tape.param(mask_vector));
  }

  Var forward(Tape& tape, Var events) const { return output.forward(tape, encoder.forward(tape, events)); }

  /// Masks the listed rows and runs the generator.
  Var reconstruct(Tape& tape, const nn::Tensor& events, const std::vector<std::size_t>& masked) const {
    return forward(tape, masked_input(tape, events, masked));
  }

  nn::ParameterRefs parameters() {
    nn::ParameterRefs out;
    encoder.collect(out);
    output.collect(out);
    out.push_back(&mask_vector);
    return out;
  }
};

/// Scores a day's event matrix; the logit is mapped to (0, 1) by a sigmoid.
struct Discriminator {
  Encoder encoder;
  nn::Linear fc1, fc2, fc3;

  Discriminator() = default;
  Discriminator(std::size_t dim, const EncoderConfig& cfg, Rng& rng)
      : encoder("discriminator.encoder", dim, cfg, rng),
        fc1("discriminator.fc1", cfg.hidden, cfg.hidden, rng),
        fc2("discriminator.fc2", cfg.hidden, std::max<std::size_t>(1, cfg.hidden / 2), rng),
        fc3("discriminator.fc3", std::max<std::size_t>(1, cfg.hidden / 2), 1, rng) {}

  std::size_t dim() const { return encoder.input.in_features(); }

  Var logit(Tape& tape, Var events) const {
    Var pooled = nn::mean_rows(encoder.forward(tape, events));
    Var h = nn::leaky_relu(fc1.forward(tape, pooled));
    h = nn::leaky_relu(fc2.forward(tape, h));
    return fc3.forward(tape, h);
  }

  Var forward(Tape& tape, Var events) const { return nn::sigmoid(logit(tape, events)); }

  double probability(const nn::Tensor& events) const {
    Tape tape;
    return forward(tape, tape.constant(events)).item();
  }

  nn::ParameterRefs parameters() {
    nn::ParameterRefs out;
    encoder.collect(out);
    fc1.collect(out);
    fc2.collect(out);
    fc3.collect(out);
    return out;
  }
};

}  // namespace ganevent::gan
