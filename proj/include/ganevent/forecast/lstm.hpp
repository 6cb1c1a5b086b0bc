#pragma once

#include <string>
#include <vector>

#include "ganevent/core/layers.hpp"

namespace ganevent::forecast {

using nn::Tape;
using nn::Var;

/// Single-layer LSTM over batches (B x input) with a linear head on the
/// hidden state. Gate order in the fused weight: input, forget, cell, output.
struct Lstm {
  nn::Linear gates;
  nn::Linear head;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;

  Lstm() = default;
  Lstm(std::size_t input, std::size_t hidden_size, Rng& rng)
      : gates("lstm.gates", input + hidden_size, 4 * hidden_size, rng),
        head("lstm.head", hidden_size, 1, rng),
        input_dim(input),
        hidden(hidden_size) {}

  /// One output (B x 1) per input step, starting from zero state. Dropout is
  /// applied to the hidden state before the head when `training`.
  std::vector<Var> forward(Tape& tape, const std::vector<Var>& inputs, double dropout, Rng* rng, bool training) const {
    require(!inputs.empty(), "LSTM needs at least one step");
    const std::size_t batch = inputs.front().rows();
    Var h = tape.constant(nn::Tensor::zeros(batch, hidden));
    Var c = h;
    std::vector<Var> outputs;
    outputs.reserve(inputs.size());
    for (const Var& x : inputs) {
      if (x.cols() != input_dim) throw DimensionError("LSTM input width " + std::to_string(x.cols()) +
                                                      " != " + std::to_string(input_dim));
      Var z = gates.forward(tape, nn::concat_cols({x, h}));
      Var i = nn::sigmoid(nn::slice_cols(z, 0, hidden));
      Var f = nn::sigmoid(nn::slice_cols(z, hidden, hidden));
      Var g = nn::tanh(nn::slice_cols(z, 2 * hidden, hidden));
      Var o = nn::sigmoid(nn::slice_cols(z, 3 * hidden, hidden));
      c = nn::add(nn::mul(f, c), nn::mul(i, g));
      h = nn::mul(o, nn::tanh(c));
      Var out = training && rng ? nn::dropout(h, dropout, *rng, true) : h;
      outputs.push_back(head.forward(tape, out));
    }
    return outputs;
  }

  nn::ParameterRefs parameters() {
    nn::ParameterRefs out;
    gates.collect(out);
    head.collect(out);
    return out;
  }
};

}  // namespace ganevent::forecast
