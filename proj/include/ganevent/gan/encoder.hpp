#pragma once

// Post-norm transformer encoder over a set of row vectors. There are no
// positional encodings, so every layer is permutation-equivariant in its rows.

#include <cmath>
#include <string>
#include <vector>

#include "ganevent/core/layers.hpp"

namespace ganevent::gan {

using nn::Tape;
using nn::Var;

struct EncoderConfig {
  std::size_t hidden = 100;
  std::size_t ff_width = 400;
  std::size_t layers = 2;
  std::size_t heads = 4;
};

inline void validate(const EncoderConfig& cfg) {
  require(cfg.hidden >= 1 && cfg.ff_width >= 1 && cfg.layers >= 1 && cfg.heads >= 1, "encoder sizes must be positive");
  require(cfg.hidden % cfg.heads == 0, "encoder hidden width " + std::to_string(cfg.hidden) +
                                           " is not divisible by " + std::to_string(cfg.heads) + " heads");
}

/// Multi-head self-attention. Keys carry no bias: a key bias only shifts each
/// score row by a constant and so never receives gradient.
struct SelfAttention {
  nn::Linear query, key, value, output;
  std::size_t heads = 1;

  SelfAttention() = default;
  SelfAttention(const std::string& name, std::size_t width, std::size_t n_heads, Rng& rng)
      : query(name + ".query", width, width, rng),
        key(name + ".key", width, width, rng, false),
        value(name + ".value", width, width, rng),
        output(name + ".output", width, width, rng),
        heads(n_heads) {}

  Var forward(Tape& tape, Var x) const {
    const std::size_t width = query.out_features();
    const std::size_t head_width = width / heads;
    const double scale_by = 1.0 / std::sqrt(static_cast<double>(head_width));
    Var q = query.forward(tape, x);
    Var k = key.forward(tape, x);
    Var v = value.forward(tape, x);
    std::vector<Var> parts;
    parts.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t begin = h * head_width;
      Var qh = heads == 1 ? q : nn::slice_cols(q, begin, head_width);
      Var kh = heads == 1 ? k : nn::slice_cols(k, begin, head_width);
      Var vh = heads == 1 ? v : nn::slice_cols(v, begin, head_width);
      Var scores = nn::scale(nn::matmul(qh, nn::transpose(kh)), scale_by);
      parts.push_back(nn::matmul(nn::softmax_rows(scores), vh));
    }
    return output.forward(tape, heads == 1 ? parts.front() : nn::concat_cols(parts));
  }

  void collect(nn::ParameterRefs& out) {
    query.collect(out);
    key.collect(out);
    value.collect(out);
    output.collect(out);
  }
};

struct EncoderLayer {
  SelfAttention attention;
  nn::LayerNorm norm1;
  nn::Linear ff1, ff2;
  nn::LayerNorm norm2;

  EncoderLayer() = default;
  EncoderLayer(const std::string& name, const EncoderConfig& cfg, Rng& rng)
      : attention(name + ".attn", cfg.hidden, cfg.heads, rng),
        norm1(name + ".norm1", cfg.hidden),
        ff1(name + ".ff1", cfg.hidden, cfg.ff_width, rng),
        ff2(name + ".ff2", cfg.ff_width, cfg.hidden, rng),
        norm2(name + ".norm2", cfg.hidden) {}

  Var forward(Tape& tape, Var x) const {
    x = norm1.forward(tape, nn::add(x, attention.forward(tape, x)));
    Var ff = ff2.forward(tape, nn::relu(ff1.forward(tape, x)));
    return norm2.forward(tape, nn::add(x, ff));
  }

  void collect(nn::ParameterRefs& out) {
    attention.collect(out);
    norm1.collect(out);
    ff1.collect(out);
    ff2.collect(out);
    norm2.collect(out);
  }
};

/// Input projection followed by a stack of encoder layers.
struct Encoder {
  nn::Linear input;
  std::vector<EncoderLayer> layers;

  Encoder() = default;
  Encoder(const std::string& name, std::size_t dim, const EncoderConfig& cfg, Rng& rng)
      : input(name + ".input", dim, cfg.hidden, rng) {
    validate(cfg);
    for (std::size_t i = 0; i < cfg.layers; ++i)
      layers.emplace_back(name + ".layer" + std::to_string(i), cfg, rng);
  }

  Var forward(Tape& tape, Var x) const {
    x = input.forward(tape, x);
    for (const auto& layer : layers) x = layer.forward(tape, x);
    return x;
  }

  void collect(nn::ParameterRefs& out) {
    input.collect(out);
    for (auto& layer : layers) layer.collect(out);
  }
};

}  // namespace ganevent::gan
