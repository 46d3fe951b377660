// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>

#include "eeg2text/autograd.hpp"
#include "eeg2text/layers.hpp"

namespace e2t::nn {

/// One GRU direction. Gate blocks are stacked [reset; update; candidate]:
///   r  = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
///   z  = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
///   n  = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h' = (1 - z) * n + z * h,   h_0 = 0
struct GruDirection {
  ad::Var w_ih;  // 3H x C
  ad::Var w_hh;  // 3H x H
  ad::Var b_ih;  // 1 x 3H
  ad::Var b_hh;  // 1 x 3H
};

/// Final hidden state of one direction over a (T x C) sequence, without
/// recording a graph. `reverse` reads time steps T-1 .. 0.
RowVector gru_final_state(const GruDirection& dir, const Matrix& sequence, bool reverse);

class BiGru {
 public:
  BiGru() = default;
  BiGru(ParameterSet& params, const std::string& name, int input_width, int hidden, Rng& rng);

  /// Row m is [forward final state | backward final state] (2H wide) of
  /// sequence m. Sequences may differ in length; each must have T >= 1.
  /// The backward pass is a fused BPTT over every sequence.
  ad::Var final_states(std::span<const Matrix> sequences) const;

  int hidden() const { return hidden_; }
  const GruDirection& forward_dir() const { return fwd_; }
  const GruDirection& backward_dir() const { return bwd_; }

 private:
  int hidden_ = 0;
  GruDirection fwd_, bwd_;
};

}  // namespace e2t::nn
