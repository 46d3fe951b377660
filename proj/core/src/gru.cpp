// SPDX-License-Identifier: Apache-2.0
#include "eeg2text/gru.hpp"

#include <cmath>
#include <vector>

#include "eeg2text/errors.hpp"

namespace e2t::nn {
namespace {

// Per-step activations of one direction over one sequence, indexed by
// processing step (not time index).
struct GruTrace {
  Matrix r, z, n, hn, h_prev;  // each T x H
  Matrix inputs;               // T x C, in processing order
  RowVector h_final;
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

GruTrace run_direction(const GruDirection& dir, const Matrix& sequence, bool reverse) {
  const Eigen::Index steps = sequence.rows();
  const Eigen::Index H = dir.w_hh.cols();
  GruTrace tr;
  tr.inputs.resize(steps, sequence.cols());
  for (Eigen::Index s = 0; s < steps; ++s) tr.inputs.row(s) = sequence.row(reverse ? steps - 1 - s : s);
  Matrix gx = tr.inputs * dir.w_ih.value().transpose();
  gx.rowwise() += dir.b_ih.value().row(0);
  tr.r.resize(steps, H);
  tr.z.resize(steps, H);
  tr.n.resize(steps, H);
  tr.hn.resize(steps, H);
  tr.h_prev.resize(steps, H);
  RowVector h = RowVector::Zero(H);
  RowVector gh(3 * H);
  for (Eigen::Index s = 0; s < steps; ++s) {
    gh.noalias() = h * dir.w_hh.value().transpose();
    gh += dir.b_hh.value().row(0);
    tr.h_prev.row(s) = h;
    for (Eigen::Index j = 0; j < H; ++j) {
      const double r = sigmoid(gx(s, j) + gh(j));
      const double z = sigmoid(gx(s, H + j) + gh(H + j));
      const double hn = gh(2 * H + j);
      const double n = std::tanh(gx(s, 2 * H + j) + r * hn);
      tr.r(s, j) = r;
      tr.z(s, j) = z;
      tr.n(s, j) = n;
      tr.hn(s, j) = hn;
      h(j) = (1.0 - z) * n + z * h(j);
    }
  }
  tr.h_final = h;
  return tr;
}

struct DirGrads {
  Matrix w_ih, w_hh, b_ih, b_hh;
};

void backprop_direction(const GruDirection& dir, const GruTrace& tr, RowVector dh, DirGrads& g) {
  const Eigen::Index steps = tr.r.rows();
  const Eigen::Index H = tr.r.cols();
  Matrix dgx(steps, 3 * H), dgh(steps, 3 * H);
  for (Eigen::Index s = steps - 1; s >= 0; --s) {
    for (Eigen::Index j = 0; j < H; ++j) {
      const double r = tr.r(s, j), z = tr.z(s, j), n = tr.n(s, j), hn = tr.hn(s, j);
      const double dn = dh(j) * (1.0 - z);
      const double dz = dh(j) * (tr.h_prev(s, j) - n);
      const double dan = dn * (1.0 - n * n);
      const double dr = dan * hn;
      dgx(s, j) = dr * r * (1.0 - r);
      dgx(s, H + j) = dz * z * (1.0 - z);
      dgx(s, 2 * H + j) = dan;
      dgh(s, j) = dgx(s, j);
      dgh(s, H + j) = dgx(s, H + j);
      dgh(s, 2 * H + j) = dan * r;
      dh(j) *= z;
    }
    dh.noalias() += dgh.row(s) * dir.w_hh.value();
  }
  g.w_ih.noalias() += dgx.transpose() * tr.inputs;
  g.w_hh.noalias() += dgh.transpose() * tr.h_prev;
  g.b_ih += dgx.colwise().sum();
  g.b_hh += dgh.colwise().sum();
}

GruDirection make_direction(ParameterSet& params, const std::string& name, int input_width, int hidden, Rng& rng) {
  GruDirection d;
  d.w_ih = params.add(name + ".w_ih", uniform_fan_in(3 * hidden, input_width, hidden, rng));
  d.w_hh = params.add(name + ".w_hh", uniform_fan_in(3 * hidden, hidden, hidden, rng));
  d.b_ih = params.add(name + ".b_ih", uniform_fan_in(1, 3 * hidden, hidden, rng));
  d.b_hh = params.add(name + ".b_hh", uniform_fan_in(1, 3 * hidden, hidden, rng));
  return d;
}

}  // namespace

RowVector gru_final_state(const GruDirection& dir, const Matrix& sequence, bool reverse) {
  return run_direction(dir, sequence, reverse).h_final;
}

BiGru::BiGru(ParameterSet& params, const std::string& name, int input_width, int hidden, Rng& rng)
    : hidden_(hidden),
      fwd_(make_direction(params, name + ".fwd", input_width, hidden, rng)),
      bwd_(make_direction(params, name + ".bwd", input_width, hidden, rng)) {}

ad::Var BiGru::final_states(std::span<const Matrix> sequences) const {
  const Eigen::Index H = hidden_;
  const Eigen::Index width = fwd_.w_ih.cols();
  Matrix out(static_cast<Eigen::Index>(sequences.size()), 2 * H);
  std::vector<GruTrace> fwd_traces, bwd_traces;
  fwd_traces.reserve(sequences.size());
  bwd_traces.reserve(sequences.size());
  for (std::size_t m = 0; m < sequences.size(); ++m) {
    const Matrix& seq = sequences[m];
    if (seq.rows() < 1) throw LengthError("GRU input sequence " + std::to_string(m) + " has no time steps");
    if (seq.cols() != width) {
      throw ShapeError("GRU input sequence has " + std::to_string(seq.cols()) + " channels, expected " +
                       std::to_string(width));
    }
    fwd_traces.push_back(run_direction(fwd_, seq, false));
    bwd_traces.push_back(run_direction(bwd_, seq, true));
    out.row(static_cast<Eigen::Index>(m)) << fwd_traces.back().h_final, bwd_traces.back().h_final;
  }
  std::vector<ad::Var> inputs = {fwd_.w_ih, fwd_.w_hh, fwd_.b_ih, fwd_.b_hh,
                                 bwd_.w_ih, bwd_.w_hh, bwd_.b_ih, bwd_.b_hh};
  return ad::make_result(
      std::move(out), std::move(inputs),
      [fwd = fwd_, bwd = bwd_, H, fwd_traces = std::move(fwd_traces),
       bwd_traces = std::move(bwd_traces)](ad::Node& self) {
        auto init = [](const GruDirection& d) {
          return DirGrads{Matrix::Zero(d.w_ih.rows(), d.w_ih.cols()), Matrix::Zero(d.w_hh.rows(), d.w_hh.cols()),
                          Matrix::Zero(1, d.b_ih.cols()), Matrix::Zero(1, d.b_hh.cols())};
        };
        DirGrads gf = init(fwd), gb = init(bwd);
        for (std::size_t m = 0; m < fwd_traces.size(); ++m) {
          const auto row = static_cast<Eigen::Index>(m);
          backprop_direction(fwd, fwd_traces[m], self.grad.row(row).head(H), gf);
          backprop_direction(bwd, bwd_traces[m], self.grad.row(row).tail(H), gb);
        }
        const DirGrads* grads[2] = {&gf, &gb};
        for (int d = 0; d < 2; ++d) {
          const Matrix* parts[4] = {&grads[d]->w_ih, &grads[d]->w_hh, &grads[d]->b_ih, &grads[d]->b_hh};
          for (int p = 0; p < 4; ++p) {
            auto& node = *self.inputs[static_cast<std::size_t>(4 * d + p)];
            if (node.requires_grad) node.accumulate(*parts[p]);
          }
        }
      });
}

}  // namespace e2t::nn
