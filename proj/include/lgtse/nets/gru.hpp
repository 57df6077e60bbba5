#pragma once

#include <string>

#include "lgtse/ad/graph.hpp"
#include "lgtse/ad/ops.hpp"
#include "lgtse/nets/params.hpp"

namespace lgtse {

// Gated recurrent unit built from autodiff primitives; the step works on
// (features, batch) matrices so sequences along either the band or the frame
// axis reuse it unchanged.
template <class T>
struct GruLayer {
  ad::Var<T> w_ih, w_hh, b_ih, b_hh;
  std::size_t input = 0, hidden = 0;

  static GruLayer create(ParamStore<T>& ps, const std::string& name, std::size_t input,
                         std::size_t hidden, std::uint64_t seed) {
    GruLayer g;
    g.input = input;
    g.hidden = hidden;
    g.w_ih = ps.add(name + ".w_ih", {3 * hidden, input}, seed, static_cast<double>(input));
    g.w_hh = ps.add(name + ".w_hh", {3 * hidden, hidden}, seed, static_cast<double>(hidden));
    g.b_ih = ps.add(name + ".b_ih", {3 * hidden}, seed, static_cast<double>(hidden));
    g.b_hh = ps.add(name + ".b_hh", {3 * hidden}, seed, static_cast<double>(hidden));
    return g;
  }

  ad::Var<T> initial_state(std::size_t batch) const {
    return ad::Var<T>::constant(Tensor<T>({hidden, batch}));
  }

  // x: (input, batch), h: (hidden, batch) -> (hidden, batch)
  ad::Var<T> step(const ad::Var<T>& x, const ad::Var<T>& h) const {
    return ad::gru_cell(x, h, w_ih, w_hh, b_ih, b_hh);
  }
};

}  // namespace lgtse
