#include "gmint/autodiff/adam.h"

#include <cmath>

#include "gmint/common/errors.h"

namespace gmint::ad {

void adam_step(ParameterSet& params, const GradientMap& grads, AdamState& state) {
  std::vector<std::pair<ParameterEntry*, const Tensor*>> work;
  for (const auto& g : grads.entries) {
    ParameterEntry* p = params.find(g.name);
    if (!p) throw DimensionError("adam_step: gradient for unknown parameter '" + g.name + "'");
    if (!p->trainable) continue;
    if (p->tensor.shape() != g.tensor.shape())
      throw DimensionError("adam_step: gradient shape " + to_string(g.tensor.shape()) +
                           " does not match parameter '" + g.name + "' " + to_string(p->tensor.shape()));
    if (!g.tensor.all_finite()) throw NumericError("adam_step: non-finite gradient in layer '" + g.name + "'");
    auto it = state.moments.find(g.name);
    if (it != state.moments.end() && it->second.first.shape() != p->tensor.shape())
      throw DimensionError("adam_step: moment shape mismatch for '" + g.name + "'");
    work.emplace_back(p, &g.tensor);
  }

  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step_count + 1);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (auto [p, g] : work) {
    auto [it, inserted] = state.moments.try_emplace(p->name);
    if (inserted) it->second = {Tensor(p->tensor.shape()), Tensor(p->tensor.shape())};
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    auto w = p->tensor.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = (*g)[i];
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
      w[i] -= h.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + h.epsilon);
    }
  }
  ++state.step_count;
}

}  // namespace gmint::ad
