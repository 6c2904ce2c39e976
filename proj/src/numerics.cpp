#include "jitterlab/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace jitterlab {

namespace {

void softmax_row(const real* z, real* out, int n, double temperature) {
  double zmax = -1e300;
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(static_cast<double>(z[i]))) throw NonFiniteLogit();
    zmax = std::max(zmax, static_cast<double>(z[i]));
  }
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    double e = std::exp((static_cast<double>(z[i]) - zmax) / temperature);
    out[i] = static_cast<real>(e);
    sum += e;
  }
  for (int i = 0; i < n; ++i) out[i] = static_cast<real>(static_cast<double>(out[i]) / sum);
}

}  // namespace

Tensor softmax_temperature(const Tensor& z, double temperature) {
  if (temperature <= 0.0) throw NonPositiveTemperature();
  Tensor q(z.shape);
  softmax_row(z.values.data(), q.values.data(), static_cast<int>(z.numel()), temperature);
  return q;
}

Tensor softmax_temperature_rows(const Tensor& z, double temperature) {
  if (temperature <= 0.0) throw NonPositiveTemperature();
  Tensor q(z.shape);
  int n = z.rows(), v = z.cols();
  for (int r = 0; r < n; ++r)
    softmax_row(z.values.data() + static_cast<size_t>(r) * v,
                q.values.data() + static_cast<size_t>(r) * v, v, temperature);
  return q;
}

double cross_entropy(const Tensor& q, const Tensor& p) {
  if (!q.same_shape(p))
    throw ShapeMismatch("cross_entropy " + shape_str(q.shape) + " vs " + shape_str(p.shape));
  double loss = 0.0;
  for (int64_t i = 0; i < q.numel(); ++i) {
    double pi = std::max(static_cast<double>(p.values[i]), 1e-12);
    loss -= static_cast<double>(q.values[i]) * std::log(pi);
  }
  return loss;
}

double entropy(const Tensor& q) { return cross_entropy(q, q); }

int argmax_index(const Tensor& z) {
  int best = 0;
  for (int64_t i = 1; i < z.numel(); ++i)
    if (z.values[i] > z.values[best]) best = static_cast<int>(i);
  return best;
}

Tensor one_hot_argmax(const Tensor& z) {
  Tensor out(z.shape);
  out.values[argmax_index(z)] = real(1);
  return out;
}

void adam_step(OptimizerState& state, std::map<std::string, Tensor>& params,
               const std::map<std::string, Tensor>& grads) {
  const AdamConfig& c = state.cfg;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);

  for (const auto& [name, g] : grads) {
    auto pit = params.find(name);
    if (pit == params.end()) throw ShapeMismatch("adam_step: unknown parameter " + name);
    Tensor& p = pit->second;
    if (!p.same_shape(g))
      throw ShapeMismatch("adam_step " + name + ": " + shape_str(p.shape) + " vs " +
                          shape_str(g.shape));

    Tensor& m = state.m.try_emplace(name, Tensor(p.shape)).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(p.shape)).first->second;

    for (int64_t i = 0; i < p.numel(); ++i) {
      double gi = g.values[i];
      double mi = c.beta1 * m.values[i] + (1.0 - c.beta1) * gi;
      double vi = c.beta2 * v.values[i] + (1.0 - c.beta2) * gi * gi;
      m.values[i] = static_cast<real>(mi);
      v.values[i] = static_cast<real>(vi);
      double update = (mi / bc1) / (std::sqrt(vi / bc2) + c.eps);
      double decayed = c.lr * c.weight_decay * p.values[i];
      p.values[i] = static_cast<real>(p.values[i] - c.lr * update - decayed);
    }
  }
}

}  // namespace jitterlab
