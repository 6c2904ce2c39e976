#pragma once

#include <map>
#include <string>

#include "jitterlab/tensor.hpp"

namespace jitterlab {

// q_i = exp(z_i / T) / sum_j exp(z_j / T), max-subtracted for stability.
// Throws NonPositiveTemperature / NonFiniteLogit.
Tensor softmax_temperature(const Tensor& z, double temperature);

// Row-wise variant for [n, V] logit matrices.
Tensor softmax_temperature_rows(const Tensor& z, double temperature);

// -sum_i q_i log(max(p_i, 1e-12)). Shapes must match.
double cross_entropy(const Tensor& q, const Tensor& p);

double entropy(const Tensor& q);

// Hard limit of the temperature softmax: 1 at the argmax, ties toward the
// lowest index.
Tensor one_hot_argmax(const Tensor& z);

int argmax_index(const Tensor& z);

// ---- Adam with decoupled weight decay ----

struct AdamConfig {
  double lr = 4e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimizerState {
  AdamConfig cfg;
  int64_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

// One update over every entry of `grads`; moments are created on first sight.
// Throws ShapeMismatch when a gradient's shape disagrees with its parameter.
void adam_step(OptimizerState& state, std::map<std::string, Tensor>& params,
               const std::map<std::string, Tensor>& grads);

}  // namespace jitterlab
