#include "asymprune/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace asymprune {

void AdamW::step(std::vector<Param>& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(static_cast<size_t>(params[i].tensor.size()), 0.0);
      v_[i].assign(static_cast<size_t>(params[i].tensor.size()), 0.0);
    }
  }
  if (m_.size() != params.size())
    throw std::invalid_argument("optimizer: parameter set changed between steps");

  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));

  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].tensor;
    if (!t.has_grad())
      throw std::invalid_argument("optimizer: parameter '" + params[i].name +
                                  "' has no gradient buffer");
    const std::vector<double>& g = t.grad();
    std::vector<double>& p = t.data();
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    for (size_t j = 0; j < p.size(); ++j) {
      if (!std::isfinite(g[j]))
        throw std::runtime_error("optimizer: non-finite gradient in parameter '" +
                                 params[i].name + "'");
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= cfg_.learning_rate *
              (mhat / (std::sqrt(vhat) + cfg_.epsilon) + cfg_.weight_decay * p[j]);
    }
  }
}

void zero_grads(std::vector<Param>& params) {
  for (Param& p : params) p.tensor.zero_grad();
}

}  // namespace asymprune
