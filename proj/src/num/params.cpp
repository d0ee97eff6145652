#include "nodetab/num/params.hpp"

#include <cmath>

#include "nodetab/num/error.hpp"
#include "nodetab/num/kernels.hpp"

namespace nodetab::num {

int ParamStore::add(const std::string& name, Matrix init, bool trainable) {
  if (index_.count(name)) fail(errc::config, "duplicate parameter " + name);
  int i = int(tensors_.size());
  tensors_.push_back({name, std::move(init), Matrix(), trainable});
  index_[name] = i;
  return i;
}

Tensor& ParamStore::by_name(const std::string& name) {
  int i = index_of(name);
  if (i < 0) fail(errc::config, "unknown parameter " + name);
  return tensors_[i];
}

const Tensor& ParamStore::by_name(const std::string& name) const {
  return const_cast<ParamStore*>(this)->by_name(name);
}

int ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

void ParamStore::zero_grads() {
  for (auto& t : tensors_) t.grad = Matrix();
}

void ParamStore::accumulate_grad(int i, const Matrix& g) {
  Tensor& t = tensors_[i];
  if (t.grad.empty()) {
    t.grad = g.clone();
    return;
  }
  kern::add(t.grad.data(), g.data(), t.grad.mut_data(), t.grad.size());
}

size_t ParamStore::value_count() const {
  size_t n = 0;
  for (const auto& t : tensors_) n += t.value.size();
  return n;
}

void Adam::step(ParamStore& params, double lr) {
  if (m_.size() < size_t(params.size())) {
    m_.resize(params.size());
    v_.resize(params.size());
  }
  ++t_;
  double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (int i = 0; i < params.size(); ++i) {
    Tensor& p = params.at(i);
    if (!p.trainable || p.grad.empty()) continue;
    if (m_[i].empty()) {
      m_[i] = Matrix(p.value.rows(), p.value.cols());
      v_[i] = Matrix(p.value.rows(), p.value.cols());
    }
    double* m = m_[i].mut_data();
    double* v = v_[i].mut_data();
    double* w = p.value.mut_data();
    const double* g = p.grad.data();
    size_t n = p.value.size();
    for (size_t j = 0; j < n; ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      double mh = m[j] / c1;
      double vh = v[j] / c2;
      w[j] -= lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
}

}  // namespace nodetab::num
