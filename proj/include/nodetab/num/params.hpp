#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "nodetab/num/matrix.hpp"

namespace nodetab::num {

struct Tensor {
  std::string name;
  Matrix value;
  Matrix grad;  // empty until the first backward pass touches it
  bool trainable = true;
};

// Named tensors with a stable insertion order.
class ParamStore {
public:
  int add(const std::string& name, Matrix init, bool trainable = true);
  Tensor& at(int i) { return tensors_[i]; }
  const Tensor& at(int i) const { return tensors_[i]; }
  Tensor& by_name(const std::string& name);
  const Tensor& by_name(const std::string& name) const;
  int index_of(const std::string& name) const;  // -1 when absent
  int size() const { return int(tensors_.size()); }
  void zero_grads();
  void accumulate_grad(int i, const Matrix& g);
  size_t value_count() const;

  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

private:
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, int> index_;
};

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

class Adam {
public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  // Applies one update to every trainable tensor with a non-empty grad.
  void step(ParamStore& params, double lr);

private:
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

}  // namespace nodetab::num
