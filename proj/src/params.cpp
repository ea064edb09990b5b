#include "tgeacm/params.hpp"

#include <cmath>

#include "tgeacm/error.hpp"

namespace tgeacm {

ParamId ParamStore::add(const std::string& name, Mat init) {
  if (index_.count(name)) throw IntegrityError("duplicate parameter name '" + name + "'");
  index_.emplace(name, tensors_.size());
  tensors_.push_back({name, std::move(init)});
  return ParamId{tensors_.size() - 1};
}

ParamId ParamStore::add_uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols, double range,
                                Rng& rng) {
  Mat m(rows, cols);
  // Row-major fill order so the stream does not depend on Eigen's storage order.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = static_cast<double>(static_cast<float>(rng.uniform(-range, range)));
  return add(name, std::move(m));
}

ParamId ParamStore::add_zero(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  return add(name, Mat::Zero(rows, cols));
}

ParamId ParamStore::id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw IntegrityError("unknown parameter '" + name + "'");
  return ParamId{it->second};
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = other.tensors_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) return false;
  }
  return true;
}

void ParamStore::round_to_float() {
  for (auto& t : tensors_)
    t.value = t.value.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
}

Gradients::Gradients(const ParamStore& params) {
  names_.reserve(params.size());
  grads_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = params.tensor(i);
    names_.push_back(t.name);
    grads_.push_back(Mat::Zero(t.value.rows(), t.value.cols()));
  }
}

void Gradients::zero() {
  for (auto& g : grads_) g.setZero();
}

double Gradients::global_norm() const {
  double s = 0.0;
  for (const auto& g : grads_) s += g.squaredNorm();
  return std::sqrt(s);
}

void Gradients::scale(double s) {
  for (auto& g : grads_) g *= s;
}

}  // namespace tgeacm
