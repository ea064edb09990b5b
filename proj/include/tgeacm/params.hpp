#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "tgeacm/rng.hpp"

namespace tgeacm {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Index of a tensor inside a ParamStore. Module views hold these instead of
// pointers so that stores (and whole models) copy by value.
struct ParamId {
  std::size_t index = static_cast<std::size_t>(-1);
  bool valid() const { return index != static_cast<std::size_t>(-1); }
};

struct NamedTensor {
  std::string name;
  Mat value;
};

// Every trainable tensor of the model, addressable by unique name, in a fixed
// insertion order (the order checkpoints and gradient checks walk).
class ParamStore {
 public:
  ParamId add(const std::string& name, Mat init);
  // Uniform init in [-range, range]; values are rounded to float32 so that
  // checkpoints (float32 payload) round-trip bit-exactly.
  ParamId add_uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols, double range, Rng& rng);
  ParamId add_zero(const std::string& name, Eigen::Index rows, Eigen::Index cols);

  const Mat& operator[](ParamId id) const { return tensors_[id.index].value; }
  Mat& mut(ParamId id) { return tensors_[id.index].value; }
  const NamedTensor& tensor(std::size_t i) const { return tensors_[i]; }
  NamedTensor& tensor(std::size_t i) { return tensors_[i]; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  ParamId id(const std::string& name) const;
  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;

  // Structural equality: same names, same shapes, same order.
  bool same_layout(const ParamStore& other) const;

  // Rounds every value to the nearest float32.
  void round_to_float();

 private:
  std::vector<NamedTensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Gradient buffers aligned one-to-one with a ParamStore.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamStore& params);

  Mat& operator[](ParamId id) { return grads_[id.index]; }
  const Mat& operator[](ParamId id) const { return grads_[id.index]; }
  Mat& at(std::size_t i) { return grads_[i]; }
  const Mat& at(std::size_t i) const { return grads_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  std::size_t size() const { return grads_.size(); }

  void zero();
  double global_norm() const;
  void scale(double s);

 private:
  std::vector<std::string> names_;
  std::vector<Mat> grads_;
};

}  // namespace tgeacm
