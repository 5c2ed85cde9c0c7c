#pragma once

#include "mti/types.hpp"

#include <map>
#include <string>

namespace mti {

/// Named 2-D parameter tensors, iterated in name order. Vectors (biases)
/// are stored as 1 x n matrices.
class ParamStore {
 public:
  using Map = std::map<std::string, Matrix>;

  /// Throws on duplicate names.
  Matrix& add(const std::string& name, Matrix value);
  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }
  const Matrix& at(const std::string& name) const;
  Matrix& at(const std::string& name);
  void erase(const std::string& name) { tensors_.erase(name); }

  size_t size() const { return tensors_.size(); }
  Eigen::Index parameter_count() const;

  /// Same names and shapes, all zeros.
  ParamStore zeros_like() const;

  /// Name of the first tensor holding a NaN or infinity, or empty.
  std::string first_non_finite() const;

  /// Element-wise this += scale * other; names and shapes must match.
  void add_scaled(const ParamStore& other, double scale);

  /// Euclidean norm over every element of every tensor.
  double global_norm() const;

  bool operator==(const ParamStore& other) const;

  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }
  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }

 private:
  Map tensors_;
};

}  // namespace mti
