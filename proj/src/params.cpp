#include "mti/params.hpp"

#include <cmath>

namespace mti {

Matrix& ParamStore::add(const std::string& name, Matrix value) {
  auto [it, inserted] = tensors_.emplace(name, std::move(value));
  if (!inserted) throw Error("duplicate parameter name '" + name + "'");
  return it->second;
}

const Matrix& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error("missing parameter '" + name + "'");
  return it->second;
}

Matrix& ParamStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error("missing parameter '" + name + "'");
  return it->second;
}

Eigen::Index ParamStore::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& [name, m] : tensors_) n += m.size();
  return n;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (const auto& [name, m] : tensors_) out.tensors_.emplace(name, Matrix::Zero(m.rows(), m.cols()));
  return out;
}

std::string ParamStore::first_non_finite() const {
  for (const auto& [name, m] : tensors_)
    if (!m.allFinite()) return name;
  return {};
}

void ParamStore::add_scaled(const ParamStore& other, double scale) {
  for (const auto& [name, m] : other.tensors_) {
    Matrix& dst = at(name);
    if (dst.rows() != m.rows() || dst.cols() != m.cols())
      throw Error("shape mismatch for parameter '" + name + "'");
    dst += scale * m;
  }
}

double ParamStore::global_norm() const {
  double sq = 0.0;
  for (const auto& [name, m] : tensors_) sq += m.squaredNorm();
  return std::sqrt(sq);
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  auto a = tensors_.begin();
  auto b = other.tensors_.begin();
  for (; a != tensors_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    if (a->second.rows() != b->second.rows() || a->second.cols() != b->second.cols())
      return false;
    if (a->second != b->second) return false;
  }
  return true;
}

}  // namespace mti
