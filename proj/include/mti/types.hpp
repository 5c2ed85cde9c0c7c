#pragma once

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mti {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Error caused by bad input: malformed files, invalid configuration,
/// contract violations by the caller. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Prediction targets: listening-test intelligibility, ASR word error rate,
/// and STOI.
enum class Target { I = 0, W = 1, S = 2 };

inline constexpr std::array<Target, 3> kAllTargets = {Target::I, Target::W,
                                                      Target::S};

std::string_view target_name(Target t);
Target parse_target(std::string_view name);

/// Subset of {I, W, S}. Iteration order is always I, W, S.
class TargetSet {
 public:
  TargetSet() = default;
  TargetSet(std::initializer_list<Target> targets);

  /// Parses "I", "I,W", "I,W,S" (any order, case-insensitive).
  static TargetSet parse(std::string_view text);

  void insert(Target t) { bits_[static_cast<int>(t)] = true; }
  bool contains(Target t) const { return bits_[static_cast<int>(t)]; }
  bool empty() const { return !bits_[0] && !bits_[1] && !bits_[2]; }
  std::vector<Target> list() const;
  std::string to_string() const;

  bool operator==(const TargetSet&) const = default;

 private:
  std::array<bool, 3> bits_{};
};

enum class Branch { PS = 0, LFB = 1, SSL = 2 };

std::string_view branch_name(Branch b);

/// Subset of {PS, LFB, SSL}. Iteration order is the concatenation order.
class BranchSet {
 public:
  BranchSet() = default;
  BranchSet(std::initializer_list<Branch> branches);

  /// Parses "ps,lfb,ssl" style lists; "cs" is shorthand for all three.
  static BranchSet parse(std::string_view text);

  void insert(Branch b) { bits_[static_cast<int>(b)] = true; }
  bool contains(Branch b) const { return bits_[static_cast<int>(b)]; }
  bool empty() const { return !bits_[0] && !bits_[1] && !bits_[2]; }
  std::vector<Branch> list() const;
  std::string to_string() const;

  bool operator==(const BranchSet&) const = default;

 private:
  std::array<bool, 3> bits_{};
};

}  // namespace mti
