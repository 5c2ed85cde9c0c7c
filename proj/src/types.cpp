#include "mti/types.hpp"

#include "mti/config.hpp"

#include <algorithm>
#include <cctype>

namespace mti {

std::string_view target_name(Target t) {
  switch (t) {
    case Target::I: return "I";
    case Target::W: return "W";
    case Target::S: return "S";
  }
  return "?";
}

Target parse_target(std::string_view name) {
  std::string upper = trim(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  if (upper == "I") return Target::I;
  if (upper == "W") return Target::W;
  if (upper == "S") return Target::S;
  throw Error("unknown target '" + std::string(name) + "' (expected I, W or S)");
}

TargetSet::TargetSet(std::initializer_list<Target> targets) {
  for (Target t : targets) insert(t);
}

TargetSet TargetSet::parse(std::string_view text) {
  TargetSet set;
  for (const auto& part : split(text, ',')) {
    if (trim(part).empty()) continue;
    set.insert(parse_target(part));
  }
  if (set.empty()) throw Error("empty target list '" + std::string(text) + "'");
  return set;
}

std::vector<Target> TargetSet::list() const {
  std::vector<Target> out;
  for (Target t : kAllTargets)
    if (contains(t)) out.push_back(t);
  return out;
}

std::string TargetSet::to_string() const {
  std::string out;
  for (Target t : list()) {
    if (!out.empty()) out += ',';
    out += target_name(t);
  }
  return out;
}

std::string_view branch_name(Branch b) {
  switch (b) {
    case Branch::PS: return "ps";
    case Branch::LFB: return "lfb";
    case Branch::SSL: return "ssl";
  }
  return "?";
}

BranchSet::BranchSet(std::initializer_list<Branch> branches) {
  for (Branch b : branches) insert(b);
}

BranchSet BranchSet::parse(std::string_view text) {
  BranchSet set;
  for (const auto& raw : split(text, ',')) {
    std::string part = trim(raw);
    std::transform(part.begin(), part.end(), part.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (part.empty()) continue;
    if (part == "ps") {
      set.insert(Branch::PS);
    } else if (part == "lfb") {
      set.insert(Branch::LFB);
    } else if (part == "ssl") {
      set.insert(Branch::SSL);
    } else if (part == "cs") {
      set.insert(Branch::PS);
      set.insert(Branch::LFB);
      set.insert(Branch::SSL);
    } else {
      throw Error("unknown feature branch '" + part + "' (expected ps, lfb, ssl or cs)");
    }
  }
  if (set.empty()) throw Error("empty feature branch list");
  return set;
}

std::vector<Branch> BranchSet::list() const {
  std::vector<Branch> out;
  for (Branch b : {Branch::PS, Branch::LFB, Branch::SSL})
    if (contains(b)) out.push_back(b);
  return out;
}

std::string BranchSet::to_string() const {
  std::string out;
  for (Branch b : list()) {
    if (!out.empty()) out += ',';
    out += branch_name(b);
  }
  return out;
}

}  // namespace mti
