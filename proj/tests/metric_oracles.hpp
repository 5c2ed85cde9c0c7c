#pragma once
// Definition-level reference implementations, written independently of the
// library code they check.

#include <cmath>
#include <deque>
#include <map>
#include <string>
#include <vector>

namespace oracle {

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double mse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

/// Two-pass covariance formula.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// Rank by counting: 1 + #smaller + (#equal - 1) / 2. O(n^2), no sorting.
inline std::vector<double> count_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    double smaller = 0.0, equal = 0.0;
    for (double x : v) {
      smaller += x < v[i];
      equal += x == v[i];
    }
    r[i] = 1.0 + smaller + (equal - 1.0) / 2.0;
  }
  return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(count_ranks(a), count_ranks(b));
}

/// All-pairs edit distances over every string of length <= max_len on
/// `alphabet`, by breadth-first search in the graph whose edges are single
/// insertions, deletions and substitutions. An optimal edit script can be
/// reordered as substitutions, then deletions, then insertions, so no
/// intermediate string is longer than max(|a|, |b|) and the bounded graph
/// gives exact distances.
class EditGraph {
 public:
  EditGraph(std::string alphabet, size_t max_len) : alphabet_(std::move(alphabet)) {
    std::vector<std::string> layer{""};
    nodes_.push_back("");
    for (size_t len = 1; len <= max_len; ++len) {
      std::vector<std::string> next;
      for (const auto& s : layer)
        for (char c : alphabet_) next.push_back(s + c);
      nodes_.insert(nodes_.end(), next.begin(), next.end());
      layer = std::move(next);
    }
    for (size_t i = 0; i < nodes_.size(); ++i) index_[nodes_[i]] = i;
    max_len_ = max_len;
  }

  const std::vector<std::string>& nodes() const { return nodes_; }

  /// Distances from `source` to every node.
  std::vector<int> bfs(const std::string& source) const {
    std::vector<int> dist(nodes_.size(), -1);
    std::deque<size_t> queue{index_.at(source)};
    dist[queue.front()] = 0;
    while (!queue.empty()) {
      const size_t u = queue.front();
      queue.pop_front();
      for (const auto& v : neighbours(nodes_[u])) {
        const size_t j = index_.at(v);
        if (dist[j] < 0) {
          dist[j] = dist[u] + 1;
          queue.push_back(j);
        }
      }
    }
    return dist;
  }

 private:
  std::vector<std::string> neighbours(const std::string& s) const {
    std::vector<std::string> out;
    for (size_t i = 0; i < s.size(); ++i) out.push_back(s.substr(0, i) + s.substr(i + 1));
    for (size_t i = 0; i < s.size(); ++i)
      for (char c : alphabet_)
        if (c != s[i]) {
          std::string t = s;
          t[i] = c;
          out.push_back(t);
        }
    if (s.size() < max_len_)
      for (size_t i = 0; i <= s.size(); ++i)
        for (char c : alphabet_) out.push_back(s.substr(0, i) + c + s.substr(i));
    return out;
  }

  std::string alphabet_;
  size_t max_len_ = 0;
  std::vector<std::string> nodes_;
  std::map<std::string, size_t> index_;
};

}  // namespace oracle
