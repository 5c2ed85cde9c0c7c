#include "mti/metrics.hpp"

#include "mti/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <numeric>

namespace mti {
namespace {

void check_pairs(std::span<const double> a, std::span<const double> b, size_t min_n,
                 const char* what) {
  if (a.size() != b.size())
    throw Error(std::string(what) + ": truth and prediction lengths differ");
  if (a.size() < min_n)
    throw Error(std::string(what) + ": need at least " + std::to_string(min_n) + " pairs");
  for (size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
      throw Error(std::string(what) + ": non-finite score");
}

}  // namespace

double mse(std::span<const double> truth, std::span<const double> predicted) {
  check_pairs(truth, predicted, 1, "mse");
  double sum = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    const double d = truth[i] - predicted[i];
    sum += d * d;
  }
  return sum / static_cast<double>(truth.size());
}

double lcc(std::span<const double> truth, std::span<const double> predicted) {
  check_pairs(truth, predicted, 2, "lcc");
  const auto constant = [](std::span<const double> v) {
    return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
  };
  if (constant(truth) || constant(predicted))
    throw Error("undefined correlation: constant input");
  const double n = static_cast<double>(truth.size());
  const double mt = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  const double mp = std::accumulate(predicted.begin(), predicted.end(), 0.0) / n;
  double stt = 0.0, spp = 0.0, stp = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    const double dt = truth[i] - mt, dp = predicted[i] - mp;
    stt += dt * dt;
    spp += dp * dp;
    stp += dt * dp;
  }
  if (stt == 0.0 || spp == 0.0) throw Error("undefined correlation: constant input");
  return std::clamp(stp / std::sqrt(stt * spp), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double srcc(std::span<const double> truth, std::span<const double> predicted) {
  check_pairs(truth, predicted, 2, "srcc");
  const auto rt = average_ranks(truth);
  const auto rp = average_ranks(predicted);
  return lcc(rt, rp);
}

size_t edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp) {
  std::vector<size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  std::iota(prev.begin(), prev.end(), size_t{0});
  for (size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= hyp.size(); ++j) {
      const size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

double wer_raw(std::span<const std::string> ref, std::span<const std::string> hyp) {
  if (ref.empty()) throw Error("wer: empty reference");
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

double wer(std::span<const std::string> ref, std::span<const std::string> hyp) {
  return std::min(1.0, wer_raw(ref, hyp));
}

std::vector<std::string> tokenize(std::string_view text, Tokenization mode) {
  std::vector<std::string> out;
  if (mode == Tokenization::word) {
    std::string cur;
    for (char c : text) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
  }
  size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    size_t len = 1;
    if (lead >= 0xF0) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = 3;
    } else if (lead >= 0xC0) {
      len = 2;
    }
    len = std::min(len, text.size() - i);
    if (!(len == 1 && std::isspace(lead))) out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace mti
