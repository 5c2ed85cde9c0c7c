#pragma once

#include <span>
#include <string>
#include <vector>

namespace mti {

/// Mean squared error between truth and prediction.
double mse(std::span<const double> truth, std::span<const double> predicted);

/// Pearson linear correlation coefficient. Throws "undefined correlation"
/// when either side is constant.
double lcc(std::span<const double> truth, std::span<const double> predicted);

/// Ranks starting at 1; tied values share the mean of their rank span.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation: Pearson correlation of average ranks.
double srcc(std::span<const double> truth, std::span<const double> predicted);

/// Levenshtein distance with unit substitution/insertion/deletion costs.
size_t edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp);

/// edit_distance / |ref|, clamped to 1.0. The reference must be non-empty.
double wer(std::span<const std::string> ref, std::span<const std::string> hyp);

/// Unclamped edit_distance / |ref|.
double wer_raw(std::span<const std::string> ref, std::span<const std::string> hyp);

enum class Tokenization { character, word };

/// Character mode splits into UTF-8 code points (whitespace dropped); word
/// mode splits on whitespace.
std::vector<std::string> tokenize(std::string_view text, Tokenization mode);

}  // namespace mti
