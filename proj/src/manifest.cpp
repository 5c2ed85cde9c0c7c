#include "mti/manifest.hpp"

#include "mti/config.hpp"
#include "mti/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace mti {
namespace {

const std::vector<std::string> kColumns = {"utt_id", "wav_path", "intelligibility",
                                           "wer",    "stoi",     "split"};

std::string label_cell(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

}  // namespace

std::vector<ManifestRecord> Manifest::with_split(Split s) const {
  std::vector<ManifestRecord> out;
  for (const auto& r : records)
    if (r.split == s) out.push_back(r);
  return out;
}

Manifest load_manifest(const std::filesystem::path& path, bool check_wavs) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read manifest " + path.string());
  const auto base = path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  for (auto& h : split(line, ',')) header.push_back(trim(h));
  std::vector<int> col(kColumns.size(), -1);
  for (size_t c = 0; c < kColumns.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), kColumns[c]);
    if (it == header.end())
      throw Error(path.string() + ": missing column '" + kColumns[c] + "'");
    col[c] = static_cast<int>(it - header.begin());
  }

  Manifest manifest;
  std::set<std::string> seen;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != header.size())
      throw Error(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                  std::to_string(cells.size()));
    for (auto& c : cells) c = trim(c);

    ManifestRecord rec;
    rec.utt_id = cells[col[0]];
    if (rec.utt_id.empty()) throw Error(where + ": empty utt_id");
    if (!seen.insert(rec.utt_id).second) throw Error(where + ": duplicate utt_id '" + rec.utt_id + "'");
    rec.wav_path = cells[col[1]];
    if (rec.wav_path.is_relative()) rec.wav_path = base / rec.wav_path;
    if (check_wavs && !std::filesystem::exists(rec.wav_path))
      throw Error(where + ": wav file not found: " + rec.wav_path.string());

    const Target order[3] = {Target::I, Target::W, Target::S};
    for (int k = 0; k < 3; ++k) {
      const std::string& cell = cells[col[2 + k]];
      if (cell.empty()) continue;
      double v = parse_double(cell, std::string(kColumns[2 + k]) + " at " + where);
      if (order[k] == Target::W && (v < 0.0 || v > 1.0) && std::isfinite(v)) {
        const double clamped = std::clamp(v, 0.0, 1.0);
        manifest.warnings.push_back(where + ": wer " + cell + " for '" + rec.utt_id +
                                    "' clamped to " + format_double(clamped));
        v = clamped;
      }
      rec.labels.set(order[k], v);
    }
    try {
      rec.labels.validate();
    } catch (const Error& e) {
      throw Error(where + ": " + e.what());
    }

    const std::string& split_cell = cells[col[5]];
    if (split_cell == "train") {
      rec.split = Split::train;
    } else if (split_cell == "test") {
      rec.split = Split::test;
    } else {
      throw Error(where + ": split must be 'train' or 'test', got '" + split_cell + "'");
    }
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  const auto base = path.parent_path();
  std::string out;
  for (size_t c = 0; c < kColumns.size(); ++c) out += (c ? "," : "") + kColumns[c];
  out += "\n";
  for (const auto& r : records) {
    std::filesystem::path wav = r.wav_path;
    if (!base.empty()) {
      namespace fs = std::filesystem;
      auto rel = fs::absolute(wav).lexically_normal().lexically_relative(
          fs::absolute(base).lexically_normal());
      if (!rel.empty() && *rel.begin() != "..") wav = rel;
    }
    out += r.utt_id + "," + wav.generic_string() + "," + label_cell(r.labels.intelligibility) +
           "," + label_cell(r.labels.wer) + "," + label_cell(r.labels.stoi) + "," +
           (r.split == Split::train ? "train" : "test") + "\n";
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write manifest " + path.string());
    f << out;
    if (!f) throw Error("failed writing manifest " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::pair<std::vector<size_t>, std::vector<size_t>> split_indices(size_t n, double fraction,
                                                                  uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("split fraction must be in (0, 1)");
  const auto held = static_cast<size_t>(std::llround(static_cast<double>(n) * fraction));
  if (held == 0 || held >= n)
    throw Error("degenerate split: " + std::to_string(n) + " items with fraction " +
                format_double(fraction) + " leaves an empty side");
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(seed ^ 0x5EED5EEDULL);
  rng.shuffle(order.begin(), order.end());
  std::vector<size_t> held_out(order.begin(), order.begin() + static_cast<long>(held));
  std::vector<size_t> kept(order.begin() + static_cast<long>(held), order.end());
  std::sort(held_out.begin(), held_out.end());
  std::sort(kept.begin(), kept.end());
  return {kept, held_out};
}

std::pair<std::vector<ManifestRecord>, std::vector<ManifestRecord>> split_train_val(
    const std::vector<ManifestRecord>& records, double fraction, uint64_t seed) {
  auto [kept, held] = split_indices(records.size(), fraction, seed);
  std::pair<std::vector<ManifestRecord>, std::vector<ManifestRecord>> out;
  for (size_t i : kept) out.first.push_back(records[i]);
  for (size_t i : held) out.second.push_back(records[i]);
  return out;
}

}  // namespace mti
