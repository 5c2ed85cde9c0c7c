#include "mti/scatter.hpp"

#include "mti/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace mti {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

void write_pairs_csv(const std::filesystem::path& path, const PairsByTarget& pairs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "utt_id,target,truth,predicted\n";
  for (const auto& [t, list] : pairs)
    for (const auto& p : list)
      out << p.utt_id << ',' << target_name(t) << ',' << format_double(p.truth) << ','
          << format_double(p.predicted) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

PairsByTarget read_pairs_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "utt_id,target,truth,predicted")
    throw Error(path.string() + ": malformed CSV header (expected utt_id,target,truth,predicted)");
  PairsByTarget pairs;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split(trim(line), ',');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != 4) throw Error(where + ": malformed CSV row");
    try {
      ScorePair p{trim(cells[0]), parse_double(cells[2], "truth"), parse_double(cells[3], "predicted")};
      pairs[parse_target(cells[1])].push_back(std::move(p));
    } catch (const Error& e) {
      throw Error(where + ": " + e.what());
    }
  }
  return pairs;
}

std::pair<double, double> to_pixel(double truth, double predicted, const ScatterStyle& style) {
  const double w = style.width - 2.0 * style.margin;
  const double h = style.height - 2.0 * style.margin;
  return {style.margin + truth * w, style.height - style.margin - predicted * h};
}

std::string render_scatter(std::span<const ScorePair> pairs, Target target,
                           const ScatterStyle& style, std::vector<std::string>* warnings) {
  const auto [x0, y0] = to_pixel(0.0, 0.0, style);
  const auto [x1, y1] = to_pixel(1.0, 1.0, style);
  const std::string name(target_name(target));
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(style.width) +
         "\" height=\"" + std::to_string(style.height) + "\" viewBox=\"0 0 " +
         std::to_string(style.width) + " " + std::to_string(style.height) + "\">\n";
  svg += "<title>" + name + ": truth vs prediction</title>\n";
  svg += "<rect class=\"frame\" x=\"" + fmt(x0) + "\" y=\"" + fmt(y1) + "\" width=\"" +
         fmt(x1 - x0) + "\" height=\"" + fmt(y0 - y1) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  svg += "<line class=\"diagonal\" x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(x1) +
         "\" y2=\"" + fmt(y1) + "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = tick / 4.0;
    const auto [tx, ty0] = to_pixel(v, 0.0, style);
    const auto [tx0, ty] = to_pixel(0.0, v, style);
    svg += "<text class=\"tick\" x=\"" + fmt(tx) + "\" y=\"" + fmt(ty0 + 16) +
           "\" font-size=\"11\" text-anchor=\"middle\">" + fmt(v).substr(0, 4) + "</text>\n";
    svg += "<text class=\"tick\" x=\"" + fmt(tx0 - 6) + "\" y=\"" + fmt(ty + 4) +
           "\" font-size=\"11\" text-anchor=\"end\">" + fmt(v).substr(0, 4) + "</text>\n";
  }
  svg += "<text class=\"label\" x=\"" + fmt((x0 + x1) / 2) + "\" y=\"" + fmt(style.height - 6.0) +
         "\" font-size=\"12\" text-anchor=\"middle\">true " + name + "</text>\n";
  svg += "<text class=\"label\" x=\"12\" y=\"" + fmt((y0 + y1) / 2) +
         "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 12 " +
         fmt((y0 + y1) / 2) + ")\">predicted " + name + "</text>\n";
  for (const auto& p : pairs) {
    const bool clipped = p.truth < 0.0 || p.truth > 1.0 || p.predicted < 0.0 || p.predicted > 1.0;
    const auto [px, py] =
        to_pixel(std::clamp(p.truth, 0.0, 1.0), std::clamp(p.predicted, 0.0, 1.0), style);
    if (clipped) {
      if (warnings)
        warnings->push_back(p.utt_id + ": (" + format_double(p.truth) + ", " +
                            format_double(p.predicted) + ") outside [0,1], drawn clipped");
      svg += "<circle class=\"point clipped\" cx=\"" + fmt(px) + "\" cy=\"" + fmt(py) +
             "\" r=\"3\" fill=\"none\" stroke=\"red\"/>\n";
    } else {
      svg += "<circle class=\"point\" cx=\"" + fmt(px) + "\" cy=\"" + fmt(py) +
             "\" r=\"2.5\" fill=\"steelblue\" fill-opacity=\"0.6\"/>\n";
    }
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace mti
