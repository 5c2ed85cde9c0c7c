#include "cli.hpp"

#include "mti/checkpoint.hpp"
#include "mti/embedding_io.hpp"
#include "mti/manifest.hpp"

#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "mti");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = mti::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

const std::vector<std::string> kTiny = {
    "--set", "model.conv_channels=2,4", "--set", "model.blstm_hidden=4",
    "--set", "model.shared_fc=4",       "--set", "model.attn_dim=4",
    "--set", "optim.epochs=2",          "--set", "optim.lr=1e-3"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

/// One small corpus shared by the tests in this file.
const testing::TempDir& corpus() {
  static testing::TempDir dir("cli");
  static const bool made = [] {
    const Run r = run({"gen-synth", "--out", dir.path().string(), "--set", "synth.n_utts=24",
                       "--set", "synth.n_test=6", "--set", "synth.duration_s=0.5", "--set",
                       "synth.seed=3"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return true;
  }();
  (void)made;
  return dir;
}

std::string manifest() { return (corpus() / "manifest.csv").string(); }
std::string embeddings() { return (corpus() / "embeddings").string(); }

}  // namespace

TEST_CASE("gen-synth writes manifest, wavs and embeddings") {
  const mti::Manifest m = mti::load_manifest(manifest());
  CHECK(m.records.size() == 24);
  CHECK(m.with_split(mti::Split::test).size() == 6);
  CHECK(fs::exists(corpus() / "synth_meta.json"));
  CHECK(fs::exists(corpus() / "embeddings/utt00000.mtie"));
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  const Run r = run({"train", "--manifest", "/nonexistent/m.csv"});
  CHECK(r.code == 2);
  CHECK(r.err.find("/nonexistent/m.csv") != std::string::npos);
  CHECK(r.err.rfind("error: ", 0) == 0);
  CHECK(run({"train", "--manifest", manifest(), "--set", "broken"}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("train, eval, scatter and predict") {
  testing::TempDir work("cli_work");
  const std::string ckpt = (work / "m.mtic").string();
  const Run tr = run(with({"train", "--manifest", manifest(), "--embeddings-dir", embeddings(),
                           "--targets", "I", "--out", ckpt},
                          kTiny));
  REQUIRE_MESSAGE(tr.code == 0, tr.err);
  CHECK(tr.out.find("LCC") != std::string::npos);
  CHECK(tr.err.find("epoch 2/2") != std::string::npos);
  const mti::Checkpoint c = mti::read_checkpoint(ckpt);
  CHECK(c.model.targets == mti::TargetSet{mti::Target::I});
  CHECK(c.params.contains("head.I.out.weight"));
  CHECK(!c.params.contains("head.W.out.weight"));

  std::ifstream log(ckpt + ".log.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line); ++lines)
    CHECK(nlohmann::json::parse(line).contains("O"));
  CHECK(lines == 2);

  const std::string json_path = (work / "r.json").string();
  const std::string csv_path = (work / "p.csv").string();
  const Run ev = run({"eval", "--ckpt", ckpt, "--manifest", manifest(), "--embeddings-dir",
                      embeddings(), "--out-json", json_path, "--out-csv", csv_path});
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  const auto report = nlohmann::json::parse(slurp(json_path));
  CHECK(report.size() == 1);
  CHECK(report.contains("I"));
  CHECK(report["I"]["n"] == 6);

  const Run sc = run({"scatter", "--csv", csv_path, "--out-svg", (work / "plot.svg").string()});
  REQUIRE_MESSAGE(sc.code == 0, sc.err);
  const std::string svg = slurp(work / "plot_I.svg");
  size_t points = 0;
  for (size_t p = svg.find("class=\"point"); p != std::string::npos;
       p = svg.find("class=\"point", p + 1))
    ++points;
  CHECK(points == 6);

  const Run pr = run({"predict", "--ckpt", ckpt, "--wav", (corpus() / "wavs/utt00000.wav").string(),
                      "--embeddings", (corpus() / "embeddings/utt00000.mtie").string()});
  REQUIRE_MESSAGE(pr.code == 0, pr.err);
  const auto pj = nlohmann::json::parse(pr.out);
  CHECK(pj.size() == 1);
  CHECK(pj["I"].get<double>() > 0.0);
  CHECK(pj["I"].get<double>() < 1.0);
  CHECK(run({"predict", "--ckpt", ckpt, "--wav", (corpus() / "wavs/utt00000.wav").string()}).code ==
        2);

  // Asking for a target the checkpoint does not have.
  CHECK(run({"eval", "--ckpt", ckpt, "--manifest", manifest(), "--embeddings-dir", embeddings(),
             "--targets", "W"})
            .code == 2);
}

TEST_CASE("multi-target training reports every active target") {
  testing::TempDir work("cli_work");
  const std::string ckpt = (work / "m.mtic").string();
  REQUIRE(run(with({"train", "--manifest", manifest(), "--embeddings-dir", embeddings(),
                    "--targets", "I,W,S", "--features", "ps,lfb", "--out", ckpt},
                   kTiny))
              .code == 0);
  const std::string json_path = (work / "r.json").string();
  REQUIRE(run({"eval", "--ckpt", ckpt, "--manifest", manifest(), "--out-json", json_path}).code ==
          0);
  const auto report = nlohmann::json::parse(slurp(json_path));
  CHECK(report.size() == 3);
  for (const char* t : {"I", "W", "S"}) CHECK(report.contains(t));
}

TEST_CASE("deterministic mode gives byte-identical checkpoints") {
  testing::TempDir work("cli_work");
  ::setenv("MTI_DETERMINISTIC", "1", 1);
  for (const char* name : {"a.mtic", "b.mtic"})
    REQUIRE(run(with({"train", "--manifest", manifest(), "--embeddings-dir", embeddings(),
                      "--targets", "I,W", "--out", (work / name).string()},
                     kTiny))
                .code == 0);
  ::unsetenv("MTI_DETERMINISTIC");
  const std::string a = slurp(work / "a.mtic");
  CHECK(!a.empty());
  CHECK(a == slurp(work / "b.mtic"));
}

TEST_CASE("oracle evaluation is perfect") {
  testing::TempDir work("cli_work");
  const std::string json_path = (work / "r.json").string();
  const Run r = run({"eval", "--oracle", "--manifest", manifest(), "--out-json", json_path});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto report = nlohmann::json::parse(slurp(json_path));
  for (const char* t : {"I", "W", "S"}) {
    CHECK(report[t]["lcc"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report[t]["srcc"].get<double>() == 1.0);
    CHECK(report[t]["mse"].get<double>() == 0.0);
  }
}

TEST_CASE("eval rejects an empty test split") {
  testing::TempDir work("cli_work");
  mti::Manifest m = mti::load_manifest(manifest());
  std::vector<mti::ManifestRecord> train_only = m.with_split(mti::Split::train);
  const fs::path path = corpus() / "train_only.csv";
  mti::write_manifest(path, train_only);
  const Run r = run({"eval", "--oracle", "--manifest", path.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("empty test split") != std::string::npos);
}

TEST_CASE("extract caches ps and lfb features") {
  testing::TempDir work("cli_work");
  const Run r = run({"extract", "--manifest", manifest(), "--features", "ps,lfb", "--out",
                     work.path().string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const mti::EmbeddingSeq ps = mti::read_embeddings(work / "utt00000.ps.mtie");
  const mti::EmbeddingSeq lfb = mti::read_embeddings(work / "utt00000.lfb.mtie");
  CHECK(ps.vectors.cols() == 257);
  CHECK(lfb.vectors.cols() == 40);
  CHECK(ps.vectors.rows() == lfb.vectors.rows());
  CHECK(ps.frame_rate_mhz == 62500);
  CHECK(lfb.source_tag == "lfb:init");
  CHECK(run({"extract", "--manifest", manifest(), "--features", "ssl", "--out",
             work.path().string()})
            .code == 2);
}
