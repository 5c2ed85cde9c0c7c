// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. The desk-scale criteria run on the synthetic corpus
// generated from configs/desk.conf.

#include "cli.hpp"

#include "mti/checkpoint.hpp"
#include "mti/config.hpp"
#include "mti/dataset.hpp"
#include "mti/loss.hpp"
#include "mti/manifest.hpp"
#include "mti/metrics.hpp"
#include "mti/training.hpp"

#include "fd_check.hpp"
#include "metric_oracles.hpp"
#include "toy_model.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

using namespace mti;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string num(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.setf(std::ios::scientific);
  s.precision(2);
  s << v;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

int cli(std::vector<std::string> args, std::ostream& log) {
  args.insert(args.begin(), "mti");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  log << "$";
  for (size_t i = 1; i < args.size(); ++i) log << " " << args[i];
  log << "\n" << out.str() << err.str() << "exit " << code << "\n\n";
  return code;
}

// ---------------------------------------------------------------- properties

Outcome gradient_correctness() {
  const auto start = Clock::now();
  ModelConfig cfg = testing::toy_config({Target::I, Target::W, Target::S}, 3);
  LossConfig loss;
  loss.alpha_w = 0.7;
  ParamStore params = init_params(cfg);
  Rng rng(3);
  std::vector<TrainItem> items;
  for (int i = 0; i < 3; ++i)
    items.push_back({"u" + std::to_string(i), testing::toy_input(rng, 3 + 2 * i, cfg),
                     testing::random_labels(rng)});
  const NormStats norm = compute_norm_stats(items, params, cfg);
  std::vector<const TrainItem*> batch;
  for (const auto& it : items) batch.push_back(&it);

  const GradientResult g = compute_gradients(batch, params, cfg, loss, norm);
  double worst = 0.0;
  std::string worst_name;
  for (auto& [name, m] : params) {
    const double err = testing::max_fd_error(
        m, g.grads.at(name), [&] { return batch_loss(batch, params, cfg, loss, norm).total; },
        1e-5);
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  }
  const double secs = seconds_since(start);
  const auto n_params = params.parameter_count();
  return {worst < 1e-4 && secs < 60.0 && n_params <= 5000,
          std::to_string(n_params) + " params, max rel err " + sci(worst) + " (" + worst_name +
              "), " + num(secs, 1) + " s"};
}

TaskScores constant_scores(double value, int frames) {
  TaskScores s;
  s.frame_scores = Vector::Constant(frames, value);
  s.utt_score = value;
  return s;
}

Outcome loss_identities() {
  std::vector<std::string> notes;
  bool ok = true;

  // Perfect predictions.
  {
    Rng rng(11);
    std::vector<ForwardOutput> outs;
    std::vector<UtteranceLabels> labels;
    for (int u = 0; u < 8; ++u) {
      UtteranceLabels l = testing::random_labels(rng);
      ForwardOutput o;
      for (Target t : kAllTargets) o.tasks[t] = constant_scores(*l.get(t), 1 + u);
      outs.push_back(o);
      labels.push_back(l);
    }
    const double o = multitask_loss(outs, labels, LossConfig{}).total;
    ok &= o == 0.0;
    notes.push_back("perfect O=" + sci(o));
  }

  // alpha = 0 leaves the summed utterance-level MSE.
  {
    Rng rng(12);
    std::vector<ForwardOutput> outs;
    std::vector<UtteranceLabels> labels;
    std::map<Target, std::vector<double>> truth, pred;
    for (int u = 0; u < 16; ++u) {
      UtteranceLabels l = testing::random_labels(rng);
      ForwardOutput o;
      for (Target t : kAllTargets) {
        TaskScores s;
        s.frame_scores = Vector::NullaryExpr(2 + u % 5, [&] { return rng.uniform(); });
        s.utt_score = s.frame_scores.mean();
        truth[t].push_back(*l.get(t));
        pred[t].push_back(s.utt_score);
        o.tasks[t] = s;
      }
      outs.push_back(o);
      labels.push_back(l);
    }
    LossConfig cfg;
    cfg.alpha_i = cfg.alpha_w = cfg.alpha_s = 0.0;
    const double o = multitask_loss(outs, labels, cfg).total;
    double expected = 0.0;
    for (Target t : kAllTargets) expected += oracle::mse(truth[t], pred[t]);
    const double diff = std::abs(o - expected);
    ok &= diff < 1e-12;
    notes.push_back("alpha=0 |O-sum MSE|=" + sci(diff));
  }

  // One utterance, frames (0.6, 1.0), label 1: 0.2^2 + 1/2 (0.4^2 + 0^2).
  {
    ForwardOutput out;
    out.tasks[Target::I].frame_scores = Vector{{0.6, 1.0}};
    out.tasks[Target::I].utt_score = gap(std::vector<double>{0.6, 1.0});
    UtteranceLabels l;
    l.intelligibility = 1.0;
    LossConfig cfg;
    cfg.targets = TargetSet{Target::I};
    const double li = multitask_loss(std::span(&out, 1), std::span(&l, 1), cfg).term(Target::I);
    const double diff = std::abs(li - 0.12);
    ok &= diff < 1e-12;
    notes.push_back("hand L_I=" + num(li, 12));
  }

  std::string detail;
  for (const auto& n : notes) detail += (detail.empty() ? "" : ", ") + n;
  return {ok, detail};
}

Outcome gap_invariant() {
  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    ModelConfig cfg = testing::toy_config({Target::I, Target::W, Target::S}, 1000 + trial);
    const ParamStore params = init_params(cfg);
    const TrainItem item{"u", testing::toy_input(rng, 1 + trial % 17, cfg), {}};
    const NormStats norm = compute_norm_stats(std::span(&item, 1), params, cfg);
    const ForwardOutput out = predict(item.input, params, cfg, norm);
    for (const auto& [t, s] : out.tasks) {
      double sum = 0.0;
      for (Eigen::Index f = 0; f < s.frame_scores.size(); ++f) sum += s.frame_scores[f];
      worst = std::max(worst, std::abs(s.utt_score - sum / static_cast<double>(s.frame_scores.size())));
    }
  }
  return {worst < 1e-6, "200 passes x 3 tasks, max |utt - mean(frames)| = " + sci(worst)};
}

std::vector<std::string> chars(const std::string& s) {
  std::vector<std::string> out;
  for (char c : s) out.emplace_back(1, c);
  return out;
}

Outcome metric_oracles() {
  Rng rng(17);
  double worst = 0.0;
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const size_t n = 2 + rng.below(40);
    const bool ties = trial % 2 == 1;
    std::vector<double> a(n), b(n);
    for (size_t i = 0; i < n; ++i) {
      a[i] = ties ? static_cast<double>(rng.below(4)) : rng.uniform(-5.0, 5.0);
      b[i] = ties ? static_cast<double>(rng.below(4)) : rng.uniform(-5.0, 5.0);
    }
    worst = std::max(worst, std::abs(mse(a, b) - oracle::mse(a, b)));
    const bool constant = std::adjacent_find(a.begin(), a.end(), std::not_equal_to<>()) == a.end() ||
                          std::adjacent_find(b.begin(), b.end(), std::not_equal_to<>()) == b.end();
    if (constant) continue;
    worst = std::max(worst, std::abs(lcc(a, b) - oracle::pearson(a, b)));
    worst = std::max(worst, std::abs(srcc(a, b) - oracle::spearman(a, b)));
    ++checked;
  }

  const oracle::EditGraph graph("abc", 4);
  size_t pairs = 0, mismatches = 0;
  for (const auto& ref : graph.nodes()) {
    const auto dist = graph.bfs(ref);
    for (size_t j = 0; j < graph.nodes().size(); ++j, ++pairs) {
      const auto r = chars(ref), h = chars(graph.nodes()[j]);
      if (edit_distance(r, h) != static_cast<size_t>(dist[j])) ++mismatches;
      if (!r.empty() && wer_raw(r, h) != static_cast<double>(dist[j]) / static_cast<double>(r.size()))
        ++mismatches;
    }
  }
  return {worst < 1e-10 && mismatches == 0,
          "1000 vectors (" + std::to_string(checked) + " with correlations), max dev " + sci(worst) +
              "; WER " + std::to_string(pairs) + " pairs, " + std::to_string(mismatches) +
              " mismatches"};
}

// ---------------------------------------------------------------- desk scale

struct Corpus {
  fs::path dir;
  fs::path manifest;
  fs::path embeddings;
};

Outcome end_to_end(const fs::path& work, const fs::path& config, const Corpus& corpus,
                   std::ostream& log) {
  const auto start = Clock::now();
  const fs::path ckpt = work / "e2e.mtic";
  const fs::path report = work / "e2e_report.json";
  if (cli({"train", "--config", config.string(), "--manifest", corpus.manifest.string(),
           "--embeddings-dir", corpus.embeddings.string(), "--targets", "I,W,S", "--features",
           "cs", "--out", ckpt.string()},
          log) != 0)
    return {false, "train failed (see log)"};
  if (cli({"eval", "--ckpt", ckpt.string(), "--manifest", corpus.manifest.string(),
           "--embeddings-dir", corpus.embeddings.string(), "--out-json", report.string(),
           "--out-csv", (work / "e2e_pairs.csv").string()},
          log) != 0)
    return {false, "eval failed (see log)"};
  const double secs = seconds_since(start);
  const auto j = nlohmann::json::parse(slurp(report));
  const auto value = [&](const char* t) {
    return j[t]["lcc"].is_null() ? -2.0 : j[t]["lcc"].get<double>();
  };
  const double li = value("I"), lw = value("W"), ls = value("S");
  return {li >= 0.80 && lw >= 0.80 && secs <= 1800.0,
          "test LCC I=" + num(li) + " W=" + num(lw) + " S=" + num(ls) + " (n=" +
              std::to_string(j["I"]["n"].get<int>()) + "), train+eval " + num(secs, 0) + " s"};
}

struct DeskData {
  ModelConfig model;
  LossConfig loss;
  OptimConfig optim;
  std::vector<TrainItem> train;
  std::vector<TrainItem> test;
};

DeskData load_desk(const fs::path& config, const Corpus& corpus) {
  DeskData d;
  const Config cfg = Config::from_file(config);
  d.model = ModelConfig::from_config(cfg);
  d.loss = LossConfig::from_config(cfg);
  d.optim = OptimConfig::from_config(cfg);
  const Manifest m = load_manifest(corpus.manifest);
  const auto train_records = m.with_split(Split::train);
  d.model.features.ssl_dim = probe_embedding_dim(train_records, corpus.embeddings);
  d.train = load_items(train_records, d.model.features, corpus.embeddings);
  d.test = load_items(m.with_split(Split::test), d.model.features, corpus.embeddings);
  return d;
}

double test_lcc(const DeskData& d, const Checkpoint& ckpt, Target t) {
  std::vector<double> truth, pred;
  for (const auto& item : d.test) {
    truth.push_back(*item.labels.get(t));
    pred.push_back(predict(item.input, ckpt).at(t).utt_score);
  }
  return lcc(truth, pred);
}

TrainResult run_desk(const DeskData& d, TargetSet targets, uint64_t seed, int epochs,
                     const Checkpoint* warm = nullptr) {
  ModelConfig model = d.model;
  model.targets = targets;
  model.seed = seed;
  LossConfig loss = d.loss;
  loss.targets = targets;
  OptimConfig optim = d.optim;
  optim.seed = seed;
  optim.epochs = epochs;
  optim.patience = epochs;  // full curves for the epoch-count comparison
  return train(d.train, model, loss, optim, warm);
}

std::vector<double> val_curve(const TrainResult& r, Target t) {
  std::vector<double> v;
  for (const auto& e : r.log) {
    const auto& x = e.val_lcc.at(t);
    v.push_back(x ? *x : -2.0);
  }
  return v;
}

struct StudyResult {
  Outcome multitask;
  Outcome transfer;
};

StudyResult seed_study(const DeskData& d, int epochs, std::ostream& log) {
  std::vector<double> single_lcc, multi_lcc, cold_epochs, warm_epochs;
  std::string mt_detail, kt_detail;
  for (uint64_t seed : {1u, 2u, 3u}) {
    const TrainResult cold = run_desk(d, TargetSet{Target::I}, seed, epochs);
    const TrainResult multi = run_desk(d, TargetSet{Target::I, Target::W, Target::S}, seed, epochs);
    const TrainResult pre = run_desk(d, TargetSet{Target::S}, seed, epochs);
    const TrainResult warm = run_desk(d, TargetSet{Target::I}, seed, epochs, &pre.best);

    single_lcc.push_back(test_lcc(d, cold.best, Target::I));
    multi_lcc.push_back(test_lcc(d, multi.best, Target::I));

    const auto cold_curve = val_curve(cold, Target::I);
    const auto warm_curve = val_curve(warm, Target::I);
    const double goal = *std::max_element(cold_curve.begin(), cold_curve.end());
    const auto reach = [&](const std::vector<double>& c) {
      for (size_t e = 0; e < c.size(); ++e)
        if (c[e] >= goal) return static_cast<double>(e + 1);
      return static_cast<double>(c.size() + 1);  // never reached
    };
    cold_epochs.push_back(reach(cold_curve));
    warm_epochs.push_back(reach(warm_curve));

    log << "seed " << seed << ": test LCC_I single=" << num(single_lcc.back())
        << " multi=" << num(multi_lcc.back()) << "; val LCC_I goal " << num(goal)
        << " cold epoch " << cold_epochs.back() << " warm epoch " << warm_epochs.back()
        << "; transfer copied " << warm.transfer.copied.size() << " tensors\n  cold curve";
    for (double v : cold_curve) log << " " << num(v, 3);
    log << "\n  warm curve";
    for (double v : warm_curve) log << " " << num(v, 3);
    log << "\n";
    log.flush();

    mt_detail += (mt_detail.empty() ? "" : " ") + num(multi_lcc.back(), 3) + "/" +
                 num(single_lcc.back(), 3);
    kt_detail += (kt_detail.empty() ? "" : " ") + std::to_string(int(warm_epochs.back())) + "/" +
                 std::to_string(int(cold_epochs.back()));
  }
  const double m_multi = median(multi_lcc), m_single = median(single_lcc);
  const double m_warm = median(warm_epochs), m_cold = median(cold_epochs);
  StudyResult r;
  r.multitask = {m_multi >= m_single - 0.02,
                 "median test LCC_I I+W+S=" + num(m_multi) + " vs I=" + num(m_single) +
                     " (per seed multi/single: " + mt_detail + ")"};
  r.transfer = {m_warm <= m_cold, "median epochs to cold-start best val LCC_I: warm=" +
                                      num(m_warm, 1) + " cold=" + num(m_cold, 1) +
                                      " (per seed warm/cold: " + kt_detail + ")"};
  return r;
}

Outcome determinism(const fs::path& work, const fs::path& config, const Corpus& corpus,
                    std::ostream& log) {
  ::setenv("MTI_DETERMINISTIC", "1", 1);
  std::vector<std::string> bytes;
  for (const char* name : {"det_a.mtic", "det_b.mtic"}) {
    const fs::path out = work / name;
    if (cli({"train", "--config", config.string(), "--set", "optim.epochs=2", "--manifest",
             corpus.manifest.string(), "--embeddings-dir", corpus.embeddings.string(), "--out",
             out.string()},
            log) != 0) {
      ::unsetenv("MTI_DETERMINISTIC");
      return {false, "train failed (see log)"};
    }
    bytes.push_back(slurp(out));
  }
  ::unsetenv("MTI_DETERMINISTIC");
  const bool same = !bytes[0].empty() && bytes[0] == bytes[1];
  return {same, std::to_string(bytes[0].size()) + " bytes, " +
                    (same ? "identical" : "checkpoints differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("acceptance suite");
  std::string workdir = "acceptance_work";
  std::string config = "configs/desk.conf";
  int study_epochs = 10;
  app.add_option("--workdir", workdir, "scratch directory for corpus, checkpoints and logs");
  app.add_option("--config", config, "desk-scale configuration");
  app.add_option("--study-epochs", study_epochs, "epochs per run in the 3-seed studies")
      ->check(CLI::Range(1, 1000));
  CLI11_PARSE(app, argc, argv);

  const fs::path work = fs::absolute(workdir);
  fs::create_directories(work);
  std::ofstream log(work / "acceptance.log");
  int failures = 0;
  const auto report = [&](const std::string& name, const Outcome& o) {
    const std::string line = std::string(o.pass ? "PASS" : "FAIL") + "  " + name + ": " + o.detail;
    std::cout << line << std::endl;
    log << line << "\n";
    log.flush();
    if (!o.pass) ++failures;
  };
  const auto guarded = [&](const std::string& name, const std::function<Outcome()>& fn) {
    try {
      report(name, fn());
    } catch (const std::exception& e) {
      report(name, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded("gradient correctness", gradient_correctness);
  guarded("loss identities", loss_identities);
  guarded("GAP invariant", gap_invariant);
  guarded("metric oracles", metric_oracles);

  Corpus corpus{work / "corpus", work / "corpus/manifest.csv", work / "corpus/embeddings"};
  const auto gen_start = Clock::now();
  const bool have_corpus =
      cli({"gen-synth", "--config", config, "--out", corpus.dir.string()}, log) == 0;
  log << "gen-synth " << num(seconds_since(gen_start), 1) << " s\n";
  const auto need_corpus = [&](const std::function<Outcome()>& fn) {
    return [&, fn] { return have_corpus ? fn() : Outcome{false, "gen-synth failed (see log)"}; };
  };

  guarded("desk-scale end-to-end", need_corpus([&] { return end_to_end(work, config, corpus, log); }));

  StudyResult study{{false, "not run"}, {false, "not run"}};
  try {
    if (!have_corpus) throw Error("gen-synth failed (see log)");
    study = seed_study(load_desk(config, corpus), study_epochs, log);
  } catch (const std::exception& e) {
    study.multitask = study.transfer = {false, std::string("exception: ") + e.what()};
  }
  report("multi-task non-inferiority", study.multitask);
  report("knowledge-transfer epoch count", study.transfer);

  guarded("determinism", need_corpus([&] { return determinism(work, config, corpus, log); }));

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
