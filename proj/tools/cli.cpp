#include "cli.hpp"

#include "mti/checkpoint.hpp"
#include "mti/config.hpp"
#include "mti/dataset.hpp"
#include "mti/embedding_io.hpp"
#include "mti/manifest.hpp"
#include "mti/metrics.hpp"
#include "mti/scatter.hpp"
#include "mti/synth.hpp"
#include "mti/training.hpp"
#include "mti/wav.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

namespace mti {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value configuration file");
  cmd->add_option("--set", args.overrides, "override a config key (dotted.key=value), repeatable");
}

bool deterministic_env() {
  const char* v = std::getenv("MTI_DETERMINISTIC");
  return v != nullptr && std::string(v) == "1";
}

Config load_config(const CommonArgs& args) {
  Config cfg;
  if (!args.config_path.empty()) cfg = Config::from_file(args.config_path);
  for (const auto& o : args.overrides) cfg.apply_override(o);
  if (deterministic_env()) {
    cfg.set("optim.deterministic", "1");
    cfg.set("optim.threads", "1");
  }
  return cfg;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct TargetMetrics {
  std::optional<double> lcc, srcc;
  double mse = 0.0;
  size_t n = 0;
};

std::optional<double> maybe(double (*fn)(std::span<const double>, std::span<const double>),
                            const std::vector<double>& a, const std::vector<double>& b) {
  try {
    return fn(a, b);
  } catch (const Error&) {
    return std::nullopt;
  }
}

TargetMetrics score(const std::vector<ScorePair>& pairs) {
  std::vector<double> truth, pred;
  for (const auto& p : pairs) {
    truth.push_back(p.truth);
    pred.push_back(p.predicted);
  }
  TargetMetrics m;
  m.n = pairs.size();
  m.mse = mse(truth, pred);
  m.lcc = maybe(&lcc, truth, pred);
  m.srcc = maybe(&srcc, truth, pred);
  return m;
}

void print_table(std::ostream& out, const std::map<Target, TargetMetrics>& metrics) {
  out << "target      LCC     SRCC       MSE     n\n";
  for (const auto& [t, m] : metrics) {
    auto cell = [](const std::optional<double>& v) {
      std::string s = v ? fixed(*v, 3) : "n/a";
      return std::string(8 - std::min<size_t>(8, s.size()), ' ') + s;
    };
    std::string mse_s = fixed(m.mse, 4);
    out << target_name(t) << "      " << cell(m.lcc) << " " << cell(m.srcc) << " "
        << std::string(9 - std::min<size_t>(9, mse_s.size()), ' ') << mse_s << " "
        << std::string(5 - std::min<size_t>(5, std::to_string(m.n).size()), ' ') << m.n << "\n";
  }
}

ordered_json metrics_json(const std::map<Target, TargetMetrics>& metrics) {
  ordered_json j = ordered_json::object();
  for (const auto& [t, m] : metrics) {
    ordered_json e;
    e["lcc"] = m.lcc ? ordered_json(*m.lcc) : ordered_json(nullptr);
    e["srcc"] = m.srcc ? ordered_json(*m.srcc) : ordered_json(nullptr);
    e["mse"] = m.mse;
    e["n"] = m.n;
    j[std::string(target_name(t))] = e;
  }
  return j;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

/// Fills features.ssl_dim from the embeddings when the SSL branch is on.
void resolve_ssl(ModelConfig& model, const std::vector<ManifestRecord>& records,
                 const std::string& emb_dir) {
  if (!model.features.branches.contains(Branch::SSL)) return;
  if (emb_dir.empty())
    throw Error("the ssl feature branch needs --embeddings-dir (or features.branches=ps,lfb)");
  const int dim = probe_embedding_dim(records, emb_dir);
  if (model.features.ssl_dim == 0) model.features.ssl_dim = dim;
}

PairsByTarget predict_pairs(const std::vector<TrainItem>& items, const Checkpoint* ckpt,
                            const TargetSet& targets, std::ostream& err) {
  PairsByTarget pairs;
  size_t done = 0;
  for (const auto& item : items) {
    std::optional<ForwardOutput> out;
    if (ckpt) out = predict(item.input, *ckpt);
    for (Target t : targets.list()) {
      const auto label = item.labels.get(t);
      if (!label)
        throw Error("utterance " + item.utt_id + " has no " + std::string(target_name(t)) +
                    " label");
      const double p = out ? out->at(t).utt_score : *label;
      pairs[t].push_back({item.utt_id, *label, p});
    }
    if (++done % 100 == 0) err << "evaluated " << done << "/" << items.size() << "\n";
  }
  return pairs;
}

// ---------------------------------------------------------------- gen-synth

int cmd_gen_synth(const CommonArgs& common, const std::string& out_dir, std::ostream& out) {
  const Config cfg = load_config(common);
  const SynthConfig synth = SynthConfig::from_config(cfg);
  const SynthResult r = gen_synthetic(synth, out_dir);
  size_t n_test = 0;
  for (const auto& rec : r.records) n_test += rec.split == Split::test;
  out << "wrote " << r.records.size() << " utterances (" << r.records.size() - n_test
      << " train / " << n_test << " test) to " << out_dir << "\n";
  out << "manifest: " << r.manifest_path.string() << "\n";
  if (!r.embeddings_dir.empty()) out << "embeddings: " << r.embeddings_dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- extract

int cmd_extract(const CommonArgs& common, const std::string& manifest_path,
                const std::string& features, const std::string& ckpt_path,
                const std::string& out_dir, std::ostream& out, std::ostream& err) {
  Config cfg = load_config(common);
  ModelConfig model = ModelConfig::from_config(cfg);
  Matrix bank;
  if (!ckpt_path.empty()) {
    const Checkpoint ckpt = read_checkpoint(ckpt_path);
    model.features.stft = ckpt.model.features.stft;
    model.features.sample_rate = ckpt.model.features.sample_rate;
    model.features.n_filters = ckpt.model.features.n_filters;
    model.features.floor_eps = ckpt.model.features.floor_eps;
    if (ckpt.params.contains("lfb.weights")) bank = ckpt.params.at("lfb.weights");
  }
  const BranchSet branches = BranchSet::parse(features);
  if (branches.contains(Branch::SSL))
    throw Error("extract caches ps and lfb only; ssl embeddings come from the sidecar");
  const FeatureLayout& layout = model.features;
  layout.stft.validate();
  if (branches.contains(Branch::LFB) && bank.size() == 0)
    bank = lfb_init(layout.n_filters, layout.stft, layout.sample_rate).weights;

  const Manifest manifest = load_manifest(manifest_path);
  for (const auto& w : manifest.warnings) err << "warning: " << w << "\n";
  fs::create_directories(out_dir);
  const uint32_t rate = hz_to_mhz(static_cast<double>(layout.sample_rate) / layout.stft.hop_length);
  size_t done = 0;
  for (const auto& rec : manifest.records) {
    const Waveform wave = read_wav(rec.wav_path);
    if (wave.sample_rate != layout.sample_rate)
      throw Error(rec.wav_path.string() + ": sample rate " + std::to_string(wave.sample_rate) +
                  " Hz, expected " + std::to_string(layout.sample_rate) + " Hz");
    const PowerSpectrogram ps = stft_power(wave, layout.stft);
    if (branches.contains(Branch::PS)) {
      EmbeddingSeq seq{ps.frames.cast<float>(), rate, "ps"};
      write_embeddings(seq, fs::path(out_dir) / (rec.utt_id + ".ps.mtie"));
    }
    if (branches.contains(Branch::LFB)) {
      const Matrix lfb = lfb_forward(ps.frames, bank, layout.floor_eps);
      EmbeddingSeq seq{lfb.cast<float>(), rate, ckpt_path.empty() ? "lfb:init" : "lfb:trained"};
      write_embeddings(seq, fs::path(out_dir) / (rec.utt_id + ".lfb.mtie"));
    }
    if (++done % 100 == 0) err << "extracted " << done << "/" << manifest.records.size() << "\n";
  }
  out << "extracted " << branches.to_string() << " features for " << done << " utterances to "
      << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string manifest;
  std::string embeddings_dir;
  std::string targets;
  std::string features;
  std::string warm_start;
  std::string out = "model.mtic";
  std::string log;
};

int cmd_train(const CommonArgs& common, const TrainArgs& args, std::ostream& out,
              std::ostream& err) {
  Config cfg = load_config(common);
  if (!args.targets.empty()) cfg.set("model.targets", TargetSet::parse(args.targets).to_string());
  if (!args.features.empty())
    cfg.set("features.branches", BranchSet::parse(args.features).to_string());

  ModelConfig model = ModelConfig::from_config(cfg);
  const LossConfig loss = LossConfig::from_config(cfg);
  const OptimConfig optim = OptimConfig::from_config(cfg);

  const Manifest manifest = load_manifest(args.manifest);
  for (const auto& w : manifest.warnings) err << "warning: " << w << "\n";
  const auto records = manifest.with_split(Split::train);
  if (records.empty()) throw Error(args.manifest + ": no split=train records");
  resolve_ssl(model, records, args.embeddings_dir);
  model.validate();

  std::optional<Checkpoint> warm;
  if (!args.warm_start.empty()) warm = read_checkpoint(args.warm_start);

  err << "loading " << records.size() << " training utterances\n";
  const auto items = load_items(records, model.features, args.embeddings_dir);

  const std::string log_path = args.log.empty() ? args.out + ".log.jsonl" : args.log;
  std::string log_text;
  const auto on_epoch = [&](const EpochLog& e) {
    log_text += e.to_json() + "\n";
    err << "epoch " << e.epoch << "/" << optim.epochs << "  O=" << fixed(e.objective, 5);
    for (const auto& [t, v] : e.val_lcc)
      err << "  val_lcc_" << target_name(t) << "=" << (v ? fixed(*v, 4) : "n/a");
    err << "\n";
  };
  TrainResult result =
      train(items, model, loss, optim, warm ? &*warm : nullptr, on_epoch);

  if (!result.transfer.copied.empty())
    err << "warm start: copied " << result.transfer.copied.size() << " tensors, "
        << result.transfer.fresh.size() << " freshly initialized\n";
  if (fs::path(args.out).has_parent_path()) fs::create_directories(fs::path(args.out).parent_path());
  write_checkpoint(result.best, args.out);
  write_text_atomic(log_path, log_text);

  // Validation table for the selected checkpoint.
  std::vector<TrainItem> val;
  for (const auto& item : items)
    if (std::find(result.val_ids.begin(), result.val_ids.end(), item.utt_id) !=
        result.val_ids.end())
      val.push_back(item);
  const PairsByTarget pairs = predict_pairs(val, &result.best, model.targets, err);
  std::map<Target, TargetMetrics> metrics;
  for (const auto& [t, list] : pairs) metrics[t] = score(list);
  out << "validation (" << val.size() << " utterances, best epoch " << result.best_epoch << ")\n";
  print_table(out, metrics);
  out << "checkpoint: " << args.out << "\n";
  out << "log: " << log_path << "\n";
  if (result.diverged) {
    err << "error: " << one_line(result.message) << "; kept the last good checkpoint\n";
    return 2;
  }
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string ckpt;
  std::string manifest;
  std::string embeddings_dir;
  std::string out_json;
  std::string out_csv;
  std::string targets;
  bool oracle = false;
};

int cmd_eval(const CommonArgs& common, const EvalArgs& args, std::ostream& out,
             std::ostream& err) {
  const Config cfg = load_config(common);
  std::optional<Checkpoint> ckpt;
  if (!args.ckpt.empty()) ckpt = read_checkpoint(args.ckpt);
  if (!ckpt && !args.oracle) throw Error("eval needs --ckpt (or --oracle)");

  const Manifest manifest = load_manifest(args.manifest);
  for (const auto& w : manifest.warnings) err << "warning: " << w << "\n";
  const auto records = manifest.with_split(Split::test);
  if (records.empty()) throw Error(args.manifest + ": empty test split");

  TargetSet targets = ckpt ? ckpt->model.targets
                           : TargetSet::parse(cfg.get("model.targets", "I,W,S"));
  if (!args.targets.empty()) {
    const TargetSet requested = TargetSet::parse(args.targets);
    for (Target t : requested.list())
      if (!targets.contains(t))
        throw Error("target " + std::string(target_name(t)) + " is not active in the checkpoint");
    targets = requested;
  }

  std::vector<TrainItem> items;
  if (ckpt && !args.oracle) {
    items = load_items(records, ckpt->model.features, args.embeddings_dir);
  } else {
    for (const auto& rec : records) items.push_back({rec.utt_id, {}, rec.labels});
  }
  const PairsByTarget pairs =
      predict_pairs(items, args.oracle ? nullptr : (ckpt ? &*ckpt : nullptr), targets, err);

  std::map<Target, TargetMetrics> metrics;
  for (const auto& [t, list] : pairs) {
    metrics[t] = score(list);
    if (!metrics[t].lcc)
      err << "warning: " << target_name(t) << ": correlation undefined (constant input)\n";
  }
  print_table(out, metrics);
  const std::string json = metrics_json(metrics).dump(2) + "\n";
  if (!args.out_json.empty()) write_text_atomic(args.out_json, json);
  if (!args.out_csv.empty()) {
    if (fs::path(args.out_csv).has_parent_path())
      fs::create_directories(fs::path(args.out_csv).parent_path());
    write_pairs_csv(args.out_csv, pairs);
  }
  return 0;
}

// ---------------------------------------------------------------- predict

int cmd_predict(const std::string& ckpt_path, const std::string& wav_path,
                const std::string& emb_path, bool frames, std::ostream& out) {
  const Checkpoint ckpt = read_checkpoint(ckpt_path);
  const Waveform wave = read_wav(wav_path);
  std::optional<EmbeddingSeq> emb;
  if (ckpt.model.features.branches.contains(Branch::SSL)) {
    if (emb_path.empty()) throw Error("this checkpoint uses ssl features; pass --embeddings");
    emb = read_embeddings(fs::path(emb_path));
  }
  const UtteranceInput input = prepare_input(wave, ckpt.model.features, emb ? &*emb : nullptr);
  const ForwardOutput pred = predict(input, ckpt);
  ordered_json j = ordered_json::object();
  for (const auto& [t, s] : pred.tasks) {
    if (frames) {
      ordered_json e;
      e["utterance"] = s.utt_score;
      e["frames"] = std::vector<double>(s.frame_scores.data(),
                                        s.frame_scores.data() + s.frame_scores.size());
      j[std::string(target_name(t))] = e;
    } else {
      j[std::string(target_name(t))] = s.utt_score;
    }
  }
  out << j.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------- scatter

int cmd_scatter(const std::string& csv, std::string prefix, const ScatterStyle& style,
                std::ostream& out, std::ostream& err) {
  const PairsByTarget pairs = read_pairs_csv(csv);
  if (pairs.empty()) throw Error(csv + ": no rows");
  if (prefix.size() > 4 && prefix.substr(prefix.size() - 4) == ".svg")
    prefix.resize(prefix.size() - 4);
  for (const auto& [t, list] : pairs) {
    std::vector<std::string> warnings;
    const std::string svg = render_scatter(list, t, style, &warnings);
    for (const auto& w : warnings) err << "warning: " << target_name(t) << ": " << w << "\n";
    const std::string path = prefix + "_" + std::string(target_name(t)) + ".svg";
    write_text_atomic(path, svg);
    out << "wrote " << path << " (" << list.size() << " points)\n";
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-target non-intrusive intelligibility prediction", "mti"};
  app.require_subcommand(1, 1);

  CommonArgs common;

  auto* gen = app.add_subcommand("gen-synth", "generate the synthetic desk-scale corpus");
  std::string gen_out;
  add_common(gen, common);
  gen->add_option("--out", gen_out, "output directory")->required();

  auto* ext = app.add_subcommand("extract", "cache ps/lfb features as MTIE files");
  std::string ext_manifest, ext_features = "ps,lfb", ext_out, ext_ckpt;
  add_common(ext, common);
  ext->add_option("--manifest", ext_manifest)->required();
  ext->add_option("--features", ext_features, "branches to cache (ps,lfb)");
  ext->add_option("--ckpt", ext_ckpt, "take the LFB bank and STFT settings from a checkpoint");
  ext->add_option("--out", ext_out, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train a model");
  TrainArgs targs;
  add_common(tr, common);
  tr->add_option("--manifest", targs.manifest)->required();
  tr->add_option("--embeddings-dir", targs.embeddings_dir, "directory of <utt_id>.mtie files");
  tr->add_option("--targets", targs.targets, "active targets, e.g. I or I,W,S");
  tr->add_option("--features", targs.features, "feature branches, e.g. ps,lfb,ssl or cs");
  tr->add_option("--warm-start", targs.warm_start, "checkpoint to transfer matching tensors from");
  tr->add_option("--out", targs.out, "checkpoint path");
  tr->add_option("--log", targs.log, "JSONL epoch log (default <out>.log.jsonl)");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  EvalArgs eargs;
  add_common(ev, common);
  ev->add_option("--ckpt", eargs.ckpt);
  ev->add_option("--manifest", eargs.manifest)->required();
  ev->add_option("--embeddings-dir", eargs.embeddings_dir);
  ev->add_option("--out-json", eargs.out_json);
  ev->add_option("--out-csv", eargs.out_csv);
  ev->add_option("--targets", eargs.targets, "subset of the checkpoint's targets to report");
  ev->add_flag("--oracle", eargs.oracle, "score the labels against themselves");

  auto* pr = app.add_subcommand("predict", "score one utterance");
  std::string p_ckpt, p_wav, p_emb;
  bool p_frames = false;
  pr->add_option("--ckpt", p_ckpt)->required();
  pr->add_option("--wav", p_wav)->required();
  pr->add_option("--embeddings", p_emb, "MTIE file for the ssl branch");
  pr->add_flag("--frames", p_frames, "include frame-level scores");

  auto* sc = app.add_subcommand("scatter", "render truth-vs-prediction SVGs from an eval CSV");
  std::string s_csv, s_out;
  ScatterStyle style;
  sc->add_option("--csv", s_csv)->required();
  sc->add_option("--out-svg", s_out, "output prefix; writes <prefix>_<target>.svg")->required();
  sc->add_option("--width", style.width)->check(CLI::Range(100, 10000));
  sc->add_option("--height", style.height)->check(CLI::Range(100, 10000));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e, out, err);
    }
    err << "error: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_synth(common, gen_out, out);
    if (ext->parsed())
      return cmd_extract(common, ext_manifest, ext_features, ext_ckpt, ext_out, out, err);
    if (tr->parsed()) return cmd_train(common, targs, out, err);
    if (ev->parsed()) return cmd_eval(common, eargs, out, err);
    if (pr->parsed()) return cmd_predict(p_ckpt, p_wav, p_emb, p_frames, out);
    if (sc->parsed()) return cmd_scatter(s_csv, s_out, style, out, err);
  } catch (const Error& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << one_line(e.what()) << "\n";
    return 3;
  }
  err << "internal error: no subcommand ran\n";
  return 3;
}

}  // namespace mti
