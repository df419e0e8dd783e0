#include "uws/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "uws/align.hpp"
#include "uws/eval.hpp"
#include "uws/units_post.hpp"

namespace uws {

namespace fs = std::filesystem;
using nlohmann::json;

static constexpr const char *kVersion = "0.1.0";

std::string to_string(Discretizer d) {
  switch (d) {
    case Discretizer::kHmm: return "hmm";
    case Discretizer::kShmm: return "shmm";
    case Discretizer::kHshmm: return "hshmm";
    case Discretizer::kVqvae: return "vqvae";
    case Discretizer::kGold: return "gold";
  }
  return "?";
}
std::string to_string(PostMode p) {
  return p == PostMode::kRaw ? "raw" : "plus_sil";
}
std::string to_string(UwsModel u) {
  switch (u) {
    case UwsModel::kDpseg: return "dpseg";
    case UwsModel::kAlign: return "align";
    case UwsModel::kNone: return "none";
  }
  return "?";
}

template <typename T>
static T parse_enum(const std::string &s,
                    const std::vector<std::pair<std::string, T>> &table,
                    const std::string &what) {
  for (const auto &[name, value] : table)
    if (name == s) return value;
  throw Error("config: unknown " + what + " '" + s + "'");
}

static Discretizer parse_discretizer(const std::string &s) {
  return parse_enum<Discretizer>(s,
                                 {{"hmm", Discretizer::kHmm},
                                  {"shmm", Discretizer::kShmm},
                                  {"hshmm", Discretizer::kHshmm},
                                  {"vqvae", Discretizer::kVqvae},
                                  {"gold", Discretizer::kGold}},
                                 "discretizer");
}
static PostMode parse_post(const std::string &s) {
  return parse_enum<PostMode>(
      s, {{"raw", PostMode::kRaw}, {"plus_sil", PostMode::kPlusSil},
          {"plus-sil", PostMode::kPlusSil}},
      "post mode");
}
static UwsModel parse_uws(const std::string &s) {
  return parse_enum<UwsModel>(s,
                              {{"dpseg", UwsModel::kDpseg},
                               {"align", UwsModel::kAlign},
                               {"none", UwsModel::kNone}},
                              "uws model");
}

void PipelineConfig::validate_with(const CorpusManifest &manifest) const {
  if (output_dir.empty()) throw Error("config: output_dir not set");
  if (uws == UwsModel::kAlign && alignments_path.empty()) {
    for (const Utterance &u : manifest.utterances)
      if (!u.translation || u.translation->empty())
        throw Error("config: uws=align needs translations (utterance '" +
                    u.id + "' has none)");
  }
  if (discretizer == Discretizer::kGold) {
    for (const Utterance &u : manifest.utterances)
      if (!u.gold_units_path)
        throw Error("config: discretizer=gold needs gold_units_path "
                    "(utterance '" + u.id + "' has none)");
  }
  if (discretizer == Discretizer::kShmm && subspace_path.empty())
    throw Error("config: discretizer=shmm needs subspace_path");
  if (discretizer == Discretizer::kHshmm && hier_subspace_path.empty())
    throw Error("config: discretizer=hshmm needs hier_subspace_path");
}

PipelineConfig load_pipeline_config(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw Error("load_pipeline_config: cannot open '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error &e) {
    throw Error("load_pipeline_config: " + path.string() + ": " + e.what());
  }
  const fs::path base = path.has_parent_path() ? path.parent_path() : ".";
  auto resolve = [&](const std::string &p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
  };

  PipelineConfig cfg;
  try {
    cfg.manifest_path = resolve(doc.at("manifest").get<std::string>());
    cfg.discretizer = parse_discretizer(doc.value("discretizer", "gold"));
    cfg.post = parse_post(doc.value("post", "raw"));
    cfg.uws = parse_uws(doc.value("uws", "dpseg"));
    cfg.output_dir = resolve(doc.value("output_dir", ""));
    cfg.seed = doc.value("seed", 0ull);
    cfg.bpe_vocab = doc.value("bpe_vocab", 0);

    if (doc.contains("features")) {
      const json &jf = doc["features"];
      cfg.features.sample_rate_hz =
          jf.value("sample_rate_hz", cfg.features.sample_rate_hz);
      cfg.features.n_mels = jf.value("n_mels", cfg.features.n_mels);
      cfg.features.n_ceps = jf.value("n_ceps", cfg.features.n_ceps);
      cfg.features.n_fft = jf.value("n_fft", cfg.features.n_fft);
      cfg.features.add_deltas = jf.value("deltas", cfg.features.add_deltas);
    }
    if (doc.contains("aud")) {
      const json &ja = doc["aud"];
      cfg.aud.n_units = ja.value("units", cfg.aud.n_units);
      cfg.aud.n_states = ja.value("states", cfg.aud.n_states);
      cfg.aud.n_components = ja.value("components", cfg.aud.n_components);
      cfg.aud.n_iters = ja.value("iters", cfg.aud.n_iters);
      cfg.aud.use_silence_unit =
          ja.value("silence_unit", cfg.aud.use_silence_unit);
      cfg.aud.mstep_grad_steps =
          ja.value("mstep_grad_steps", cfg.aud.mstep_grad_steps);
      if (ja.contains("subspace"))
        cfg.subspace_path = resolve(ja["subspace"].get<std::string>());
      if (ja.contains("hier_subspace"))
        cfg.hier_subspace_path =
            resolve(ja["hier_subspace"].get<std::string>());
    }
    if (doc.contains("vq")) {
      const json &jv = doc["vq"];
      cfg.vq.n_units = jv.value("units", cfg.vq.n_units);
      cfg.vq.epochs = jv.value("epochs", cfg.vq.epochs);
      cfg.vq.latent_dim = jv.value("latent_dim", cfg.vq.latent_dim);
      cfg.vq.hidden_dim = jv.value("hidden_dim", cfg.vq.hidden_dim);
      cfg.vq.learning_rate = jv.value("learning_rate", cfg.vq.learning_rate);
    }
    if (doc.contains("dpseg")) {
      const json &jd = doc["dpseg"];
      cfg.dpseg.alpha0 = jd.value("alpha0", cfg.dpseg.alpha0);
      cfg.dpseg.p_boundary = jd.value("p_boundary", cfg.dpseg.p_boundary);
      cfg.dpseg.n_sweeps = jd.value("sweeps", cfg.dpseg.n_sweeps);
      cfg.dpseg.max_len = jd.value("max_len", cfg.dpseg.max_len);
    }
    if (doc.contains("align")) {
      const json &jl = doc["align"];
      if (jl.contains("alignments"))
        cfg.alignments_path = resolve(jl["alignments"].get<std::string>());
      cfg.align_noise = jl.value("noise", cfg.align_noise);
    }
    if (doc.contains("eval"))
      cfg.eval_tolerance_s = doc["eval"].value("tolerance_ms", 20.0) / 1000.0;
  } catch (const json::exception &e) {
    throw Error("load_pipeline_config: " + path.string() + ": " + e.what());
  }
  return cfg;
}

std::string pipeline_config_json(const PipelineConfig &cfg) {
  json doc;
  doc["manifest"] = cfg.manifest_path;
  doc["discretizer"] = to_string(cfg.discretizer);
  doc["post"] = to_string(cfg.post);
  doc["uws"] = to_string(cfg.uws);
  doc["output_dir"] = cfg.output_dir;
  doc["seed"] = cfg.seed;
  doc["bpe_vocab"] = cfg.bpe_vocab;
  doc["aud"] = {{"units", cfg.aud.n_units},
                {"states", cfg.aud.n_states},
                {"components", cfg.aud.n_components},
                {"iters", cfg.aud.n_iters},
                {"silence_unit", cfg.aud.use_silence_unit},
                {"mstep_grad_steps", cfg.aud.mstep_grad_steps},
                {"subspace", cfg.subspace_path},
                {"hier_subspace", cfg.hier_subspace_path}};
  doc["vq"] = {{"units", cfg.vq.n_units},
               {"epochs", cfg.vq.epochs},
               {"latent_dim", cfg.vq.latent_dim},
               {"hidden_dim", cfg.vq.hidden_dim},
               {"learning_rate", cfg.vq.learning_rate}};
  doc["dpseg"] = {{"alpha0", cfg.dpseg.alpha0},
                  {"p_boundary", cfg.dpseg.p_boundary},
                  {"sweeps", cfg.dpseg.n_sweeps},
                  {"max_len", cfg.dpseg.max_len}};
  doc["align"] = {{"alignments", cfg.alignments_path},
                  {"noise", cfg.align_noise}};
  doc["eval"] = {{"tolerance_ms", cfg.eval_tolerance_s * 1000.0}};
  return doc.dump(2);
}

// --------------------------------------------------------------------------
// Run machinery.

namespace {

class LockFile {
 public:
  explicit LockFile(const fs::path &path) : path_(path) {
    fd_ = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw StageError("lock", "run directory '" +
                                   path.parent_path().string() +
                                   "' is locked by another writer");
  }
  ~LockFile() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  LockFile(const LockFile &) = delete;
  LockFile &operator=(const LockFile &) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

std::string file_bytes(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fingerprint(const std::string &stage, const std::string &config,
                        const std::vector<fs::path> &inputs) {
  std::string payload = stage + "\n" + config + "\n";
  for (const fs::path &p : inputs) payload += hex64(fnv1a64(file_bytes(p)));
  return hex64(fnv1a64(payload));
}

bool stage_done(const fs::path &run_dir, const std::string &stage,
                const std::string &fp, const std::vector<fs::path> &outputs) {
  const fs::path fp_file = run_dir / (stage + ".fp");
  if (!fs::exists(fp_file)) return false;
  for (const fs::path &out : outputs)
    if (!fs::exists(out)) return false;
  std::ifstream in(fp_file);
  std::string stored;
  in >> stored;
  return stored == fp;
}

void mark_stage(const fs::path &run_dir, const std::string &stage,
                const std::string &fp) {
  std::ofstream out(run_dir / (stage + ".fp"));
  out << fp << "\n";
}

std::map<std::string, UnitSequence> by_id(std::vector<UnitSequence> seqs) {
  std::map<std::string, UnitSequence> out;
  for (UnitSequence &s : seqs) out.emplace(s.utterance_id, std::move(s));
  return out;
}

json prf_json(const PrfCounts &c) {
  return json{{"precision", c.precision()},
              {"recall", c.recall()},
              {"fscore", c.fscore()},
              {"hits", c.hits},
              {"hyp", c.hyp},
              {"gold", c.gold}};
}

}  // namespace

RunReport run_pipeline(const PipelineConfig &cfg) {
  const fs::path run_dir = cfg.output_dir;
  fs::create_directories(run_dir);
  LockFile lock(run_dir / ".lock");

  CorpusManifest manifest = load_manifest(cfg.manifest_path);
  cfg.validate_with(manifest);
  const std::string config_json = pipeline_config_json(cfg);
  {
    std::ofstream out(run_dir / "config.json");
    out << config_json;
  }

  // --- features ------------------------------------------------------------
  bool needs_features = false;
  for (const Utterance &u : manifest.utterances)
    if (!u.feature_path) needs_features = true;
  if (needs_features) {
    const std::string fp =
        fingerprint("features", config_json, {cfg.manifest_path});
    const fs::path out_manifest = run_dir / "manifest.json";
    if (!stage_done(run_dir, "features", fp, {out_manifest})) {
      try {
        fs::create_directories(run_dir / "feats");
        for (Utterance &u : manifest.utterances) {
          if (u.feature_path) continue;
          if (!u.audio_path)
            throw Error("utterance '" + u.id +
                        "' has neither features nor audio");
          FrameSequence seq = wav_to_frames(*u.audio_path, cfg.features);
          seq.utterance_id = u.id;
          seq = cmvn(seq);
          const fs::path fpath = run_dir / "feats" / (u.id + ".uwsf");
          write_features(seq, fpath);
          u.feature_path = fpath.string();
        }
        save_manifest(manifest, out_manifest);
        mark_stage(run_dir, "features", fp);
      } catch (const Error &e) {
        throw StageError("features", e.what());
      }
    } else {
      manifest = load_manifest(out_manifest);
    }
  }

  // --- discretize ----------------------------------------------------------
  const fs::path units_raw_path = run_dir / "units_raw.txt";
  {
    const std::string fp =
        fingerprint("discretize", config_json, {cfg.manifest_path});
    if (!stage_done(run_dir, "discretize", fp, {units_raw_path})) {
      try {
        std::vector<UnitSequence> raw;
        if (cfg.discretizer == Discretizer::kGold) {
          std::map<std::string, UnitSequence> gold;
          std::set<std::string> loaded;
          for (const Utterance &u : manifest.utterances) {
            if (!loaded.insert(*u.gold_units_path).second) continue;
            for (UnitSequence &s : read_units_file(*u.gold_units_path))
              gold.emplace(s.utterance_id, std::move(s));
          }
          for (const Utterance &u : manifest.utterances) {
            auto it = gold.find(u.id);
            if (it == gold.end())
              throw Error("no gold units for utterance '" + u.id + "'");
            raw.push_back(it->second);
          }
        } else if (cfg.discretizer == Discretizer::kVqvae) {
          std::vector<FrameSequence> feats = load_corpus_features(manifest);
          VqVaeTrainConfig vq_cfg = cfg.vq;
          vq_cfg.seed = cfg.seed;
          const VqVaeTrainResult trained = vqvae_train(feats, vq_cfg);
          save_vqvae(trained.model, run_dir / "model.vq");
          for (const FrameSequence &f : feats) {
            std::vector<std::string> labels;
            for (int l : vqvae_encode_labels(f, trained.model))
              labels.push_back(std::to_string(l));
            raw.push_back(merge_windows(labels, f.hop_s, f.utterance_id));
          }
        } else {
          std::vector<FrameSequence> feats = load_corpus_features(manifest);
          std::vector<std::vector<TimeInterval>> silences;
          for (const Utterance &u : manifest.utterances)
            silences.push_back(u.silences);
          AudTrainConfig aud_cfg = cfg.aud;
          aud_cfg.seed = cfg.seed;
          PhoneLoop model;
          if (cfg.discretizer == Discretizer::kHmm) {
            model = train_hmm(feats, aud_cfg, silences).first;
          } else if (cfg.discretizer == Discretizer::kShmm) {
            const Subspace sub = load_subspace(cfg.subspace_path);
            model = train_shmm(feats, sub, aud_cfg).first;
          } else {
            const HierSubspace hier =
                load_hier_subspace(cfg.hier_subspace_path);
            model = train_hshmm(feats, hier, aud_cfg).model;
          }
          save_phone_loop(model, run_dir / "model.aud");
          for (const FrameSequence &f : feats)
            raw.push_back(viterbi_decode(f, model));
        }
        // The Bayesian models' own silence token never reaches UWS.
        for (UnitSequence &s : raw) s = strip_label(s, "sil");
        write_units_file(raw, units_raw_path, true);
        mark_stage(run_dir, "discretize", fp);
      } catch (const Error &e) {
        throw StageError("discretize", e.what());
      }
    }
  }

  // --- post-process ----------------------------------------------------------
  const fs::path units_post_path = run_dir / "units_post.txt";
  {
    const std::string fp =
        fingerprint("post", config_json, {units_raw_path});
    if (!stage_done(run_dir, "post", fp, {units_post_path})) {
      try {
        std::vector<UnitSequence> units = read_units_file(units_raw_path);
        if (cfg.post == PostMode::kPlusSil) {
          for (UnitSequence &s : units) {
            const Utterance *u = manifest.find(s.utterance_id);
            if (!u) throw Error("unknown utterance '" + s.utterance_id + "'");
            s = remove_silence_units(s, u->silences);
          }
        }
        if (cfg.bpe_vocab > 0) {
          const BpeModel bpe = bpe_learn(units, cfg.bpe_vocab);
          for (UnitSequence &s : units) s = bpe_apply(s, bpe);
        }
        write_units_file(units, units_post_path, true);
        mark_stage(run_dir, "post", fp);
      } catch (const Error &e) {
        throw StageError("post", e.what());
      }
    }
  }

  // --- word segmentation -----------------------------------------------------
  const fs::path seg_path = run_dir / "segmentation.txt";
  const fs::path seg_timed_path = run_dir / "segmentation_timed.txt";
  std::vector<UnitSequence> post_units = read_units_file(units_post_path);
  if (cfg.post == PostMode::kPlusSil)
    for (UnitSequence &s : post_units) s.variant = UnitVariant::kPlusSil;

  std::map<std::string, Segmentation> gold_words;
  {
    std::set<std::string> loaded;
    for (const Utterance &u : manifest.utterances) {
      if (!u.gold_words_path || !loaded.insert(*u.gold_words_path).second)
        continue;
      for (Segmentation &s : read_segmentation_file(*u.gold_words_path))
        gold_words.emplace(s.utterance_id, std::move(s));
    }
  }

  std::vector<Segmentation> hyp;
  if (cfg.uws != UwsModel::kNone) {
    const std::string fp = fingerprint("uws", config_json, {units_post_path});
    if (!stage_done(run_dir, "uws", fp, {seg_path, seg_timed_path})) {
      try {
        if (cfg.uws == UwsModel::kDpseg) {
          DpsegConfig dcfg = cfg.dpseg;
          dcfg.seed = cfg.seed;
          hyp = gibbs_segment(post_units, dcfg).segmentations;
        } else {
          std::map<std::string, AlignmentMatrix> mats;
          if (!cfg.alignments_path.empty()) {
            for (AlignmentMatrix &m : load_alignments(cfg.alignments_path))
              mats.emplace(m.utterance_id, std::move(m));
          } else {
            for (const Utterance &u : manifest.utterances) {
              auto it = gold_words.find(u.id);
              if (it == gold_words.end())
                throw Error("oracle alignments need gold words ('" + u.id +
                            "')");
              mats.emplace(u.id, oracle_alignments(it->second, *u.translation,
                                                   cfg.align_noise, cfg.seed));
            }
          }
          for (const UnitSequence &s : post_units) {
            auto it = mats.find(s.utterance_id);
            if (it == mats.end())
              throw Error("no alignment matrix for utterance '" +
                          s.utterance_id + "'");
            hyp.push_back(segment_from_alignment(s, it->second));
          }
        }
        // Silence boundaries are reintroduced before scoring.
        if (cfg.post == PostMode::kPlusSil)
          for (Segmentation &s : hyp) {
            const Utterance *u = manifest.find(s.utterance_id);
            s = reintroduce_silence(s, u->silences);
          }
        write_segmentation_file(hyp, seg_path, false);
        write_segmentation_file(hyp, seg_timed_path, true);
        mark_stage(run_dir, "uws", fp);
      } catch (const Error &e) {
        throw StageError("uws", e.what());
      }
    } else {
      hyp = read_segmentation_file(seg_timed_path);
    }
  }

  // --- report ----------------------------------------------------------------
  json report;
  try {
    report["condition"] = {{"discretizer", to_string(cfg.discretizer)},
                           {"post", to_string(cfg.post)},
                           {"uws", to_string(cfg.uws)}};
    const UnitStats stats = unit_stats(post_units, cfg.dpseg.max_len);
    report["unit_stats"] = {{"n_distinct_units", stats.n_distinct_units},
                            {"total_tokens", stats.total_tokens},
                            {"mean_seq_len", stats.mean_seq_len},
                            {"max_seq_len", stats.max_seq_len},
                            {"units_per_second", stats.units_per_second},
                            {"n_utterances", stats.n_utterances},
                            {"n_empty_utterances", stats.n_empty_utterances},
                            {"n_over_limit",
                             static_cast<int>(stats.over_limit.size())}};

    double fscore = 0.0;
    std::vector<Segmentation> gold;
    for (const Segmentation &h : hyp) {
      auto it = gold_words.find(h.utterance_id);
      if (it != gold_words.end()) gold.push_back(it->second);
    }
    if (cfg.uws != UwsModel::kNone && gold.size() == hyp.size() &&
        !hyp.empty()) {
      const BoundaryReport br = boundary_score(hyp, gold, cfg.eval_tolerance_s);
      report["boundary"] = prf_json(br.counts);
      fscore = br.fscore();
      const TypeReport tr = token_type_score(hyp, gold);
      report["token"] = prf_json(tr.token_counts);
      report["type"] = prf_json(tr.type_counts);
      report["type_token_ratio"] = tr.type_token_ratio;

      if (cfg.discretizer == Discretizer::kGold) {
        // Symbolic plane: boundaries as inter-token indices, tolerance 0.
        std::map<std::string, std::vector<double>> h_sym, g_sym;
        auto symbolic = [](const Segmentation &s) {
          std::vector<double> out;
          int pos = 0;
          for (int k = 0; k + 1 < s.n_words(); ++k) {
            pos += static_cast<int>(s.words[k].units.size());
            out.push_back(pos);
          }
          return out;
        };
        for (const Segmentation &s : hyp) h_sym[s.utterance_id] = symbolic(s);
        for (const Segmentation &s : gold) g_sym[s.utterance_id] = symbolic(s);
        report["boundary_symbolic"] =
            prf_json(boundary_score(h_sym, g_sym, 0.0).counts);
      }
    }
    report["provenance"] = {{"config_hash", hex64(fnv1a64(config_json))},
                            {"seed", cfg.seed},
                            {"version", kVersion}};

    RunReport out;
    out.report_json = report.dump(2) + "\n";
    out.boundary_fscore = fscore;
    out.run_dir = run_dir;
    std::ofstream rf(run_dir / "report.json");
    rf << out.report_json;
    return out;
  } catch (const Error &e) {
    throw StageError("report", e.what());
  }
}

ComparisonTable render_report(const std::vector<fs::path> &run_dirs) {
  std::map<std::string, std::map<std::string, std::string>> cells;
  std::set<std::string> columns;
  for (const fs::path &dir : run_dirs) {
    const fs::path rp = dir / "report.json";
    std::ifstream in(rp);
    if (!in) throw Error("render_report: cannot open '" + rp.string() + "'");
    json report = json::parse(in);
    const std::string row =
        report["condition"]["discretizer"].get<std::string>() + "/" +
        report["condition"]["post"].get<std::string>();
    const std::string col = report["condition"]["uws"].get<std::string>();
    std::string value = "-";
    if (report.contains("boundary"))
      value = report["boundary"]["fscore"].dump();
    cells[row][col] = value;
    columns.insert(col);
  }

  std::ostringstream md;
  md << "| discretizer/post |";
  for (const std::string &c : columns) md << ' ' << c << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) md << "---|";
  md << "\n";
  json jt;
  jt["columns"] = json::array();
  for (const std::string &c : columns) jt["columns"].push_back(c);
  jt["rows"] = json::object();
  for (const auto &[row, by_col] : cells) {
    md << "| " << row << " |";
    json jrow;
    for (const std::string &c : columns) {
      auto it = by_col.find(c);
      const std::string v = it == by_col.end() ? "-" : it->second;
      md << ' ' << v << " |";
      jrow[c] = v;
    }
    md << "\n";
    jt["rows"][row] = jrow;
  }
  return {md.str(), jt.dump(2) + "\n"};
}

// --------------------------------------------------------------------------
// Subspace files.

static void put_mat(std::ostream &out, const Eigen::MatrixXd &m) {
  const std::uint32_t r = static_cast<std::uint32_t>(m.rows());
  const std::uint32_t c = static_cast<std::uint32_t>(m.cols());
  out.write(reinterpret_cast<const char *>(&r), 4);
  out.write(reinterpret_cast<const char *>(&c), 4);
  for (std::uint32_t i = 0; i < r; ++i)
    for (std::uint32_t j = 0; j < c; ++j) {
      double v = m(i, j);
      out.write(reinterpret_cast<const char *>(&v), 8);
    }
}
static Eigen::MatrixXd get_mat(std::istream &in, const std::string &what) {
  std::uint32_t r = 0, c = 0;
  in.read(reinterpret_cast<char *>(&r), 4);
  in.read(reinterpret_cast<char *>(&c), 4);
  if (!in) throw Error("subspace file: truncated " + what);
  Eigen::MatrixXd m(r, c);
  for (std::uint32_t i = 0; i < r; ++i)
    for (std::uint32_t j = 0; j < c; ++j)
      in.read(reinterpret_cast<char *>(&m(i, j)), 8);
  if (!in) throw Error("subspace file: truncated " + what);
  return m;
}
static void put_layout(std::ostream &out, int s, int c, int d) {
  const std::uint32_t v[3] = {std::uint32_t(s), std::uint32_t(c),
                              std::uint32_t(d)};
  out.write(reinterpret_cast<const char *>(v), 12);
}
static void get_layout(std::istream &in, int &s, int &c, int &d) {
  std::uint32_t v[3];
  in.read(reinterpret_cast<char *>(v), 12);
  if (!in) throw Error("subspace file: truncated header");
  s = v[0];
  c = v[1];
  d = v[2];
}

void save_subspace(const Subspace &sub, const fs::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_subspace: cannot write '" + path.string() + "'");
  out.write("UWSS", 4);
  put_layout(out, sub.n_states, sub.n_components, sub.dim);
  put_mat(out, sub.w);
  put_mat(out, sub.b);
}

Subspace load_subspace(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_subspace: cannot open '" + path.string() + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "UWSS")
    throw Error("load_subspace: '" + path.string() + "': bad magic");
  Subspace sub;
  get_layout(in, sub.n_states, sub.n_components, sub.dim);
  sub.w = get_mat(in, "W");
  sub.b = get_mat(in, "b");
  return sub;
}

void save_hier_subspace(const HierSubspace &hier, const fs::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error("save_hier_subspace: cannot write '" + path.string() + "'");
  out.write("UWSH", 4);
  put_layout(out, hier.n_states, hier.n_components, hier.dim);
  const std::uint32_t n = static_cast<std::uint32_t>(hier.tw.size());
  out.write(reinterpret_cast<const char *>(&n), 4);
  for (std::uint32_t k = 0; k < n; ++k) {
    put_mat(out, hier.tw[k]);
    put_mat(out, hier.tb[k]);
  }
}

HierSubspace load_hier_subspace(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error("load_hier_subspace: cannot open '" + path.string() + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "UWSH")
    throw Error("load_hier_subspace: '" + path.string() + "': bad magic");
  HierSubspace hier;
  get_layout(in, hier.n_states, hier.n_components, hier.dim);
  std::uint32_t n = 0;
  in.read(reinterpret_cast<char *>(&n), 4);
  for (std::uint32_t k = 0; k < n; ++k) {
    hier.tw.push_back(get_mat(in, "M"));
    hier.tb.push_back(get_mat(in, "m"));
  }
  return hier;
}

}  // namespace uws
