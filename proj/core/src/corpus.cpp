#include "uws/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "uws/common.hpp"

namespace uws {

namespace fs = std::filesystem;
using nlohmann::json;

// --------------------------------------------------------------------------
// Type invariants.

void FrameSequence::validate() const {
  if (frames.rows() < 1)
    throw Error("FrameSequence '" + utterance_id + "': no frames");
  if (frames.cols() < 1)
    throw Error("FrameSequence '" + utterance_id + "': zero dimension");
  if (!frames.allFinite())
    throw Error("FrameSequence '" + utterance_id + "': non-finite values");
}

void UnitSequence::validate() const {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const UnitToken &t = tokens[i];
    if (t.end_s <= t.start_s)
      throw Error("UnitSequence '" + utterance_id + "': token " +
                  std::to_string(i) + " has end <= start");
    if (i > 0 && t.start_s < tokens[i - 1].end_s - 1e-9)
      throw Error("UnitSequence '" + utterance_id + "': token " +
                  std::to_string(i) + " overlaps predecessor");
  }
}

std::string Word::label() const {
  std::vector<std::string> labels;
  labels.reserve(units.size());
  for (const UnitToken &u : units) labels.push_back(u.label);
  return join(labels, '-');
}

int Segmentation::n_units() const {
  int n = 0;
  for (const Word &w : words) n += static_cast<int>(w.units.size());
  return n;
}

void CorpusManifest::validate() const {
  if (frame_rate_hz <= 0.0) throw Error("manifest: frame_rate_hz must be > 0");
  std::map<std::string, int> seen;
  for (const Utterance &u : utterances) {
    if (u.id.empty()) throw Error("manifest: utterance with empty id");
    if (++seen[u.id] > 1)
      throw Error("manifest: duplicate utterance id '" + u.id + "'");
    for (std::size_t i = 0; i < u.silences.size(); ++i) {
      const TimeInterval &s = u.silences[i];
      if (s.end_s <= s.start_s || s.start_s < 0.0)
        throw Error("manifest: utterance '" + u.id + "': bad silence interval");
      if (i > 0 && s.start_s < u.silences[i - 1].end_s)
        throw Error("manifest: utterance '" + u.id +
                    "': overlapping or unsorted silences");
    }
  }
}

const Utterance *CorpusManifest::find(const std::string &id) const {
  for (const Utterance &u : utterances)
    if (u.id == id) return &u;
  return nullptr;
}

// --------------------------------------------------------------------------
// Manifest JSON.

static std::string resolve_path(const std::string &p, const fs::path &base) {
  fs::path path(p);
  if (path.is_absolute()) return p;
  return (base / path).lexically_normal().string();
}

CorpusManifest load_manifest(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw Error("load_manifest: cannot open '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error &e) {
    throw Error("load_manifest: " + path.string() + ": " + e.what());
  }
  const fs::path base = path.has_parent_path() ? path.parent_path() : ".";

  CorpusManifest m;
  try {
    m.name = doc.value("name", std::string{});
    m.frame_rate_hz = doc.value("frame_rate_hz", 100.0);
    for (const json &ju : doc.value("utterances", json::array())) {
      Utterance u;
      u.id = ju.at("id").get<std::string>();
      if (ju.contains("audio_path"))
        u.audio_path = resolve_path(ju["audio_path"].get<std::string>(), base);
      if (ju.contains("feature_path"))
        u.feature_path =
            resolve_path(ju["feature_path"].get<std::string>(), base);
      if (ju.contains("translation"))
        u.translation = ju["translation"].get<std::vector<std::string>>();
      if (ju.contains("gold_units_path"))
        u.gold_units_path =
            resolve_path(ju["gold_units_path"].get<std::string>(), base);
      if (ju.contains("gold_words_path"))
        u.gold_words_path =
            resolve_path(ju["gold_words_path"].get<std::string>(), base);
      for (const json &js : ju.value("silences", json::array())) {
        if (!js.is_array() || js.size() != 2)
          throw Error("utterance '" + u.id + "': silence entry must be [s,e]");
        u.silences.push_back({js[0].get<double>(), js[1].get<double>()});
      }
      m.utterances.push_back(std::move(u));
    }
  } catch (const json::exception &e) {
    throw Error("load_manifest: " + path.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

void save_manifest(const CorpusManifest &m, const fs::path &path) {
  m.validate();
  json doc;
  doc["name"] = m.name;
  doc["frame_rate_hz"] = m.frame_rate_hz;
  json arr = json::array();
  for (const Utterance &u : m.utterances) {
    json ju;
    ju["id"] = u.id;
    if (u.audio_path) ju["audio_path"] = *u.audio_path;
    if (u.feature_path) ju["feature_path"] = *u.feature_path;
    if (u.translation) ju["translation"] = *u.translation;
    if (u.gold_units_path) ju["gold_units_path"] = *u.gold_units_path;
    if (u.gold_words_path) ju["gold_words_path"] = *u.gold_words_path;
    json silences = json::array();
    for (const TimeInterval &s : u.silences)
      silences.push_back(json::array({s.start_s, s.end_s}));
    ju["silences"] = silences;
    arr.push_back(std::move(ju));
  }
  doc["utterances"] = std::move(arr);
  std::ofstream out(path);
  if (!out) throw Error("save_manifest: cannot write '" + path.string() + "'");
  out << doc.dump(2) << "\n";
}

// --------------------------------------------------------------------------
// Feature binary format: "UWSF", u32 rows, u32 cols, f32 row-major payload,
// little-endian throughout.

static constexpr char kFeatureMagic[4] = {'U', 'W', 'S', 'F'};

void write_features(const FrameSequence &seq, const fs::path &path) {
  seq.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_features: cannot write '" + path.string() + "'");
  out.write(kFeatureMagic, 4);
  const std::uint32_t rows = static_cast<std::uint32_t>(seq.frames.rows());
  const std::uint32_t cols = static_cast<std::uint32_t>(seq.frames.cols());
  out.write(reinterpret_cast<const char *>(&rows), 4);
  out.write(reinterpret_cast<const char *>(&cols), 4);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      float v = seq.frames(r, c);
      out.write(reinterpret_cast<const char *>(&v), 4);
    }
  if (!out) throw Error("write_features: short write to '" + path.string() + "'");
}

FrameSequence read_features(const fs::path &path, double hop_s) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_features: cannot open '" + path.string() + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw Error("read_features: '" + path.string() + "': bad magic");
  std::uint32_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char *>(&rows), 4);
  in.read(reinterpret_cast<char *>(&cols), 4);
  if (!in || rows == 0 || cols == 0)
    throw Error("read_features: '" + path.string() + "': bad header");
  FrameSequence seq;
  seq.utterance_id = path.stem().string();
  seq.hop_s = hop_s;
  seq.frames.resize(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      float v;
      in.read(reinterpret_cast<char *>(&v), 4);
      if (!in)
        throw Error("read_features: '" + path.string() + "': truncated payload");
      seq.frames(r, c) = v;
    }
  seq.validate();
  return seq;
}

// --------------------------------------------------------------------------
// Unit and word text files.

static bool looks_timestamped(const std::string &tok) {
  return tok.find(':') != std::string::npos;
}

std::vector<UnitSequence> read_units_file(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw Error("read_units_file: cannot open '" + path.string() + "'");
  std::vector<UnitSequence> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    UnitSequence seq;
    seq.utterance_id = toks[0];
    for (std::size_t i = 1; i < toks.size(); ++i) {
      UnitToken t;
      if (looks_timestamped(toks[i])) {
        auto parts = split_on(toks[i], ':');
        if (parts.size() != 3)
          throw Error("read_units_file: " + path.string() + ":" +
                      std::to_string(lineno) + ": bad token '" + toks[i] + "'");
        t.label = parts[0];
        t.start_s = std::stod(parts[1]);
        t.end_s = std::stod(parts[2]);
      } else {
        t.label = toks[i];
        t.start_s = static_cast<double>(i - 1);
        t.end_s = static_cast<double>(i);
      }
      seq.tokens.push_back(std::move(t));
    }
    seq.validate();
    out.push_back(std::move(seq));
  }
  return out;
}

void write_units_file(const std::vector<UnitSequence> &seqs,
                      const fs::path &path, bool with_times) {
  std::ofstream out(path);
  if (!out) throw Error("write_units_file: cannot write '" + path.string() + "'");
  for (const UnitSequence &seq : seqs) {
    out << seq.utterance_id;
    for (const UnitToken &t : seq.tokens) {
      out << ' ' << t.label;
      if (with_times)
        out << ':' << format_seconds(t.start_s) << ':'
            << format_seconds(t.end_s);
    }
    out << '\n';
  }
}

std::vector<Segmentation> read_segmentation_file(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw Error("read_segmentation_file: cannot open '" + path.string() + "'");
  std::vector<Segmentation> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    Segmentation seg;
    seg.utterance_id = toks[0];
    int unit_pos = 0;
    for (std::size_t i = 1; i < toks.size(); ++i) {
      std::string body = toks[i];
      double start = 0.0, end = 0.0;
      bool timed = false;
      if (looks_timestamped(body)) {
        auto parts = split_on(body, ':');
        if (parts.size() != 3)
          throw Error("read_segmentation_file: " + path.string() + ":" +
                      std::to_string(lineno) + ": bad token '" + body + "'");
        body = parts[0];
        start = std::stod(parts[1]);
        end = std::stod(parts[2]);
        timed = true;
      }
      Word w;
      auto labels = split_on(body, '-');
      int n = static_cast<int>(labels.size());
      for (int k = 0; k < n; ++k) {
        UnitToken t;
        t.label = labels[k];
        if (timed) {
          // Interior unit times are not stored in word files; spread the
          // word span uniformly so only word edges are meaningful.
          t.start_s = start + (end - start) * k / n;
          t.end_s = start + (end - start) * (k + 1) / n;
        } else {
          t.start_s = unit_pos + k;
          t.end_s = unit_pos + k + 1;
        }
        w.units.push_back(std::move(t));
      }
      unit_pos += n;
      seg.words.push_back(std::move(w));
    }
    out.push_back(std::move(seg));
  }
  return out;
}

void write_segmentation_file(const std::vector<Segmentation> &segs,
                             const fs::path &path, bool with_times) {
  std::ofstream out(path);
  if (!out)
    throw Error("write_segmentation_file: cannot write '" + path.string() + "'");
  for (const Segmentation &seg : segs) {
    out << seg.utterance_id;
    for (const Word &w : seg.words) {
      out << ' ' << w.label();
      if (with_times)
        out << ':' << format_seconds(w.start_s()) << ':'
            << format_seconds(w.end_s());
    }
    out << '\n';
  }
}

// --------------------------------------------------------------------------
// Synthetic corpus generation.

static int label_to_unit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'z') return 10 + (c - 'a');
  if (c >= 'A' && c <= 'Z') return 36 + (c - 'A');
  return -1;
}

void SyntheticSpec::validate() const {
  if (n_units < 1 || n_units > 62) throw Error("SyntheticSpec: n_units out of range");
  if (unit_hmm_states < 1) throw Error("SyntheticSpec: unit_hmm_states < 1");
  if (feature_dim < 1) throw Error("SyntheticSpec: feature_dim < 1");
  if (lexicon.empty()) throw Error("SyntheticSpec: empty lexicon");
  if (word_dist.size() != lexicon.size())
    throw Error("SyntheticSpec: word_dist size mismatch");
  double sum = 0.0;
  for (double p : word_dist) {
    if (p < 0.0) throw Error("SyntheticSpec: negative word probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw Error("SyntheticSpec: word_dist must sum to 1");
  if (min_words < 1 || max_words < min_words)
    throw Error("SyntheticSpec: bad utterance length range");
  if (n_utterances < 1) throw Error("SyntheticSpec: n_utterances < 1");
  if (silence_prob < 0.0 || silence_prob > 1.0)
    throw Error("SyntheticSpec: silence_prob out of [0,1]");
  for (const std::string &w : lexicon) parse_word(w);
}

std::vector<int> SyntheticSpec::parse_word(const std::string &word) const {
  if (word.empty()) throw Error("SyntheticSpec: empty lexicon word");
  std::vector<int> units;
  for (char c : word) {
    int u = label_to_unit(c);
    if (u < 0 || u >= n_units)
      throw Error("SyntheticSpec: lexicon word '" + word +
                  "' uses label outside [0, n_units)");
    units.push_back(u);
  }
  return units;
}

// State means live on an integer lattice scaled so that adjacent lattice
// points are exactly mean_separation_sigmas * sigma apart.
static SyntheticParams make_params(const SyntheticSpec &spec) {
  SyntheticParams params;
  params.sigma = spec.emission_sigma;
  const int total = spec.n_units * spec.unit_hmm_states + 1;  // + silence
  const int dim = spec.feature_dim;
  const int base = std::max(2, static_cast<int>(std::ceil(
                                   std::pow(double(total), 1.0 / dim))));
  const double sep = spec.mean_separation_sigmas * spec.emission_sigma;
  auto lattice_point = [&](int index) {
    Eigen::VectorXd v(dim);
    for (int d = 0; d < dim; ++d) {
      v[d] = sep * (index % base - (base - 1) * 0.5);
      index /= base;
    }
    return v;
  };
  int next = 0;
  params.means.resize(spec.n_units + 1);
  for (int u = 0; u <= spec.n_units; ++u) {
    int states = (u == spec.n_units) ? 1 : spec.unit_hmm_states;
    for (int s = 0; s < states; ++s)
      params.means[u].push_back(lattice_point(next++));
  }
  return params;
}

SyntheticCorpus generate_synthetic(const SyntheticSpec &spec) {
  spec.validate();
  SyntheticCorpus corpus;
  corpus.params = make_params(spec);
  corpus.manifest.name = "synthetic";
  corpus.manifest.frame_rate_hz = spec.frame_rate_hz;

  Rng rng(spec.seed);
  const double hop = 1.0 / spec.frame_rate_hz;

  auto sample_word = [&]() {
    double r = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < spec.word_dist.size(); ++i) {
      acc += spec.word_dist[i];
      if (r < acc) return static_cast<int>(i);
    }
    return static_cast<int>(spec.word_dist.size() - 1);
  };
  auto state_duration = [&]() {
    int d = 1;
    while (d < 30 && rng.uniform() < spec.state_self_loop_prob) ++d;
    return d;
  };

  for (int ui = 0; ui < spec.n_utterances; ++ui) {
    Utterance utt;
    utt.id = "u" + std::to_string(ui);

    int n_words =
        spec.min_words +
        static_cast<int>(rng.index(spec.max_words - spec.min_words + 1));
    std::vector<int> word_ids;
    for (int w = 0; w < n_words; ++w) word_ids.push_back(sample_word());

    std::vector<Eigen::VectorXd> frames;
    UnitSequence gold_units;
    gold_units.utterance_id = utt.id;
    Segmentation gold_words;
    gold_words.utterance_id = utt.id;

    auto emit_silence = [&]() {
      if (spec.silence_prob <= 0.0 || rng.uniform() >= spec.silence_prob)
        return;
      double dur = rng.uniform(spec.silence_min_s, spec.silence_max_s);
      int n = std::max(1, static_cast<int>(std::lround(dur / hop)));
      TimeInterval iv;
      iv.start_s = frames.size() * hop;
      const Eigen::VectorXd &mean = corpus.params.means[spec.n_units][0];
      for (int f = 0; f < n; ++f) {
        Eigen::VectorXd x(spec.feature_dim);
        for (int d = 0; d < spec.feature_dim; ++d)
          x[d] = mean[d] + corpus.params.sigma * rng.gaussian();
        frames.push_back(std::move(x));
      }
      iv.end_s = frames.size() * hop;
      utt.silences.push_back(iv);
    };

    emit_silence();
    for (int w = 0; w < n_words; ++w) {
      Word word;
      for (int unit : spec.parse_word(spec.lexicon[word_ids[w]])) {
        UnitToken tok;
        tok.label = std::to_string(unit);
        tok.start_s = frames.size() * hop;
        for (int s = 0; s < spec.unit_hmm_states; ++s) {
          int dur = state_duration();
          const Eigen::VectorXd &mean = corpus.params.means[unit][s];
          for (int f = 0; f < dur; ++f) {
            Eigen::VectorXd x(spec.feature_dim);
            for (int d = 0; d < spec.feature_dim; ++d)
              x[d] = mean[d] + corpus.params.sigma * rng.gaussian();
            frames.push_back(std::move(x));
          }
        }
        tok.end_s = frames.size() * hop;
        gold_units.tokens.push_back(tok);
        word.units.push_back(std::move(tok));
      }
      gold_words.words.push_back(std::move(word));
      emit_silence();
    }

    FrameSequence seq;
    seq.utterance_id = utt.id;
    seq.hop_s = hop;
    seq.frames.resize(frames.size(), spec.feature_dim);
    for (std::size_t f = 0; f < frames.size(); ++f)
      seq.frames.row(f) = frames[f].cast<float>();

    utt.translation = std::vector<std::string>{};
    for (int id : word_ids) utt.translation->push_back("w" + std::to_string(id));

    corpus.manifest.utterances.push_back(std::move(utt));
    corpus.features.push_back(std::move(seq));
    corpus.gold_units.push_back(std::move(gold_units));
    corpus.gold_words.push_back(std::move(gold_words));
  }
  corpus.manifest.validate();
  return corpus;
}

void write_synthetic(const SyntheticCorpus &corpus, const fs::path &dir) {
  fs::create_directories(dir / "feats");
  CorpusManifest m = corpus.manifest;
  for (std::size_t i = 0; i < m.utterances.size(); ++i) {
    fs::path fp = dir / "feats" / (m.utterances[i].id + ".uwsf");
    write_features(corpus.features[i], fp);
    m.utterances[i].feature_path = fp.string();
    m.utterances[i].gold_units_path = (dir / "gold_units.txt").string();
    m.utterances[i].gold_words_path = (dir / "gold_words.txt").string();
  }
  write_units_file(corpus.gold_units, dir / "gold_units.txt", true);
  write_segmentation_file(corpus.gold_words, dir / "gold_words.txt", true);
  save_manifest(m, dir / "manifest.json");
}

std::vector<FrameSequence> load_corpus_features(const CorpusManifest &m) {
  std::vector<FrameSequence> out;
  out.reserve(m.utterances.size());
  for (const Utterance &u : m.utterances) {
    if (!u.feature_path)
      throw Error("utterance '" + u.id + "': no feature_path in manifest");
    FrameSequence seq = read_features(*u.feature_path, m.hop_s());
    seq.utterance_id = u.id;
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace uws
