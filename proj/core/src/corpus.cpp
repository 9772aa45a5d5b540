#include "topseg/corpus.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "topseg/error.hpp"

namespace topseg::corpus {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::filesystem::path& file, const std::string& what) {
  throw DataError(file.string() + ": " + what);
}

[[noreturn]] void bad_record(const std::filesystem::path& file, std::size_t line,
                             const std::string& what) {
  bad(file, "record " + std::to_string(line) + ": " + what);
}

json parse_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) bad(file, "cannot open");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) bad(file, "invalid JSON");
  return j;
}

std::vector<float> read_f32_file(const std::filesystem::path& file,
                                 std::size_t expect) {
  std::ifstream in(file, std::ios::binary);
  if (!in) bad(file, "cannot open");
  std::string raw((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (raw.size() != expect * 4) {
    bad(file, "payload is " + std::to_string(raw.size()) + " bytes, expected " +
                  std::to_string(expect * 4));
  }
  std::vector<float> out(expect);
  for (std::size_t i = 0; i < expect; ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) {
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(raw[i * 4 + b]))
           << (8 * b);
    }
    out[i] = std::bit_cast<float>(v);
  }
  return out;
}

void write_f32_file(const std::filesystem::path& file,
                    const std::vector<float>& values) {
  std::string raw;
  raw.reserve(values.size() * 4);
  for (float f : values) {
    const std::uint32_t v = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) {
      raw.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
    }
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) bad(file, "cannot open for writing");
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!out) bad(file, "write failed");
}

}  // namespace

numkit::Tensor EmbMatrix::to_tensor() const { return rows_tensor(0, rows_); }

numkit::Tensor EmbMatrix::rows_tensor(std::size_t r0, std::size_t r1) const {
  numkit::Tensor t(r1 - r0, cols_);
  for (std::size_t i = r0; i < r1; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) {
      t.at(i - r0, j) = static_cast<double>(at(i, j));
    }
  }
  return t;
}

std::vector<int> Episode::gold_labels() const {
  if (!labeled()) throw DataError("episode " + id + " is unlabeled");
  std::vector<int> out;
  out.reserve(sentences.size() - 1);
  for (std::size_t i = 0; i + 1 < sentences.size(); ++i) {
    out.push_back(*sentences[i].boundary);
  }
  return out;
}

void validate_episode(const Episode& e) {
  const std::string where = "episode " + e.id;
  if (e.sentences.size() < 2) {
    throw DataError(where + ": needs at least 2 sentences, has " +
                    std::to_string(e.sentences.size()));
  }
  const bool labeled = e.sentences.front().boundary.has_value();
  for (std::size_t i = 0; i < e.sentences.size(); ++i) {
    const Sentence& s = e.sentences[i];
    const std::string at = where + ": sentence " + std::to_string(i);
    if (s.index != i) throw DataError(at + ": index is " + std::to_string(s.index));
    if (!(s.end_s > s.begin_s)) throw DataError(at + ": end_s <= begin_s");
    if (!std::isfinite(s.begin_s) || !std::isfinite(s.end_s)) {
      throw DataError(at + ": non-finite timestamp");
    }
    if (i > 0 && s.begin_s < e.sentences[i - 1].begin_s) {
      throw DataError(at + ": begin_s out of order");
    }
    if (i > 0 && s.begin_s < e.sentences[i - 1].end_s) {
      throw DataError(at + ": overlaps sentence " + std::to_string(i - 1));
    }
    if (s.boundary.has_value() != labeled) {
      throw DataError(at + ": boundary present on some sentences but not all");
    }
    if (s.boundary && *s.boundary != 0 && *s.boundary != 1) {
      throw DataError(at + ": boundary must be 0 or 1");
    }
  }
  for (std::size_t k = 0; k < e.frames.size(); ++k) {
    const Frame& f = e.frames[k];
    const std::string at = where + ": frame " + std::to_string(k);
    if (f.index != k) throw DataError(at + ": index is " + std::to_string(f.index));
    if (!std::isfinite(f.time_s)) throw DataError(at + ": non-finite time_s");
    if (k > 0 && f.time_s < e.frames[k - 1].time_s) {
      throw DataError(at + ": time_s out of order");
    }
  }
  if (e.sent_emb.rows() != e.sentences.size()) {
    throw DataError(where + ": sent_emb has " + std::to_string(e.sent_emb.rows()) +
                    " rows for " + std::to_string(e.sentences.size()) + " sentences");
  }
  if (e.frame_emb.rows() != e.frames.size()) {
    throw DataError(where + ": frame_emb has " + std::to_string(e.frame_emb.rows()) +
                    " rows for " + std::to_string(e.frames.size()) + " frames");
  }
  for (float v : e.sent_emb.data()) {
    if (!std::isfinite(v)) throw DataError(where + ": non-finite sent_emb entry");
  }
  for (float v : e.frame_emb.data()) {
    if (!std::isfinite(v)) throw DataError(where + ": non-finite frame_emb entry");
  }
}

AlignedEpisode align_frames(Episode e) {
  std::vector<FrameRange> ranges(e.sentences.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < e.sentences.size(); ++i) {
    const Sentence& s = e.sentences[i];
    while (k < e.frames.size() && e.frames[k].time_s < s.begin_s) ++k;
    ranges[i].begin = k;
    while (k < e.frames.size() && e.frames[k].time_s < s.end_s) ++k;
    ranges[i].end = k;
  }
  return AlignedEpisode{std::move(e), std::move(ranges)};
}

Episode load_episode(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  const json meta = parse_json_file(meta_path);
  for (const char* key :
       {"id", "n_sentences", "n_frames", "d_text", "d_vis", "labeled"}) {
    if (!meta.contains(key)) bad(meta_path, std::string("missing key '") + key + "'");
  }

  Episode e;
  e.id = meta["id"].get<std::string>();
  const auto n = meta["n_sentences"].get<std::size_t>();
  const auto m = meta["n_frames"].get<std::size_t>();
  const auto d_text = meta["d_text"].get<std::size_t>();
  const auto d_vis = meta["d_vis"].get<std::size_t>();
  const bool labeled = meta["labeled"].get<bool>();

  {
    const auto path = dir / "sentences.jsonl";
    std::ifstream in(path);
    if (!in) bad(path, "cannot open");
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) bad_record(path, ln, "invalid JSON");
      Sentence s;
      s.index = j.at("index").get<std::size_t>();
      s.begin_s = j.at("begin_s").get<double>();
      s.end_s = j.at("end_s").get<double>();
      if (labeled) {
        if (!j.contains("boundary")) bad_record(path, ln, "missing boundary");
        s.boundary = j["boundary"].get<int>();
      } else if (j.contains("boundary")) {
        bad_record(path, ln, "boundary present in unlabeled episode");
      }
      e.sentences.push_back(s);
      ++ln;
    }
    if (e.sentences.size() != n) {
      bad(path, "has " + std::to_string(e.sentences.size()) +
                    " records, meta says " + std::to_string(n));
    }
  }

  {
    const auto path = dir / "frames.jsonl";
    std::ifstream in(path);
    if (!in) bad(path, "cannot open");
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) bad_record(path, ln, "invalid JSON");
      Frame f;
      f.index = j.at("index").get<std::size_t>();
      f.time_s = j.at("time_s").get<double>();
      e.frames.push_back(f);
      ++ln;
    }
    if (e.frames.size() != m) {
      bad(path, "has " + std::to_string(e.frames.size()) + " records, meta says " +
                    std::to_string(m));
    }
  }

  e.sent_emb = EmbMatrix(n, d_text);
  e.sent_emb.data() = read_f32_file(dir / "sent_emb.bin", n * d_text);
  e.frame_emb = EmbMatrix(m, d_vis);
  e.frame_emb.data() = read_f32_file(dir / "frame_emb.bin", m * d_vis);

  validate_episode(e);
  return e;
}

void save_episode(const Episode& e, const std::filesystem::path& dir) {
  validate_episode(e);
  std::filesystem::create_directories(dir);

  json meta{{"id", e.id},
            {"n_sentences", e.n_sentences()},
            {"n_frames", e.n_frames()},
            {"d_text", e.sent_emb.cols()},
            {"d_vis", e.frame_emb.cols()},
            {"labeled", e.labeled()}};
  {
    std::ofstream out(dir / "meta.json", std::ios::trunc);
    if (!out) bad(dir / "meta.json", "cannot open for writing");
    out << meta.dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "sentences.jsonl", std::ios::trunc);
    if (!out) bad(dir / "sentences.jsonl", "cannot open for writing");
    for (const Sentence& s : e.sentences) {
      json j{{"index", s.index}, {"begin_s", s.begin_s}, {"end_s", s.end_s}};
      if (s.boundary) j["boundary"] = *s.boundary;
      out << j.dump() << "\n";
    }
  }
  {
    std::ofstream out(dir / "frames.jsonl", std::ios::trunc);
    if (!out) bad(dir / "frames.jsonl", "cannot open for writing");
    for (const Frame& f : e.frames) {
      out << json{{"index", f.index}, {"time_s", f.time_s}}.dump() << "\n";
    }
  }
  write_f32_file(dir / "sent_emb.bin", e.sent_emb.data());
  write_f32_file(dir / "frame_emb.bin", e.frame_emb.data());
}

std::vector<std::filesystem::path> Manifest::dirs_for(
    const std::string& split) const {
  std::vector<std::filesystem::path> out;
  for (const ManifestEntry& entry : entries) {
    if (entry.split == split) out.push_back(root / entry.dir);
  }
  return out;
}

Manifest load_manifest(const std::filesystem::path& corpus_json) {
  const json j = parse_json_file(corpus_json);
  if (!j.contains("episodes") || !j["episodes"].is_array()) {
    bad(corpus_json, "missing 'episodes' array");
  }
  Manifest m;
  m.root = corpus_json.parent_path();
  for (std::size_t i = 0; i < j["episodes"].size(); ++i) {
    const json& entry = j["episodes"][i];
    if (!entry.contains("dir") || !entry.contains("split")) {
      bad_record(corpus_json, i, "entry needs 'dir' and 'split'");
    }
    const std::string split = entry["split"].get<std::string>();
    if (split != "train" && split != "val" && split != "test") {
      bad_record(corpus_json, i, "unknown split '" + split + "'");
    }
    m.entries.push_back({entry["dir"].get<std::string>(), split});
  }
  return m;
}

void save_manifest(const Manifest& m, const std::filesystem::path& corpus_json) {
  json episodes = json::array();
  for (const ManifestEntry& entry : m.entries) {
    episodes.push_back({{"dir", entry.dir}, {"split", entry.split}});
  }
  std::ofstream out(corpus_json, std::ios::trunc);
  if (!out) bad(corpus_json, "cannot open for writing");
  out << json{{"episodes", episodes}}.dump(2) << "\n";
}

std::vector<AlignedEpisode> load_split(const Manifest& m, const std::string& split) {
  std::vector<AlignedEpisode> out;
  for (const auto& dir : m.dirs_for(split)) {
    out.push_back(align_frames(load_episode(dir)));
  }
  return out;
}

}  // namespace topseg::corpus
