#include "nstlab/synth/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "nstlab/core/hash.hpp"
#include "nstlab/core/tensor.hpp"

namespace nstlab::synth {

using core::ContractViolation;
using json = nlohmann::ordered_json;

std::string to_string(LabelSource source) {
  switch (source) {
    case LabelSource::kHuman: return "human";
    case LabelSource::kPseudo: return "pseudo";
    case LabelSource::kNone: return "none";
  }
  return "none";
}

LabelSource label_source_from_string(const std::string& text) {
  if (text == "human") return LabelSource::kHuman;
  if (text == "pseudo") return LabelSource::kPseudo;
  if (text == "none") return LabelSource::kNone;
  throw ContractViolation("unknown label source '" + text + "'");
}

void Manifest::validate() const {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.utt_id).second) throw ContractViolation("duplicate utt_id " + r.utt_id);
    if (r.tokens.has_value() != (r.label_source != LabelSource::kNone))
      throw ContractViolation("record " + r.utt_id + ": tokens must be present iff labeled");
    if (r.confidence.has_value() != (r.label_source == LabelSource::kPseudo))
      throw ContractViolation("record " + r.utt_id + ": confidence must be present iff pseudo-labeled");
    if (r.confidence && (*r.confidence < 0.0 || *r.confidence > 1.0))
      throw ContractViolation("record " + r.utt_id + ": confidence outside [0, 1]");
  }
}

double Manifest::hours_of(const UtteranceRecord& r) const {
  return static_cast<double>(r.num_frames) * header.frame_period_ms / 3.6e6;
}

double Manifest::hours() const {
  std::size_t frames = 0;
  for (const auto& r : records) frames += r.num_frames;
  return static_cast<double>(frames) * header.frame_period_ms / 3.6e6;
}

std::filesystem::path Manifest::feature_path(const UtteranceRecord& r) const {
  return std::filesystem::path(header.feature_root) / r.feature_file;
}

const UtteranceRecord* Manifest::find(const std::string& utt_id) const {
  for (const auto& r : records)
    if (r.utt_id == utt_id) return &r;
  return nullptr;
}

std::vector<std::size_t> Manifest::domains() const {
  std::set<std::size_t> s;
  for (const auto& r : records) s.insert(r.domain);
  return {s.begin(), s.end()};
}

Manifest Manifest::select_domain(std::size_t domain) const {
  Manifest out;
  out.header = header;
  for (const auto& r : records)
    if (r.domain == domain) out.records.push_back(r);
  return out;
}

namespace {

json record_to_json(const UtteranceRecord& r) {
  json j;
  j["utt_id"] = r.utt_id;
  j["feature_file"] = r.feature_file;
  j["num_frames"] = r.num_frames;
  j["domain"] = r.domain;
  j["tokens"] = r.tokens ? json(*r.tokens) : json(nullptr);
  j["label_source"] = to_string(r.label_source);
  j["confidence"] = r.confidence ? json(*r.confidence) : json(nullptr);
  j["oracle_tokens"] = r.oracle_tokens;
  return j;
}

UtteranceRecord record_from_json(const json& j) {
  UtteranceRecord r;
  r.utt_id = j.at("utt_id").get<std::string>();
  r.feature_file = j.at("feature_file").get<std::string>();
  r.num_frames = j.at("num_frames").get<std::size_t>();
  r.domain = j.at("domain").get<std::size_t>();
  if (!j.at("tokens").is_null()) r.tokens = j.at("tokens").get<Tokens>();
  r.label_source = label_source_from_string(j.at("label_source").get<std::string>());
  if (!j.at("confidence").is_null()) r.confidence = j.at("confidence").get<double>();
  r.oracle_tokens = j.at("oracle_tokens").get<Tokens>();
  return r;
}

}  // namespace

std::string serialize_manifest(const Manifest& m) {
  json header;
  header["format"] = "nstlab-manifest";
  header["version"] = m.header.version;
  header["corpus_hash"] = m.header.corpus_hash;
  header["feature_root"] = m.header.feature_root;
  header["frame_period_ms"] = m.header.frame_period_ms;
  header["provenance"] = m.header.provenance;
  std::string out = header.dump() + "\n";
  for (const auto& r : m.records) out += record_to_json(r).dump() + "\n";
  return out;
}

Manifest parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ContractViolation("manifest is empty");
  Manifest m;
  try {
    json header = json::parse(line);
    if (header.value("format", "") != "nstlab-manifest") throw ContractViolation("not a manifest header");
    m.header.version = header.at("version").get<int>();
    if (m.header.version != kManifestVersion)
      throw ContractViolation("unsupported manifest version " + std::to_string(m.header.version));
    m.header.corpus_hash = header.at("corpus_hash").get<std::string>();
    m.header.feature_root = header.at("feature_root").get<std::string>();
    m.header.frame_period_ms = header.at("frame_period_ms").get<double>();
    m.header.provenance = header.at("provenance");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      m.records.push_back(record_from_json(json::parse(line)));
    }
  } catch (const json::exception& e) {
    throw ContractViolation(std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  m.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << serialize_manifest(m);
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

std::string manifest_hash(const Manifest& m) { return core::short_hash(serialize_manifest(m)); }

}  // namespace nstlab::synth
