#include "nstlab/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "nstlab/core/hash.hpp"
#include "nstlab/model/network.hpp"

namespace nstlab::model {

using core::ContractViolation;
using json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

void Checkpoint::validate() const {
  spec.validate();
  const auto reference = init_params(spec, 0);
  if (reference.count() != params.count())
    throw ContractViolation("checkpoint has " + std::to_string(params.count()) + " tensors, spec implies " +
                            std::to_string(reference.count()));
  for (const auto& e : reference.entries()) {
    if (!params.contains(e.name)) throw ContractViolation("checkpoint missing parameter " + e.name);
    if (params.at(e.name).shape != e.value.shape)
      throw ContractViolation("parameter " + e.name + " has shape " + core::shape_string(params.at(e.name).shape) +
                              ", expected " + core::shape_string(e.value.shape));
  }
}

std::string Checkpoint::id() const { return core::short_hash(serialize_checkpoint(*this)); }

namespace {

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}
  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void read(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw ContractViolation("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

json provenance_json(const Provenance& p) {
  return json{{"experiment_id", p.experiment_id},
              {"teacher_id", p.teacher_id ? json(*p.teacher_id) : json(nullptr)},
              {"init_id", p.init_id ? json(*p.init_id) : json(nullptr)},
              {"manifest_hashes", p.manifest_hashes}};
}

Provenance provenance_from_json(const json& j) {
  Provenance p;
  p.experiment_id = j.at("experiment_id").get<std::string>();
  if (!j.at("teacher_id").is_null()) p.teacher_id = j.at("teacher_id").get<std::string>();
  if (!j.at("init_id").is_null()) p.init_id = j.at("init_id").get<std::string>();
  p.manifest_hashes = j.at("manifest_hashes").get<std::vector<std::string>>();
  return p;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out = "NSTC";
  put<std::uint32_t>(out, kCheckpointVersion);
  json header{{"spec", ckpt.spec},
              {"provenance", provenance_json(ckpt.provenance)},
              {"step", ckpt.step},
              {"tensors", ckpt.params.count()}};
  const std::string text = header.dump();
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& e : ckpt.params.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put<std::uint8_t>(out, 0);
    put<std::uint8_t>(out, e.frozen ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(e.value.data.data()), e.value.data.size() * sizeof(float));
  }
  const auto digest = core::sha256(std::string_view(out));
  out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 + 4 + 8 + 32 || bytes.compare(0, 4, "NSTC") != 0)
    throw ContractViolation("not a checkpoint file");
  const std::size_t body = bytes.size() - 32;
  const auto digest = core::sha256(std::string_view(bytes.data(), body));
  if (std::memcmp(digest.data(), bytes.data() + body, 32) != 0) throw ContractViolation("checkpoint checksum mismatch");
  Reader in(bytes, body);
  in.take(4);
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw ContractViolation("unsupported checkpoint version");
  Checkpoint ckpt;
  std::size_t tensors = 0;
  try {
    json header = json::parse(in.take(in.get<std::uint64_t>()));
    ckpt.spec = header.at("spec").get<ModelSpec>();
    ckpt.provenance = provenance_from_json(header.at("provenance"));
    ckpt.step = header.at("step").get<std::int64_t>();
    tensors = header.at("tensors").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ContractViolation(std::string("malformed checkpoint header: ") + e.what());
  }
  for (std::size_t i = 0; i < tensors; ++i) {
    std::string name = in.take(in.get<std::uint32_t>());
    if (in.get<std::uint8_t>() != 0) throw ContractViolation("unsupported tensor dtype for " + name);
    const bool frozen = in.get<std::uint8_t>() != 0;
    core::Shape shape(in.get<std::uint32_t>());
    for (auto& d : shape) d = in.get<std::uint64_t>();
    core::Tensor<float> t(shape);
    in.read(t.data.data(), t.data.size() * sizeof(float));
    ckpt.params.add(std::move(name), std::move(t), frozen);
  }
  if (!in.done()) throw ContractViolation("trailing bytes in checkpoint");
  ckpt.validate();
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << serialize_checkpoint(ckpt);
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace nstlab::model
