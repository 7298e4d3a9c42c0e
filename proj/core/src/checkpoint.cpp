#include "invrec/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "invrec/errors.hpp"

namespace invrec::io {

namespace {

constexpr char kMagic[4] = {'I', 'R', 'L', 'R'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw FormatError("checkpoint truncated");
  }
  template <class T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::size_t NamedArray::expected_size() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> encode_checkpoint(const ArraySet& arrays) {
  std::set<std::string> names;
  for (const auto& a : arrays) {
    if (!names.insert(a.name).second) throw ValidationError("duplicate checkpoint array name '" + a.name + "'");
    if (a.name.size() > 0xffff) throw ValidationError("checkpoint array name too long");
    if (a.dims.size() > 0xff) throw ValidationError("checkpoint array rank too large");
    if (a.values.size() != a.expected_size())
      throw ShapeError("checkpoint array '" + a.name + "' dims do not match its value count");
  }
  Writer w;
  w.bytes(kMagic, 4);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    w.le<std::uint16_t>(static_cast<std::uint16_t>(a.name.size()));
    w.bytes(a.name.data(), a.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(a.dims.size()));
    for (auto d : a.dims) w.le<std::uint32_t>(d);
    for (double v : a.values) w.f64(v);
  }
  const auto crc = crc32_of(w.buffer());
  w.le<std::uint32_t>(crc);
  return std::move(w.buffer());
}

ArraySet decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("not an IRLR checkpoint (bad magic)");
  if (bytes.size() < 16) throw FormatError("checkpoint truncated");
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.subspan(bytes.size() - 4));
  if (tail.le<std::uint32_t>() != crc32_of(body)) throw CorruptionError("checkpoint CRC mismatch");

  Reader r(body);
  r.str(4);
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.le<std::uint32_t>();
  ArraySet out;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.str(r.le<std::uint16_t>());
    if (!names.insert(a.name).second) throw FormatError("duplicate checkpoint array name '" + a.name + "'");
    const auto rank = r.le<std::uint8_t>();
    for (std::uint8_t k = 0; k < rank; ++k) a.dims.push_back(r.le<std::uint32_t>());
    const auto n = a.expected_size();
    r.need(n * 8);
    a.values.resize(n);
    for (auto& v : a.values) v = r.f64();
    out.push_back(std::move(a));
  }
  if (r.pos() != body.size()) throw FormatError("trailing bytes in checkpoint");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ArraySet& arrays) {
  const auto bytes = encode_checkpoint(arrays);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

ArraySet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

const NamedArray* find_array(const ArraySet& arrays, const std::string& name) {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

const NamedArray& require_array(const ArraySet& arrays, const std::string& name) {
  const auto* a = find_array(arrays, name);
  if (a == nullptr) throw FormatError("checkpoint has no array '" + name + "'");
  return *a;
}

NamedArray from_matrix(std::string name, const numeric::Matrix& m) {
  NamedArray a{std::move(name), {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, {}};
  a.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) a.values.push_back(m(i, j));
  return a;
}

NamedArray from_vector(std::string name, const numeric::Vector& v) {
  return {std::move(name), {static_cast<std::uint32_t>(v.size())}, {v.data(), v.data() + v.size()}};
}

numeric::Matrix to_matrix(const NamedArray& a) {
  if (a.dims.size() != 2) throw FormatError("array '" + a.name + "' is not a matrix");
  numeric::Matrix m(a.dims[0], a.dims[1]);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = a.values[k++];
  return m;
}

numeric::Vector to_vector(const NamedArray& a) {
  if (a.dims.size() != 1) throw FormatError("array '" + a.name + "' is not a vector");
  return Eigen::Map<const numeric::Vector>(a.values.data(), static_cast<Eigen::Index>(a.values.size()));
}

void append_mlp(ArraySet& out, const std::string& prefix, const numeric::MLPParams& mlp) {
  for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
    out.push_back(from_matrix(prefix + ".W" + std::to_string(k), mlp.layers[k].weights));
    out.push_back(from_vector(prefix + ".b" + std::to_string(k), mlp.layers[k].bias));
  }
}

numeric::MLPParams read_mlp(const ArraySet& in, const std::string& prefix, numeric::Head head) {
  numeric::MLPParams mlp;
  mlp.head = head;
  for (std::size_t k = 0;; ++k) {
    const auto* w = find_array(in, prefix + ".W" + std::to_string(k));
    if (w == nullptr) break;
    mlp.layers.push_back({to_matrix(*w), to_vector(require_array(in, prefix + ".b" + std::to_string(k)))});
  }
  if (mlp.layers.empty()) throw FormatError("checkpoint has no network '" + prefix + "'");
  mlp.validate();
  return mlp;
}

void append_actor(ArraySet& out, const policy::ActorParams& actor) {
  append_mlp(out, "actor", actor.mlp);
  out.push_back(from_vector("actor.log_std", actor.log_std));
}

policy::ActorParams read_actor(const ArraySet& in) {
  policy::ActorParams a;
  a.mlp = read_mlp(in, "actor", numeric::Head::Tanh);
  a.log_std = to_vector(require_array(in, "actor.log_std"));
  if (a.log_std.size() != a.mlp.out_dim()) throw FormatError("actor.log_std does not match actor output");
  return a;
}

void append_critic(ArraySet& out, const policy::CriticParams& critic) { append_mlp(out, "critic", critic.mlp); }

policy::CriticParams read_critic(const ArraySet& in) {
  policy::CriticParams c;
  c.mlp = read_mlp(in, "critic", numeric::Head::Identity);
  c.input_mode = c.mlp.in_dim() == env::kObsDim ? policy::CriticInput::State : policy::CriticInput::StateAction;
  return c;
}

void append_disc(ArraySet& out, const disc::DiscParams& d) { append_mlp(out, "disc", d.mlp); }

disc::DiscParams read_disc(const ArraySet& in) {
  disc::DiscParams d;
  d.mlp = read_mlp(in, "disc", numeric::Head::Sigmoid);
  return d;
}

void append_expert_dataset(ArraySet& out, const expert::ExpertDataset& ds) {
  out.push_back(from_matrix("expert.states", ds.states));
  out.push_back(from_matrix("expert.actions", ds.actions));
  numeric::Vector meta(4);
  meta << static_cast<double>(ds.seed), ds.episodes, ds.mean_env_reward, ds.mean_ctr;
  out.push_back(from_vector("expert.meta", meta));
}

expert::ExpertDataset read_expert_dataset(const ArraySet& in) {
  expert::ExpertDataset ds;
  ds.states = to_matrix(require_array(in, "expert.states"));
  ds.actions = to_matrix(require_array(in, "expert.actions"));
  if (ds.states.rows() != ds.actions.rows()) throw FormatError("expert states/actions row counts differ");
  if (const auto* meta = find_array(in, "expert.meta"); meta != nullptr && meta->values.size() >= 4) {
    ds.seed = static_cast<std::uint64_t>(meta->values[0]);
    ds.episodes = static_cast<int>(meta->values[1]);
    ds.mean_env_reward = meta->values[2];
    ds.mean_ctr = meta->values[3];
  }
  return ds;
}

void append_ddpg(ArraySet& out, const expert::DDPGNets& nets) {
  append_mlp(out, "ddpg.actor", nets.actor);
  append_mlp(out, "ddpg.critic", nets.critic);
  append_mlp(out, "ddpg.actor_target", nets.actor_target);
  append_mlp(out, "ddpg.critic_target", nets.critic_target);
}

expert::DDPGNets read_ddpg(const ArraySet& in) {
  expert::DDPGNets n;
  n.actor = read_mlp(in, "ddpg.actor", numeric::Head::Tanh);
  n.critic = read_mlp(in, "ddpg.critic", numeric::Head::Identity);
  n.actor_target = read_mlp(in, "ddpg.actor_target", numeric::Head::Tanh);
  n.critic_target = read_mlp(in, "ddpg.critic_target", numeric::Head::Identity);
  return n;
}

}  // namespace invrec::io
