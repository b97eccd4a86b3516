#include "sparseopt/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "sparseopt/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace sparseopt {

namespace {
constexpr std::array<unsigned char, 8> kMagic = {'S', 'P', 'O', 'P',
                                                 'T', 'C', 'K', '\x01'};
}

std::uint32_t crc32(const unsigned char* data, std::size_t len) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i)
    crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

void Checkpoint::put_tensor(const std::string& name, const Tensor& t) {
  tensors.emplace_back(name, t);
}

const Tensor& Checkpoint::get_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw CheckpointError("checkpoint: missing tensor " + name);
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

void Checkpoint::put_scalar(const std::string& name, double v) {
  scalars.emplace_back(name, v);
}

double Checkpoint::get_scalar(const std::string& name) const {
  for (const auto& [n, v] : scalars)
    if (n == name) return v;
  throw CheckpointError("checkpoint: missing scalar " + name);
}

bool Checkpoint::has_scalar(const std::string& name) const {
  for (const auto& [n, v] : scalars)
    if (n == name) return true;
  return false;
}

void Checkpoint::put_counter(const std::string& name, std::uint64_t v) {
  counters.emplace_back(name, v);
}

std::uint64_t Checkpoint::get_counter(const std::string& name) const {
  for (const auto& [n, v] : counters)
    if (n == name) return v;
  throw CheckpointError("checkpoint: missing counter " + name);
}

bool Checkpoint::has_counter(const std::string& name) const {
  for (const auto& [n, v] : counters)
    if (n == name) return true;
  return false;
}

void Checkpoint::put_param_set(const std::string& prefix, const ParamSet& ps) {
  for (const auto& [name, t] : ps) put_tensor(prefix + "." + name, t);
}

ParamSet Checkpoint::get_param_set(const std::string& prefix) const {
  const std::string p = prefix + ".";
  ParamSet ps;
  for (const auto& [name, t] : tensors)
    if (name.rfind(p, 0) == 0) ps.add(name.substr(p.size()), t);
  if (ps.count() == 0) throw CheckpointError("checkpoint: no tensors under " + prefix);
  return ps;
}

bool Checkpoint::has_param_set(const std::string& prefix) const {
  const std::string p = prefix + ".";
  for (const auto& [name, t] : tensors)
    if (name.rfind(p, 0) == 0) return true;
  return false;
}

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  std::vector<unsigned char> bytes;
};

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t len) : data_(data), len_(len) {}

  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return get<double>(); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return len_ - pos_; }

 private:
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void need(std::uint64_t n) const {
    if (n > len_ - pos_) throw CheckpointError("checkpoint: truncated file");
  }
  const unsigned char* data_;
  std::size_t len_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  Writer w;
  w.u32(Checkpoint::kVersion);
  w.u64(ck.seed);
  w.u64(ck.next_epoch);
  w.str(ck.config_json);

  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (std::size_t i = 0; i < t.size(); ++i) w.f64(t[i]);
  }
  w.u32(static_cast<std::uint32_t>(ck.scalars.size()));
  for (const auto& [name, v] : ck.scalars) {
    w.str(name);
    w.f64(v);
  }
  w.u32(static_cast<std::uint32_t>(ck.counters.size()));
  for (const auto& [name, v] : ck.counters) {
    w.str(name);
    w.u64(v);
  }

  const std::uint32_t crc = crc32(w.bytes.data(), w.bytes.size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot write " + path);
  out.write(reinterpret_cast<const char*>(kMagic.data()), kMagic.size());
  out.write(reinterpret_cast<const char*>(w.bytes.data()),
            static_cast<std::streamsize>(w.bytes.size()));
  out.write(reinterpret_cast<const char*>(&crc), sizeof crc);
  if (!out) throw CheckpointError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());

  if (bytes.size() < kMagic.size() + sizeof(std::uint32_t))
    throw CheckpointError("checkpoint: file too short");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw CheckpointError("checkpoint: bad magic");

  const std::size_t payload_len = bytes.size() - kMagic.size() - sizeof(std::uint32_t);
  const unsigned char* payload = bytes.data() + kMagic.size();
  std::uint32_t stored_crc = 0;
  std::memcpy(&stored_crc, payload + payload_len, sizeof stored_crc);
  if (crc32(payload, payload_len) != stored_crc)
    throw CheckpointError("checkpoint: CRC mismatch (corrupt or truncated)");

  Reader r(payload, payload_len);
  Checkpoint ck;
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  ck.seed = r.u64();
  ck.next_epoch = r.u64();
  ck.config_json = r.str();

  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = r.u64();
    std::vector<double> data(shape_product(shape));
    for (auto& v : data) v = r.f64();
    ck.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  const std::uint32_t n_scalars = r.u32();
  for (std::uint32_t i = 0; i < n_scalars; ++i) {
    std::string name = r.str();
    ck.scalars.emplace_back(std::move(name), r.f64());
  }
  const std::uint32_t n_counters = r.u32();
  for (std::uint32_t i = 0; i < n_counters; ++i) {
    std::string name = r.str();
    ck.counters.emplace_back(std::move(name), r.u64());
  }
  if (r.remaining() != 0) throw CheckpointError("checkpoint: trailing bytes");
  return ck;
}

}  // namespace sparseopt
