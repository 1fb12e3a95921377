#include "dwd/param_store.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace dwd::ad {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint: truncated data");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor ParamStore::create(const std::string& name, Shape shape, double bound, RngStream& rng) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = (2.0 * rng.uniform() - 1.0) * bound;
  return insert(name, Tensor::from(std::move(shape), std::move(v), true));
}

Tensor ParamStore::create_constant(const std::string& name, Shape shape, double value) {
  return insert(name, Tensor::full(std::move(shape), value, true));
}

Tensor ParamStore::insert(const std::string& name, const Tensor& value) {
  if (params_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor t = value;
  t.set_requires_grad(true);
  params_.emplace(name, t);
  return t;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

void ParamStore::erase_prefix(const std::string& prefix) {
  for (const auto& n : names_with_prefix(prefix)) {
    params_.erase(n);
    moments_.erase(n);
  }
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [n, _] : params_) out.push_back(n);
  return out;
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [n, _] : params_)
    if (n.rfind(prefix, 0) == 0) out.push_back(n);
  return out;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

double ParamStore::clip_grad_norm(double max_norm, const std::set<std::string>& frozen) {
  double sq = 0.0;
  for (const auto& [n, t] : params_) {
    if (frozen.count(n) || !t.has_grad()) continue;
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double c = max_norm / norm;
    for (auto& [n, t] : params_) {
      if (frozen.count(n) || !t.has_grad()) continue;
      for (auto& g : t.node()->grad) g *= c;
    }
  }
  return norm;
}

void ParamStore::adam_step(const AdamConfig& cfg, const std::set<std::string>& frozen) {
  for (const auto& [n, t] : params_) {
    if (!frozen.count(n) && !t.has_grad()) {
      throw std::logic_error("adam_step: no gradient for unfrozen parameter " + n);
    }
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
  for (auto& [n, t] : params_) {
    if (frozen.count(n)) continue;
    auto& [m, v] = moments_[n];
    if (m.size() != t.size()) {
      m.assign(t.size(), 0.0);
      v.assign(t.size(), 0.0);
    }
    auto w = t.mutable_data();
    const auto g = t.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      w[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
  zero_grad();
}

void ParamStore::copy_into(ParamStore& dst, const std::string& prefix) const {
  for (const auto& [n, t] : params_) dst.insert(prefix + n, t.detach());
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  copy_into(out, "");
  out.moments_ = moments_;
  out.step_ = step_;
  return out;
}

std::vector<std::uint8_t> ParamStore::serialize() const {
  std::vector<std::uint8_t> out = {'D', 'W', 'D', '1'};
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params_.size()));
  for (const auto& [n, t] : params_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(n.size()));
    out.insert(out.end(), n.begin(), n.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data().data());
    out.insert(out.end(), p, p + t.size() * sizeof(double));
  }
  return out;
}

ParamStore ParamStore::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != "DWD1") throw std::runtime_error("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  ParamStore store;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = r.get<std::uint32_t>();
    std::string name = r.str(len);
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    std::vector<double> data(numel(shape));
    r.raw(data.data(), data.size() * sizeof(double));
    store.insert(name, Tensor::from(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
  return store;
}

void ParamStore::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::string ParamStore::hash(const std::function<bool(const std::string&)>& filter) const {
  std::vector<std::uint8_t> buf;
  for (const auto& [n, t] : params_) {
    if (!filter(n)) continue;
    buf.insert(buf.end(), n.begin(), n.end());
    buf.push_back(0);
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data().data());
    buf.insert(buf.end(), p, p + t.size() * sizeof(double));
  }
  return sha256_hex(buf.data(), buf.size());
}

std::string ParamStore::hash_prefix(const std::string& prefix) const {
  return hash([&](const std::string& n) { return n.rfind(prefix, 0) == 0; });
}

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data, size, md, &len, EVP_sha256(), nullptr)) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes.data(), bytes.size());
}

}  // namespace dwd::ad
