#include "mti/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace mti {
namespace {

class Writer {
 public:
  void bytes(std::string_view s) { out_ += s; }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) {
    uint64_t raw;
    std::memcpy(&raw, &v, 8);
    u64(raw);
  }
  void string(std::string_view s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s);
  }
  void tensor(const std::string& name, const Matrix& m) {
    string(name);
    bytes(std::string_view("f64\0", 4));
    u32(2);
    u64(static_cast<uint64_t>(m.rows()));
    u64(static_cast<uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::string_view bytes(size_t n) {
    if (data_.size() - pos_ < n) throw Error("truncated checkpoint");
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  uint32_t u32() {
    auto s = bytes(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    auto s = bytes(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  double f64() {
    uint64_t raw = u64();
    double v;
    std::memcpy(&v, &raw, 8);
    return v;
  }
  std::string string() { return std::string(bytes(u32())); }
  std::pair<std::string, Matrix> tensor() {
    std::string name = string();
    if (bytes(4) != std::string_view("f64\0", 4))
      throw Error("checkpoint tensor '" + name + "' has unsupported dtype");
    const uint32_t ndim = u32();
    if (ndim != 2) throw Error("checkpoint tensor '" + name + "' is not 2-D");
    const uint64_t rows = u64(), cols = u64();
    if (rows * cols * 8 > data_.size() - pos_) throw Error("truncated checkpoint");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
    return {std::move(name), std::move(m)};
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  size_t pos_ = 0;
};

Vector as_vector(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }
Matrix as_row(const Vector& v) { return v.transpose(); }

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Config record = ckpt.info;
  ckpt.model.to_config(record);
  ckpt.loss.to_config(record);

  Writer w;
  w.bytes("MTIC");
  w.u32(kMticVersion);
  w.string(record.to_text());
  w.u32(static_cast<uint32_t>(ckpt.params.size()));
  for (const auto& [name, m] : ckpt.params) w.tensor(name, m);

  std::vector<std::pair<std::string, Matrix>> norm;
  if (ckpt.norm.ps_mean.size() > 0) {
    norm.emplace_back("ps_mean", as_row(ckpt.norm.ps_mean));
    norm.emplace_back("ps_std", as_row(ckpt.norm.ps_std));
  }
  if (ckpt.norm.lfb_mean.size() > 0) {
    norm.emplace_back("lfb_mean", as_row(ckpt.norm.lfb_mean));
    norm.emplace_back("lfb_std", as_row(ckpt.norm.lfb_std));
  }
  w.u32(static_cast<uint32_t>(norm.size()));
  for (const auto& [name, m] : norm) w.tensor(name, m);
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "MTIC") throw Error("not an MTIC checkpoint");
  Reader r(bytes);
  r.bytes(4);
  const uint32_t version = r.u32();
  if (version != kMticVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version));
  Config record = Config::parse(r.string(), "checkpoint config");

  Checkpoint ckpt;
  ckpt.model = ModelConfig::from_config(record);
  ckpt.loss = LossConfig::from_config(record);
  for (const auto& [k, v] : record.entries()) {
    if (k.rfind("train.", 0) == 0 || k.rfind("info.", 0) == 0) ckpt.info.set(k, v);
  }
  const uint32_t n_tensors = r.u32();
  for (uint32_t i = 0; i < n_tensors; ++i) {
    auto [name, m] = r.tensor();
    ckpt.params.add(name, std::move(m));
  }
  const uint32_t n_norm = r.u32();
  for (uint32_t i = 0; i < n_norm; ++i) {
    auto [name, m] = r.tensor();
    if (name == "ps_mean") {
      ckpt.norm.ps_mean = as_vector(m);
    } else if (name == "ps_std") {
      ckpt.norm.ps_std = as_vector(m);
    } else if (name == "lfb_mean") {
      ckpt.norm.lfb_mean = as_vector(m);
    } else if (name == "lfb_std") {
      ckpt.norm.lfb_std = as_vector(m);
    } else {
      throw Error("unknown normalization tensor '" + name + "'");
    }
  }
  if (!r.done()) throw Error("trailing bytes after checkpoint");

  // Every tensor the config implies must be present with the right shape.
  const ParamStore expected = init_params(ckpt.model);
  for (const auto& [name, m] : expected) {
    if (!ckpt.params.contains(name)) throw Error("checkpoint is missing tensor '" + name + "'");
    const Matrix& got = ckpt.params.at(name);
    if (got.rows() != m.rows() || got.cols() != m.cols())
      throw Error("checkpoint tensor '" + name + "' has shape " + std::to_string(got.rows()) +
                  "x" + std::to_string(got.cols()) + ", config implies " +
                  std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace mti
