/*
 * Copyright 2026 The HetSNGP Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Versioned binary checkpoint container.
//
// Layout (all integers little-endian):
//   8 bytes   magic "HSNGPCKP"
//   u32       format version
//   u64       metadata length, then that many bytes of JSON
//   u32       tensor count, then per tensor:
//               u32 name length, name bytes, u32 rank, rank x u64 dims,
//               prod(dims) x f64 (IEEE-754 binary64, row-major)
//   32 bytes  SHA-256 of everything above
//
// Saving, loading and saving again reproduces the file byte for byte.

#ifndef HETSNGP_CHECKPOINT_HPP_
#define HETSNGP_CHECKPOINT_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "hetsngp/data.hpp"
#include "hetsngp/model.hpp"
#include "hetsngp/run_config.hpp"

namespace hetsngp {

inline constexpr char kCheckpointMagic[8] = {'H', 'S', 'N', 'G', 'P', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Tensor {
  std::vector<std::uint64_t> shape;
  std::vector<double> data;
};

// Everything needed to reproduce a trained run's predictions.
struct Checkpoint {
  RunConfig config;
  ModelDims dims;
  Standardizer standardizer;
  std::vector<std::string> label_names;
  std::vector<std::string> feature_names;
  HetSngpModel model;
};

// ---------------------------------------------------------------------------
// Hashing

inline std::string hex_digest(const unsigned char* bytes, unsigned len) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(digits[bytes[i] >> 4]);
    out.push_back(digits[bytes[i] & 15]);
  }
  return out;
}

namespace detail {

inline std::vector<unsigned char> digest(const EVP_MD* md, const std::string& a,
                                         const std::string& b = {}) {
  std::vector<unsigned char> out(EVP_MAX_MD_SIZE);
  unsigned len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, md, nullptr) != 1 ||
      EVP_DigestUpdate(ctx, a.data(), a.size()) != 1 ||
      EVP_DigestUpdate(ctx, b.data(), b.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, out.data(), &len) != 1) {
    EVP_MD_CTX_free(ctx);
    fail(ErrorCode::kIoError, "hash computation failed");
  }
  EVP_MD_CTX_free(ctx);
  out.resize(len);
  return out;
}

}  // namespace detail

inline std::string sha256_hex(const std::string& bytes) {
  auto d = detail::digest(EVP_sha256(), bytes);
  return hex_digest(d.data(), static_cast<unsigned>(d.size()));
}

// Object id git would assign to a blob with these contents.
inline std::string git_blob_hash(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  auto d = detail::digest(EVP_sha1(), header, bytes);
  return hex_digest(d.data(), static_cast<unsigned>(d.size()));
}

// ---------------------------------------------------------------------------
// Tensor codec

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <typename T>
  void le(T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
    }
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  const std::string& str() const { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(const std::string& s, std::size_t end) : s_(s), end_(end) {}
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, s_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T le() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str(std::size_t n) {
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) fail(ErrorCode::kCheckpointError, "checkpoint is truncated");
  }
  const std::string& s_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

inline Tensor to_tensor(const Matrix& m) {
  Tensor t;
  t.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.assign(m.data(), m.data() + m.size());
  return t;
}

inline Tensor to_tensor(const Vector& v) {
  Tensor t;
  t.shape = {static_cast<std::uint64_t>(v.size())};
  t.data.assign(v.data(), v.data() + v.size());
  return t;
}

inline Tensor scalar_tensor(double x) { return Tensor{{1}, {x}}; }

class TensorMap {
 public:
  explicit TensorMap(std::map<std::string, Tensor> t) : t_(std::move(t)) {}

  bool has(const std::string& name) const { return t_.count(name) > 0; }

  const Tensor& get(const std::string& name) const {
    auto it = t_.find(name);
    if (it == t_.end()) fail(ErrorCode::kCheckpointError, "checkpoint lacks tensor '" + name + "'");
    return it->second;
  }

  Matrix matrix(const std::string& name, Eigen::Index rows, Eigen::Index cols) const {
    const Tensor& t = get(name);
    if (t.shape.size() != 2 || t.shape[0] != static_cast<std::uint64_t>(rows) ||
        t.shape[1] != static_cast<std::uint64_t>(cols)) {
      fail(ErrorCode::kCheckpointError, "checkpoint tensor '" + name + "' has the wrong shape");
    }
    Matrix m(rows, cols);
    std::copy(t.data.begin(), t.data.end(), m.data());
    return m;
  }

  Vector vector(const std::string& name, Eigen::Index n) const {
    const Tensor& t = get(name);
    if (t.shape.size() != 1 || t.shape[0] != static_cast<std::uint64_t>(n)) {
      fail(ErrorCode::kCheckpointError, "checkpoint tensor '" + name + "' has the wrong shape");
    }
    return Eigen::Map<const Vector>(t.data.data(), n);
  }

  double scalar(const std::string& name) const { return vector(name, 1)[0]; }

 private:
  std::map<std::string, Tensor> t_;
};

}  // namespace detail

// Serializes a metadata object and named tensors (written in name order).
inline std::string encode_container(const Json& metadata,
                                    const std::map<std::string, Tensor>& tensors) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.le<std::uint32_t>(kCheckpointVersion);
  const std::string meta = metadata.dump();
  w.le<std::uint64_t>(meta.size());
  w.bytes(meta.data(), meta.size());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    std::uint64_t count = 1;
    for (std::uint64_t d : t.shape) count *= d;
    require(count == t.data.size(), ErrorCode::kDimensionMismatch,
            "tensor '" + name + "' data does not match its shape");
    w.le<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (std::uint64_t d : t.shape) w.le<std::uint64_t>(d);
    for (double x : t.data) w.f64(x);
  }
  std::string out = w.str();
  auto sum = detail::digest(EVP_sha256(), out);
  out.append(reinterpret_cast<const char*>(sum.data()), sum.size());
  return out;
}

inline std::pair<Json, std::map<std::string, Tensor>> decode_container(const std::string& bytes) {
  constexpr std::size_t kSum = 32;
  if (bytes.size() < sizeof(kCheckpointMagic) + kSum ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    fail(ErrorCode::kCheckpointError, "not a checkpoint file (bad magic)");
  }
  const std::size_t body = bytes.size() - kSum;
  auto sum = detail::digest(EVP_sha256(), bytes.substr(0, body));
  if (std::memcmp(sum.data(), bytes.data() + body, kSum) != 0) {
    fail(ErrorCode::kCheckpointError, "checkpoint checksum mismatch (file is corrupted)");
  }
  detail::ByteReader r(bytes, body);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kCheckpointError, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto meta_len = r.le<std::uint64_t>();
  if (meta_len > r.remaining()) fail(ErrorCode::kCheckpointError, "checkpoint is truncated");
  Json meta;
  try {
    meta = Json::parse(r.str(meta_len));
  } catch (const Json::exception&) {
    fail(ErrorCode::kCheckpointError, "checkpoint metadata is not valid JSON");
  }
  const auto count = r.le<std::uint32_t>();
  std::map<std::string, Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.le<std::uint32_t>();
    std::string name = r.str(name_len);
    const auto rank = r.le<std::uint32_t>();
    Tensor t;
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.shape.push_back(r.le<std::uint64_t>());
      n *= t.shape.back();
    }
    if (n > r.remaining() / 8) fail(ErrorCode::kCheckpointError, "checkpoint is truncated");
    t.data.resize(n);
    for (auto& x : t.data) x = r.f64();
    tensors.emplace(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) fail(ErrorCode::kCheckpointError, "trailing bytes in checkpoint");
  return {std::move(meta), std::move(tensors)};
}

// ---------------------------------------------------------------------------
// Model <-> container

inline std::string encode_checkpoint(const Checkpoint& ck) {
  using detail::to_tensor;
  const HetSngpModel& m = ck.model;
  std::map<std::string, Tensor> t;
  t["standardizer.mean"] = to_tensor(ck.standardizer.mean);
  t["standardizer.sd"] = to_tensor(ck.standardizer.sd);
  const auto& layers = m.net().layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    char prefix[32];
    std::snprintf(prefix, sizeof(prefix), "net.%03zu.", l);
    t[std::string(prefix) + "weight"] = to_tensor(layers[l].weight);
    t[std::string(prefix) + "bias"] = to_tensor(layers[l].bias);
    t[std::string(prefix) + "u"] = to_tensor(layers[l].u);
  }
  bool finalized = false;
  if (m.has_gp()) {
    t["rff.weight"] = to_tensor(m.rff().weight());
    t["rff.bias"] = to_tensor(m.rff().bias());
    t["rff.lengthscale"] = detail::scalar_tensor(m.rff().lengthscale());
    t["gp.beta_hat"] = to_tensor(m.gp().beta_hat());
    finalized = m.gp().finalized();
    if (finalized) {
      const auto& factors = m.gp().cov_factors();
      for (std::size_t c = 0; c < factors.size(); ++c) {
        t["gp.cov_factor." + std::to_string(c)] = to_tensor(factors[c]);
      }
    }
  } else {
    t["head.weight"] = to_tensor(m.mean_head().weight);
    t["head.bias"] = to_tensor(m.mean_head().bias);
  }
  if (m.het()) {
    const HetHead& h = *m.het();
    t["het.v_weight"] = to_tensor(h.v_weight());
    t["het.v_bias"] = to_tensor(h.v_bias());
    if (!h.standard()) t["het.free_v"] = to_tensor(h.free_v());
    t["het.d_weight"] = to_tensor(h.d_weight());
    t["het.d_bias"] = to_tensor(h.d_bias());
  }
  Json meta = {{"config", run_config_to_json(ck.config)},
               {"input_dim", ck.dims.input_dim},
               {"num_classes", ck.dims.num_classes},
               {"label_names", ck.label_names},
               {"feature_names", ck.feature_names},
               {"gp_finalized", finalized}};
  return encode_container(meta, t);
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  auto [meta, raw] = decode_container(bytes);
  detail::TensorMap t(std::move(raw));
  Checkpoint ck;
  try {
    ck.config = run_config_from_json(meta.at("config"));
    ck.dims.input_dim = meta.at("input_dim").get<int>();
    ck.dims.num_classes = meta.at("num_classes").get<int>();
    ck.label_names = meta.at("label_names").get<std::vector<std::string>>();
    ck.feature_names = meta.at("feature_names").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    fail(ErrorCode::kCheckpointError, std::string("checkpoint metadata is malformed: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorCode::kCheckpointError, std::string("checkpoint config is invalid: ") + e.what());
  }
  const bool finalized = meta.value("gp_finalized", false);
  const int d = ck.dims.input_dim;
  const int k = ck.dims.num_classes;
  require(d >= 1 && k >= 2, ErrorCode::kCheckpointError, "checkpoint has invalid dimensions");
  ck.standardizer.mean = t.vector("standardizer.mean", d);
  ck.standardizer.sd = t.vector("standardizer.sd", d);

  ModelConfig mc = ck.config.model;
  mc.net.input_dim = d;
  mc.het.num_classes = k;
  if (!variant_has_gp(mc.variant)) mc.net.spectral_normalization = false;
  const int hidden = mc.net.hidden_dim;
  const int latent = mc.net.output_dim;
  std::vector<DenseLayer> layers;
  const int num_layers = mc.net.num_residual_blocks + 2;
  for (int l = 0; l < num_layers; ++l) {
    const int in = l == 0 ? d : hidden;
    const int out = l == num_layers - 1 ? latent : hidden;
    char prefix[32];
    std::snprintf(prefix, sizeof(prefix), "net.%03d.", l);
    DenseLayer layer;
    layer.weight = t.matrix(std::string(prefix) + "weight", out, in);
    layer.bias = t.vector(std::string(prefix) + "bias", out);
    layer.u = t.vector(std::string(prefix) + "u", out);
    layers.push_back(std::move(layer));
  }
  FeatureExtractor net(mc.net, std::move(layers));

  DenseLayer head;
  RffProjection rff;
  GpPosterior gp;
  if (variant_has_gp(mc.variant)) {
    const int m = mc.rff.num_features;
    rff = RffProjection(t.matrix("rff.weight", m, latent), t.vector("rff.bias", m),
                        t.scalar("rff.lengthscale"));
    gp = GpPosterior(m, k, mc.rff.posterior_mode, mc.rff.momentum);
    std::vector<Matrix> factors;
    if (finalized) {
      for (int c = 0; c < k; ++c) factors.push_back(t.matrix("gp.cov_factor." + std::to_string(c), m, m));
    }
    gp.restore(t.matrix("gp.beta_hat", m, k), {}, std::move(factors), finalized);
  } else {
    head.weight = t.matrix("head.weight", k, latent);
    head.bias = t.vector("head.bias", k);
    head.u = Vector::Ones(k).normalized();
  }
  std::optional<HetHead> het;
  if (variant_has_het(mc.variant)) {
    const bool standard = mc.het.variant == HetVariant::kStandard;
    const int v_rows = standard ? k * mc.het.rank : k;
    het.emplace(mc.het, latent, t.matrix("het.v_weight", v_rows, latent),
                t.vector("het.v_bias", v_rows),
                standard ? Matrix() : t.matrix("het.free_v", k, mc.het.rank),
                t.matrix("het.d_weight", k, latent), t.vector("het.d_bias", k));
  }
  ck.model = HetSngpModel(mc, std::move(net), std::move(head), std::move(rff), std::move(gp),
                          std::move(het));
  return ck;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIoError, "write failed for '" + path + "'");
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kCheckpointError, "cannot open checkpoint '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace hetsngp

#endif  // HETSNGP_CHECKPOINT_HPP_
