#pragma once

// Model container:
//
//   "PMSM" | u32 version | u64 config length | config text (key = value lines)
//   then per tensor: u64 name length | name | u64 rank | u64 dims[rank] | f64 values
//
// All integers and floats are little-endian. Tensors run to end of stream.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "pms/model/pms_model.hpp"

namespace pms::model {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr char kMagic[4] = {'P', 'M', 'S', 'M'};

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline bool get_bytes(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount()) == n;
}

inline std::uint64_t get_u64(std::istream& in, const std::string& record) {
  unsigned char b[8];
  if (!get_bytes(in, reinterpret_cast<char*>(b), 8)) throw ModelFormatError("truncated record: " + record);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::uint32_t get_u32(std::istream& in, const std::string& record) {
  unsigned char b[4];
  if (!get_bytes(in, reinterpret_cast<char*>(b), 4)) throw ModelFormatError("truncated record: " + record);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline void put_tensor(std::ostream& out, const std::string& name, const Shape& dims, const double* values) {
  put_u64(out, name.size());
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u64(out, dims.size());
  for (std::size_t d : dims) put_u64(out, d);
  const std::size_t n = shape_size(dims);
  for (std::size_t i = 0; i < n; ++i) put_u64(out, std::bit_cast<std::uint64_t>(values[i]));
}

inline std::string stats_line(const std::array<double, 3>& v) {
  return kv::from_double(v[0]) + "," + kv::from_double(v[1]) + "," + kv::from_double(v[2]);
}

}  // namespace detail

inline void save_model(const PmsModel& model, std::ostream& out) {
  kv::KeyValues cfg = to_kv(model.config());
  for (const auto& [action, s] : model.norm_stats()) {
    cfg["norm." + action + ".min"] = detail::stats_line(s.min);
    cfg["norm." + action + ".max"] = detail::stats_line(s.max);
  }
  const std::string text = kv::format(cfg);
  out.write(kMagic, 4);
  detail::put_u32(out, kFormatVersion);
  detail::put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : model.params().params()) detail::put_tensor(out, "param/" + name, t.dims(), t.data());
  for (const auto& [name, s] : model.bn_states()) {
    detail::put_tensor(out, "bn_mean/" + name, {s.running_mean.size()}, s.running_mean.data());
    detail::put_tensor(out, "bn_var/" + name, {s.running_var.size()}, s.running_var.data());
  }
  if (!out) throw Error("save_model: write failed");
}

inline PmsModel load_model(std::istream& in) {
  char magic[4];
  if (!detail::get_bytes(in, magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ModelFormatError("bad magic: not a PMSM model container");
  }
  const std::uint32_t version = detail::get_u32(in, "version");
  if (version != kFormatVersion) {
    throw ModelFormatError("unsupported format version " + std::to_string(version) + " (expected " +
                           std::to_string(kFormatVersion) + ")");
  }
  const std::uint64_t len = detail::get_u64(in, "config length");
  if (len > (1ULL << 30)) throw ModelFormatError("config block length " + std::to_string(len) + " is implausible");
  std::string text(len, '\0');
  if (!detail::get_bytes(in, text.data(), len)) throw ModelFormatError("truncated record: config block");
  const kv::KeyValues values = kv::parse(text);

  ModelConfig cfg;
  apply(cfg, values);
  std::map<std::string, data::NormStats> norms;
  for (const auto& [key, value] : values) {
    if (key.rfind("norm.", 0) != 0) continue;
    const auto dot = key.rfind('.');
    const std::string action = key.substr(5, dot - 5);
    const std::string which = key.substr(dot + 1);
    const auto v = kv::to_doubles(key, value);
    if (v.size() != 3 || (which != "min" && which != "max")) throw ModelFormatError("malformed record: " + key);
    auto& s = norms[action];
    std::copy(v.begin(), v.end(), (which == "min" ? s.min : s.max).begin());
  }

  ParamGroup params;
  std::map<std::string, nn::BatchNormState> bn;
  while (in.peek() != std::char_traits<char>::eof()) {
    const std::uint64_t name_len = detail::get_u64(in, "tensor name length");
    if (name_len > 4096) throw ModelFormatError("tensor name length " + std::to_string(name_len) + " is implausible");
    std::string name(name_len, '\0');
    if (!detail::get_bytes(in, name.data(), name_len)) throw ModelFormatError("truncated record: tensor name");
    const std::uint64_t rank = detail::get_u64(in, name + " rank");
    if (rank == 0 || rank > 8) throw ModelFormatError("bad rank " + std::to_string(rank) + " in record " + name);
    Shape dims(rank);
    for (auto& d : dims) {
      d = detail::get_u64(in, name + " dims");
      if (d == 0 || d > (1ULL << 32)) throw ModelFormatError("bad dimension in record " + name);
    }
    std::vector<double> v(shape_size(dims));
    for (double& x : v) x = std::bit_cast<double>(detail::get_u64(in, name + " values"));
    if (name.rfind("param/", 0) == 0) {
      params.add(name.substr(6), Tensor(dims, std::move(v)));
    } else if (name.rfind("bn_mean/", 0) == 0) {
      bn[name.substr(8)].running_mean = std::move(v);
    } else if (name.rfind("bn_var/", 0) == 0) {
      bn[name.substr(7)].running_var = std::move(v);
    } else {
      throw ModelFormatError("unknown record " + name);
    }
  }
  for (auto& [name, s] : bn) {
    s.momentum = cfg.bn_momentum;
    s.eps = cfg.bn_eps;
  }

  // Cross-check the stored parameter set against the configuration.
  const PmsModel reference(cfg);
  for (const auto& [name, t] : reference.params().params()) {
    if (!params.contains(name)) throw ModelFormatError("missing record param/" + name);
    if (params.get(name).dims() != t.dims()) throw ModelFormatError("record param/" + name + " has wrong dims");
  }
  if (params.params().size() != reference.params().params().size()) {
    throw ModelFormatError("parameter records do not match the configuration");
  }
  for (const auto& [name, s] : reference.bn_states()) {
    auto it = bn.find(name);
    if (it == bn.end() || it->second.running_mean.size() != s.running_mean.size() ||
        it->second.running_var.size() != s.running_var.size()) {
      throw ModelFormatError("missing or malformed batch-norm record " + name);
    }
  }
  return PmsModel(std::move(cfg), std::move(params), std::move(bn), std::move(norms));
}

inline void save_model(const PmsModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  save_model(model, out);
}

inline PmsModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return load_model(in);
}

inline std::string save_model_bytes(const PmsModel& model) {
  std::ostringstream out(std::ios::binary);
  save_model(model, out);
  return out.str();
}

inline PmsModel load_model_bytes(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return load_model(in);
}

}  // namespace pms::model
