#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "refcomp/cloud_io.hpp"
#include "refcomp/config.hpp"
#include "refcomp/param_store.hpp"

namespace refcomp {

/// Checkpoint layout (all integers and floats little-endian):
///   magic "RFCK", u32 version = 1, u64 step, u32 entry count,
///   per entry: u32 name length, name bytes, u32 rank, u64 dims[rank],
///              f64 values, f64 moment1, f64 moment2, u64 moment step,
///   then a config snapshot: u32 byte length + UTF-8 `key = value` text.
struct Checkpoint {
  TrainConfig config;
  std::uint64_t step = 0;
  ParamStore params;
};

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& buf, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(buf, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t at = 0;
  const std::string& origin;

  void need(std::size_t n) const {
    if (at + n > buf.size())
      throw std::runtime_error(origin + ": truncated checkpoint at byte " +
                               std::to_string(at));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
    at += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
    at += 8;
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(at, n);
    at += n;
    return s;
  }
};

}  // namespace detail

inline std::string serialize_checkpoint(const ParamStore& params,
                                        const TrainConfig& config,
                                        std::uint64_t step) {
  std::string buf = "RFCK";
  detail::put_u32(buf, 1);
  detail::put_u64(buf, step);
  detail::put_u32(buf, static_cast<std::uint32_t>(params.count()));
  for (const auto& [name, p] : params) {
    detail::put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    detail::put_u32(buf, static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t d : p.shape) detail::put_u64(buf, d);
    for (double v : p.value) detail::put_f64(buf, v);
    for (double v : p.moment1) detail::put_f64(buf, v);
    for (double v : p.moment2) detail::put_f64(buf, v);
    detail::put_u64(buf, p.steps);
  }
  std::string cfg = serialize_config(config);
  detail::put_u32(buf, static_cast<std::uint32_t>(cfg.size()));
  buf += cfg;
  return buf;
}

inline void save_checkpoint(const std::string& path, const ParamStore& params,
                            const TrainConfig& config, std::uint64_t step) {
  write_file_atomic(path, serialize_checkpoint(params, config, step));
}

inline Checkpoint parse_checkpoint(const std::string& buf, const std::string& origin) {
  if (buf.size() < 4 || buf.compare(0, 4, "RFCK") != 0)
    throw std::runtime_error(origin + ": bad checkpoint magic (want RFCK)");
  detail::Reader r{buf, 4, origin};
  std::uint32_t version = r.u32();
  if (version != 1)
    throw std::runtime_error(origin + ": unsupported checkpoint version " +
                             std::to_string(version));
  Checkpoint ckpt;
  ckpt.step = r.u64();
  std::uint32_t count = r.u32();
  for (std::uint32_t e = 0; e < count; ++e) {
    std::uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape;
    for (std::uint32_t d = 0; d < rank; ++d)
      shape.push_back(static_cast<std::size_t>(r.u64()));
    Param& p = ckpt.params.create(name, shape);
    for (double& v : p.value) v = r.f64();
    for (double& v : p.moment1) v = r.f64();
    for (double& v : p.moment2) v = r.f64();
    p.steps = r.u64();
  }
  std::uint32_t cfg_len = r.u32();
  std::string cfg_text = r.bytes(cfg_len);
  ckpt.config = parse_config_text(cfg_text);
  if (r.at != buf.size())
    throw std::runtime_error(origin + ": trailing bytes after checkpoint payload");
  return ckpt;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str(), path);
}

}  // namespace refcomp
