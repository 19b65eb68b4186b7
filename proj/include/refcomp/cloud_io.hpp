#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "refcomp/geometry.hpp"

namespace refcomp {

enum class CloudFormat { XyzAscii, PcbBinary };

/// .xyz -> ascii, .pcb -> binary; anything else is rejected.
inline CloudFormat format_from_path(const std::string& path) {
  auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".xyz") return CloudFormat::XyzAscii;
  if (ext == ".pcb") return CloudFormat::PcbBinary;
  throw std::invalid_argument("unknown point cloud extension '" + ext +
                              "' in " + path);
}

/// Write `payload` to a temporary file in the target directory and rename it
/// into place, so failures never leave a partial file behind.
inline void write_file_atomic(const std::string& path, const std::string& payload) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

namespace detail {

inline void append_f32_le(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int i = 0; i < 4; ++i)
    buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline void append_u32_le(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t read_u32_le(const std::string& buf, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  return v;
}

inline float read_f32_le(const std::string& buf, std::size_t at) {
  std::uint32_t bits = read_u32_le(buf, at);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline std::string format_real9(double v) {
  char tmp[40];
  std::snprintf(tmp, sizeof(tmp), "%.9g", v);
  return tmp;
}

}  // namespace detail

inline std::string serialize_cloud(const PointCloud& cloud, CloudFormat format) {
  require_non_empty(cloud, "write_cloud");
  std::string buf;
  if (format == CloudFormat::XyzAscii) {
    for (const Point3& p : cloud.points) {
      buf += detail::format_real9(p.x);
      buf += ' ';
      buf += detail::format_real9(p.y);
      buf += ' ';
      buf += detail::format_real9(p.z);
      buf += '\n';
    }
  } else {
    buf.reserve(8 + cloud.size() * 12);
    buf += "PCB1";
    detail::append_u32_le(buf, static_cast<std::uint32_t>(cloud.size()));
    for (const Point3& p : cloud.points) {
      detail::append_f32_le(buf, static_cast<float>(p.x));
      detail::append_f32_le(buf, static_cast<float>(p.y));
      detail::append_f32_le(buf, static_cast<float>(p.z));
    }
  }
  return buf;
}

inline void write_cloud(const PointCloud& cloud, const std::string& path,
                        CloudFormat format) {
  write_file_atomic(path, serialize_cloud(cloud, format));
}

inline void write_cloud(const PointCloud& cloud, const std::string& path) {
  write_cloud(cloud, path, format_from_path(path));
}

inline PointCloud parse_cloud(const std::string& buf, CloudFormat format,
                              const std::string& origin) {
  PointCloud cloud;
  if (format == CloudFormat::XyzAscii) {
    std::istringstream in(buf);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::istringstream ls(line);
      Point3 p;
      if (!(ls >> p.x >> p.y >> p.z))
        throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                                 ": expected three reals, got '" + line + "'");
      std::string extra;
      if (ls >> extra)
        throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                                 ": trailing token '" + extra + "'");
      if (!p.finite())
        throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                                 ": non-finite coordinate");
      cloud.points.push_back(p);
    }
  } else {
    if (buf.size() < 8 || buf.compare(0, 4, "PCB1") != 0)
      throw std::runtime_error(origin + ": byte 0: bad magic (want PCB1)");
    std::uint32_t count = detail::read_u32_le(buf, 4);
    std::size_t need = 8 + static_cast<std::size_t>(count) * 12;
    if (buf.size() < need)
      throw std::runtime_error(origin + ": byte " + std::to_string(buf.size()) +
                               ": truncated payload (need " + std::to_string(need) +
                               " bytes for " + std::to_string(count) + " points)");
    cloud.points.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      std::size_t at = 8 + static_cast<std::size_t>(i) * 12;
      Point3 p{detail::read_f32_le(buf, at), detail::read_f32_le(buf, at + 4),
               detail::read_f32_le(buf, at + 8)};
      if (!p.finite())
        throw std::runtime_error(origin + ": byte " + std::to_string(at) +
                                 ": non-finite coordinate");
      cloud.points.push_back(p);
    }
  }
  if (cloud.empty()) throw std::runtime_error(origin + ": cloud has no points");
  return cloud;
}

inline PointCloud read_cloud(const std::string& path, CloudFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  PointCloud cloud = parse_cloud(ss.str(), format, path);
  cloud.source_id = std::filesystem::path(path).stem().string();
  return cloud;
}

inline PointCloud read_cloud(const std::string& path) {
  return read_cloud(path, format_from_path(path));
}

}  // namespace refcomp
