#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "refcomp/cloud_io.hpp"

namespace refcomp {

struct ManifestEntry {
  std::string target_path;
  int rank = 0;  // 1-based, ascending cd within a target
  std::string partial_path;
  std::string complete_path;
  std::string mask_path;
  double cd = 0.0;
};

/// Reference manifest: for each target, its retrieved reference pairs in
/// ascending-CD order. Paths are stored relative to the manifest file.
struct ReferenceManifest {
  std::vector<ManifestEntry> entries;
};

inline std::string format_real17(double v) {
  char tmp[40];
  std::snprintf(tmp, sizeof(tmp), "%.17g", v);
  return tmp;
}

inline void save_manifest(const ReferenceManifest& manifest, const std::string& path) {
  std::string buf = "#refcomp-manifest v1\n";
  for (const auto& e : manifest.entries) {
    buf += e.target_path + "\t" + std::to_string(e.rank) + "\t" + e.partial_path +
           "\t" + e.complete_path + "\t" + e.mask_path + "\t" +
           format_real17(e.cd) + "\n";
  }
  write_file_atomic(path, buf);
}

inline ReferenceManifest load_manifest(const std::string& path,
                                       bool check_files = true) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "#refcomp-manifest v1")
    throw std::runtime_error(path + ":1: bad manifest header");
  ReferenceManifest manifest;
  auto dir = std::filesystem::path(path).parent_path();
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ManifestEntry e;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 6)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 6 tab-separated fields, got " +
                               std::to_string(fields.size()));
    e.target_path = fields[0];
    try {
      e.rank = std::stoi(fields[1]);
      e.cd = std::stod(fields[5]);
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": malformed numeric field");
    }
    e.partial_path = fields[2];
    e.complete_path = fields[3];
    e.mask_path = fields[4];
    if (check_files) {
      for (const std::string* p :
           {&e.target_path, &e.partial_path, &e.complete_path, &e.mask_path}) {
        if (!std::filesystem::exists(dir / *p))
          throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                   ": referenced file not found: " + *p);
      }
    }
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

}  // namespace refcomp
