#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "refcomp/cloud_io.hpp"
#include "refcomp/manifest.hpp"
#include "refcomp/rng.hpp"

using namespace refcomp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("refcomp_io_" + std::to_string(Catch::rngSeed()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

PointCloud random_cloud(Rng& rng, int n) {
  PointCloud c;
  for (int i = 0; i < n; ++i)
    c.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
  return c;
}

}  // namespace

TEST_CASE("pcb round trip is bit exact at f32") {
  TempDir tmp;
  Rng rng(7);
  PointCloud c = random_cloud(rng, 100);
  std::string path = (tmp.path / "a.pcb").string();
  write_cloud(c, path);
  PointCloud back = read_cloud(path);
  REQUIRE(back.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    REQUIRE(back.points[i].x == static_cast<double>(static_cast<float>(c.points[i].x)));
    REQUIRE(back.points[i].y == static_cast<double>(static_cast<float>(c.points[i].y)));
    REQUIRE(back.points[i].z == static_cast<double>(static_cast<float>(c.points[i].z)));
  }
  // reading back a rewritten file is identical bytes
  std::string path2 = (tmp.path / "b.pcb").string();
  write_cloud(back, path2);
  REQUIRE(serialize_cloud(back, CloudFormat::PcbBinary) ==
          serialize_cloud(read_cloud(path2), CloudFormat::PcbBinary));
}

TEST_CASE("xyz round trip at 9 significant digits") {
  TempDir tmp;
  Rng rng(13);
  PointCloud c = random_cloud(rng, 50);
  std::string path = (tmp.path / "a.xyz").string();
  write_cloud(c, path);
  PointCloud back = read_cloud(path);
  REQUIRE(back.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i)
    REQUIRE(std::sqrt(sq_dist(back.points[i], c.points[i])) < 1e-8);
  // a second write of the parsed values reproduces the same text
  std::string again = serialize_cloud(back, CloudFormat::XyzAscii);
  std::ifstream in(path);
  std::string first((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  REQUIRE(again == first);
}

TEST_CASE("cloud parse errors carry positions") {
  TempDir tmp;
  SECTION("bad magic") {
    std::string path = (tmp.path / "bad.pcb").string();
    write_file_atomic(path, "XYZ1....");
    REQUIRE_THROWS_WITH(read_cloud(path), Catch::Matchers::ContainsSubstring("magic"));
  }
  SECTION("truncated pcb") {
    PointCloud c;
    c.points = {{1, 2, 3}, {4, 5, 6}};
    std::string payload = serialize_cloud(c, CloudFormat::PcbBinary);
    payload.resize(payload.size() - 5);
    std::string path = (tmp.path / "short.pcb").string();
    write_file_atomic(path, payload);
    REQUIRE_THROWS_WITH(read_cloud(path),
                        Catch::Matchers::ContainsSubstring("truncated"));
  }
  SECTION("bad xyz token names the line") {
    std::string path = (tmp.path / "bad.xyz").string();
    write_file_atomic(path, "1 2 3\n4 five 6\n");
    REQUIRE_THROWS_WITH(read_cloud(path), Catch::Matchers::ContainsSubstring(":2"));
  }
  SECTION("zero points rejected") {
    PointCloud c;
    c.points = {{1, 2, 3}};
    std::string payload = serialize_cloud(c, CloudFormat::PcbBinary);
    payload[4] = payload[5] = payload[6] = payload[7] = 0;  // count = 0
    payload.resize(8);
    std::string path = (tmp.path / "empty.pcb").string();
    write_file_atomic(path, payload);
    REQUIRE_THROWS_WITH(read_cloud(path),
                        Catch::Matchers::ContainsSubstring("no points"));
  }
}

TEST_CASE("manifest round trip") {
  TempDir tmp;
  ReferenceManifest m;
  PointCloud c;
  c.points = {{0, 0, 0}};
  for (const char* name : {"t.pcb", "p.pcb", "c.pcb", "m.pcb"})
    write_cloud(c, (tmp.path / name).string());
  m.entries.push_back({"t.pcb", 1, "p.pcb", "c.pcb", "m.pcb", 0.12345678901234567});
  m.entries.push_back({"t.pcb", 2, "p.pcb", "c.pcb", "m.pcb", 1e-9});
  std::string path = (tmp.path / "refs.tsv").string();
  save_manifest(m, path);
  ReferenceManifest back = load_manifest(path, true);
  REQUIRE(back.entries.size() == 2);
  REQUIRE(back.entries[0].target_path == "t.pcb");
  REQUIRE(back.entries[0].rank == 1);
  REQUIRE(back.entries[0].cd == 0.12345678901234567);
  REQUIRE(back.entries[1].cd == 1e-9);
}

TEST_CASE("manifest errors name the line") {
  TempDir tmp;
  std::string path = (tmp.path / "refs.tsv").string();
  SECTION("truncated row") {
    write_file_atomic(path, "#refcomp-manifest v1\na.pcb\t1\tb.pcb\n");
    REQUIRE_THROWS_WITH(load_manifest(path, false),
                        Catch::Matchers::ContainsSubstring(":2"));
  }
  SECTION("missing referenced file") {
    write_file_atomic(path,
                      "#refcomp-manifest v1\n"
                      "gone.pcb\t1\tgone.pcb\tgone.pcb\tgone.pcb\t0.5\n");
    REQUIRE_THROWS_WITH(load_manifest(path, true),
                        Catch::Matchers::ContainsSubstring("not found"));
  }
  SECTION("bad header") {
    write_file_atomic(path, "nope\n");
    REQUIRE_THROWS_WITH(load_manifest(path, false),
                        Catch::Matchers::ContainsSubstring(":1"));
  }
}
