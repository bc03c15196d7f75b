#pragma once

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "onh/volume.hpp"

namespace testutil {

// Scoped temporary directory; removed recursively on destruction.
class TempDir {
 public:
  TempDir() {
    namespace fs = std::filesystem;
    auto base = fs::temp_directory_path();
    for (int i = 0; i < 10000; ++i) {
      fs::path cand = base / ("onhtest-" + std::to_string(::getpid()) + "-" + std::to_string(counter_++));
      std::error_code ec;
      if (fs::create_directory(cand, ec)) {
        path_ = cand;
        return;
      }
    }
    std::abort();
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& name) const { return (path_ / name).string(); }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

// Uniform-labels volume with simple spacing, handy for metric tests.
inline onh::LabelVolume label_block(int nb, int na, int nd, std::uint8_t fill,
                                    onh::VoxelSpacing sp = {0.03, 0.01, 0.0039}) {
  onh::Dims dims{nb, na, nd};
  return onh::make_label_volume(dims, sp, std::vector<std::uint8_t>(dims.voxels(), fill));
}

}  // namespace testutil
