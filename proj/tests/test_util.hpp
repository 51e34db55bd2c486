#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <gtest/gtest.h>

#include "satpred/corpus.hpp"
#include "satpred/synthetic.hpp"

namespace satpred::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "satpred_";
    if (info) name += std::string(info->test_suite_name()) + "_" + info->name();
    name += "_" + std::to_string(counter++);
    for (auto& c : name) {
      if (c == '/') c = '_';
    }
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  f << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline ReviewRecord make_record(std::string id, std::string course, std::string text, double rating) {
  ReviewRecord r;
  r.id = std::move(id);
  r.course_id = std::move(course);
  r.domain_tag = "cs";
  r.text = std::move(text);
  r.rating = rating;
  r.timestamp = 1704067200;
  return r;
}

/// Small planted dataset for fast pipeline tests.
inline SyntheticData small_synthetic(std::size_t n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_reviews = n;
  spec.n_courses = 12;
  spec.seed = seed;
  return generate_synthetic(spec);
}

}  // namespace satpred::testing
