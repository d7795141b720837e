#pragma once

// Report files: CSV tables, JSON documents, the reproducibility stanza and
// the staging directory that makes an output directory appear atomically.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "amicable/error.hpp"

#ifndef AMICABLE_VERSION
#define AMICABLE_VERSION "0.0.0"
#endif

namespace amicable {

inline constexpr const char* kVersion = AMICABLE_VERSION;

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return out;
}

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<std::string> row) {
    if (row.size() != header_.size()) {
      throw ShapeError("csv row has " + std::to_string(row.size()) + " fields, header has " +
                       std::to_string(header_.size()));
    }
    rows_.push_back(std::move(row));
  }

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  std::string str() const {
    std::string out;
    append(out, header_);
    for (const auto& r : rows_) append(out, r);
    return out;
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << str();
  }

 private:
  static void append(std::string& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      const std::string& v = fields[i];
      if (v.find_first_of(",\"\n") == std::string::npos) {
        out += v;
      } else {
        out += '"';
        for (char c : v) {
          if (c == '"') out += '"';
          out += c;
        }
        out += '"';
      }
    }
    out += '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInputError("file not found", path.string());
  std::ifstream f(path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
}

// Results are written into a hidden sibling directory and renamed into place
// by commit(), so a reader never sees a half-written output directory.
class StagedDir {
 public:
  explicit StagedDir(std::filesystem::path target) : target_(std::move(target)) {
    if (target_.empty()) throw ConfigError("no output directory given (--out)");
    if (std::filesystem::exists(target_)) {
      throw ConfigError("output directory already exists: " + target_.string());
    }
    auto parent = target_.parent_path();
    if (parent.empty()) parent = ".";
    std::filesystem::create_directories(parent);
    staging_ = parent / ("." + target_.filename().string() + ".staging");
    std::filesystem::remove_all(staging_);
    std::filesystem::create_directories(staging_);
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      std::filesystem::remove_all(staging_, ec);
    }
  }

  const std::filesystem::path& path() const { return staging_; }
  const std::filesystem::path& target() const { return target_; }

  void commit() {
    std::filesystem::rename(staging_, target_);
    committed_ = true;
  }

 private:
  std::filesystem::path target_;
  std::filesystem::path staging_;
  bool committed_ = false;
};

}  // namespace amicable
