#pragma once

// Experiment folders and Tidy CSV output (optionally gzipped).

#include <zlib.h>

#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tempo/core.hpp"

namespace tempo::cli {

namespace fs = std::filesystem;

struct OutputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string format_number(double x) {
  if (std::isnan(x)) return "NaN";
  if (std::isinf(x)) return x > 0 ? "Infinity" : "-Infinity";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline std::string format_number(std::int64_t x) { return std::to_string(x); }
inline std::string format_number(std::size_t x) { return std::to_string(x); }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// One CSV file with a fixed header; every row must match its width.
class CsvWriter {
 public:
  CsvWriter(const fs::path& path, std::vector<std::string> header, bool compressed = false)
      : columns_(header.size()), compressed_(compressed) {
    path_ = compressed ? fs::path(path.string() + ".gz") : path;
    if (compressed) {
      gz_ = gzopen(path_.c_str(), "wb");
      if (!gz_) throw OutputError("cannot open " + path_.string());
    } else {
      out_.open(path_, std::ios::binary);
      if (!out_) throw OutputError("cannot open " + path_.string());
    }
    write_line(header);
  }
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;
  ~CsvWriter() { close(); }

  void row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) throw OutputError("row width does not match header in " + path_.string());
    write_line(fields);
  }

  void close() {
    if (gz_) {
      gzclose(gz_);
      gz_ = nullptr;
    }
    if (out_.is_open()) out_.close();
  }

  const fs::path& path() const { return path_; }

 private:
  void write_line(const std::vector<std::string>& fields) {
    line_.clear();
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) line_ += ',';
      line_ += csv_field(fields[i]);
    }
    line_ += '\n';
    if (gz_) {
      if (gzwrite(gz_, line_.data(), static_cast<unsigned>(line_.size())) != static_cast<int>(line_.size()))
        throw OutputError("write failed: " + path_.string());
    } else {
      out_.write(line_.data(), static_cast<std::streamsize>(line_.size()));
      if (!out_) throw OutputError("write failed: " + path_.string());
    }
  }

  std::size_t columns_;
  bool compressed_;
  fs::path path_;
  std::ofstream out_;
  gzFile gz_ = nullptr;
  std::string line_;
};

// Key columns preceding "sample" for a variable of the given kind.
inline std::vector<std::string> tidy_keys(const Kind& k) {
  switch (k.tag) {
    case VarKind::real_scalar:
    case VarKind::int_scalar: return {};
    case VarKind::permutation: return {"index", "permutation_index"};
    case VarKind::transition_matrix: return {"index", "column"};
    default: return {"index"};
  }
}

inline std::vector<std::string> tidy_header(const Kind& k) {
  auto h = tidy_keys(k);
  h.push_back("sample");
  h.push_back("value");
  return h;
}

// Flattened entries of one variable with their key values.
struct TidyEntry {
  std::vector<std::string> keys;
  double value;
  bool integer;
};

inline std::vector<TidyEntry> tidy_entries(const Kind& k, const State& s, VarId v) {
  std::vector<TidyEntry> out;
  const bool real = k.real_storage();
  auto value = [&](std::size_t i) { return real ? s.real(v, i) : static_cast<double>(s.integer(v, i)); };
  switch (k.tag) {
    case VarKind::real_scalar:
    case VarKind::int_scalar: out.push_back({{}, value(0), !real}); break;
    case VarKind::permutation:
      for (std::size_t i = 0; i < k.size; ++i) out.push_back({{"0", std::to_string(i)}, value(i), true});
      break;
    case VarKind::transition_matrix:
      for (std::size_t r = 0; r < k.size; ++r)
        for (std::size_t c = 0; c < k.size; ++c) out.push_back({{std::to_string(r), std::to_string(c)}, value(r * k.size + c), false});
      break;
    default:
      for (std::size_t i = 0; i < k.size; ++i) out.push_back({{std::to_string(i)}, value(i), !real});
  }
  return out;
}

inline std::string format_value(const TidyEntry& e) {
  return e.integer ? std::to_string(static_cast<std::int64_t>(e.value)) : format_number(e.value);
}

inline void write_tidy(const Kind& k, const State& s, VarId v, std::size_t sample, CsvWriter& w) {
  for (const auto& e : tidy_entries(k, s, v)) {
    auto row = e.keys;
    row.push_back(std::to_string(sample));
    row.push_back(format_value(e));
    w.row(row);
  }
}

inline std::string base62_token(std::size_t n, std::mt19937_64& rng) {
  static constexpr char alphabet[] = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
  std::uniform_int_distribution<int> pick(0, 61);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += alphabet[pick(rng)];
  return s;
}

// results/all/<yyyy-mm-dd-hh-mm-ss>-<token>.exec plus the results/latest link.
class ExperimentFolder {
 public:
  explicit ExperimentFolder(const fs::path& results_root) {
    fs::create_directories(results_root / "all");
    std::mt19937_64 rng(std::random_device{}());
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%d-%H-%M-%S", &tm);
    for (int attempt = 0;; ++attempt) {
      std::string name = std::string(stamp) + "-" + base62_token(8, rng) + ".exec";
      fs::path p = results_root / "all" / name;
      if (fs::create_directory(p)) {
        root_ = p;
        break;
      }
      if (attempt > 100) throw OutputError("cannot create a unique execution folder in " + results_root.string());
    }
    for (const char* d : {"samples", "monitoring", "summaries"}) fs::create_directories(root_ / d);
    fs::path latest = results_root / "latest";
    std::error_code ec;
    fs::remove(latest, ec);
    fs::create_directory_symlink(fs::path("all") / root_.filename(), latest, ec);
  }

  const fs::path& root() const { return root_; }
  fs::path samples() const { return root_ / "samples"; }
  fs::path monitoring() const { return root_ / "monitoring"; }
  fs::path summaries() const { return root_ / "summaries"; }

 private:
  fs::path root_;
};

}  // namespace tempo::cli
