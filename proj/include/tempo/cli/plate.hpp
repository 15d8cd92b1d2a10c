#pragma once

// Plate-lite data input: plates are index columns of a Tidy CSV, plated
// variables are value columns keyed by the plates they live in.

#include <boost/tokenizer.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace tempo::cli {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  using Sep = boost::escaped_list_separator<char>;
  boost::tokenizer<Sep> tok(line, Sep('\\', ',', '"'));
  std::vector<std::string> out;
  for (const auto& f : tok) out.push_back(f);
  return out;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (first) {
      t.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != t.header.size())
      throw DataError(path + ": row has " + std::to_string(fields.size()) + " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  if (first) throw DataError(path + ": missing header");
  return t;
}

struct PlateSpec {
  std::string name;
  std::optional<std::string> column;  // defaults to the name
  std::optional<std::size_t> max_size;
};

struct PlatedSpec {
  std::string name;
  std::vector<std::string> plates;
  std::optional<std::string> column;
};

class PlateTable {
 public:
  // all indices of a plate, in order of first appearance
  const std::vector<std::string>& indices(const std::string& plate) const {
    auto it = indices_.find(plate);
    if (it == indices_.end()) throw DataError("unknown plate '" + plate + "'");
    return it->second;
  }

  // indices of a plate that occur together with the given parent indices
  std::vector<std::string> indices(const std::string& plate, const std::map<std::string, std::string>& parents) const {
    const auto& all = indices(plate);
    if (parents.empty() || !plate_columns_.count(plate)) return all;
    std::set<std::string> seen;
    std::vector<std::string> out;
    for (const auto& row : rows_) {
      bool match = true;
      for (const auto& [p, v] : parents) {
        auto c = plate_columns_.find(p);
        if (c != plate_columns_.end() && row[c->second] != v) match = false;
      }
      const auto& x = row[plate_columns_.at(plate)];
      if (match && seen.insert(x).second) out.push_back(x);
    }
    return out;
  }

  // value of a plated variable at the given plate indices; nullopt means latent
  std::optional<std::string> lookup(const std::string& name, const std::map<std::string, std::string>& at) const {
    auto it = plated_.find(name);
    if (it == plated_.end()) throw DataError("unknown plated variable '" + name + "'");
    if (latent_.count(name)) return std::nullopt;
    std::vector<std::string> key;
    for (const auto& p : plated_plates_.at(name)) {
      auto v = at.find(p);
      if (v == at.end()) throw DataError("'" + name + "' needs an index for plate '" + p + "'");
      key.push_back(v->second);
    }
    auto row = it->second.find(key);
    if (row == it->second.end()) return std::nullopt;
    return row->second;
  }

  bool latent(const std::string& name) const { return latent_.count(name) != 0; }

 private:
  friend PlateTable read_plate_data(const std::string&, const std::vector<PlateSpec>&, const std::vector<PlatedSpec>&,
                                    std::ostream&);
  std::map<std::string, std::vector<std::string>> indices_;
  std::map<std::string, std::size_t> plate_columns_;
  std::map<std::string, std::map<std::vector<std::string>, std::string>> plated_;
  std::map<std::string, std::vector<std::string>> plated_plates_;
  std::set<std::string> latent_;
  std::vector<std::vector<std::string>> rows_;
};

inline PlateTable read_plate_data(const std::string& csv_path, const std::vector<PlateSpec>& plates,
                                  const std::vector<PlatedSpec>& plated, std::ostream& notices) {
  CsvTable csv = read_csv(csv_path);
  PlateTable t;
  t.rows_ = csv.rows;
  for (const auto& p : plates) {
    std::string col = p.column.value_or(p.name);
    if (auto c = csv.column(col)) {
      t.plate_columns_[p.name] = *c;
      auto& idx = t.indices_[p.name];
      std::set<std::string> seen;
      for (const auto& row : csv.rows)
        if (seen.insert(row[*c]).second) idx.push_back(row[*c]);
      if (p.max_size && idx.size() > *p.max_size)
        throw DataError("plate '" + p.name + "' has " + std::to_string(idx.size()) + " indices, more than maxSize");
    } else if (p.max_size) {
      auto& idx = t.indices_[p.name];
      for (std::size_t i = 0; i < *p.max_size; ++i) idx.push_back(std::to_string(i));
    } else {
      throw DataError("plate '" + p.name + "' has no column '" + col + "' in " + csv_path + "; set its maxSize");
    }
  }
  for (const auto& v : plated) {
    for (const auto& p : v.plates)
      if (!t.indices_.count(p)) throw DataError("plated variable '" + v.name + "' refers to unknown plate '" + p + "'");
    t.plated_plates_[v.name] = v.plates;
    auto& values = t.plated_[v.name];
    std::string col = v.column.value_or(v.name);
    auto c = csv.column(col);
    if (!c) {
      t.latent_.insert(v.name);
      notices << "Plated variable " << v.name << " not found in " << csv_path << "; it is assumed to be latent\n";
      continue;
    }
    for (const auto& row : csv.rows) {
      std::vector<std::string> key;
      for (const auto& p : v.plates) {
        auto pc = t.plate_columns_.find(p);
        if (pc == t.plate_columns_.end())
          throw DataError("plated variable '" + v.name + "' is in the data but plate '" + p + "' has no column");
        key.push_back(row[pc->second]);
      }
      if (row[*c] == "NA" || row[*c].empty()) continue;
      values[key] = row[*c];
    }
  }
  return t;
}

}  // namespace tempo::cli
