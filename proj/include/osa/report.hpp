#pragma once

#include <map>
#include <string>
#include <vector>

namespace osa::report {

struct CheckRecord {
  std::string suite;
  std::string name;
  std::string anchor;  // stable slug naming the property checked
  double measured = 0.0;
  double bound = 0.0;
  bool pass = false;
  double wall_ms = 0.0;
};

struct Report {
  int version = 1;
  std::string command;
  std::map<std::string, std::string> config;
  std::vector<CheckRecord> checks;

  bool all_pass() const;
  void add(CheckRecord rec) { checks.push_back(std::move(rec)); }
};

// Serialized documents are deterministic for identical inputs except for the
// wall_ms fields.
std::string to_json(const Report& rep);
std::string to_csv(const Report& rep);

// Schema check: version 1, every record carries a non-empty suite, name and
// anchor, and measured/bound are not NaN (infinities allowed for one-sided
// bounds).
bool validate(const Report& rep, std::string* why = nullptr);

std::string format_double(double v);

std::string table_csv(const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows);

}  // namespace osa::report
