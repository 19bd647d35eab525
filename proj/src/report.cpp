#include "osa/report.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace osa::report {

bool Report::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

nlohmann::json number_or_string(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);  // "inf"/"nan" survive as strings
}

}  // namespace

std::string to_json(const Report& rep) {
  nlohmann::ordered_json doc;
  doc["version"] = rep.version;
  doc["command"] = rep.command;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : rep.config) cfg[k] = v;
  doc["config"] = cfg;
  doc["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : rep.checks) {
    nlohmann::ordered_json jc;
    jc["suite"] = c.suite;
    jc["name"] = c.name;
    jc["anchor"] = c.anchor;
    jc["measured"] = number_or_string(c.measured);
    jc["bound"] = number_or_string(c.bound);
    jc["status"] = c.pass ? "pass" : "fail";
    jc["wall_ms"] = c.wall_ms;
    doc["checks"].push_back(jc);
  }
  return doc.dump(2) + "\n";
}

std::string to_csv(const Report& rep) {
  std::string out = "suite,name,anchor,measured,bound,status,wall_ms\n";
  for (const auto& c : rep.checks) {
    out += c.suite + "," + c.name + "," + c.anchor + "," + format_double(c.measured) + "," +
           format_double(c.bound) + "," + (c.pass ? "pass" : "fail") + "," +
           format_double(c.wall_ms) + "\n";
  }
  return out;
}

bool validate(const Report& rep, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (rep.version != 1) return fail("unsupported report version");
  if (rep.command.empty()) return fail("missing command");
  for (const auto& c : rep.checks) {
    if (c.suite.empty()) return fail("check without suite: " + c.name);
    if (c.name.empty()) return fail("check without name in suite " + c.suite);
    if (c.anchor.empty()) return fail("check without anchor: " + c.suite + "/" + c.name);
    if (std::isnan(c.measured)) return fail("NaN measured value: " + c.name);
    if (std::isnan(c.bound)) return fail("NaN bound: " + c.name);
  }
  return true;
}

std::string table_csv(const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i)
    out += (i ? "," : "") + header[i];
  out += "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += "\n";
  }
  return out;
}

}  // namespace osa::report
