#pragma once

// Plain-text tables (CSV with a provenance comment line, or JSON records),
// atomic file output, and strict readers for longitudinal CSV input.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include "json.hpp"

#include "bsdesign/errors.hpp"
#include "bsdesign/metrics.hpp"
#include "bsdesign/model.hpp"
#include "bsdesign/scheduler.hpp"
#include "bsdesign/simulation.hpp"

namespace bsdesign::io {

inline constexpr std::string_view kToolName = "bsdesign";
inline constexpr std::string_view kToolVersion = "0.1.0";

// Shortest round-trip representation, or `digits` significant digits when
// positive. NaN prints as NA.
inline std::string format_double(double v, int digits = 0) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = digits > 0 ? std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits)
                              : std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

using Cell = std::variant<std::string, double, long long>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  // Significant digits for doubles; 0 means shortest round-trip.
  int digits = 0;

  void add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw InvalidArgument("table row has the wrong width");
    rows.push_back(std::move(row));
  }
};

struct Provenance {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string provenance_line(const Provenance& p) {
  return "# " + std::string(kToolName) + " " + std::string(kToolVersion) +
         " seed=" + std::to_string(p.seed) + " config_hash=" + hex64(p.config_hash);
}

inline std::string csv_quote(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string render_cell(const Cell& c, int digits) {
  if (const auto* s = std::get_if<std::string>(&c)) return csv_quote(*s);
  if (const auto* d = std::get_if<double>(&c)) return format_double(*d, digits);
  return std::to_string(std::get<long long>(c));
}

inline std::string render_csv(const Table& t, const Provenance& p) {
  std::string out = provenance_line(p) + "\n";
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + render_cell(row[i], t.digits);
    out += "\n";
  }
  return out;
}

// Array of records keyed by column name. NaN becomes null; infinities are
// written as the strings "inf" / "-inf".
inline std::string render_json(const Table& t) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& row : t.rows) {
    nlohmann::ordered_json rec = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < row.size(); ++i) {
      const auto& c = row[i];
      if (const auto* s = std::get_if<std::string>(&c)) {
        rec[t.columns[i]] = *s;
      } else if (const auto* d = std::get_if<double>(&c)) {
        if (std::isnan(*d)) {
          rec[t.columns[i]] = nullptr;
        } else if (std::isinf(*d)) {
          rec[t.columns[i]] = *d > 0 ? "inf" : "-inf";
        } else {
          rec[t.columns[i]] = t.digits > 0 ? std::stod(format_double(*d, t.digits)) : *d;
        }
      } else {
        rec[t.columns[i]] = std::get<long long>(c);
      }
    }
    arr.push_back(std::move(rec));
  }
  return arr.dump(2) + "\n";
}

enum class Format { Csv, Json };

inline std::string render(const Table& t, Format f, const Provenance& p) {
  return f == Format::Json ? render_json(t) : render_csv(t, p);
}

inline void check_output_path(const std::filesystem::path& path) {
  const auto parent = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::error_code ec;
  if (!std::filesystem::is_directory(parent, ec)) {
    throw InvalidArgument("output directory does not exist: " + parent.string());
  }
  if (std::filesystem::is_directory(path, ec)) {
    throw InvalidArgument("output path is a directory: " + path.string());
  }
}

// Writes to a sibling temporary file and renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InvalidArgument("cannot open " + tmp.string() + " for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw InvalidArgument("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw InvalidArgument("cannot move output into place at " + path.string());
  }
}

// "<dir>/<stem><suffix><ext>"
inline std::filesystem::path sibling(const std::filesystem::path& p, std::string_view suffix) {
  auto name = p.stem().string() + std::string(suffix) + p.extension().string();
  return p.has_parent_path() ? p.parent_path() / name : std::filesystem::path(name);
}

// Tables

inline Table schedule_table(const Schedule& s) {
  Table t{{"visit_index", "time"}, {}};
  for (std::size_t j = 0; j < s.size(); ++j) t.add({static_cast<long long>(j + 1), s.visits[j]});
  return t;
}

inline Table report_table(const ExperimentReport& r) {
  Table t{{"mu", "sigma", "n_visits", "design", "replicates", "sd_beta2", "mean_beta2", "failures"}, {}};
  for (const auto& row : r.rows) {
    t.add({row.mu, row.sigma, static_cast<long long>(row.n_visits), std::string(design_name(row.design)),
           static_cast<long long>(row.replicates), row.sd_beta2, row.mean_beta2,
           static_cast<long long>(row.failures)});
  }
  return t;
}

inline Table evaluation_table(const EvaluationResult& r) {
  Table t{{"group", "q1", "q2", "ratio", "q3", "n_subjects"}, {}};
  for (const auto& g : r.rows) {
    t.add({g.group_id, g.q1, g.q2, g.ratio, g.q3, static_cast<long long>(g.n_subjects)});
  }
  return t;
}

// One row; all NA when the trend is absent.
inline Table trend_table(const std::optional<TrendLine>& trend) {
  Table t{{"slope", "intercept", "p_value"}, {}};
  if (trend) {
    t.add({trend->slope, trend->intercept, trend->p_value});
  } else {
    t.add({kMissing, kMissing, kMissing});
  }
  return t;
}

// CSV input

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line, const std::string& where) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      if (!cur.empty() || was_quoted) throw ParseError(where + ": stray quote");
      quoted = was_quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      if (was_quoted) throw ParseError(where + ": text after closing quote");
      cur += c;
    }
  }
  if (quoted) throw ParseError(where + ": unterminated quote");
  out.push_back(std::move(cur));
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view s, const std::string& where, const char* field) {
  s = trim(s);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError(where + ": " + field + " is not a finite number: '" + std::string(s) + "'");
  }
  return v;
}

struct Record {
  std::string subject;
  std::string group;
  double time;
  double response;
};

// Reads data rows below the expected header. Blank lines and lines starting
// with '#' are ignored.
inline std::vector<Record> read_records(std::istream& in, const std::string& source,
                                        const std::vector<std::string>& header) {
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::vector<Record> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const std::string where = source + ":" + std::to_string(lineno);
    auto fields = split_csv_line(t, where);
    for (auto& f : fields) f = std::string(trim(f));
    if (!have_header) {
      if (fields != header) {
        std::string want;
        for (std::size_t i = 0; i < header.size(); ++i) want += (i ? "," : "") + header[i];
        throw ParseError(where + ": expected header '" + want + "'");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != header.size()) {
      throw ParseError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    }
    Record r;
    std::size_t k = 0;
    r.subject = fields[k++];
    if (r.subject.empty()) throw ParseError(where + ": empty subject_id");
    if (header.size() == 4) {
      r.group = fields[k++];
      if (r.group.empty()) throw ParseError(where + ": empty group");
    }
    r.time = parse_number(fields[k++], where, "time");
    if (r.time < 0.0 || r.time > 1.0) throw ParseError(where + ": time outside [0,1]");
    r.response = parse_number(fields[k++], where, "response");
    out.push_back(std::move(r));
  }
  if (!have_header) throw ParseError(source + ": missing header");
  return out;
}

// Subjects in order of first appearance, visits sorted by time.
inline LongitudinalDataset collect(const std::vector<const Record*>& recs) {
  LongitudinalDataset d;
  std::map<std::string, std::size_t> index;
  for (const Record* r : recs) {
    auto [it, fresh] = index.emplace(r->subject, d.subjects.size());
    if (fresh) d.subjects.push_back(Subject{r->subject, {}, {}});
    auto& s = d.subjects[it->second];
    s.times.push_back(r->time);
    s.responses.push_back(r->response);
  }
  for (auto& s : d.subjects) s.sort_by_time();
  return d;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open input file " + path.string());
  return f;
}

}  // namespace detail

inline LongitudinalDataset read_longitudinal_csv(std::istream& in, const std::string& source = "<input>") {
  const auto recs = detail::read_records(in, source, {"subject_id", "time", "response"});
  std::vector<const detail::Record*> ptrs;
  for (const auto& r : recs) ptrs.push_back(&r);
  return detail::collect(ptrs);
}

inline GroupedDataset read_grouped_csv(std::istream& in, const std::string& source = "<input>") {
  const auto recs = detail::read_records(in, source, {"subject_id", "group", "time", "response"});
  std::map<std::string, std::string> group_of;
  std::map<std::string, std::vector<const detail::Record*>> by_group;
  for (const auto& r : recs) {
    const auto [it, fresh] = group_of.emplace(r.subject, r.group);
    if (!fresh && it->second != r.group) {
      throw ParseError(source + ": subject " + r.subject + " appears in groups " + it->second +
                       " and " + r.group);
    }
    by_group[r.group].push_back(&r);
  }
  GroupedDataset out;
  for (const auto& [g, ptrs] : by_group) out.groups.emplace(g, detail::collect(ptrs));
  return out;
}

inline LongitudinalDataset read_longitudinal_csv(const std::filesystem::path& path) {
  auto f = detail::open_input(path);
  return read_longitudinal_csv(f, path.string());
}

inline GroupedDataset read_grouped_csv(const std::filesystem::path& path) {
  auto f = detail::open_input(path);
  return read_grouped_csv(f, path.string());
}

inline std::string render_grouped_csv(const GroupedDataset& data) {
  std::string out = "subject_id,group,time,response\n";
  for (const auto& [g, group] : data.groups) {
    for (const auto& s : group.subjects) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        out += csv_quote(s.id) + "," + csv_quote(g) + "," + format_double(s.times[i]) + "," +
               format_double(s.responses[i]) + "\n";
      }
    }
  }
  return out;
}

}  // namespace bsdesign::io
