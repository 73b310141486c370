#pragma once

// CSV artifacts. Floats are written with 17 significant digits so they read
// back bit for bit.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "quadrec/errors.hpp"
#include "quadrec/harness.hpp"
#include "quadrec/metrics.hpp"

namespace quadrec {

class IoError : public Error {
 public:
  using Error::Error;
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Single-column CSV with a header line.
inline std::string vector_csv(const std::string& header, const Vector& v) {
  std::string s = header + "\n";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += format_double(v[i]) + "\n";
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable parse_csv(const std::string& text, const std::string& what) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != t.header.size()) {
        throw IoError(what + ": row has " + std::to_string(cells.size()) + " fields, header has " +
                      std::to_string(t.header.size()));
      }
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw IoError(what + ": missing header");
  return t;
}

inline double parse_double(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw IoError(what + ": not a number: '" + s + "'");
  }
  if (pos != s.size()) throw IoError(what + ": trailing characters in '" + s + "'");
  return v;
}

inline Vector read_vector_csv(const std::string& path, const std::string& header) {
  const CsvTable t = parse_csv(read_text(path), path);
  if (t.header.size() != 1 || t.header[0] != header) {
    throw IoError(path + ": expected a single column named '" + header + "'");
  }
  Vector v(static_cast<Eigen::Index>(t.rows.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = parse_double(t.rows[i][0], path);
  return v;
}

inline std::string trace_csv(const std::vector<TraceRecord>& trace) {
  std::string s = "t,residual_norm,nnz,rel_dist_if_truth_known\n";
  for (const auto& r : trace) {
    s += std::to_string(r.t) + "," + format_double(r.residual_norm) + "," + std::to_string(r.nnz) +
         "," + (r.error ? format_double(*r.error) : std::string()) + "\n";
  }
  return s;
}

inline const char* kTrialsHeader =
    "n,k,m,algorithm,trial_seed,rel_dist,cosine,success,iterations,wall_time_ms,status";

inline std::string trial_row(const TrialRecord& r) {
  return std::to_string(r.n) + "," + std::to_string(r.k) + "," + std::to_string(r.m) + "," +
         to_string(r.algorithm) + "," + std::to_string(r.trial_seed) + "," +
         format_double(r.rel_dist) + "," + format_double(r.cosine) + "," +
         (r.success ? "1" : "0") + "," + std::to_string(r.iterations) + "," +
         format_double(r.wall_time_ms) + "," + r.status + "\n";
}

inline std::string trials_csv(const std::vector<TrialRecord>& records) {
  std::string s = std::string(kTrialsHeader) + "\n";
  for (const auto& r : records) s += trial_row(r);
  return s;
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "wf") return Algorithm::WF;
  if (s == "twf") return Algorithm::TWF;
  if (s == "ppower") return Algorithm::PPower;
  if (s == "pgd") return Algorithm::PGD;
  if (s == "ppower_pgd") return Algorithm::PPowerThenPGD;
  throw std::invalid_argument("unknown algorithm '" + s + "'");
}

inline std::vector<TrialRecord> parse_trials_csv(const std::string& text, const std::string& what) {
  const CsvTable t = parse_csv(text, what);
  if (t.header != split_csv_line(kTrialsHeader)) throw IoError(what + ": unexpected trials header");
  std::vector<TrialRecord> out;
  for (const auto& c : t.rows) {
    TrialRecord r;
    r.n = std::stoull(c[0]);
    r.k = std::stoull(c[1]);
    r.m = std::stoull(c[2]);
    r.algorithm = parse_algorithm(c[3]);
    r.trial_seed = std::stoull(c[4]);
    r.rel_dist = parse_double(c[5], what);
    r.cosine = parse_double(c[6], what);
    r.success = c[7] == "1";
    r.iterations = std::stoull(c[8]);
    r.wall_time_ms = parse_double(c[9], what);
    r.status = c[10];
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string grid_csv(const GridResult& g) {
  std::string s = "k,m,success_rate,trials\n";
  for (const auto& c : g.cells) {
    s += std::to_string(c.k) + "," + std::to_string(c.m) + "," + format_double(c.success_rate()) +
         "," + std::to_string(c.trials) + "\n";
  }
  return s;
}

inline std::string sweep_csv(const SweepResult& r) {
  std::string s = "m,algo,q25,median,q75\n";
  for (const auto& row : r.rows) {
    s += std::to_string(row.m) + "," + row.algo + "," + format_double(row.q25) + "," +
         format_double(row.median) + "," + format_double(row.q75) + "\n";
  }
  return s;
}

}  // namespace quadrec
