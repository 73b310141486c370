#pragma once

// Run configuration: one JSON document with the sections problem, prior,
// algorithm, experiment and output. Unknown keys are rejected and every
// diagnostic carries the line of the offending key.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "quadrec/errors.hpp"
#include "quadrec/harness.hpp"
#include "quadrec/oracle.hpp"

namespace quadrec {

using json = nlohmann::ordered_json;

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ProblemSection {
  Index n = 100;
  Index k = 10;
  Index m = 200;
  std::uint64_t seed = 0;
  bool normalize_signal = false;
  std::optional<std::size_t> memory_budget_bytes;
};

struct ExperimentSection {
  std::optional<std::vector<Index>> k_values, m_values;
  Index trials = 100;
};

struct OutputSection {
  std::string directory = "out";
  std::vector<std::string> formats{"csv", "json"};

  bool wants(const std::string& f) const {
    for (const auto& g : formats)
      if (g == f) return true;
    return false;
  }
};

struct RunConfig {
  ProblemSection problem;
  PriorSpec prior;
  Algorithm algorithm = Algorithm::TWF;
  SparseConfig sparse;
  PGDConfig pgd;
  PgdInit init = PgdInit::Flat;
  std::optional<double> w0_correlation;
  double success_threshold = kDefaultSuccessThreshold;
  ExperimentSection experiment;
  OutputSection output;

  /// The trial this configuration describes, with seed problem.seed.
  TrialSpec trial() const {
    TrialSpec t;
    t.n = problem.n;
    t.k = problem.k;
    t.m = problem.m;
    t.algorithm = algorithm;
    t.sparse = sparse;
    t.pgd = pgd;
    t.prior = prior;
    t.init = init;
    t.w0_correlation = w0_correlation;
    t.normalize_signal = problem.normalize_signal;
    t.success_threshold = success_threshold;
    t.memory_budget_bytes = problem.memory_budget_bytes;
    t.trial_seed = problem.seed;
    return t;
  }
};

namespace detail {

/// Byte iterator that counts newlines as the parser consumes input.
class LineCountingIterator {
 public:
  using iterator_category = std::input_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  LineCountingIterator(const char* p, std::size_t* line) : p_(p), line_(line) {}
  reference operator*() const { return *p_; }
  LineCountingIterator& operator++() {
    if (*p_ == '\n') ++*line_;
    ++p_;
    return *this;
  }
  LineCountingIterator operator++(int) {
    auto old = *this;
    ++*this;
    return old;
  }
  bool operator==(const LineCountingIterator& o) const { return p_ == o.p_; }
  bool operator!=(const LineCountingIterator& o) const { return p_ != o.p_; }

 private:
  const char* p_;
  std::size_t* line_;
};

/// Builds the document and records the line of every object key, by path.
class LocatingSax : public nlohmann::detail::json_sax_dom_parser<json> {
 public:
  using Base = nlohmann::detail::json_sax_dom_parser<json>;
  LocatingSax(json& root, const std::size_t* line) : Base(root, true), line_(line) {}

  std::map<std::string, std::size_t> key_lines;

  bool start_object(std::size_t n) {
    frames_.push_back({true, ""});
    return Base::start_object(n);
  }
  bool end_object() {
    frames_.pop_back();
    return Base::end_object();
  }
  bool start_array(std::size_t n) {
    frames_.push_back({false, ""});
    return Base::start_array(n);
  }
  bool end_array() {
    frames_.pop_back();
    return Base::end_array();
  }
  bool key(string_t& k) {
    frames_.back().key = k;
    const std::string p = path();
    if (key_lines.count(p)) {
      throw ConfigError("line " + std::to_string(*line_ + 1) + ": duplicate key '" + p + "'");
    }
    key_lines[p] = *line_ + 1;
    return Base::key(k);
  }
  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception& e) {
    std::string msg = e.what();
    const auto pos = msg.find("syntax error");
    if (pos != std::string::npos) msg = msg.substr(pos);
    throw ConfigError("line " + std::to_string(*line_ + 1) + ": " + msg);
  }

 private:
  struct Frame {
    bool object;
    std::string key;
  };

  std::string path() const {
    std::string p;
    for (const auto& f : frames_) {
      if (!f.object) continue;
      if (!p.empty()) p += '.';
      p += f.key;
    }
    return p;
  }

  const std::size_t* line_;
  std::vector<Frame> frames_;
};

}  // namespace detail

/// A parsed document with key lines for diagnostics.
struct ConfigDocument {
  json root;
  std::map<std::string, std::size_t> key_lines;

  std::string where(const std::string& path) const {
    const auto it = key_lines.find(path);
    return it == key_lines.end() ? std::string("config") : "line " + std::to_string(it->second);
  }
};

inline ConfigDocument parse_config_document(const std::string& text) {
  ConfigDocument doc;
  std::size_t line = 0;
  detail::LocatingSax sax(doc.root, &line);
  detail::LineCountingIterator first(text.data(), &line), last(text.data() + text.size(), &line);
  json::sax_parse(first, last, &sax, nlohmann::detail::input_format_t::json, true);
  if (!doc.root.is_object()) throw ConfigError("line 1: the configuration must be a JSON object");
  doc.key_lines = std::move(sax.key_lines);
  return doc;
}

namespace detail {

class SectionReader {
 public:
  SectionReader(const ConfigDocument& doc, const json& obj, std::string path)
      : doc_(doc), obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_, "must be an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    for (const auto& [k, v] : obj_.items()) {
      bool known = false;
      for (const char* a : keys) known = known || k == a;
      if (!known) fail(join(k), "unknown key");
    }
  }

  bool has(const char* key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }

  SectionReader section(const char* key) const { return {doc_, obj_.at(key), join(key)}; }

  template <class T>
  void unsigned_(const char* key, T& out, std::uint64_t min = 0) const {
    if (!obj_.contains(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      fail(join(key), "must be a non-negative integer");
    }
    const auto u = v.get<std::uint64_t>();
    if (u < min) fail(join(key), "must be >= " + std::to_string(min));
    out = static_cast<T>(u);
  }

  void number(const char* key, double& out) const {
    if (!obj_.contains(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_number()) fail(join(key), "must be a number");
    out = v.get<double>();
  }

  void optional_number(const char* key, std::optional<double>& out) const {
    if (!obj_.contains(key)) return;
    if (obj_.at(key).is_null()) {
      out.reset();
      return;
    }
    double v = 0.0;
    number(key, v);
    out = v;
  }

  void boolean(const char* key, bool& out) const {
    if (!obj_.contains(key)) return;
    if (!obj_.at(key).is_boolean()) fail(join(key), "must be true or false");
    out = obj_.at(key).get<bool>();
  }

  void string(const char* key, std::string& out) const {
    if (!obj_.contains(key)) return;
    if (!obj_.at(key).is_string()) fail(join(key), "must be a string");
    out = obj_.at(key).get<std::string>();
  }

  void index_list(const char* key, std::optional<std::vector<Index>>& out) const {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_array() || v.empty()) fail(join(key), "must be a non-empty array of integers");
    std::vector<Index> list;
    for (const auto& e : v) {
      if (!e.is_number_unsigned()) fail(join(key), "must contain non-negative integers");
      list.push_back(e.get<Index>());
    }
    out = std::move(list);
  }

  [[noreturn]] void fail(const std::string& path, const std::string& what) const {
    throw ConfigError(doc_.where(path) + ": " + path + ": " + what);
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const ConfigDocument& doc_;
  const json& obj_;
  std::string path_;
};

}  // namespace detail

inline RunConfig run_config_from(const ConfigDocument& doc) {
  RunConfig c;
  const detail::SectionReader top(doc, doc.root, "");
  top.allow({"problem", "prior", "algorithm", "experiment", "output"});

  if (top.has("problem")) {
    const auto p = top.section("problem");
    p.allow({"n", "k", "m", "seed", "normalize_signal", "memory_budget_bytes"});
    p.unsigned_("n", c.problem.n, 1);
    p.unsigned_("k", c.problem.k);
    p.unsigned_("m", c.problem.m, 1);
    p.unsigned_("seed", c.problem.seed);
    p.boolean("normalize_signal", c.problem.normalize_signal);
    if (p.has("memory_budget_bytes")) {
      std::size_t b = 0;
      p.unsigned_("memory_budget_bytes", b);
      c.problem.memory_budget_bytes = b;
    }
    if (c.problem.k > c.problem.n) p.fail(p.join("k"), "must not exceed n");
  }

  if (top.has("prior")) {
    const auto p = top.section("prior");
    p.allow({"kind", "seed", "hidden", "radius", "normalize", "projection"});
    std::string kind = to_string(c.prior.kind);
    p.string("kind", kind);
    if (kind == "sparse") {
      c.prior.kind = PriorKind::Sparse;
    } else if (kind == "subspace") {
      c.prior.kind = PriorKind::Subspace;
    } else if (kind == "relu_decoder") {
      c.prior.kind = PriorKind::ReluDecoder;
    } else {
      p.fail(p.join("kind"), "must be one of sparse, subspace, relu_decoder");
    }
    p.unsigned_("seed", c.prior.seed);
    p.unsigned_("hidden", c.prior.hidden, 1);
    p.number("radius", c.prior.radius);
    if (!(c.prior.radius > 0.0)) p.fail(p.join("radius"), "must be > 0");
    p.boolean("normalize", c.prior.normalize);
    if (p.has("projection")) {
      const auto q = p.section("projection");
      q.allow({"steps", "step_size", "restarts"});
      q.unsigned_("steps", c.prior.projection.steps, 1);
      q.number("step_size", c.prior.projection.step_size);
      q.unsigned_("restarts", c.prior.projection.restarts, 1);
      if (!(c.prior.projection.step_size > 0.0)) q.fail(q.join("step_size"), "must be > 0");
    }
  }

  if (top.has("algorithm")) {
    const auto a = top.section("algorithm");
    a.allow({"name", "sparse", "pgd", "init", "w0_correlation", "success_threshold"});
    std::string name = to_string(c.algorithm);
    a.string("name", name);
    try {
      c.algorithm = parse_algorithm(name);
    } catch (const std::invalid_argument&) {
      a.fail(a.join("name"), "must be one of wf, twf, ppower, pgd, ppower_pgd");
    }
    if (a.has("sparse")) {
      const auto s = a.section("sparse");
      s.allow({"alpha", "mu", "iterations", "threshold", "beta", "early_stop_tol"});
      s.number("alpha", c.sparse.alpha);
      s.number("mu", c.sparse.mu);
      s.unsigned_("iterations", c.sparse.iterations);
      std::string kind = to_string(c.sparse.kind);
      s.string("threshold", kind);
      if (kind == "soft") {
        c.sparse.kind = ThresholdKind::Soft;
      } else if (kind == "hard") {
        c.sparse.kind = ThresholdKind::Hard;
      } else {
        s.fail(s.join("threshold"), "must be soft or hard");
      }
      s.optional_number("early_stop_tol", c.sparse.early_stop_tol);
      if (s.has("beta")) {
        const auto b = s.section("beta");
        b.allow({"schedule", "beta0", "factor", "period"});
        std::string schedule = "damped";
        b.string("schedule", schedule);
        b.number("beta0", c.sparse.beta.beta0);
        if (schedule == "constant") {
          if (b.has("factor") || b.has("period")) {
            b.fail(b.join("schedule"), "constant takes no factor or period");
          }
          c.sparse.beta = BetaSchedule::constant(c.sparse.beta.beta0);
        } else if (schedule == "damped") {
          b.number("factor", c.sparse.beta.factor);
          b.unsigned_("period", c.sparse.beta.period, 1);
        } else {
          b.fail(b.join("schedule"), "must be constant or damped");
        }
      }
      try {
        c.sparse.validate();
      } catch (const std::invalid_argument& e) {
        s.fail("algorithm.sparse", e.what());
      }
    }
    if (a.has("pgd")) {
      const auto g = a.section("pgd");
      g.allow({"mu", "iterations", "epsilon"});
      g.number("mu", c.pgd.mu);
      g.unsigned_("iterations", c.pgd.iterations);
      g.number("epsilon", c.pgd.epsilon);
      if (!(c.pgd.mu > 0.0 && c.pgd.mu <= 1.0)) g.fail(g.join("mu"), "must lie in (0, 1]");
    }
    std::string init = to_string(c.init);
    a.string("init", init);
    if (init == "flat") {
      c.init = PgdInit::Flat;
    } else if (init == "ppower") {
      c.init = PgdInit::PPower;
    } else {
      a.fail(a.join("init"), "must be flat or ppower");
    }
    a.optional_number("w0_correlation", c.w0_correlation);
    if (c.w0_correlation && !(*c.w0_correlation > 0.0 && *c.w0_correlation <= 1.0)) {
      a.fail(a.join("w0_correlation"), "must lie in (0, 1]");
    }
    a.number("success_threshold", c.success_threshold);
    if (!(c.success_threshold > 0.0)) a.fail(a.join("success_threshold"), "must be > 0");
  }

  if (top.has("experiment")) {
    const auto e = top.section("experiment");
    e.allow({"k_values", "m_values", "trials"});
    e.index_list("k_values", c.experiment.k_values);
    e.index_list("m_values", c.experiment.m_values);
    e.unsigned_("trials", c.experiment.trials, 1);
  }

  if (top.has("output")) {
    const auto o = top.section("output");
    o.allow({"directory", "formats"});
    o.string("directory", c.output.directory);
    if (o.has("formats")) {
      const json& f = doc.root.at("output").at("formats");
      if (!f.is_array()) o.fail(o.join("formats"), "must be an array of strings");
      c.output.formats.clear();
      for (const auto& v : f) {
        if (!v.is_string() || (v != "csv" && v != "json")) {
          o.fail(o.join("formats"), "entries must be \"csv\" or \"json\"");
        }
        c.output.formats.push_back(v.get<std::string>());
      }
    }
  }

  const bool sparse_algo = is_sparse(c.algorithm);
  if (sparse_algo != (c.prior.kind == PriorKind::Sparse)) {
    throw ConfigError(doc.where("algorithm.name") + ": algorithm " + to_string(c.algorithm) +
                      " does not match prior " + to_string(c.prior.kind));
  }
  if (!sparse_algo && c.problem.k < 1) {
    throw ConfigError(doc.where("problem.k") + ": problem.k must be >= 1 for a generative prior");
  }
  return c;
}

inline RunConfig parse_run_config(const std::string& text) {
  return run_config_from(parse_config_document(text));
}

/// The effective configuration with every field spelled out.
inline json to_json(const RunConfig& c) {
  json j;
  j["problem"] = {{"n", c.problem.n},
                  {"k", c.problem.k},
                  {"m", c.problem.m},
                  {"seed", c.problem.seed},
                  {"normalize_signal", c.problem.normalize_signal},
                  {"memory_budget_bytes", c.problem.memory_budget_bytes
                                              ? json(*c.problem.memory_budget_bytes)
                                              : json(nullptr)}};
  j["prior"] = {{"kind", to_string(c.prior.kind)},
                {"seed", c.prior.seed},
                {"hidden", c.prior.hidden},
                {"radius", c.prior.radius},
                {"normalize", c.prior.normalize},
                {"projection",
                 {{"steps", c.prior.projection.steps},
                  {"step_size", c.prior.projection.step_size},
                  {"restarts", c.prior.projection.restarts}}}};
  json beta = {{"schedule", c.sparse.beta.is_constant() ? "constant" : "damped"},
               {"beta0", c.sparse.beta.beta0}};
  if (!c.sparse.beta.is_constant()) {
    beta["factor"] = c.sparse.beta.factor;
    beta["period"] = c.sparse.beta.period;
  }
  j["algorithm"] = {
      {"name", to_string(c.algorithm)},
      {"sparse",
       {{"alpha", c.sparse.alpha},
        {"mu", c.sparse.mu},
        {"iterations", c.sparse.iterations},
        {"threshold", to_string(c.sparse.kind)},
        {"beta", beta},
        {"early_stop_tol", c.sparse.early_stop_tol ? json(*c.sparse.early_stop_tol) : json(nullptr)}}},
      {"pgd", {{"mu", c.pgd.mu}, {"iterations", c.pgd.iterations}, {"epsilon", c.pgd.epsilon}}},
      {"init", to_string(c.init)},
      {"w0_correlation", c.w0_correlation ? json(*c.w0_correlation) : json(nullptr)},
      {"success_threshold", c.success_threshold}};
  json exp;
  exp["k_values"] = c.experiment.k_values ? json(*c.experiment.k_values) : json(nullptr);
  exp["m_values"] = c.experiment.m_values ? json(*c.experiment.m_values) : json(nullptr);
  exp["trials"] = c.experiment.trials;
  j["experiment"] = exp;
  j["output"] = {{"directory", c.output.directory}, {"formats", c.output.formats}};
  return j;
}

/// Concentration bounds override: keys of ConcentrationBounds, all optional.
inline ConcentrationBounds parse_bounds(const std::string& text) {
  const ConfigDocument doc = parse_config_document(text);
  ConcentrationBounds b;
  const detail::SectionReader r(doc, doc.root, "");
  r.allow({"phi_half_width", "phi_tight_half_width", "support_c", "phi_seeds", "support_seeds",
           "expectation_sigmas", "expectation_seeds", "expectation_required"});
  r.number("phi_half_width", b.phi_half_width);
  r.number("phi_tight_half_width", b.phi_tight_half_width);
  r.number("support_c", b.support_c);
  r.unsigned_("phi_seeds", b.phi_seeds, 1);
  r.unsigned_("support_seeds", b.support_seeds, 1);
  r.number("expectation_sigmas", b.expectation_sigmas);
  r.unsigned_("expectation_seeds", b.expectation_seeds, 1);
  r.unsigned_("expectation_required", b.expectation_required);
  return b;
}

}  // namespace quadrec
