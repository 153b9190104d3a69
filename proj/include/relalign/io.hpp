// SPDX-License-Identifier: Apache-2.0
#pragma once

// File formats: the attn-bundle/1 JSON carrier for retained attention
// scores, the annotation JSON schema, the training config, and the run
// record CSV + JSON summary.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "relalign/annotations.hpp"
#include "relalign/layout.hpp"
#include "relalign/matrix.hpp"
#include "relalign/tensor_ops.hpp"
#include "relalign/train.hpp"

namespace relalign {

inline constexpr const char* kBundleFormat = "attn-bundle/1";
inline constexpr const char* kRunCsvHeader =
    "step,lambda,margin_loss,iais_loss,iais_v,iais_l,isda,"
    "r1_i,r5_i,r10_i,r1_t,r5_t,r10_t,meta_sum";

/// Versioned carrier for per-layer, per-head joint attention scores.
/// `sigma_scale` is the softmax scale consumers apply to the raw scores.
struct AttentionBundle {
  std::string version = kBundleFormat;
  ModalityLayout layout;
  std::size_t layers = 0;
  std::size_t heads = 0;
  double sigma_scale = 1.0;
  std::vector<std::vector<Matrix>> scores;  // [layer][head], joint N x N
  std::optional<ObjectAnnotationSet> annotations;
};

namespace detail {

using nlohmann::json;

inline std::string read_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(std::string(what) + ": cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content,
                       const char* what) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(std::string(what) + ": cannot open " + path.string() +
                                     " for writing");
  out << content;
  if (!out) throw std::runtime_error(std::string(what) + ": write failed for " + path.string());
}

inline json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string(what) + ": parse error: " + e.what());
  }
}

inline const json& require_field(const json& j, const char* key, const char* what) {
  auto it = j.find(key);
  if (it == j.end())
    throw std::runtime_error(std::string(what) + ": missing field '" + key + "'");
  return *it;
}

inline std::size_t require_count(const json& j, const char* key, const char* what) {
  const json& f = require_field(j, key, what);
  if (!f.is_number_unsigned() || f.get<std::uint64_t>() == 0)
    throw std::runtime_error(std::string(what) + ": field '" + key +
                             "' must be a positive integer");
  return f.get<std::size_t>();
}

inline ObjectAnnotationSet parse_annotations(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("objects") || !j["objects"].is_array())
    throw std::runtime_error(where + ": expected an object with an 'objects' array");
  std::vector<ObjectAnnotation> objects;
  std::size_t idx = 0;
  for (const json& o : j["objects"]) {
    const std::string path = where + ".objects[" + std::to_string(idx) + "]";
    if (!o.is_object()) throw std::runtime_error(path + ": expected an object");
    ObjectAnnotation a;
    if (o.contains("name")) {
      if (!o["name"].is_string()) throw std::runtime_error(path + ".name: expected a string");
      a.name = o["name"].get<std::string>();
    }
    auto read_indices = [&](const char* key, std::vector<std::size_t>& out) {
      if (!o.contains(key) || !o[key].is_array())
        throw std::runtime_error(path + "." + key + ": expected an array of indices");
      std::size_t k = 0;
      for (const json& v : o[key]) {
        if (!v.is_number_unsigned())
          throw std::runtime_error(path + "." + key + "[" + std::to_string(k) +
                                   "]: expected a nonnegative integer");
        out.push_back(v.get<std::size_t>());
        ++k;
      }
    };
    read_indices("token_indices", a.token_indices);
    read_indices("region_indices", a.region_indices);
    objects.push_back(std::move(a));
    ++idx;
  }
  try {
    return ObjectAnnotationSet(std::move(objects));
  } catch (const std::exception& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
}

inline json annotations_json(const ObjectAnnotationSet& set) {
  json objects = json::array();
  for (const ObjectAnnotation& a : set.objects()) {
    objects.push_back(
        {{"name", a.name}, {"token_indices", a.token_indices}, {"region_indices", a.region_indices}});
  }
  return json{{"objects", objects}};
}

inline std::string fmt_g(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

// Shortest representation that parses back to the same double.
inline std::string fmt_exact(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// ---- annotations file ----

inline ObjectAnnotationSet read_annotations(const std::filesystem::path& path) {
  const detail::json j =
      detail::parse_json(detail::read_file(path, "annotations"), "annotations");
  return detail::parse_annotations(j, "annotations");
}

inline void write_annotations(const std::filesystem::path& path, const ObjectAnnotationSet& set) {
  detail::write_file(path, detail::annotations_json(set).dump(2) + "\n", "annotations");
}

// ---- attention bundle ----

inline AttentionBundle read_attention_bundle(const std::filesystem::path& path) {
  const detail::json j = detail::parse_json(detail::read_file(path, "bundle"), "bundle");
  if (!j.is_object()) throw std::runtime_error("bundle: top level must be an object");

  const detail::json& fmt = detail::require_field(j, "format", "bundle");
  if (!fmt.is_string() || fmt.get<std::string>() != kBundleFormat)
    throw std::runtime_error("bundle: unrecognized format version '" +
                             (fmt.is_string() ? fmt.get<std::string>() : fmt.dump()) +
                             "' (expected '" + std::string(kBundleFormat) + "')");

  AttentionBundle b;
  b.layout = ModalityLayout(detail::require_count(j, "n_l", "bundle"),
                            detail::require_count(j, "n_v", "bundle"));
  b.layers = detail::require_count(j, "layers", "bundle");
  b.heads = detail::require_count(j, "heads", "bundle");
  if (j.contains("scale")) {
    const detail::json& sc = j["scale"];
    if (!sc.is_number() || !(sc.get<double>() > 0.0))
      throw std::runtime_error("bundle: 'scale' must be a positive number");
    b.sigma_scale = sc.get<double>();
  }

  const std::size_t n = b.layout.joint();
  const detail::json& scores = detail::require_field(j, "scores", "bundle");
  if (!scores.is_array() || scores.size() != b.layers)
    throw std::runtime_error("bundle: scores: expected " + std::to_string(b.layers) +
                             " layers, got " + std::to_string(scores.size()));
  b.scores.resize(b.layers);
  for (std::size_t l = 0; l < b.layers; ++l) {
    const detail::json& layer = scores[l];
    const std::string lpath = "bundle: scores[" + std::to_string(l) + "]";
    if (!layer.is_array() || layer.size() != b.heads)
      throw std::runtime_error(lpath + ": expected " + std::to_string(b.heads) + " heads, got " +
                               std::to_string(layer.size()));
    for (std::size_t h = 0; h < b.heads; ++h) {
      const detail::json& mat = layer[h];
      const std::string hpath = lpath + "[" + std::to_string(h) + "]";
      if (!mat.is_array() || mat.size() != n)
        throw std::runtime_error(hpath + ": expected " + std::to_string(n) + " rows, got " +
                                 std::to_string(mat.size()));
      std::vector<double> data;
      data.reserve(n * n);
      for (std::size_t i = 0; i < n; ++i) {
        const detail::json& row = mat[i];
        if (!row.is_array() || row.size() != n)
          throw std::runtime_error(hpath + "[" + std::to_string(i) + "]: expected " +
                                   std::to_string(n) + " columns, got " +
                                   std::to_string(row.size()));
        for (std::size_t c = 0; c < n; ++c) {
          const detail::json& v = row[c];
          if (!v.is_number())
            throw std::runtime_error(hpath + "[" + std::to_string(i) + "][" + std::to_string(c) +
                                     "]: non-finite or non-numeric entry");
          data.push_back(v.get<double>());
        }
      }
      b.scores[l].emplace_back(n, n, std::move(data));
    }
  }

  if (j.contains("annotations"))
    b.annotations = detail::parse_annotations(j["annotations"], "bundle: annotations");

  for (const auto& [key, value] : j.items()) {
    static const char* known[] = {"format", "n_l", "n_v", "layers", "heads",
                                  "scale", "scores", "annotations"};
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw std::runtime_error("bundle: unknown field '" + key + "'");
  }
  return b;
}

inline void write_attention_bundle(const std::filesystem::path& path, const AttentionBundle& b) {
  if (b.scores.size() != b.layers)
    throw std::invalid_argument("bundle: layer count does not match scores");
  detail::json scores = detail::json::array();
  const std::size_t n = b.layout.joint();
  for (const auto& layer : b.scores) {
    if (layer.size() != b.heads)
      throw std::invalid_argument("bundle: head count does not match scores");
    detail::json jl = detail::json::array();
    for (const Matrix& m : layer) {
      if (m.rows() != n || m.cols() != n)
        throw std::invalid_argument("bundle: score matrix shape does not match layout");
      detail::json jm = detail::json::array();
      for (std::size_t i = 0; i < n; ++i) {
        detail::json row = detail::json::array();
        for (std::size_t c = 0; c < n; ++c) row.push_back(m(i, c));
        jm.push_back(std::move(row));
      }
      jl.push_back(std::move(jm));
    }
    scores.push_back(std::move(jl));
  }
  detail::json j{{"format", b.version},
                 {"n_l", b.layout.n_l},
                 {"n_v", b.layout.n_v},
                 {"layers", b.layers},
                 {"heads", b.heads},
                 {"scale", b.sigma_scale},
                 {"scores", std::move(scores)}};
  if (b.annotations) j["annotations"] = detail::annotations_json(*b.annotations);
  detail::write_file(path, j.dump() + "\n", "bundle");
}

// ---- training config ----

namespace detail {

template <class T>
using EnumTable = std::vector<std::pair<const char*, T>>;

template <class T>
T parse_enum(const json& v, const char* key, const EnumTable<T>& table) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    for (const auto& [name, val] : table)
      if (s == name) return val;
  }
  std::string options;
  for (const auto& [name, val] : table) options += std::string(options.empty() ? "" : "|") + name;
  throw std::runtime_error("config: '" + std::string(key) + "' must be one of " + options);
}

template <class T>
const char* enum_name(T v, const EnumTable<T>& table) {
  for (const auto& [name, val] : table)
    if (v == val) return name;
  return "?";
}

inline const EnumTable<MarginMode>& margin_mode_table() {
  static const EnumTable<MarginMode> t{{"pairwise", MarginMode::Pairwise},
                                       {"literal", MarginMode::Literal}};
  return t;
}
inline const EnumTable<IaisKind>& iais_kind_table() {
  static const EnumTable<IaisKind> t{{"none", IaisKind::None},
                                     {"singular", IaisKind::Singular},
                                     {"distributed", IaisKind::Distributed}};
  return t;
}
inline const EnumTable<AnchorMode>& anchor_table() {
  static const EnumTable<AnchorMode> t{{"both", AnchorMode::Both},
                                       {"v", AnchorMode::VisionOnly},
                                       {"l", AnchorMode::LanguageOnly}};
  return t;
}
inline const EnumTable<ScheduleKind>& schedule_table() {
  static const EnumTable<ScheduleKind> t{{"exp", ScheduleKind::Exp},
                                         {"log", ScheduleKind::Log},
                                         {"linear", ScheduleKind::Linear},
                                         {"constant", ScheduleKind::Constant}};
  return t;
}
inline const EnumTable<HeadReduction>& head_reduction_table() {
  static const EnumTable<HeadReduction> t{{"mean", HeadReduction::Mean},
                                          {"per_head_sum", HeadReduction::PerHeadSum}};
  return t;
}

}  // namespace detail

inline TrainConfig train_config_from_json(const detail::json& j) {
  using detail::json;
  if (!j.is_object()) throw std::runtime_error("config: top level must be an object");
  TrainConfig cfg;

  auto num = [&](const json& o, const char* key, double& out) {
    if (!o.contains(key)) return;
    if (!o[key].is_number()) throw std::runtime_error("config: '" + std::string(key) + "' must be a number");
    out = o[key].get<double>();
  };
  auto integer = [&](const json& o, const char* key, auto& out) {
    if (!o.contains(key)) return;
    if (!o[key].is_number_integer())
      throw std::runtime_error("config: '" + std::string(key) + "' must be an integer");
    out = o[key].get<std::decay_t<decltype(out)>>();
  };
  auto uinteger = [&](const json& o, const char* key, auto& out) {
    if (!o.contains(key)) return;
    if (!o[key].is_number_unsigned())
      throw std::runtime_error("config: '" + std::string(key) + "' must be a nonnegative integer");
    out = o[key].get<std::decay_t<decltype(out)>>();
  };
  auto boolean = [&](const json& o, const char* key, bool& out) {
    if (!o.contains(key)) return;
    if (!o[key].is_boolean()) throw std::runtime_error("config: '" + std::string(key) + "' must be a boolean");
    out = o[key].get<bool>();
  };

  static const char* top_keys[] = {"margin",       "margin_mode",
                                   "iais",         "anchor",
                                   "schedule",     "gamma",
                                   "steps",        "iais_layer",
                                   "head_reduction", "positives_per_batch",
                                   "negatives_per_positive", "seed",
                                   "learning_rate", "checkpoint_interval",
                                   "hard_negatives", "encoder",
                                   "task"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : top_keys) ok = ok || key == k;
    if (!ok) throw std::runtime_error("config: unknown field '" + key + "'");
  }

  num(j, "margin", cfg.margin);
  if (j.contains("margin_mode"))
    cfg.margin_mode = detail::parse_enum(j["margin_mode"], "margin_mode", detail::margin_mode_table());
  if (j.contains("iais")) cfg.iais = detail::parse_enum(j["iais"], "iais", detail::iais_kind_table());
  if (j.contains("anchor")) cfg.anchor = detail::parse_enum(j["anchor"], "anchor", detail::anchor_table());
  if (j.contains("schedule"))
    cfg.schedule = detail::parse_enum(j["schedule"], "schedule", detail::schedule_table());
  num(j, "gamma", cfg.gamma);
  integer(j, "steps", cfg.steps);
  integer(j, "iais_layer", cfg.iais_layer);
  if (j.contains("head_reduction"))
    cfg.head_reduction =
        detail::parse_enum(j["head_reduction"], "head_reduction", detail::head_reduction_table());
  uinteger(j, "positives_per_batch", cfg.positives_per_batch);
  uinteger(j, "negatives_per_positive", cfg.negatives_per_positive);
  uinteger(j, "seed", cfg.seed);
  num(j, "learning_rate", cfg.learning_rate);
  integer(j, "checkpoint_interval", cfg.checkpoint_interval);
  boolean(j, "hard_negatives", cfg.hard_negatives);

  if (j.contains("encoder")) {
    const json& e = j["encoder"];
    if (!e.is_object()) throw std::runtime_error("config: 'encoder' must be an object");
    static const char* keys[] = {"layers", "heads", "d_model", "d_ff", "feature_dim", "max_tokens"};
    for (const auto& [key, value] : e.items()) {
      bool ok = false;
      for (const char* k : keys) ok = ok || key == k;
      if (!ok) throw std::runtime_error("config: unknown encoder field '" + key + "'");
    }
    uinteger(e, "layers", cfg.encoder.layers);
    uinteger(e, "heads", cfg.encoder.heads);
    uinteger(e, "d_model", cfg.encoder.d_model);
    uinteger(e, "d_ff", cfg.encoder.d_ff);
    uinteger(e, "feature_dim", cfg.encoder.feature_dim);
    uinteger(e, "max_tokens", cfg.encoder.max_tokens);
  }
  if (j.contains("task")) {
    const json& t = j["task"];
    if (!t.is_object()) throw std::runtime_error("config: 'task' must be an object");
    static const char* keys[] = {"objects",     "tokens_min",  "tokens_max", "regions_min",
                                 "regions_max", "feature_dim", "noise",      "train_pairs",
                                 "probe_pairs"};
    for (const auto& [key, value] : t.items()) {
      bool ok = false;
      for (const char* k : keys) ok = ok || key == k;
      if (!ok) throw std::runtime_error("config: unknown task field '" + key + "'");
    }
    uinteger(t, "objects", cfg.task.objects);
    uinteger(t, "tokens_min", cfg.task.tokens_min);
    uinteger(t, "tokens_max", cfg.task.tokens_max);
    uinteger(t, "regions_min", cfg.task.regions_min);
    uinteger(t, "regions_max", cfg.task.regions_max);
    uinteger(t, "feature_dim", cfg.task.feature_dim);
    num(t, "noise", cfg.task.noise);
    uinteger(t, "train_pairs", cfg.task.train_pairs);
    uinteger(t, "probe_pairs", cfg.task.probe_pairs);
  }
  cfg.validate();
  return cfg;
}

inline detail::json train_config_json(const TrainConfig& cfg) {
  using detail::json;
  return json{
      {"margin", cfg.margin},
      {"margin_mode", detail::enum_name(cfg.margin_mode, detail::margin_mode_table())},
      {"iais", detail::enum_name(cfg.iais, detail::iais_kind_table())},
      {"anchor", detail::enum_name(cfg.anchor, detail::anchor_table())},
      {"schedule", detail::enum_name(cfg.schedule, detail::schedule_table())},
      {"gamma", cfg.gamma},
      {"steps", cfg.steps},
      {"iais_layer", cfg.iais_layer},
      {"head_reduction", detail::enum_name(cfg.head_reduction, detail::head_reduction_table())},
      {"positives_per_batch", cfg.positives_per_batch},
      {"negatives_per_positive", cfg.negatives_per_positive},
      {"seed", cfg.seed},
      {"learning_rate", cfg.learning_rate},
      {"checkpoint_interval", cfg.checkpoint_interval},
      {"hard_negatives", cfg.hard_negatives},
      {"encoder",
       {{"layers", cfg.encoder.layers},
        {"heads", cfg.encoder.heads},
        {"d_model", cfg.encoder.d_model},
        {"d_ff", cfg.encoder.d_ff},
        {"feature_dim", cfg.encoder.feature_dim},
        {"max_tokens", cfg.encoder.max_tokens}}},
      {"task",
       {{"objects", cfg.task.objects},
        {"tokens_min", cfg.task.tokens_min},
        {"tokens_max", cfg.task.tokens_max},
        {"regions_min", cfg.task.regions_min},
        {"regions_max", cfg.task.regions_max},
        {"feature_dim", cfg.task.feature_dim},
        {"noise", cfg.task.noise},
        {"train_pairs", cfg.task.train_pairs},
        {"probe_pairs", cfg.task.probe_pairs}}}};
}

inline TrainConfig read_train_config(const std::filesystem::path& path) {
  return train_config_from_json(detail::parse_json(detail::read_file(path, "config"), "config"));
}

// ---- run record ----

inline std::string run_record_csv(const RunRecord& record) {
  std::string out = std::string(kRunCsvHeader) + "\n";
  for (const CheckpointRow& r : record.rows) {
    out += std::to_string(r.step);
    for (double v : {r.lambda, r.margin_loss, r.iais_loss, r.iais_v, r.iais_l, r.isda, r.r1_i,
                     r.r5_i, r.r10_i, r.r1_t, r.r5_t, r.r10_t, r.meta_sum}) {
      out += ",";
      out += detail::fmt_exact(v);
    }
    out += "\n";
  }
  return out;
}

inline void write_run_record_csv(const std::filesystem::path& path, const RunRecord& record) {
  detail::write_file(path, run_record_csv(record), "run record");
}

inline RunRecord read_run_record_csv(const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path, "run record"));
  std::string line;
  if (!std::getline(in, line) || line != kRunCsvHeader)
    throw std::runtime_error("run record: unexpected CSV header in " + path.string());
  RunRecord record;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> fields;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) {
      try {
        fields.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw std::runtime_error("run record: bad number '" + tok + "' on line " +
                                 std::to_string(lineno));
      }
    }
    if (fields.size() != 14)
      throw std::runtime_error("run record: expected 14 fields on line " + std::to_string(lineno) +
                               ", got " + std::to_string(fields.size()));
    CheckpointRow r;
    r.step = static_cast<std::int64_t>(fields[0]);
    r.lambda = fields[1];
    r.margin_loss = fields[2];
    r.iais_loss = fields[3];
    r.iais_v = fields[4];
    r.iais_l = fields[5];
    r.isda = fields[6];
    r.r1_i = fields[7];
    r.r5_i = fields[8];
    r.r10_i = fields[9];
    r.r1_t = fields[10];
    r.r5_t = fields[11];
    r.r10_t = fields[12];
    r.meta_sum = fields[13];
    record.rows.push_back(r);
  }
  return record;
}

/// Pearson correlation between the ISDa and Meta-Sum traces, or nullopt
/// when fewer than two checkpoints exist or either trace is constant.
inline std::optional<double> record_pearson(const RunRecord& record) {
  if (record.rows.size() < 2) return std::nullopt;
  std::vector<double> isda_trace, meta_trace;
  for (const CheckpointRow& r : record.rows) {
    isda_trace.push_back(r.isda);
    meta_trace.push_back(r.meta_sum);
  }
  try {
    return pearson(isda_trace, meta_trace);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

inline std::string run_summary_json(const RunRecord& record, const TrainConfig& cfg) {
  detail::json j;
  if (record.rows.empty()) throw std::invalid_argument("summary: empty run record");
  j["final_isda"] = record.rows.back().isda;
  j["final_meta_sum"] = record.rows.back().meta_sum;
  const std::optional<double> rho = record_pearson(record);
  if (rho)
    j["pearson_isda_metasum"] = *rho;
  else
    j["pearson_isda_metasum"] = nullptr;
  j["config"] = train_config_json(cfg);
  return j.dump(2) + "\n";
}

inline void write_run_summary(const std::filesystem::path& path, const RunRecord& record,
                              const TrainConfig& cfg) {
  detail::write_file(path, run_summary_json(record, cfg), "summary");
}

}  // namespace relalign
