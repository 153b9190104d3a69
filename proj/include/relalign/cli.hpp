// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "relalign/io.hpp"
#include "relalign/isda.hpp"
#include "relalign/iais.hpp"
#include "relalign/train.hpp"

namespace relalign {

/// Errors that are the caller's fault: bad flags, missing files, invalid
/// combinations. They exit with status 2; everything else exits 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace cli_detail {

inline std::string fmt6(double v) { return detail::fmt_g(v, 6); }

inline void require_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw UsageError("missing file: " + path);
}

inline std::size_t parse_layer(const std::string& spec, std::size_t layers) {
  if (spec == "last") return layers - 1;
  std::size_t pos = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(spec, &pos);
  } catch (const std::exception&) {
    throw UsageError("--layer must be 'last' or a layer index");
  }
  if (pos != spec.size()) throw UsageError("--layer must be 'last' or a layer index");
  if (v >= layers)
    throw UsageError("--layer " + spec + " out of range (bundle has " + std::to_string(layers) +
                     " layers)");
  return v;
}

inline AttentionBlocks head_mean_blocks(const AttentionBundle& b, std::size_t layer) {
  Matrix acc = b.scores[layer][0];
  for (std::size_t h = 1; h < b.heads; ++h) acc = add(acc, b.scores[layer][h]);
  return split_blocks(scale(acc, 1.0 / static_cast<double>(b.heads)), b.layout);
}

inline int cmd_isda(const std::string& attn_path, const std::string& annotations_path,
                    const std::string& layer_spec, const std::string& heads_mode) {
  require_file(attn_path);
  const AttentionBundle bundle = read_attention_bundle(attn_path);
  std::optional<ObjectAnnotationSet> annotations;
  if (!annotations_path.empty()) {
    require_file(annotations_path);
    annotations = read_annotations(annotations_path);
  } else if (bundle.annotations) {
    annotations = bundle.annotations;
  } else {
    throw UsageError("isda needs --annotations or a bundle with an embedded annotation block");
  }
  if (heads_mode != "mean" && heads_mode != "sum") throw UsageError("--heads must be mean or sum");
  const std::size_t layer = parse_layer(layer_spec, bundle.layers);
  annotations->check_bounds(bundle.layout);

  IsdaBreakdown breakdown;
  if (heads_mode == "mean") {
    Matrix attn = row_softmax(bundle.scores[layer][0], bundle.sigma_scale).matrix();
    for (std::size_t h = 1; h < bundle.heads; ++h)
      attn = add(attn, row_softmax(bundle.scores[layer][h], bundle.sigma_scale).matrix());
    attn = scale(attn, 1.0 / static_cast<double>(bundle.heads));
    const AttentionBlocks blocks = split_blocks(attn, bundle.layout);
    breakdown = isda_detailed(blocks.s_ll, blocks.s_vv, *annotations);
  } else {
    breakdown.per_object.assign(annotations->size(), 0.0);
    for (std::size_t h = 0; h < bundle.heads; ++h) {
      const AttentionBlocks blocks =
          split_blocks(row_softmax(bundle.scores[layer][h], bundle.sigma_scale).matrix(),
                       bundle.layout);
      const IsdaBreakdown one = isda_detailed(blocks.s_ll, blocks.s_vv, *annotations);
      breakdown.total += one.total;
      for (std::size_t i = 0; i < one.per_object.size(); ++i)
        breakdown.per_object[i] += one.per_object[i];
    }
  }

  std::string out = "isda " + fmt6(breakdown.total) + "\n";
  for (std::size_t i = 0; i < annotations->size(); ++i) {
    const std::string& name = (*annotations)[i].name;
    out += "object " + std::to_string(i) + " " + (name.empty() ? "-" : name) + " kl " +
           fmt6(breakdown.per_object[i]) + "\n";
  }
  std::cout << out;
  return 0;
}

inline int cmd_iais(const std::string& attn_path, const std::string& mode,
                    const std::string& anchor) {
  require_file(attn_path);
  if (mode != "singular" && mode != "distributed")
    throw UsageError("--mode must be singular or distributed");
  if (anchor != "both" && anchor != "v" && anchor != "l")
    throw UsageError("--anchor must be both, v, or l");
  const AttentionBundle bundle = read_attention_bundle(attn_path);
  const AttentionBlocks blocks = head_mean_blocks(bundle, bundle.layers - 1);
  const IaisResult r = mode == "singular" ? iais_singular(blocks, bundle.sigma_scale)
                                          : iais_distributed(blocks, bundle.sigma_scale);
  const double selected = anchor == "both" ? r.loss
                          : anchor == "v"  ? r.parts.v_anchored
                                           : r.parts.l_anchored;
  std::string out;
  out += "mode " + mode + "\n";
  out += "anchor " + anchor + "\n";
  out += "loss " + fmt6(selected) + "\n";
  out += "part_v " + fmt6(r.parts.v_anchored) + "\n";
  out += "part_l " + fmt6(r.parts.l_anchored) + "\n";
  std::cout << out;
  return 0;
}

inline int cmd_schedule(const std::string& kind_name, double gamma, std::int64_t steps,
                        const std::string& out_path) {
  if (steps < 1) throw UsageError("--steps must be >= 1");
  ScheduleKind kind;
  try {
    kind = detail::parse_enum(detail::json(kind_name), "kind", detail::schedule_table());
  } catch (const std::exception&) {
    throw UsageError("--kind must be exp, log, linear, or constant");
  }
  std::string table = "t,lambda\n";
  for (std::int64_t t = 0; t <= steps; ++t) {
    table += std::to_string(t) + "," + fmt6(lambda_schedule(kind, gamma, t, steps)) + "\n";
  }
  std::cout << table;
  if (!out_path.empty()) detail::write_file(out_path, table, "schedule");
  return 0;
}

inline int cmd_train(const std::string& config_path, const std::string& out_dir) {
  require_file(config_path);
  const TrainConfig cfg = read_train_config(config_path);
  const RunRecord record = train_run(cfg);
  std::filesystem::create_directories(out_dir);
  const auto csv_path = std::filesystem::path(out_dir) / "record.csv";
  const auto summary_path = std::filesystem::path(out_dir) / "summary.json";
  write_run_record_csv(csv_path, record);
  write_run_summary(summary_path, record, cfg);
  const std::optional<double> rho = record_pearson(record);
  std::string out;
  out += "final_isda " + fmt6(record.rows.back().isda) + "\n";
  out += "final_meta_sum " + fmt6(record.rows.back().meta_sum) + "\n";
  out += "pearson_isda_metasum " + (rho ? fmt6(*rho) : std::string("nan")) + "\n";
  out += "wrote " + csv_path.string() + "\n";
  out += "wrote " + summary_path.string() + "\n";
  std::cout << out;
  return 0;
}

inline int cmd_compare(const std::string& runs_arg) {
  std::vector<std::string> dirs;
  std::string cur;
  for (char c : runs_arg) {
    if (c == ',') {
      if (!cur.empty()) dirs.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) dirs.push_back(cur);
  if (dirs.empty()) throw UsageError("--runs needs at least one run directory");

  std::string out = "run,checkpoints,final_isda,final_meta_sum,pearson_isda_metasum\n";
  for (const std::string& dir : dirs) {
    const auto csv = std::filesystem::path(dir) / "record.csv";
    if (!std::filesystem::exists(csv)) throw UsageError("missing file: " + csv.string());
    const RunRecord record = read_run_record_csv(csv);
    if (record.rows.empty()) throw std::runtime_error("compare: " + csv.string() + " has no rows");
    const std::optional<double> rho = record_pearson(record);
    out += dir + "," + std::to_string(record.rows.size()) + "," +
           fmt6(record.rows.back().isda) + "," + fmt6(record.rows.back().meta_sum) + "," +
           (rho ? fmt6(*rho) : std::string("nan")) + "\n";
  }
  std::cout << out;
  return 0;
}

}  // namespace cli_detail

/// Entry point behind the relalign binary; also drives the in-process CLI
/// tests. Returns the process exit status.
inline int run_command(int argc, const char* const* argv) {
  CLI::App app{"relation-level alignment toolkit for multimodal self-attention"};
  app.require_subcommand(1);

  std::string attn_path, annotations_path, layer_spec = "last", heads_mode = "mean";
  auto* isda_cmd = app.add_subcommand("isda", "annotation-grouped intra-modal distance");
  isda_cmd->add_option("--attn", attn_path, "attention bundle JSON")->required();
  isda_cmd->add_option("--annotations", annotations_path, "annotation JSON");
  isda_cmd->add_option("--layer", layer_spec, "'last' or a layer index");
  isda_cmd->add_option("--heads", heads_mode, "mean | sum");

  std::string iais_attn, iais_mode, iais_anchor = "both";
  auto* iais_cmd = app.add_subcommand("iais", "mirrored-attention alignment loss");
  iais_cmd->add_option("--attn", iais_attn, "attention bundle JSON")->required();
  iais_cmd->add_option("--mode", iais_mode, "singular | distributed")->required();
  iais_cmd->add_option("--anchor", iais_anchor, "both | v | l");

  std::string sched_kind, sched_out;
  double sched_gamma = 5.0;
  std::int64_t sched_steps = 0;
  auto* sched_cmd = app.add_subcommand("schedule", "annealing weight table");
  sched_cmd->add_option("--kind", sched_kind, "exp | log | linear | constant")->required();
  sched_cmd->add_option("--gamma", sched_gamma, "schedule scale");
  sched_cmd->add_option("--steps", sched_steps, "total steps T")->required();
  sched_cmd->add_option("--out", sched_out, "also write the table to a CSV file");

  std::string train_config, train_out;
  auto* train_cmd = app.add_subcommand("train", "run the synthetic training harness");
  train_cmd->add_option("--config", train_config, "training config JSON")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();

  std::string compare_runs;
  auto* compare_cmd = app.add_subcommand("compare", "cross-run comparison table");
  compare_cmd->add_option("--runs", compare_runs, "comma-separated run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*isda_cmd) return cli_detail::cmd_isda(attn_path, annotations_path, layer_spec, heads_mode);
    if (*iais_cmd) return cli_detail::cmd_iais(iais_attn, iais_mode, iais_anchor);
    if (*sched_cmd) return cli_detail::cmd_schedule(sched_kind, sched_gamma, sched_steps, sched_out);
    if (*train_cmd) return cli_detail::cmd_train(train_config, train_out);
    if (*compare_cmd) return cli_detail::cmd_compare(compare_runs);
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: usage: no subcommand given\n";
  return 2;
}

}  // namespace relalign
