// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "pipeline/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "quant/storage.hpp"

namespace prunekit::pipeline {

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w, bool left = false) {
  if (s.size() >= w) return s;
  return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
}

}  // namespace

RenderedReport render_report(const ExperimentManifest& m) {
  RenderedReport r;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : m.stages) {
    nlohmann::json row = {{"stage", s.name},
                          {"kind", stage_kind_name(s.kind)},
                          {"status", s.status},
                          {"bleu", round2(s.scores.bleu)},
                          {"chrf++", round2(s.scores.chrfpp)},
                          {"chrf", round2(s.scores.chrf)},
                          {"params", s.params},
                          {"adapter_params", s.adapter_params},
                          {"storage_bytes", s.storage.total_bytes},
                          {"storage_gb", std::stod(quant::format_gb(s.storage.total_bytes))},
                          {"decoder_layers", s.decoder_layers}};
    const auto it = s.retention.find("chrf");
    row["retention_chrf"] = (it != s.retention.end() && it->second) ? nlohmann::json(round2(*it->second)) : nlohmann::json(nullptr);
    if (!s.error.empty()) row["error"] = s.error;
    rows.push_back(row);
  }
  const std::string note =
      "Params are logical parameter counts (a 4-bit matrix counts all of its elements; adapters are listed "
      "separately). Storage is the packed payload size; 1 GB = 1000^3 bytes.";
  r.json = {{"recipe", m.recipe_name},        {"fingerprint", m.recipe_fingerprint}, {"status", m.status},
            {"teacher", m.teacher_stage},     {"rows", rows},                         {"note", note}};

  std::ostringstream os;
  os << "Recipe " << m.recipe_name << " (" << m.recipe_fingerprint << "), status " << m.status << ", teacher "
     << (m.teacher_stage.empty() ? "-" : m.teacher_stage) << "\n\n";
  const char* headers[] = {"Stage", "Kind", "Status", "BLEU", "chrF++", "chrF", "Params", "Adapter", "Storage (B)",
                           "Storage (GB)", "Dec", "Ret. chrF"};
  const std::size_t widths[] = {18, 16, 7, 7, 7, 7, 9, 8, 12, 12, 4, 9};
  for (std::size_t c = 0; c < 12; ++c) os << pad(headers[c], widths[c], c < 3) << (c + 1 < 12 ? " " : "\n");
  for (const auto& row : rows) {
    const std::string cells[] = {row["stage"].get<std::string>(),
                                 row["kind"].get<std::string>(),
                                 row["status"].get<std::string>(),
                                 fmt2(row["bleu"].get<double>()),
                                 fmt2(row["chrf++"].get<double>()),
                                 fmt2(row["chrf"].get<double>()),
                                 std::to_string(row["params"].get<std::uint64_t>()),
                                 std::to_string(row["adapter_params"].get<std::uint64_t>()),
                                 std::to_string(row["storage_bytes"].get<std::uint64_t>()),
                                 fmt2(row["storage_gb"].get<double>()),
                                 std::to_string(row["decoder_layers"].get<std::size_t>()),
                                 row["retention_chrf"].is_null() ? "undefined" : fmt2(row["retention_chrf"].get<double>())};
    for (std::size_t c = 0; c < 12; ++c) os << pad(cells[c], widths[c], c < 3) << (c + 1 < 12 ? " " : "\n");
  }
  for (const auto& s : m.stages) {
    if (!s.error.empty()) os << "\nstage " << s.name << " failed: " << s.error << "\n";
  }
  os << "\n" << note << "\n";
  r.text = os.str();
  return r;
}

}  // namespace prunekit::pipeline
