#include "invrec/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "invrec/errors.hpp"

namespace invrec::io {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string render_metrics(std::span<const pipeline::IterationStats> rows) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.iteration);
    out += ',' + std::to_string(r.episodes);
    out += ',' + std::to_string(r.steps);
    for (double v : {r.mean_env_reward, r.mean_bonus, r.ctr, r.disc_loss, r.policy_loss, r.value_loss,
                     r.entropy, r.approx_kl})
      out += ',' + format_number(v);
    out += '\n';
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f << text;
    if (!f) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_metrics(const std::filesystem::path& path, std::span<const pipeline::IterationStats> rows) {
  if (rows.empty()) throw ValidationError("write_metrics: no rows");
  write_text_file(path, render_metrics(rows));
}

}  // namespace invrec::io
