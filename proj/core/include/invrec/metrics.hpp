#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "invrec/pipeline.hpp"

namespace invrec::io {

inline constexpr const char* kMetricsHeader =
    "iteration,episodes,steps,mean_env_reward,mean_bonus,ctr,disc_loss,policy_loss,value_loss,entropy,"
    "approx_kl";

// 6 significant digits, '.' decimal separator, '\n' line endings.
std::string format_number(double v);
std::string render_metrics(std::span<const pipeline::IterationStats> rows);
void write_metrics(const std::filesystem::path& path, std::span<const pipeline::IterationStats> rows);

// Atomic text write (temp file + rename).
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace invrec::io
