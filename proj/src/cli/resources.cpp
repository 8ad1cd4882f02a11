#include <chrono>

#include <fmt/format.h>
#include <json.hpp>
#include <sys/resource.h>

#include "cervix/cli.hpp"

namespace cervix {

std::optional<std::size_t> peak_resident_bytes() {
  rusage usage{};
  if (::getrusage(RUSAGE_SELF, &usage) != 0 || usage.ru_maxrss <= 0) return std::nullopt;
  return static_cast<std::size_t>(usage.ru_maxrss) * 1024;  // Linux reports KiB
}

ResourceReport measure_resources(const Model& model, const std::function<void()>& train_phase,
                                 const std::function<void()>& test_phase) {
  using clock = std::chrono::steady_clock;
  auto timed = [](const std::function<void()>& phase) {
    if (!phase) return 0.0;
    const auto start = clock::now();
    phase();
    return std::chrono::duration<double>(clock::now() - start).count();
  };
  ResourceReport r;
  r.wall_time_train_seconds = timed(train_phase);
  r.wall_time_test_seconds = timed(test_phase);
  r.param_count = param_count(model);
  r.param_bytes_serialized = 4 * r.param_count;
  r.peak_resident_bytes = peak_resident_bytes();
  return r;
}

std::string render_resources(const ResourceReport& r, ReportFormat format) {
  constexpr double kMiB = 1024.0 * 1024.0;
  if (format == ReportFormat::structured) {
    nlohmann::json j = {{"wall_time_train_seconds", r.wall_time_train_seconds},
                        {"wall_time_test_seconds", r.wall_time_test_seconds},
                        {"param_count", r.param_count},
                        {"param_bytes_serialized", r.param_bytes_serialized}};
    j["peak_resident_bytes"] = r.peak_resident_bytes ? nlohmann::json(*r.peak_resident_bytes) : nlohmann::json();
    return j.dump(2) + "\n";
  }
  std::string s;
  s += fmt::format("training time      {:.3f} s\n", r.wall_time_train_seconds);
  s += fmt::format("testing time       {:.3f} s\n", r.wall_time_test_seconds);
  s += fmt::format("parameters         {}\n", r.param_count);
  s += fmt::format("parameter bytes    {} ({:.2f} MB)\n", r.param_bytes_serialized, r.param_bytes_serialized / kMiB);
  if (r.peak_resident_bytes) {
    s += fmt::format("peak resident      {:.2f} MB\n", static_cast<double>(*r.peak_resident_bytes) / kMiB);
  } else {
    s += "peak resident      unavailable\n";
  }
  return s;
}

}  // namespace cervix
