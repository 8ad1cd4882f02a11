#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "cervix/cli.hpp"

namespace cervix::cli {

// Exclusive claim on an output directory, released on destruction.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path file_;
};

inline constexpr const char* kLockName = ".cervixpert.lock";

std::string report_ext(ReportFormat format);
std::filesystem::path prepare_out_dir(const std::filesystem::path& dir);
void log_config(const RunConfig& config, std::string_view command, std::ostream& err);

int cmd_inspect(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_augment(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_evaluate(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_crossval(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_predict(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_bench(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace cervix::cli
