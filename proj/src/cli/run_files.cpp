#include <cerrno>
#include <cstring>
#include <ostream>
#include <stdexcept>

#include <fcntl.h>
#include <fmt/format.h>
#include <unistd.h>

#include "cervix/fileio.hpp"
#include "internal.hpp"

namespace cervix {

namespace fs = std::filesystem;

std::string_view to_string(EvalSubset subset) {
  switch (subset) {
    case EvalSubset::train: return "train";
    case EvalSubset::val: return "val";
    case EvalSubset::test: return "test";
    case EvalSubset::all: return "all";
  }
  return "?";
}

std::string echo_config(const RunConfig& c, std::string_view command) {
  std::string s = fmt::format("command = {}\n", command);
  auto line = [&s](std::string_view key, const auto& value) { s += fmt::format("{} = {}\n", key, value); };
  line("data", c.data.string());
  line("out", c.out.string());
  line("weights", c.weights.string());
  line("classes", c.classes);
  line("mode", to_string(c.mode()));
  line("seed", c.seed);
  line("init_seed", c.init_seed());
  line("split_level", to_string(c.split_level));
  line("split_ratios", "0.70/0.20/0.10");
  line("folds", c.folds);
  line("subset", to_string(c.subset));
  line("format", c.format == ReportFormat::text ? "text" : "structured");
  line("epochs", c.train.epochs);
  line("batch", c.train.batch_size);
  line("shuffle", c.train.shuffle);
  line("train_seed", c.train.seed);
  line("lr", c.train.adam.lr);
  line("beta1", c.train.adam.beta1);
  line("beta2", c.train.adam.beta2);
  line("eps", c.train.adam.eps);
  line("target_per_class", c.target_per_class);
  line("rotation_degrees", c.augment.rotation_degrees);
  line("vflip", c.augment.vflip);
  line("zoom_factor", c.augment.zoom_factor);
  line("elastic_alpha", c.augment.elastic_alpha);
  line("elastic_sigma", c.augment.elastic_sigma);
  line("clahe_clip", c.augment.clahe_clip);
  line("clahe_grid", fmt::format("{}x{}", c.augment.clahe_grid.rows, c.augment.clahe_grid.cols));
  return s;
}

std::string render_history(const History& history) {
  std::string s = "epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc\n";
  for (const auto& r : history) {
    s += fmt::format("{}\t{:.17g}\t{:.17g}\t{:.17g}\t{:.17g}\n", r.epoch, r.train_loss, r.train_accuracy, r.val_loss,
                     r.val_accuracy);
  }
  return s;
}

namespace cli {

RunLock::RunLock(const fs::path& dir) : file_(dir / kLockName) {
  const int fd = ::open(file_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw std::runtime_error(fmt::format(
          "{} is in use by another run (remove {} if no run is active)", dir.string(), file_.string()));
    }
    throw std::runtime_error(fmt::format("cannot create {}: {}", file_.string(), std::strerror(errno)));
  }
  const std::string pid = fmt::format("{}\n", ::getpid());
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(file_, ec);
}

std::string report_ext(ReportFormat format) { return format == ReportFormat::text ? ".txt" : ".json"; }

fs::path prepare_out_dir(const fs::path& dir) {
  if (dir.empty()) throw std::runtime_error("an output directory is required");
  fs::create_directories(dir);
  return dir;
}

void log_config(const RunConfig& config, std::string_view command, std::ostream& err) {
  const std::string echo = echo_config(config, command);
  for (std::size_t start = 0; start < echo.size();) {
    const std::size_t end = echo.find('\n', start);
    err << "# " << echo.substr(start, end - start) << '\n';
    start = end + 1;
  }
  if (!config.out.empty() && fs::is_directory(config.out)) {
    write_file_atomic(config.out / fmt::format("{}_config.txt", command), echo);
  }
}

}  // namespace cli
}  // namespace cervix
