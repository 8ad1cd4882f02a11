#include "cervix/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "cervix/errors.hpp"

namespace cervix {

namespace fs = std::filesystem;

std::string_view to_string(LabelMode mode) {
  return mode == LabelMode::five_class ? "five_class" : "three_class";
}

std::string_view to_string(SplitLevel level) { return level == SplitLevel::source ? "source" : "sample"; }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes(), 0);
  for (const auto& s : samples) {
    if (s.label >= 0 && static_cast<std::size_t>(s.label) < counts.size()) ++counts[static_cast<std::size_t>(s.label)];
  }
  return counts;
}

void Dataset::validate() const {
  std::set<std::string> seen;
  for (const auto& name : class_names) {
    if (!seen.insert(name).second) throw ValidationError(fmt::format("duplicate class name '{}'", name));
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= class_names.size()) {
      throw ValidationError(fmt::format("sample {} has label {} outside [0, {})", i, s.label, class_names.size()));
    }
    if (s.source_id.empty()) throw ValidationError(fmt::format("sample {} has no source id", i));
  }
}

// ---------------------------------------------------------------------------
// Loading

namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  static const std::set<std::string> kExts = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"};
  return kExts.count(ext) != 0;
}

// generated_path -> source_path, both relative to the dataset root.
std::unordered_map<std::string, std::string> read_manifest(const fs::path& file) {
  std::unordered_map<std::string, std::string> out;
  std::ifstream in(file);
  if (!in) throw LoadError(fmt::format("cannot read manifest {}", file.string()));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.starts_with("generated_path")) continue;
    std::istringstream row(line);
    std::string generated, source;
    if (!std::getline(row, generated, '\t') || !std::getline(row, source, '\t')) {
      throw LoadError(fmt::format("{}:{}: expected tab-separated generated_path and source_path", file.string(), lineno));
    }
    out.emplace(std::move(generated), std::move(source));
  }
  return out;
}

}  // namespace

Dataset load_dataset(const fs::path& root, LoadReport* report) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw LoadError(fmt::format("dataset root {} is not a directory", root.string()));

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw LoadError(fmt::format("dataset root {} has no class subdirectories", root.string()));

  std::unordered_map<std::string, std::string> manifest;
  if (fs::exists(root / kManifestName)) manifest = read_manifest(root / kManifestName);

  Dataset ds;
  LoadReport local;
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    ds.class_names.push_back(class_dirs[c].filename().string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[c])) {
      if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      auto img = read_image(file);
      if (!img || img->empty()) {
        ++local.skipped;
        local.skipped_paths.push_back(file);
        continue;
      }
      const std::string rel = fs::relative(file, root).generic_string();
      LabeledSample s;
      s.image = std::make_shared<const Image>(std::move(*img));
      s.path = file;
      s.label = static_cast<int>(c);
      auto it = manifest.find(rel);
      s.source_id = it == manifest.end() ? rel : it->second;
      ds.samples.push_back(std::move(s));
      ++local.loaded;
    }
  }
  ds.validate();
  if (report != nullptr) *report = std::move(local);
  return ds;
}

// ---------------------------------------------------------------------------
// Preprocessing and labels

void preprocess_into(const Image& img, std::size_t out_h, std::size_t out_w, std::span<double> out) {
  if (img.empty()) throw ValidationError("cannot preprocess an image with a zero dimension");
  if (out.size() != out_h * out_w * Image::channels) {
    throw ShapeError(fmt::format("preprocess target holds {} values, need {}", out.size(), out_h * out_w * 3));
  }
  const std::vector<double> px = resize_bilinear(img, {0, 0, img.height, img.width}, out_h, out_w);
  for (std::size_t i = 0; i < px.size(); ++i) out[i] = px[i] / 255.0;
}

Tensor preprocess(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (img.empty()) throw ValidationError("cannot preprocess an image with a zero dimension");
  Tensor t({out_h, out_w, Image::channels});
  preprocess_into(img, out_h, out_w, t.data());
  return t;
}

int coarse_label(int fine_label) {
  // dyskeratotic, koilocytotic -> abnormal; metaplastic -> benign;
  // parabasal, superficial/intermediate -> normal
  static constexpr int kCoarse[5] = {0, 0, 1, 2, 2};
  if (fine_label < 0 || fine_label >= 5) {
    throw ValidationError(fmt::format("fine label {} outside [0, 5)", fine_label));
  }
  return kCoarse[fine_label];
}

Dataset to_three_class(const Dataset& five_class) {
  if (five_class.mode != LabelMode::five_class || five_class.num_classes() != kFineClassNames.size()) {
    throw ValidationError(
        fmt::format("three-class mapping needs a five-class dataset, got {} classes", five_class.num_classes()));
  }
  Dataset out = five_class;
  out.mode = LabelMode::three_class;
  out.class_names.assign(kCoarseClassNames.begin(), kCoarseClassNames.end());
  for (auto& s : out.samples) s.label = coarse_label(s.label);
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

std::vector<std::size_t> largest_remainder(std::size_t n, std::span<const double> ratios) {
  constexpr double kEps = 1e-9;
  std::vector<std::size_t> counts(ratios.size());
  std::vector<double> remainder(ratios.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double quota = ratios[i] * static_cast<double>(n);
    const double whole = std::floor(quota + kEps);
    counts[i] = static_cast<std::size_t>(whole);
    remainder[i] = std::max(0.0, quota - whole);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(ratios.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b] + kEps; });
  for (std::size_t i = 0; assigned < n; i = (i + 1) % order.size(), ++assigned) ++counts[order[i]];
  return counts;
}

namespace {

// Units are the indivisible groups being apportioned: single samples, or
// every sample sharing a source id. Returned per class in first-seen order.
std::vector<std::vector<std::vector<std::size_t>>> units_by_class(const Dataset& ds, SplitLevel level) {
  std::vector<std::vector<std::vector<std::size_t>>> units(ds.num_classes());
  if (level == SplitLevel::sample) {
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      units[static_cast<std::size_t>(ds.samples[i].label)].push_back({i});
    }
    return units;
  }
  std::unordered_map<std::string, std::pair<int, std::size_t>> where;  // source -> (class, unit slot)
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    auto [it, fresh] = where.try_emplace(s.source_id, s.label, units[static_cast<std::size_t>(s.label)].size());
    if (fresh) {
      units[static_cast<std::size_t>(s.label)].push_back({i});
    } else if (it->second.first != s.label) {
      throw ValidationError(fmt::format("source '{}' appears under classes '{}' and '{}'", s.source_id,
                                        ds.class_names[static_cast<std::size_t>(it->second.first)],
                                        ds.class_names[static_cast<std::size_t>(s.label)]));
    } else {
      units[static_cast<std::size_t>(s.label)][it->second.second].push_back(i);
    }
  }
  return units;
}

}  // namespace

Split stratified_split(const Dataset& dataset, const SplitSpec& spec) {
  dataset.validate();
  double total = 0.0;
  for (double r : spec.ratios) {
    if (!(r > 0.0)) throw ValidationError(fmt::format("split ratios must be positive, got {}", r));
    total += r;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw ValidationError(fmt::format("split ratios sum to {}, not 1", total));

  auto units = units_by_class(dataset, spec.level);
  Split split;
  std::array<std::vector<std::size_t>*, 3> parts = {&split.train, &split.val, &split.test};
  for (std::size_t c = 0; c < units.size(); ++c) {
    auto& cls = units[c];
    if (cls.size() < 3) {
      throw ValidationError(fmt::format("class '{}' has {} {}s; a 3-way split needs at least 3",
                                        dataset.class_names[c], cls.size(), to_string(spec.level)));
    }
    Rng rng(mix_seed(spec.seed, c));
    std::shuffle(cls.begin(), cls.end(), rng);
    const auto counts = largest_remainder(cls.size(), spec.ratios);
    std::size_t next = 0;
    for (std::size_t p = 0; p < 3; ++p) {
      for (std::size_t j = 0; j < counts[p]; ++j, ++next) {
        parts[p]->insert(parts[p]->end(), cls[next].begin(), cls[next].end());
      }
    }
  }
  for (auto* p : parts) std::sort(p->begin(), p->end());
  return split;
}

std::vector<std::vector<std::size_t>> kfold(const Dataset& dataset, std::size_t k, std::uint64_t seed,
                                            SplitLevel level) {
  if (k < 2) throw ValidationError(fmt::format("k-fold needs k >= 2, got {}", k));
  dataset.validate();
  auto units = units_by_class(dataset, level);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t offset = 0;
  for (std::size_t c = 0; c < units.size(); ++c) {
    auto& cls = units[c];
    if (cls.size() < k) {
      throw ValidationError(fmt::format("class '{}' has {} {}s, fewer than {} folds", dataset.class_names[c],
                                        cls.size(), to_string(level), k));
    }
    Rng rng(mix_seed(seed, c, 0x6b666f6c64ULL));
    std::shuffle(cls.begin(), cls.end(), rng);
    // Round-robin keeps per-class fold sizes within one; the running offset
    // spreads each class's remainder onto different folds.
    for (std::size_t j = 0; j < cls.size(); ++j) {
      auto& fold = folds[(offset + j) % k];
      fold.insert(fold.end(), cls[j].begin(), cls[j].end());
    }
    offset += cls.size();
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
  Dataset out;
  out.class_names = dataset.class_names;
  out.mode = dataset.mode;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= dataset.samples.size()) throw ValidationError(fmt::format("sample index {} out of range", i));
    out.samples.push_back(dataset.samples[i]);
  }
  return out;
}

}  // namespace cervix
