#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "uwipt/core/error.hpp"
#include "uwipt/core/rng.hpp"
#include "uwipt/data/image_io.hpp"
#include "uwipt/data/transforms.hpp"

namespace uwipt {

struct ImagePair {
  Image corrupted;
  Image clean;
  std::string base_id;
  int angle = 0;
};

inline std::string pair_label(const ImagePair& p) {
  return p.angle == 0 ? p.base_id : p.base_id + "_r" + std::to_string(p.angle);
}

enum class Split { Train, Test };

inline const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

struct ManifestEntry {
  std::string base_id;
  int angle = 0;
  bool operator==(const ManifestEntry&) const = default;
};

/// Augmented pair references, split by base id.
struct DatasetManifest {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
  std::uint64_t seed = 0;

  const std::vector<ManifestEntry>& entries(Split s) const { return s == Split::Train ? train : test; }
  bool operator==(const DatasetManifest&) const = default;
};

/// Number of bases assigned to training: floor(fraction * n), kept in [1, n].
inline std::size_t train_base_count(std::size_t n, double fraction) {
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

/// Splits base ids before augmentation, then expands each side by every angle.
inline DatasetManifest build_manifest(std::vector<std::string> base_ids, double train_fraction, std::uint64_t seed,
                                      const std::vector<int>& angles = {kAugmentAngles.begin(), kAugmentAngles.end()}) {
  if (base_ids.empty()) throw ContractError("build_manifest: no base pairs");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ContractError("build_manifest: train fraction must lie in (0, 1]");
  }
  if (angles.empty()) throw ContractError("build_manifest: empty angle set");
  for (int a : angles) {
    if (!is_augment_angle(a)) throw ContractError("build_manifest: unsupported angle " + std::to_string(a));
  }
  std::sort(base_ids.begin(), base_ids.end());
  if (std::adjacent_find(base_ids.begin(), base_ids.end()) != base_ids.end()) {
    throw ContractError("build_manifest: duplicate base id " + *std::adjacent_find(base_ids.begin(), base_ids.end()));
  }
  Rng rng = Rng(seed).split("manifest-split");
  shuffle(base_ids, rng);
  const std::size_t n_train = train_base_count(base_ids.size(), train_fraction);

  DatasetManifest m;
  m.seed = seed;
  for (std::size_t i = 0; i < base_ids.size(); ++i) {
    auto& side = i < n_train ? m.train : m.test;
    for (int a : angles) side.push_back({base_ids[i], a});
  }
  return m;
}

inline DatasetManifest build_manifest(const std::vector<ImagePair>& base_pairs, double train_fraction,
                                      std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(base_pairs.size());
  for (const auto& p : base_pairs) ids.push_back(p.base_id);
  return build_manifest(std::move(ids), train_fraction, seed);
}

/// Line-oriented text: a seed comment then `split<TAB>base_id<TAB>angle`.
inline std::string manifest_to_text(const DatasetManifest& m) {
  std::ostringstream os;
  os << "# seed " << m.seed << '\n';
  for (Split s : {Split::Train, Split::Test}) {
    for (const auto& e : m.entries(s)) os << split_name(s) << '\t' << e.base_id << '\t' << e.angle << '\n';
  }
  return os.str();
}

inline DatasetManifest manifest_from_text(const std::string& text) {
  DatasetManifest m;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      hs >> key;
      if (key == "seed") hs >> m.seed;
      continue;
    }
    std::istringstream ls(line);
    std::string split, id, angle;
    if (!std::getline(ls, split, '\t') || !std::getline(ls, id, '\t') || !std::getline(ls, angle)) {
      throw DataError("manifest line " + std::to_string(lineno) + ": expected split<TAB>base_id<TAB>angle");
    }
    ManifestEntry e{id, 0};
    try {
      e.angle = std::stoi(angle);
    } catch (const std::exception&) {
      throw DataError("manifest line " + std::to_string(lineno) + ": bad angle '" + angle + "'");
    }
    if (split == "train") {
      m.train.push_back(e);
    } else if (split == "test") {
      m.test.push_back(e);
    } else {
      throw DataError("manifest line " + std::to_string(lineno) + ": unknown split '" + split + "'");
    }
  }
  return m;
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << manifest_to_text(m);
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return manifest_from_text(ss.str());
}

/// Seed for per-image randomness, independent of processing order.
inline std::uint64_t image_seed(std::uint64_t master, const std::string& base_id, int angle) {
  return mix64(mix64(master) ^ hash_string(base_id) ^ mix64(static_cast<std::uint64_t>(angle) + 1));
}

struct PairFiles {
  std::string id;
  std::filesystem::path corrupted;
  std::filesystem::path clean;
};

/// Pairs `<root>/corrupted/<id>.<ext>` with `<root>/clean/<id>.<ext>`, sorted by id.
inline std::vector<PairFiles> list_pairs(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const fs::path cdir = root / "corrupted", kdir = root / "clean";
  for (const auto& d : {cdir, kdir}) {
    if (!fs::is_directory(d)) throw DataError("dataset layout: missing directory " + d.string());
  }
  auto scan = [](const fs::path& dir) {
    std::map<std::string, fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file() || !is_image_path(entry.path())) continue;
      const std::string id = entry.path().stem().string();
      if (!files.emplace(id, entry.path()).second) {
        throw DataError("dataset layout: id '" + id + "' appears twice in " + dir.string());
      }
    }
    return files;
  };
  const auto corrupted = scan(cdir), clean = scan(kdir);
  std::vector<PairFiles> pairs;
  for (const auto& [id, path] : corrupted) {
    auto it = clean.find(id);
    if (it == clean.end()) throw DataError("dataset: corrupted image '" + id + "' has no clean counterpart");
    pairs.push_back({id, path, it->second});
  }
  for (const auto& [id, path] : clean) {
    if (!corrupted.count(id)) throw DataError("dataset: clean image '" + id + "' has no corrupted counterpart");
  }
  if (pairs.empty()) throw DataError("dataset: no image pairs under " + root.string());
  return pairs;
}

/// Loads one pair. With `equalize`, a clean image exactly 2x or 4x larger than
/// its corrupted partner is box-downscaled to match; other mismatches fail.
inline ImagePair load_pair(const PairFiles& files, bool equalize = true) {
  ImagePair p{read_image(files.corrupted), read_image(files.clean), files.id, 0};
  if (equalize && !p.corrupted.same_extents(p.clean)) {
    for (std::size_t f : {2u, 4u}) {
      if (p.clean.width == p.corrupted.width * f && p.clean.height == p.corrupted.height * f) {
        p.clean = downscale(p.clean, f);
        return p;
      }
    }
    throw DataError("pair '" + files.id + "': extents differ (" + std::to_string(p.corrupted.width) + "x" +
                    std::to_string(p.corrupted.height) + " vs " + std::to_string(p.clean.width) + "x" +
                    std::to_string(p.clean.height) + ")");
  }
  return p;
}

inline std::vector<ImagePair> load_pairs(const std::filesystem::path& root, bool equalize = true) {
  std::vector<ImagePair> out;
  for (const auto& f : list_pairs(root)) out.push_back(load_pair(f, equalize));
  return out;
}

struct PrepareOptions {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool smooth_clean = true;
  bool smooth_corrupted = false;
  SmoothKind smooth_kind = SmoothKind::Box;
  std::vector<int> angles{kAugmentAngles.begin(), kAugmentAngles.end()};
  ImageFormat format = ImageFormat::Png;
};

/// File stem of an augmented pair in a prepared directory.
inline std::string prepared_stem(const std::string& base_id, int angle) {
  return base_id + "_r" + std::to_string(angle);
}

/// Smoothing and rotation applied to one base pair; both members get the
/// same rotation.
inline ImagePair augment_pair(const ImagePair& base, int angle, const PrepareOptions& opt) {
  ImagePair p = base;
  if (opt.smooth_clean) p.clean = smooth3x3(p.clean, opt.smooth_kind);
  if (opt.smooth_corrupted) p.corrupted = smooth3x3(p.corrupted, opt.smooth_kind);
  p.clean = rotate(p.clean, angle);
  p.corrupted = rotate(p.corrupted, angle);
  p.angle = angle;
  return p;
}

struct PrepareSummary {
  DatasetManifest manifest;
  std::size_t images_written = 0;
};

/// Reads a raw dataset, writes smoothed and rotated pairs to `out/corrupted`
/// and `out/clean`, plus `out/manifest.tsv`.
inline PrepareSummary prepare_dataset(const std::filesystem::path& root, const std::filesystem::path& out,
                                      const PrepareOptions& opt) {
  namespace fs = std::filesystem;
  const auto files = list_pairs(root);
  std::vector<std::string> ids;
  for (const auto& f : files) ids.push_back(f.id);
  PrepareSummary summary;
  summary.manifest = build_manifest(ids, opt.train_fraction, opt.seed, opt.angles);
  fs::create_directories(out / "corrupted");
  fs::create_directories(out / "clean");
  const std::string ext = format_extension(opt.format);
  for (const auto& f : files) {
    const ImagePair base = load_pair(f);
    for (int a : opt.angles) {
      const ImagePair p = augment_pair(base, a, opt);
      const std::string stem = prepared_stem(f.id, a);
      write_image(p.corrupted, out / "corrupted" / (stem + ext));
      write_image(p.clean, out / "clean" / (stem + ext));
      summary.images_written += 2;
    }
  }
  write_manifest(summary.manifest, out / "manifest.tsv");
  return summary;
}

/// Loads the pairs a manifest lists for one split from a prepared directory.
inline std::vector<ImagePair> load_split(const std::filesystem::path& prepared, const DatasetManifest& m, Split s) {
  std::vector<ImagePair> pairs;
  for (const auto& e : m.entries(s)) {
    const std::string stem = prepared_stem(e.base_id, e.angle);
    PairFiles files{stem, {}, {}};
    for (const char* ext : {".png", ".ppm"}) {
      const auto c = prepared / "corrupted" / (stem + ext);
      if (std::filesystem::exists(c)) {
        files.corrupted = c;
        files.clean = prepared / "clean" / (stem + ext);
        break;
      }
    }
    if (files.corrupted.empty()) throw DataError("manifest entry '" + stem + "' has no image under " + prepared.string());
    ImagePair p = load_pair(files);
    p.base_id = e.base_id;
    p.angle = e.angle;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

enum class SynthKind { Underwater, Noise, Rain, Downscale };

inline SynthKind parse_synth_kind(const std::string& s) {
  if (s == "underwater") return SynthKind::Underwater;
  if (s == "noise") return SynthKind::Noise;
  if (s == "rain") return SynthKind::Rain;
  if (s == "downscale") return SynthKind::Downscale;
  throw ConfigError("unknown synth kind '" + s + "' (expected underwater|noise|rain|downscale)");
}

struct SynthOptions {
  SynthKind kind = SynthKind::Underwater;
  std::size_t count = 10;
  std::size_t width = 48;
  std::size_t height = 48;
  std::uint64_t seed = 0;
  double sigma = 30.0;
  std::size_t factor = 2;
  RainParams rain;
  UnderwaterParams underwater;
};

/// Corrupts one clean image according to the synth options.
inline Image synth_corrupt(const Image& clean, const SynthOptions& opt, std::uint64_t seed) {
  switch (opt.kind) {
    case SynthKind::Underwater:
      return synth_underwater(clean, opt.underwater, seed);
    case SynthKind::Noise:
      return add_gaussian_noise(clean, opt.sigma, seed);
    case SynthKind::Rain:
      return add_rain(clean, opt.rain, seed);
    case SynthKind::Downscale:
      return downscale(pad_to_multiple(clean, opt.factor), opt.factor);
  }
  throw ContractError("synth_corrupt: unknown kind");
}

inline std::string synth_id(std::size_t i) {
  std::ostringstream os;
  os << "img" << std::setw(5) << std::setfill('0') << i;
  return os.str();
}

/// In-memory synthetic pairs. Clean images come from `sources` when given
/// (cycled, with distinct corruption seeds), otherwise procedurally.
inline std::vector<ImagePair> synth_pairs(const SynthOptions& opt, const std::vector<Image>& sources = {}) {
  std::vector<ImagePair> pairs;
  pairs.reserve(opt.count);
  for (std::size_t i = 0; i < opt.count; ++i) {
    const std::string id = synth_id(i);
    const std::uint64_t seed = image_seed(opt.seed, id, 0);
    Image clean = sources.empty() ? synth_clean_image(opt.width, opt.height, seed) : sources[i % sources.size()];
    if (opt.kind == SynthKind::Downscale) clean = pad_to_multiple(clean, opt.factor);
    Image corrupted = synth_corrupt(clean, opt, seed);
    pairs.push_back({std::move(corrupted), std::move(clean), id, 0});
  }
  return pairs;
}

/// Writes synthetic pairs in the dataset layout under `root`.
inline std::vector<ImagePair> write_synth_dataset(const std::filesystem::path& root, const SynthOptions& opt,
                                                  const std::vector<Image>& sources = {},
                                                  ImageFormat format = ImageFormat::Png) {
  std::filesystem::create_directories(root / "corrupted");
  std::filesystem::create_directories(root / "clean");
  auto pairs = synth_pairs(opt, sources);
  const std::string ext = format_extension(format);
  for (const auto& p : pairs) {
    write_image(p.corrupted, root / "corrupted" / (p.base_id + ext));
    write_image(p.clean, root / "clean" / (p.base_id + ext));
  }
  return pairs;
}

}  // namespace uwipt
