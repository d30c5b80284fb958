#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "siavc/core.hpp"
#include "siavc/rng.hpp"
#include "siavc/serialize.hpp"
#include "siavc/tensor.hpp"

namespace siavc {

// ---------------------------------------------------------------------------
// Raw tensor files: magic "SIVC", version u16, rank u16, dims u32 LE,
// float32 LE row-major payload.
// ---------------------------------------------------------------------------

inline constexpr char kTensorMagic[4] = {'S', 'I', 'V', 'C'};
inline constexpr std::uint16_t kTensorVersion = 1;

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

inline void save_raw_tensor(const std::string& path,
                            std::span<const std::uint32_t> dims,
                            std::span<const float> data) {
  std::uint64_t numel = 1;
  for (auto d : dims) numel *= d;
  if (numel != data.size()) {
    throw std::invalid_argument("save_raw_tensor: dims/payload mismatch");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_raw_tensor: cannot open " + path);
  io::write_bytes(os, kTensorMagic, 4);
  io::write_le<std::uint16_t>(os, kTensorVersion);
  io::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(dims.size()));
  for (auto d : dims) io::write_le<std::uint32_t>(os, d);
  for (float v : data) io::write_f32(os, v);
  if (!os) throw std::runtime_error("save_raw_tensor: write failed " + path);
}

inline RawTensor load_raw_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_raw_tensor: cannot open " + path);
  char magic[4];
  io::read_bytes(is, magic, 4);
  if (std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw std::runtime_error("load_raw_tensor: bad magic in " + path);
  }
  const auto version = io::read_le<std::uint16_t>(is);
  if (version != kTensorVersion) {
    throw std::runtime_error("load_raw_tensor: unsupported version in " + path);
  }
  const auto rank = io::read_le<std::uint16_t>(is);
  RawTensor t;
  t.dims.resize(rank);
  std::uint64_t numel = 1;
  for (auto& d : t.dims) {
    d = io::read_le<std::uint32_t>(is);
    numel *= d;
  }
  if (numel > (1ull << 32)) {
    throw std::runtime_error("load_raw_tensor: corrupt dims in " + path);
  }
  t.data.resize(numel);
  for (auto& v : t.data) v = io::read_f32(is);
  return t;
}

inline void save_video_tensor(const std::string& path, const VideoTensor& v) {
  const auto& s = v.shape();
  const std::uint32_t dims[4] = {
      static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.t),
      static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
  save_raw_tensor(path, dims, std::span<const float>(v.data(), v.size()));
}

inline VideoTensor load_video_tensor(const std::string& path) {
  RawTensor t = load_raw_tensor(path);
  if (t.dims.size() != 4) {
    throw std::runtime_error("load_video_tensor: rank != 4 in " + path);
  }
  return VideoTensor::from_data(
      VideoShape{static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                 static_cast<int>(t.dims[2]), static_cast<int>(t.dims[3])},
      std::move(t.data));
}

// ---------------------------------------------------------------------------
// Frame images (binary PPM / PGM)
// ---------------------------------------------------------------------------

namespace detail {

inline int next_pnm_token(std::istream& is) {
  // skips whitespace and '#' comments
  int ch = is.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = is.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = is.get();
  }
  if (ch == EOF) throw std::runtime_error("pnm: truncated header");
  int value = 0;
  while (ch != EOF && std::isdigit(ch)) {
    value = value * 10 + (ch - '0');
    ch = is.get();
  }
  return value;
}

/// Decodes binary P5/P6 into (channels, h, w) planes in [0,1].
inline std::vector<std::vector<float>> load_pnm(const std::string& path,
                                                int& h, int& w) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("pnm: cannot open " + path);
  char p, kind;
  is.get(p);
  is.get(kind);
  if (p != 'P' || (kind != '5' && kind != '6')) {
    throw std::runtime_error("pnm: unsupported format in " + path);
  }
  const int channels = kind == '6' ? 3 : 1;
  w = next_pnm_token(is);
  h = next_pnm_token(is);
  const int maxval = next_pnm_token(is);
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255) {
    throw std::runtime_error("pnm: unsupported geometry/maxval in " + path);
  }
  std::vector<unsigned char> raw(static_cast<std::size_t>(h) * w * channels);
  is.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(is.gcount()) != raw.size()) {
    throw std::runtime_error("pnm: truncated payload in " + path);
  }
  std::vector<std::vector<float>> planes(
      channels, std::vector<float>(static_cast<std::size_t>(h) * w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        planes[c][static_cast<std::size_t>(y) * w + x] =
            raw[(static_cast<std::size_t>(y) * w + x) * channels + c] /
            static_cast<float>(maxval);
      }
  return planes;
}

inline float bilinear_plane(const std::vector<float>& plane, int h, int w,
                            double sy, double sx) {
  const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, h - 1);
  const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const double fy = std::clamp(sy - y0, 0.0, 1.0);
  const double fx = std::clamp(sx - x0, 0.0, 1.0);
  auto px = [&](int y, int x) {
    return plane[static_cast<std::size_t>(y) * w + x];
  };
  const double top = px(y0, x0) * (1 - fx) + px(y0, x1) * fx;
  const double bot = px(y1, x0) * (1 - fx) + px(y1, x1) * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

/// Uniformly spaced source indices, nearest-index rule.
inline std::vector<int> uniform_indices(int available, int target) {
  std::vector<int> idx(target);
  if (target == 1) {
    idx[0] = 0;
    return idx;
  }
  for (int i = 0; i < target; ++i) {
    idx[i] = static_cast<int>(std::llround(
        static_cast<double>(i) * (available - 1) / (target - 1)));
  }
  return idx;
}

}  // namespace detail

/// Loads a video from either a raw tensor file or a directory of numbered
/// PPM/PGM frames: frames are sampled at t_target uniformly spaced indices,
/// resized to (h, w) and normalized to [0,1]. Single-channel sources are
/// replicated to the requested channel count.
inline VideoTensor load_video(const std::string& path, int t_target, int h,
                              int w, int channels = 3) {
  namespace fs = std::filesystem;
  if (t_target < 1 || h < 1 || w < 1) {
    throw std::invalid_argument("load_video: bad target geometry");
  }
  if (!fs::exists(path)) {
    throw std::runtime_error("load_video: missing path " + path);
  }

  if (fs::is_regular_file(path)) {
    VideoTensor raw = load_video_tensor(path);
    const auto& s = raw.shape();
    if (s.c != channels && !(s.c == 1)) {
      throw std::runtime_error("load_video: channel mismatch in " + path);
    }
    VideoTensor out(channels, t_target, h, w);
    const auto t_idx = detail::uniform_indices(s.t, t_target);
    for (int t = 0; t < t_target; ++t) {
      for (int y = 0; y < h; ++y) {
        const double sy = h > 1 ? static_cast<double>(y) * (s.h - 1) / (h - 1)
                                : 0.0;
        for (int x = 0; x < w; ++x) {
          const double sx =
              w > 1 ? static_cast<double>(x) * (s.w - 1) / (w - 1) : 0.0;
          for (int c = 0; c < channels; ++c) {
            const int sc = s.c == 1 ? 0 : c;
            const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0,
                                      s.h - 1);
            const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0,
                                      s.w - 1);
            const int y1 = std::min(y0 + 1, s.h - 1);
            const int x1 = std::min(x0 + 1, s.w - 1);
            const double fy = std::clamp(sy - y0, 0.0, 1.0);
            const double fx = std::clamp(sx - x0, 0.0, 1.0);
            const double top = raw.at(sc, t_idx[t], y0, x0) * (1 - fx) +
                               raw.at(sc, t_idx[t], y0, x1) * fx;
            const double bot = raw.at(sc, t_idx[t], y1, x0) * (1 - fx) +
                               raw.at(sc, t_idx[t], y1, x1) * fx;
            out.at(c, t, y, x) =
                std::clamp(static_cast<float>(top * (1 - fy) + bot * fy),
                           0.0f, 1.0f);
          }
        }
      }
    }
    return out;
  }

  // frame directory
  std::vector<std::string> frames;
  for (const auto& e : fs::directory_iterator(path)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext == ".ppm" || ext == ".pgm") frames.push_back(e.path().string());
  }
  if (frames.empty()) {
    throw std::runtime_error("load_video: no decodable frames in " + path);
  }
  std::sort(frames.begin(), frames.end());
  const auto t_idx =
      detail::uniform_indices(static_cast<int>(frames.size()), t_target);
  VideoTensor out(channels, t_target, h, w);
  for (int t = 0; t < t_target; ++t) {
    int fh = 0, fw = 0;
    const auto planes = detail::load_pnm(frames[t_idx[t]], fh, fw);
    for (int y = 0; y < h; ++y) {
      const double sy =
          h > 1 ? static_cast<double>(y) * (fh - 1) / (h - 1) : 0.0;
      for (int x = 0; x < w; ++x) {
        const double sx =
            w > 1 ? static_cast<double>(x) * (fw - 1) / (w - 1) : 0.0;
        for (int c = 0; c < channels; ++c) {
          const auto& plane = planes[planes.size() == 1 ? 0 : c];
          out.at(c, t, y, x) = detail::bilinear_plane(plane, fh, fw, sy, sx);
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifests: one tab-separated line per sample (path, class, frames).
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string path;
  std::string class_name;
  int frames = 0;
};

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_manifest: cannot open " + path);
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string frames_str;
    if (!std::getline(ss, e.path, '\t') ||
        !std::getline(ss, e.class_name, '\t') ||
        !std::getline(ss, frames_str, '\t')) {
      throw std::runtime_error("load_manifest: malformed line " +
                               std::to_string(lineno) + " in " + path);
    }
    e.frames = std::stoi(frames_str);
    const std::filesystem::path p(e.path);
    if (p.is_relative()) e.path = (base / p).string();
    out.push_back(std::move(e));
  }
  return out;
}

inline void save_manifest(const std::string& path,
                          std::span<const ManifestEntry> entries) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_manifest: cannot open " + path);
  for (const auto& e : entries) {
    os << e.path << '\t' << e.class_name << '\t' << e.frames << '\n';
  }
}

/// Train/test entries plus the class list (sorted, name -> index bijection).
struct DatasetManifest {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
  std::vector<std::string> classes;

  static DatasetManifest from_files(const std::string& train_path,
                                    const std::string& test_path) {
    DatasetManifest m;
    m.train = load_manifest(train_path);
    m.test = load_manifest(test_path);
    std::map<std::string, int> seen;
    for (const auto& e : m.train) seen.emplace(e.class_name, 0);
    for (const auto& e : m.test) seen.emplace(e.class_name, 0);
    for (const auto& [name, _] : seen) m.classes.push_back(name);
    return m;
  }

  int class_index(const std::string& name) const {
    const auto it = std::lower_bound(classes.begin(), classes.end(), name);
    if (it == classes.end() || *it != name) {
      throw std::runtime_error("unknown class " + name);
    }
    return static_cast<int>(it - classes.begin());
  }
};

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitSpec {
  int labeled_budget = 0;
  std::uint64_t seed = 0;
};

/// Labeled/unlabeled/test partition. Withheld labels of unlabeled samples
/// live only in the oracle table used by the pseudo-label accuracy metric;
/// UnlabeledSample itself carries no label.
struct DataSplit {
  std::vector<LabeledSample> labeled;
  std::vector<UnlabeledSample> unlabeled;
  std::vector<LabeledSample> test;
  std::unordered_map<SampleId, int> unlabeled_truth;
  std::vector<std::string> classes;
  int n_classes = 0;
};

/// Proportional (largest remainder) labeled allocation per class,
/// deterministic in the seed.
inline DataSplit make_split(const std::vector<LabeledSample>& train,
                            const std::vector<LabeledSample>& test,
                            const std::vector<std::string>& classes,
                            const SplitSpec& spec) {
  const int n_classes = static_cast<int>(classes.size());
  if (n_classes < 1) throw std::invalid_argument("make_split: no classes");
  const int total = static_cast<int>(train.size());
  if (spec.labeled_budget < 1 || spec.labeled_budget > total) {
    throw std::invalid_argument(
        "make_split: labeled budget must be in [1, train size]");
  }
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const int c = train[i].label;
    if (c < 0 || c >= n_classes) {
      throw std::invalid_argument("make_split: label out of range");
    }
    by_class[c].push_back(i);
  }

  // floor allocation, then distribute the leftovers by largest remainder
  std::vector<int> alloc(n_classes, 0);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int c = 0; c < n_classes; ++c) {
    const double exact = static_cast<double>(spec.labeled_budget) *
                         by_class[c].size() / total;
    alloc[c] = static_cast<int>(std::floor(exact));
    assigned += alloc[c];
    remainders.push_back({exact - alloc[c], c});
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  for (int i = 0; assigned < spec.labeled_budget; ++i) {
    const int c = remainders[i % n_classes].second;
    if (alloc[c] < static_cast<int>(by_class[c].size())) {
      ++alloc[c];
      ++assigned;
    }
  }
  for (int c = 0; c < n_classes; ++c) {
    if (alloc[c] > static_cast<int>(by_class[c].size())) {
      throw std::invalid_argument("make_split: infeasible for class " +
                                  classes[c]);
    }
  }

  RngStream rng(mix_seed(spec.seed, 0x5eedu));
  DataSplit out;
  out.classes = classes;
  out.n_classes = n_classes;
  out.test = test;
  for (int c = 0; c < n_classes; ++c) {
    auto idx = by_class[c];
    rng.shuffle(idx.begin(), idx.end());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& s = train[idx[i]];
      if (i < static_cast<std::size_t>(alloc[c])) {
        out.labeled.push_back(s);
      } else {
        out.unlabeled.push_back({s.video, s.id});
        out.unlabeled_truth[s.id] = s.label;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic videos: a bright square translating over a noisy background,
// class identity encoded by motion axis and speed. Motion patterns are
// symmetric under horizontal flips so the weak augmentation never aliases
// one class into another.
// ---------------------------------------------------------------------------

struct SyntheticDataset {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
  std::vector<std::string> classes;
};

namespace detail {

inline VideoTensor synth_video(int c_cls, int cls, int t, int h, int w,
                               RngStream& rng) {
  (void)c_cls;
  const int motion = cls % 3;            // 0: horizontal, 1: up, 2: down
  const int speed_idx = cls / 3;
  const double speed = 1.0 + 1.3 * speed_idx;
  double vy = 0.0, vx = 0.0;
  if (motion == 0) {
    vx = rng.bernoulli(0.5) ? speed : -speed;  // either direction, same class
  } else if (motion == 1) {
    vy = -speed;
  } else {
    vy = speed;
  }
  const int side = std::max(3, std::min(h, w) / 4);
  const double y_start = rng.uniform(0.0, h);
  const double x_start = rng.uniform(0.0, w);
  VideoTensor v(3, t, h, w);
  for (int f = 0; f < t; ++f) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          v.at(c, f, y, x) = static_cast<float>(rng.uniform(0.0, 0.25));
        }
    const int y0 = static_cast<int>(std::llround(y_start + vy * f));
    const int x0 = static_cast<int>(std::llround(x_start + vx * f));
    for (int dy = 0; dy < side; ++dy)
      for (int dx = 0; dx < side; ++dx) {
        const int y = ((y0 + dy) % h + h) % h;
        const int x = ((x0 + dx) % w + w) % w;
        for (int c = 0; c < 3; ++c) v.at(c, f, y, x) = 0.95f;
      }
  }
  return v;
}

}  // namespace detail

inline SyntheticDataset generate_synthetic(int c_cls, int per_class, int t,
                                           int h, int w, std::uint64_t seed) {
  if (c_cls < 2 || per_class < 1 || t < 1 || h < 4 || w < 4) {
    throw std::invalid_argument("generate_synthetic: bad parameters");
  }
  SyntheticDataset ds;
  for (int c = 0; c < c_cls; ++c) {
    ds.classes.push_back("class_" + std::to_string(c));
  }
  RngStream rng(mix_seed(seed, 0x5b1u));
  SampleId next_id = 0;
  const int per_class_test = std::max(2, (per_class * 2) / 5);
  for (int c = 0; c < c_cls; ++c) {
    for (int i = 0; i < per_class; ++i) {
      ds.train.push_back(
          {detail::synth_video(c_cls, c, t, h, w, rng), c, next_id++});
    }
  }
  for (int c = 0; c < c_cls; ++c) {
    for (int i = 0; i < per_class_test; ++i) {
      ds.test.push_back(
          {detail::synth_video(c_cls, c, t, h, w, rng), c, next_id++});
    }
  }
  return ds;
}

/// Persists a dataset as raw tensor files plus train/test manifests.
inline void write_dataset_dir(const SyntheticDataset& ds,
                              const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "train");
  fs::create_directories(fs::path(dir) / "test");
  auto dump = [&](const std::vector<LabeledSample>& samples,
                  const std::string& split) {
    std::vector<ManifestEntry> entries;
    for (const auto& s : samples) {
      std::ostringstream name;
      name << split << "/sample_" << s.id << ".t4";
      const auto file = (fs::path(dir) / name.str()).string();
      save_video_tensor(file, s.video);
      entries.push_back({name.str(), ds.classes[s.label], s.video.shape().t});
    }
    save_manifest((fs::path(dir) / (split + "_manifest.tsv")).string(),
                  entries);
  };
  dump(ds.train, "train");
  dump(ds.test, "test");
}

/// Loads manifests into memory as full labeled sample lists.
inline SyntheticDataset load_dataset(const std::string& train_manifest,
                                     const std::string& test_manifest, int t,
                                     int h, int w, int channels = 3) {
  const auto manifest =
      DatasetManifest::from_files(train_manifest, test_manifest);
  SyntheticDataset ds;
  ds.classes = manifest.classes;
  SampleId next_id = 0;
  for (const auto& e : manifest.train) {
    ds.train.push_back({load_video(e.path, t, h, w, channels),
                        manifest.class_index(e.class_name), next_id++});
  }
  for (const auto& e : manifest.test) {
    ds.test.push_back({load_video(e.path, t, h, w, channels),
                       manifest.class_index(e.class_name), next_id++});
  }
  return ds;
}

}  // namespace siavc
