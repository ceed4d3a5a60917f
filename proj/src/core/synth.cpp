#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "error.hpp"
#include "rng.hpp"

// JSON is used for the dataset manifest only.
#include <nlohmann/json.hpp>

namespace udm {

namespace {

using json = nlohmann::json;

constexpr double kMinForeground = 0.05;
constexpr double kMaxForeground = 0.40;
constexpr int kMaxAttempts = 64;

// One blob: a star-convex region around (ci, cj) whose radius varies with
// angle through a short Fourier series. Coefficients are bounded so the
// radius stays strictly positive.
struct Blob {
  double ci = 0, cj = 0, r = 0;
  double amp[4] = {0, 0, 0, 0}, phase[4] = {0, 0, 0, 0};   // mask boundary
  double jamp[3] = {0, 0, 0}, jphase[3] = {0, 0, 0};       // image-edge jitter

  double mask_radius(double theta) const {
    double m = 1.0;
    for (int k = 0; k < 4; ++k) m += amp[k] * std::cos((k + 1) * theta + phase[k]);
    return r * m;
  }

  // Radial offset of the image's intensity edge relative to the mask edge,
  // in pixels, scaled by the configured noise amplitude.
  double jitter(double theta) const {
    double j = 0.0;
    for (int k = 0; k < 3; ++k) j += jamp[k] * std::cos((k + 1) * theta + jphase[k]);
    return j;
  }
};

struct Scene {
  std::vector<Blob> blobs;
  double fg_val = 0, bg_val = 0;
  double tex_fi = 0, tex_fj = 0, tex_gi = 0, tex_gj = 0, tex_p1 = 0, tex_p2 = 0;
};

Scene sample_scene(Rng& rng, const SynthConfig& cfg) {
  Scene s;
  const double S = static_cast<double>(cfg.size);
  const int nb = static_cast<int>(rng.uniform_int(cfg.blob_count_min, cfg.blob_count_max));
  const double scale = 1.0 / std::sqrt(static_cast<double>(nb));
  for (int b = 0; b < nb; ++b) {
    Blob blob;
    blob.ci = rng.uniform(0.22, 0.78) * S;
    blob.cj = rng.uniform(0.22, 0.78) * S;
    blob.r = rng.uniform(0.12, 0.26) * S * scale;
    for (int k = 0; k < 4; ++k) {
      blob.amp[k] = rng.uniform(-1.0, 1.0) * 0.25 / (k + 1);
      blob.phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    for (int k = 0; k < 3; ++k) {
      blob.jamp[k] = rng.uniform(-1.0, 1.0) / (2.0 * (k + 1));
      blob.jphase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    s.blobs.push_back(blob);
  }
  s.fg_val = rng.uniform(0.60, 0.75);
  s.bg_val = rng.uniform(0.20, 0.35);
  s.tex_fi = rng.uniform(1.0, 4.0);
  s.tex_fj = rng.uniform(1.0, 4.0);
  s.tex_gi = rng.uniform(1.0, 4.0);
  s.tex_gj = rng.uniform(1.0, 4.0);
  s.tex_p1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  s.tex_p2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return s;
}

bool inside(const Scene& s, double i, double j, double extra_jitter) {
  for (const Blob& b : s.blobs) {
    const double di = i - b.ci, dj = j - b.cj;
    const double theta = std::atan2(dj, di);
    const double edge = b.mask_radius(theta) + extra_jitter * b.jitter(theta);
    if (di * di + dj * dj <= edge * edge) return true;
  }
  return false;
}

uint8_t quantize(double v) {
  const double q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<uint8_t>(q);
}

Sample render(const Scene& s, const SynthConfig& cfg) {
  const int64_t S = cfg.size;
  Sample smp;
  smp.image.h = smp.image.w = S;
  smp.image.pix.resize(static_cast<size_t>(S * S));
  smp.mask.h = smp.mask.w = S;
  smp.mask.ids.resize(static_cast<size_t>(S * S));
  const double two_pi = 2.0 * std::numbers::pi;
  for (int64_t i = 0; i < S; ++i) {
    for (int64_t j = 0; j < S; ++j) {
      const double ci = static_cast<double>(i) + 0.5;
      const double cj = static_cast<double>(j) + 0.5;
      const bool in_mask = inside(s, ci, cj, 0.0);
      const bool in_image = inside(s, ci, cj, cfg.boundary_noise);
      const double tex =
          cfg.texture_contrast * 0.5 *
          (std::sin(two_pi * (s.tex_fi * ci + s.tex_fj * cj) / static_cast<double>(S) + s.tex_p1) +
           std::sin(two_pi * (s.tex_gi * ci + s.tex_gj * cj) / static_cast<double>(S) + s.tex_p2));
      smp.mask.ids[static_cast<size_t>(i * S + j)] = in_mask ? 1 : 0;
      smp.image.pix[static_cast<size_t>(i * S + j)] =
          quantize((in_image ? s.fg_val : s.bg_val) + tex);
    }
  }
  return smp;
}

double foreground_fraction(const LabelMask& m) {
  int64_t fg = 0;
  for (uint8_t v : m.ids) fg += v != 0;
  return static_cast<double>(fg) / static_cast<double>(m.numel());
}

std::string index_name(int64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld", static_cast<long long>(i));
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (count < 1) throw ConfigError("synth: count must be at least 1");
  if (size < 8 || size > 4096) throw ConfigError("synth: size must be in [8, 4096]");
  if (blob_count_min < 1 || blob_count_max < blob_count_min) {
    throw ConfigError("synth: blob count range invalid");
  }
  if (!(boundary_noise >= 0.0)) throw ConfigError("synth: boundary_noise must be >= 0");
  if (!(texture_contrast >= 0.0 && texture_contrast <= 1.0)) {
    throw ConfigError("synth: texture_contrast must be in [0, 1]");
  }
  if (!(train_frac >= 0.0) || !(val_frac >= 0.0) || train_frac + val_frac > 1.0) {
    throw ConfigError("synth: split fractions must be nonnegative with train+val <= 1");
  }
}

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.seed = cfg.seed;
  ds.size = cfg.size;
  ds.num_classes = 2;
  ds.samples.reserve(static_cast<size_t>(cfg.count));

  for (int64_t idx = 0; idx < cfg.count; ++idx) {
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      Rng rng = Rng::derive(cfg.seed, 0x53414D50ull + static_cast<uint64_t>(idx) * 1009ull +
                                          static_cast<uint64_t>(attempt));
      const Scene scene = sample_scene(rng, cfg);
      Sample smp = render(scene, cfg);
      const double frac = foreground_fraction(smp.mask);
      if (frac >= kMinForeground && frac <= kMaxForeground) {
        ds.samples.push_back(std::move(smp));
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw NumericError("synth: no admissible sample after " + std::to_string(kMaxAttempts) +
                         " attempts at index " + std::to_string(idx));
    }
  }

  // Deterministic shuffled split, disjoint and exhaustive.
  std::vector<int64_t> order(static_cast<size_t>(cfg.count));
  for (int64_t i = 0; i < cfg.count; ++i) order[static_cast<size_t>(i)] = i;
  Rng srng = Rng::derive(cfg.seed, 0x53504C49ull);
  for (int64_t i = cfg.count - 1; i > 0; --i) {
    const int64_t j = srng.uniform_int(0, i);
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  const int64_t n_train = std::llround(cfg.train_frac * static_cast<double>(cfg.count));
  const int64_t n_val =
      std::min(cfg.count - n_train,
               static_cast<int64_t>(std::llround(cfg.val_frac * static_cast<double>(cfg.count))));
  ds.train_idx.assign(order.begin(), order.begin() + n_train);
  ds.val_idx.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  ds.test_idx.assign(order.begin() + n_train + n_val, order.end());
  std::sort(ds.train_idx.begin(), ds.train_idx.end());
  std::sort(ds.val_idx.begin(), ds.val_idx.end());
  std::sort(ds.test_idx.begin(), ds.test_idx.end());
  return ds;
}

uint8_t mask_id_to_gray(int id, int num_classes) {
  if (num_classes < 2 || num_classes > 256) throw ConfigError("mask coding: classes must be in [2, 256]");
  if (id < 0 || id >= num_classes) throw DataError("mask coding: id " + std::to_string(id) + " out of range");
  return static_cast<uint8_t>(
      std::lround(static_cast<double>(id) * 255.0 / static_cast<double>(num_classes - 1)));
}

int gray_to_mask_id(uint8_t v, int num_classes) {
  if (num_classes < 2 || num_classes > 256) throw ConfigError("mask coding: classes must be in [2, 256]");
  const int id = static_cast<int>(
      std::lround(static_cast<double>(v) * static_cast<double>(num_classes - 1) / 255.0));
  return id;
}

void write_dataset(const std::string& dir, const Dataset& ds) {
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const std::string name = index_name(static_cast<int64_t>(i));
    write_pgm(dir + "/images/" + name + ".pgm", ds.samples[i].image);
    GrayImage m;
    m.h = ds.samples[i].mask.h;
    m.w = ds.samples[i].mask.w;
    m.pix.resize(ds.samples[i].mask.ids.size());
    for (size_t p = 0; p < m.pix.size(); ++p) {
      m.pix[p] = mask_id_to_gray(ds.samples[i].mask.ids[p], ds.num_classes);
    }
    write_pgm(dir + "/masks/" + name + ".pgm", m);
  }
  json manifest;
  manifest["seed"] = ds.seed;
  manifest["size"] = ds.size;
  manifest["count"] = ds.samples.size();
  manifest["num_classes"] = ds.num_classes;
  manifest["splits"]["train"] = ds.train_idx;
  manifest["splits"]["val"] = ds.val_idx;
  manifest["splits"]["test"] = ds.test_idx;
  const std::string text = manifest.dump(2) + "\n";
  write_file_bytes(dir + "/manifest.json", std::vector<uint8_t>(text.begin(), text.end()));
}

Dataset read_dataset(const std::string& dir) {
  const std::string mpath = dir + "/manifest.json";
  const std::vector<uint8_t> mbytes = read_file_bytes(mpath);
  json manifest;
  try {
    manifest = json::parse(mbytes.begin(), mbytes.end());
  } catch (const json::exception& e) {
    throw IoError(mpath + ": " + e.what());
  }
  Dataset ds;
  try {
    ds.seed = manifest.at("seed").get<uint64_t>();
    ds.size = manifest.at("size").get<int64_t>();
    ds.num_classes = manifest.at("num_classes").get<int>();
    ds.train_idx = manifest.at("splits").at("train").get<std::vector<int64_t>>();
    ds.val_idx = manifest.at("splits").at("val").get<std::vector<int64_t>>();
    ds.test_idx = manifest.at("splits").at("test").get<std::vector<int64_t>>();
    const int64_t count = manifest.at("count").get<int64_t>();
    if (count < 0) throw IoError(mpath + ": negative count");
    if (ds.num_classes < 2 || ds.num_classes > 256) {
      throw IoError(mpath + ": num_classes out of range");
    }
    for (int64_t i = 0; i < count; ++i) {
      const std::string name = index_name(i);
      Sample smp;
      smp.image = read_pgm(dir + "/images/" + name + ".pgm");
      const GrayImage m = read_pgm(dir + "/masks/" + name + ".pgm");
      smp.mask.h = m.h;
      smp.mask.w = m.w;
      smp.mask.ids.resize(m.pix.size());
      for (size_t p = 0; p < m.pix.size(); ++p) {
        smp.mask.ids[p] = static_cast<uint8_t>(gray_to_mask_id(m.pix[p], ds.num_classes));
      }
      if (smp.image.h != smp.mask.h || smp.image.w != smp.mask.w) {
        throw IoError(dir + ": image/mask size mismatch for sample " + name);
      }
      ds.samples.push_back(std::move(smp));
    }
  } catch (const json::exception& e) {
    throw IoError(mpath + ": " + e.what());
  }
  const int64_t n = static_cast<int64_t>(ds.samples.size());
  std::vector<bool> seen(static_cast<size_t>(n), false);
  for (const auto* split : {&ds.train_idx, &ds.val_idx, &ds.test_idx}) {
    for (int64_t idx : *split) {
      if (idx < 0 || idx >= n) throw IoError(mpath + ": split index out of range");
      if (seen[static_cast<size_t>(idx)]) throw IoError(mpath + ": split index repeated");
      seen[static_cast<size_t>(idx)] = true;
    }
  }
  return ds;
}

Tensor image_to_tensor(const GrayImage& img) {
  std::vector<double> d(img.pix.size());
  for (size_t i = 0; i < d.size(); ++i) d[i] = static_cast<double>(img.pix[i]) / 255.0;
  return Tensor::from_data({1, img.h, img.w}, std::move(d));
}

}  // namespace udm
