#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data_io.hpp"
#include "tensor.hpp"

namespace udm {

// Configuration for the synthetic blob-segmentation generator. The same
// config always produces byte-identical datasets.
struct SynthConfig {
  uint64_t seed = 1;
  int64_t count = 64;
  int64_t size = 64;           // square images
  int blob_count_min = 1;
  int blob_count_max = 3;
  double boundary_noise = 1.5;     // image-edge jitter amplitude, in pixels
  double texture_contrast = 0.15;  // amplitude of the smooth intensity texture
  double train_frac = 0.70;
  double val_frac = 0.15;          // test split takes the remainder

  void validate() const;
};

struct Sample {
  GrayImage image;
  LabelMask mask;
};

struct Dataset {
  uint64_t seed = 0;
  int64_t size = 0;
  int num_classes = 2;
  std::vector<Sample> samples;
  std::vector<int64_t> train_idx;
  std::vector<int64_t> val_idx;
  std::vector<int64_t> test_idx;
};

// Generates `count` image/mask pairs of smoothed random blobs. The mask is
// the crisp blob interior with foreground fraction in [5%, 40%]; the image
// paints the same blobs with their boundary radially jittered by up to
// boundary_noise pixels, plus a smooth background texture. boundary_noise = 0
// and texture_contrast = 0 make the image a two-level function whose step
// coincides exactly with the mask boundary.
Dataset generate_synthetic(const SynthConfig& cfg);

// Dataset directory layout: images/NNNN.pgm, masks/NNNN.pgm, manifest.json
// (seed, size, num_classes, split index lists). Masks are stored with class
// ids scaled onto [0,255] so they are viewable; round-trip is exact.
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset read_dataset(const std::string& dir);

// [1,H,W] tensor with intensities mapped to [0,1].
Tensor image_to_tensor(const GrayImage& img);

uint8_t mask_id_to_gray(int id, int num_classes);
int gray_to_mask_id(uint8_t v, int num_classes);

}  // namespace udm
