#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adnet/image_io.hpp"
#include "adnet/tensor.hpp"

namespace adnet::data {

struct Sample {
  Tensor image;    // H x W x 3, values in [0,1]
  Tensor mask;     // H x W x 1, values in {0,1}
  std::string id;  // source filename stem
};

// Nearest-neighbor index map src_i = floor((i + 0.5) * src / dst).
// Binary inputs stay exactly binary.
Tensor resize_nearest(const Tensor& img, int target_h, int target_w);

struct SyntheticSpec {
  int count = 8;
  int canvas = 64;
  double axis_min_frac = 0.15;  // ellipse semi-axes as a fraction of canvas
  double axis_max_frac = 0.35;
  double contrast_min = 0.4;  // |lesion - background| intensity gap
  double contrast_max = 0.7;
  double noise = 0.02;  // gaussian amplitude
  bool hair = false;    // random thin dark arcs over the image
  std::uint64_t seed = 0;
};

// Ellipse "lesions" on a plain background; the mask is exactly the rasterized
// ellipse interior. Deterministic per seed (splitmix64 stream).
std::vector<Sample> generate_synthetic(const SyntheticSpec& spec);

// Paired 8-bit images (RGB) and masks (gray, binarized at 128) by filename
// stem; both resized to target_size, result sorted by id.
std::vector<Sample> load_dataset(const std::string& image_dir, const std::string& mask_dir,
                                 int target_size);

// Conversions used by the CLI.
Tensor image_to_tensor(const io::ImageU8& img);            // H x W x 3 in [0,1]
io::ImageU8 tensor_to_gray_image(const Tensor& t);         // H x W x 1, clamped to [0,1]
Tensor mask_to_tensor(const io::ImageU8& img);             // binarize gray at 128

// Batch assembly: stacks samples into N x H x W x 3 and N x H x W x 1.
std::pair<Tensor, Tensor> make_batch(const std::vector<Sample>& samples,
                                     const std::vector<std::size_t>& indices);

}  // namespace adnet::data
