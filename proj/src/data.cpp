#include "adnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "adnet/rng.hpp"

namespace adnet::data {

namespace fs = std::filesystem;

Tensor resize_nearest(const Tensor& img, int target_h, int target_w) {
  if (target_h < 1 || target_w < 1) throw ParameterError("resize: target extents must be positive");
  if (img.rank() != 3) throw ContractViolation("resize: expected H x W x C tensor");
  const int H = img.dim(0), W = img.dim(1), C = img.dim(2);
  if (H == target_h && W == target_w) return img;
  Tensor out({target_h, target_w, C});
  for (int y = 0; y < target_h; ++y) {
    int sy = static_cast<int>((y + 0.5) * H / target_h);
    if (sy >= H) sy = H - 1;
    for (int x = 0; x < target_w; ++x) {
      int sx = static_cast<int>((x + 0.5) * W / target_w);
      if (sx >= W) sx = W - 1;
      for (int c = 0; c < C; ++c)
        out.data[(static_cast<std::size_t>(y) * target_w + x) * C + c] =
            img.data[(static_cast<std::size_t>(sy) * W + sx) * C + c];
    }
  }
  return out;
}

std::vector<Sample> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.count < 0 || spec.canvas < 8) throw ParameterError("synthetic: bad count or canvas");
  if (spec.axis_min_frac <= 0.0 || spec.axis_max_frac < spec.axis_min_frac ||
      spec.axis_max_frac > 0.5)
    throw ParameterError("synthetic: degenerate ellipse axis range");
  SplitMix64 rng(spec.seed ^ 0x5e5e5e5eULL);
  const int s = spec.canvas;
  std::vector<Sample> out;
  out.reserve(spec.count);
  for (int k = 0; k < spec.count; ++k) {
    const double cx = rng.uniform(0.3, 0.7) * s;
    const double cy = rng.uniform(0.3, 0.7) * s;
    const double ax = rng.uniform(spec.axis_min_frac, spec.axis_max_frac) * s;
    const double ay = rng.uniform(spec.axis_min_frac, spec.axis_max_frac) * s;
    const double theta = rng.uniform(0.0, 3.14159265358979323846);
    const double contrast = rng.uniform(spec.contrast_min, spec.contrast_max);
    const bool dark_lesion = rng.uniform() < 0.5;
    const double bg = dark_lesion ? rng.uniform(0.55, 0.85) : rng.uniform(0.15, 0.45);
    const double fg = dark_lesion ? bg - contrast : bg + contrast;
    const double ct = std::cos(theta), st = std::sin(theta);

    Sample sample;
    sample.id = "synthetic_" + std::to_string(k);
    sample.image = Tensor({s, s, 3});
    sample.mask = Tensor({s, s, 1});
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        const double dx = (x + 0.5) - cx, dy = (y + 0.5) - cy;
        const double u = (dx * ct + dy * st) / ax;
        const double v = (-dx * st + dy * ct) / ay;
        const bool inside = u * u + v * v <= 1.0;
        sample.mask.data[static_cast<std::size_t>(y) * s + x] = inside ? 1.0 : 0.0;
        const double base = inside ? fg : bg;
        for (int c = 0; c < 3; ++c) {
          double val = base + spec.noise * rng.gaussian();
          sample.image.data[(static_cast<std::size_t>(y) * s + x) * 3 + c] =
              std::clamp(val, 0.0, 1.0);
        }
      }
    if (spec.hair) {
      const int arcs = 2 + static_cast<int>(rng.below(3));
      for (int a = 0; a < arcs; ++a) {
        // thin dark quadratic arc across the canvas
        double x0 = rng.uniform(0.0, s), y0 = rng.uniform(0.0, s);
        double x1 = rng.uniform(0.0, s), y1 = rng.uniform(0.0, s);
        double xm = rng.uniform(0.0, s), ym = rng.uniform(0.0, s);
        const int steps = 4 * s;
        for (int i = 0; i <= steps; ++i) {
          const double tt = static_cast<double>(i) / steps;
          const double px = (1 - tt) * (1 - tt) * x0 + 2 * (1 - tt) * tt * xm + tt * tt * x1;
          const double py = (1 - tt) * (1 - tt) * y0 + 2 * (1 - tt) * tt * ym + tt * tt * y1;
          const int ix = static_cast<int>(px), iy = static_cast<int>(py);
          if (ix < 0 || ix >= s || iy < 0 || iy >= s) continue;
          for (int c = 0; c < 3; ++c)
            sample.image.data[(static_cast<std::size_t>(iy) * s + ix) * 3 + c] *= 0.25;
        }
      }
    }
    out.push_back(std::move(sample));
  }
  return out;
}

Tensor image_to_tensor(const io::ImageU8& img) {
  Tensor t({img.height, img.width, 3});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        t.data[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] =
            img.at(y, x, img.channels == 1 ? 0 : c) / 255.0;
  return t;
}

Tensor mask_to_tensor(const io::ImageU8& img) {
  Tensor t({img.height, img.width, 1});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      t.data[static_cast<std::size_t>(y) * img.width + x] = img.at(y, x, 0) >= 128 ? 1.0 : 0.0;
  return t;
}

io::ImageU8 tensor_to_gray_image(const Tensor& t) {
  if (t.rank() != 3 || t.dim(2) != 1)
    throw ContractViolation("tensor_to_gray_image: expected H x W x 1");
  io::ImageU8 img;
  img.height = t.dim(0);
  img.width = t.dim(1);
  img.channels = 1;
  img.pixels.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = std::clamp(t.data[i], 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

std::vector<Sample> load_dataset(const std::string& image_dir, const std::string& mask_dir,
                                 int target_size) {
  if (!fs::is_directory(image_dir)) throw DataError("dataset: image dir not found: " + image_dir);
  if (!fs::is_directory(mask_dir)) throw DataError("dataset: mask dir not found: " + mask_dir);
  std::map<std::string, fs::path> images, masks;  // map: deterministic id order
  for (const auto& e : fs::directory_iterator(image_dir))
    if (e.is_regular_file()) images[e.path().stem().string()] = e.path();
  for (const auto& e : fs::directory_iterator(mask_dir))
    if (e.is_regular_file()) masks[e.path().stem().string()] = e.path();

  std::string orphans;
  for (const auto& [stem, p] : images)
    if (!masks.count(stem)) orphans += " image:" + stem;
  for (const auto& [stem, p] : masks)
    if (!images.count(stem)) orphans += " mask:" + stem;
  if (!orphans.empty()) throw DataError("dataset: unpaired files:" + orphans);

  std::vector<Sample> out;
  out.reserve(images.size());
  for (const auto& [stem, p] : images) {
    Sample s;
    s.id = stem;
    s.image = resize_nearest(image_to_tensor(io::read_image(p.string())), target_size, target_size);
    s.mask =
        resize_nearest(mask_to_tensor(io::read_png(masks[stem].string())), target_size, target_size);
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<Tensor, Tensor> make_batch(const std::vector<Sample>& samples,
                                     const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ContractViolation("make_batch: empty index list");
  const Tensor& first = samples[indices[0]].image;
  const int H = first.dim(0), W = first.dim(1);
  const int N = static_cast<int>(indices.size());
  Tensor images({N, H, W, 3});
  Tensor maskst({N, H, W, 1});
  for (int n = 0; n < N; ++n) {
    const Sample& s = samples[indices[n]];
    if (s.image.dim(0) != H || s.image.dim(1) != W)
      throw ContractViolation("make_batch: inconsistent sample sizes");
    std::copy(s.image.data.begin(), s.image.data.end(),
              images.data.begin() + static_cast<std::size_t>(n) * s.image.size());
    std::copy(s.mask.data.begin(), s.mask.data.end(),
              maskst.data.begin() + static_cast<std::size_t>(n) * s.mask.size());
  }
  return {std::move(images), std::move(maskst)};
}

}  // namespace adnet::data
