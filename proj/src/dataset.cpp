#include "ravit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace ravit {

Tensor Normalization::apply(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != mean.size() || mean.size() != stddev.size()) {
    throw DimensionError("normalization: channel count mismatch for image " + shape_string(image.shape()));
  }
  Tensor out = image;
  const std::size_t plane = image.dim(1) * image.dim(2);
  auto data = out.data();
  for (std::size_t c = 0; c < mean.size(); ++c) {
    const double inv = 1.0 / stddev[c];
    for (std::size_t i = 0; i < plane; ++i) data[c * plane + i] = (data[c * plane + i] - mean[c]) * inv;
  }
  return out;
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
  if (first + count > size()) throw IndexError("dataset slice out of range");
  Dataset out;
  out.num_classes = num_classes;
  out.normalization = normalization;
  const auto b = static_cast<std::ptrdiff_t>(first), e = static_cast<std::ptrdiff_t>(first + count);
  out.images.assign(images.begin() + b, images.begin() + e);
  out.labels.assign(labels.begin() + b, labels.begin() + e);
  if (!difficulty.empty()) out.difficulty.assign(difficulty.begin() + b, difficulty.begin() + e);
  return out;
}

Dataset read_cifar10(std::istream& in, std::size_t limit, std::size_t num_classes, std::size_t side,
                     std::size_t channels) {
  Dataset data;
  data.num_classes = num_classes;
  data.normalization = Normalization::cifar10();
  if (channels != 3) data.normalization = Normalization::synthetic(channels);
  const std::size_t pixels = channels * side * side;
  std::vector<unsigned char> record(1 + pixels);
  std::size_t offset = 0;
  while (limit == 0 || data.size() < limit) {
    in.read(reinterpret_cast<char*>(record.data()), static_cast<std::streamsize>(record.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) break;
    if (got != record.size()) {
      throw FormatError("cifar10: truncated record at byte offset " + std::to_string(offset) + " (" +
                        std::to_string(got) + " of " + std::to_string(record.size()) + " bytes)");
    }
    if (record[0] >= num_classes) {
      throw FormatError("cifar10: label " + std::to_string(record[0]) + " out of range at byte offset " +
                        std::to_string(offset));
    }
    Tensor image({channels, side, side});
    auto dst = image.data();
    for (std::size_t i = 0; i < pixels; ++i) dst[i] = static_cast<double>(record[1 + i]) / 255.0;
    data.images.push_back(std::move(image));
    data.labels.push_back(record[0]);
    offset += record.size();
  }
  return data;
}

Dataset load_cifar10(const std::filesystem::path& file, std::size_t limit) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cifar10: cannot open " + file.string());
  return read_cifar10(in, limit);
}

Dataset load_cifar10_split(const std::filesystem::path& directory, bool train, std::size_t limit) {
  std::vector<std::filesystem::path> files;
  if (train) {
    for (int i = 1; i <= 5; ++i) files.push_back(directory / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(directory / "test_batch.bin");
  }
  Dataset all;
  all.normalization = Normalization::cifar10();
  for (const auto& f : files) {
    if (!std::filesystem::exists(f)) continue;
    Dataset part = load_cifar10(f, limit == 0 ? 0 : limit - all.size());
    for (std::size_t i = 0; i < part.size(); ++i) {
      all.images.push_back(std::move(part.images[i]));
      all.labels.push_back(part.labels[i]);
    }
    if (limit != 0 && all.size() >= limit) break;
  }
  if (all.empty()) throw FormatError("cifar10: no records found under " + directory.string());
  return all;
}

void write_cifar10(std::ostream& out, const Dataset& dataset) {
  for (std::size_t n = 0; n < dataset.size(); ++n) {
    if (dataset.labels[n] > 255) throw ContractError("cifar10: labels above 255 cannot be encoded");
    out.put(static_cast<char>(dataset.labels[n]));
    for (double v : dataset.images[n].data()) {
      const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
      out.put(static_cast<char>(static_cast<unsigned char>(q)));
    }
  }
  if (!out) throw FormatError("cifar10: write failed");
}

std::vector<int> synth_class_code(std::size_t label, std::size_t channels) {
  std::size_t j = label + 1;
  std::vector<int> code(channels);
  for (std::size_t c = 0; c < channels; ++c, j /= 3) code[c] = j % 3 == 0 ? 0 : (j % 3 == 1 ? 1 : -1);
  if (j != 0) throw ContractError("synth: class " + std::to_string(label) + " has no code with " +
                                  std::to_string(channels) + " channels");
  return code;
}

Dataset synth_dataset(const SynthOptions& o) {
  if (o.side == 0 || o.side % 2 != 0) throw DimensionError("synth: side " + std::to_string(o.side) + " must be even");
  if (o.num_classes == 0) throw ContractError("synth: at least one class is required");
  if (!(o.easy_fraction >= 0.0 && o.easy_fraction <= 1.0)) throw ContractError("synth: easy_fraction not in [0,1]");
  std::vector<std::vector<int>> codes;
  for (std::size_t k = 0; k < o.num_classes; ++k) codes.push_back(synth_class_code(k, o.channels));

  Rng rng(o.seed);
  Dataset data;
  data.num_classes = o.num_classes;
  data.normalization = Normalization::synthetic(o.channels);
  for (std::size_t n = 0; n < o.samples; ++n) {
    const auto label = static_cast<std::size_t>(rng.below(o.num_classes));
    const Difficulty tier = rng.bernoulli(o.easy_fraction) ? Difficulty::Easy : Difficulty::Hard;
    Tensor image({o.channels, o.side, o.side});
    auto px = image.data();
    for (std::size_t c = 0; c < o.channels; ++c) {
      const double shift = codes[label][c] * o.amplitude;
      for (std::size_t y = 0; y < o.side; ++y) {
        for (std::size_t x = 0; x < o.side; ++x) {
          double v = 0.5 + rng.normal(0.0, o.noise);
          if (tier == Difficulty::Easy) {
            v += shift;
          } else {
            v += (x + y) % 2 == 0 ? shift : -shift;
          }
          px[(c * o.side + y) * o.side + x] = std::clamp(v, 0.0, 1.0);
        }
      }
    }
    data.images.push_back(std::move(image));
    data.labels.push_back(label);
    data.difficulty.push_back(tier);
  }
  return data;
}

Tensor crop_flip(const Tensor& image, std::size_t pad, std::size_t offset_y, std::size_t offset_x, bool flip) {
  if (image.rank() != 3) throw DimensionError("crop_flip: expected [C,H,W]");
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (offset_y > 2 * pad || offset_x > 2 * pad) throw DimensionError("crop_flip: offset outside padded frame");
  Tensor out({channels, h, w});
  auto src = image.data();
  auto dst = out.data();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        // Position in the padded frame, then back in source coordinates.
        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + offset_y) - static_cast<std::ptrdiff_t>(pad);
        const std::size_t cx = flip ? w - 1 - x : x;
        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(cx + offset_x) - static_cast<std::ptrdiff_t>(pad);
        double v = 0.0;
        if (sy >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx >= 0 && sx < static_cast<std::ptrdiff_t>(w)) {
          v = src[(c * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
        }
        dst[(c * h + y) * w + x] = v;
      }
    }
  }
  return out;
}

Tensor augment(const Tensor& image, Rng& rng, const Normalization& normalization) {
  const auto oy = static_cast<std::size_t>(rng.below(2 * kCropPadding + 1));
  const auto ox = static_cast<std::size_t>(rng.below(2 * kCropPadding + 1));
  const bool flip = rng.bernoulli(0.5);
  return normalization.apply(crop_flip(image, kCropPadding, oy, ox, flip));
}

}  // namespace ravit
