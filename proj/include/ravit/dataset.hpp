#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "ravit/rng.hpp"
#include "ravit/tensor.hpp"

namespace ravit {

/// Per-channel affine normalization (x - mean) / std.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Normalization cifar10() { return {{0.4914, 0.4822, 0.4465}, {0.2023, 0.1994, 0.2010}}; }
  static Normalization imagenet() { return {{0.485, 0.456, 0.406}, {0.229, 0.224, 0.225}}; }
  /// Centers the synthetic generator's [0, 1] range.
  static Normalization synthetic(std::size_t channels = 3) {
    return {std::vector<double>(channels, 0.5), std::vector<double>(channels, 0.25)};
  }

  Tensor apply(const Tensor& image) const;

  friend bool operator==(const Normalization&, const Normalization&) = default;
};

/// A normalized image and its label.
struct Sample {
  Tensor image;
  std::size_t label = 0;
};

enum class Difficulty : std::uint8_t { Easy, Hard };

/// Raw images in [0, 1] with labels. Normalization is applied on access
/// (after augmentation when training), never stored.
struct Dataset {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  std::vector<Difficulty> difficulty;  // empty unless generated synthetically
  std::size_t num_classes = 10;
  Normalization normalization = Normalization::synthetic();

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  Sample sample(std::size_t i) const { return {normalization.apply(images.at(i)), labels.at(i)}; }
  /// Samples [first, first + count).
  Dataset slice(std::size_t first, std::size_t count) const;
};

// --- CIFAR-10 binary format --------------------------------------------------
//
// Each record is one label byte followed by channels*side*side pixel bytes,
// channel-major (R, G, B planes), each plane row-major. The standard files
// use side 32 and 3 channels: 3073 bytes per record.

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarChannels = 3;
inline constexpr std::size_t kCifarRecordBytes = 1 + kCifarChannels * kCifarSide * kCifarSide;

/// Throws FormatError naming the byte offset of a truncated record or bad label.
Dataset read_cifar10(std::istream& in, std::size_t limit = 0, std::size_t num_classes = 10,
                     std::size_t side = kCifarSide, std::size_t channels = kCifarChannels);
Dataset load_cifar10(const std::filesystem::path& file, std::size_t limit = 0);
/// Concatenates data_batch_1..5.bin (train = true) or test_batch.bin from a directory.
Dataset load_cifar10_split(const std::filesystem::path& directory, bool train, std::size_t limit = 0);

/// Writes the dataset as cifar-style records; pixels are quantized to round(255 * x).
void write_cifar10(std::ostream& out, const Dataset& dataset);

// --- Synthetic coarse/fine benchmark ----------------------------------------

struct SynthOptions {
  std::size_t num_classes = 10;
  std::size_t samples = 1000;
  std::size_t side = 32;
  std::size_t channels = 3;
  double easy_fraction = 0.5;
  double amplitude = 0.2;
  double noise = 0.1;
  std::uint64_t seed = 1;
};

/// Class k is identified by a per-channel sign code s in {-1, 0, +1}^C
/// (the (k+1)-th nonzero code in base-3 order), so at most 3^C - 1 classes.
///
/// Easy samples shift channel c by s_c * amplitude everywhere, a cue that
/// survives any amount of box averaging. Hard samples add s_c * amplitude *
/// (-1)^(x+y), a period-2 checkerboard aligned to even coordinates that 2x2
/// box averaging erases exactly; only full-resolution branches can see it.
/// Gaussian pixel noise is added everywhere and values are clamped to [0, 1].
/// Requires an even side.
Dataset synth_dataset(const SynthOptions& options);

std::vector<int> synth_class_code(std::size_t label, std::size_t channels);

// --- Augmentation ------------------------------------------------------------

inline constexpr std::size_t kCropPadding = 4;

/// Zero-pads by `pad`, crops the original size at (offset_y, offset_x) of the
/// padded frame and optionally mirrors horizontally. No normalization.
Tensor crop_flip(const Tensor& image, std::size_t pad, std::size_t offset_y, std::size_t offset_x, bool flip);

/// Random pad-4 crop, flip with probability 1/2, then normalization.
Tensor augment(const Tensor& image, Rng& rng, const Normalization& normalization);

}  // namespace ravit
