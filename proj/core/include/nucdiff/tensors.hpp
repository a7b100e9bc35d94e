#pragma once

// Dense containers shared by every module.
//
// Casorati convention: a video of p frames of height×width pixels is an
// n×p matrix (n = height·width), one vectorized frame per column. Frames are
// vectorized row-major, so pixel (row, col) sits at index row·width + col.
// Eigen's column-major storage makes the in-memory layout of a Casorati
// matrix identical to a (p, height, width) row-major tensor.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nucdiff {

/// One vectorized image.
class Frame {
 public:
  Frame(Eigen::VectorXd values, int height, int width);

  /// Zero frame.
  Frame(int height, int width);

  const Eigen::VectorXd& values() const noexcept { return values_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  Eigen::Index size() const noexcept { return values_.size(); }

  double at(int row, int col) const { return values_[static_cast<Eigen::Index>(row) * width_ + col]; }

  bool same_shape(const Frame& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

 private:
  Eigen::VectorXd values_;
  int height_;
  int width_;
};

/// n×p matrix of vectorized frames (pixels × time).
class CasoratiMatrix {
 public:
  CasoratiMatrix(Eigen::MatrixXd values, int frame_height, int frame_width);

  static CasoratiMatrix zeros(int frame_height, int frame_width, int frames);

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  int frame_height() const noexcept { return frame_height_; }
  int frame_width() const noexcept { return frame_width_; }
  Eigen::Index pixels() const noexcept { return values_.rows(); }
  Eigen::Index frames() const noexcept { return values_.cols(); }

  Frame frame(Eigen::Index t) const;

  bool same_shape(const CasoratiMatrix& other) const noexcept {
    return frame_height_ == other.frame_height_ && frame_width_ == other.frame_width_ &&
           frames() == other.frames();
  }

  /// Same frame geometry and frame count, new values (validated).
  CasoratiMatrix with_values(Eigen::MatrixXd values) const {
    return CasoratiMatrix(std::move(values), frame_height_, frame_width_);
  }

 private:
  Eigen::MatrixXd values_;
  int frame_height_;
  int frame_width_;
};

enum class RoiLabel { ventricle, septum, other };

std::string to_string(RoiLabel label);

/// Boolean pixel mask selecting a region of interest.
class RoiMask {
 public:
  RoiMask(std::vector<bool> mask, int height, int width, RoiLabel label);

  const std::vector<bool>& mask() const noexcept { return mask_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  RoiLabel label() const noexcept { return label_; }
  std::size_t count() const noexcept;

  bool operator[](std::size_t i) const { return mask_[i]; }

 private:
  std::vector<bool> mask_;
  int height_;
  int width_;
  RoiLabel label_;
};

/// Throws ShapeError if the matrices differ in frame geometry or count.
void require_same_shape(const CasoratiMatrix& a, const CasoratiMatrix& b, const char* what);

CasoratiMatrix stack_frames(std::span<const Frame> frames);
std::vector<Frame> unstack_frames(const CasoratiMatrix& m);

// ---------------------------------------------------------------------------
// Tensor container file ("NDT1")
//
//   "NDT1" | u8 rank | rank × u32 LE dims | prod(dims) × f32 LE payload
//
// No padding, no compression, nothing after the payload.

/// Raw n-d array of 32-bit floats in row-major order.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
};

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

Tensor read_tensor(const std::filesystem::path& path);
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);

/// (p, height, width) video; a rank-2 (height, width) tensor is one frame.
CasoratiMatrix to_casorati(const Tensor& tensor);
Tensor to_tensor(const CasoratiMatrix& m);

Frame to_frame(const Tensor& tensor);
Tensor to_tensor(const Frame& frame);

/// Non-zero entries are inside the region. Rank 2 (height, width).
RoiMask to_mask(const Tensor& tensor, RoiLabel label);
Tensor to_tensor(const RoiMask& mask);

}  // namespace nucdiff
