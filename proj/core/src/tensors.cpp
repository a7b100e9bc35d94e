#include "nucdiff/tensors.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "nucdiff/errors.hpp"

namespace nucdiff {

namespace {

void require_positive_geometry(int height, int width, const char* what) {
  if (height <= 0 || width <= 0) {
    std::ostringstream msg;
    msg << what << ": frame geometry must be positive, got " << height << "x" << width;
    throw ShapeError(msg.str());
  }
}

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) { return m.allFinite(); }

}  // namespace

Frame::Frame(Eigen::VectorXd values, int height, int width)
    : values_(std::move(values)), height_(height), width_(width) {
  require_positive_geometry(height, width, "Frame");
  if (values_.size() != static_cast<Eigen::Index>(height) * width) {
    std::ostringstream msg;
    msg << "Frame: " << values_.size() << " values do not fill " << height << "x" << width;
    throw ShapeError(msg.str());
  }
  if (!values_.allFinite()) throw ArgumentError("Frame: non-finite pixel value");
}

Frame::Frame(int height, int width)
    : Frame(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(std::max(height, 0)) * std::max(width, 0)),
            height, width) {}

CasoratiMatrix::CasoratiMatrix(Eigen::MatrixXd values, int frame_height, int frame_width)
    : values_(std::move(values)), frame_height_(frame_height), frame_width_(frame_width) {
  require_positive_geometry(frame_height, frame_width, "CasoratiMatrix");
  if (values_.rows() != static_cast<Eigen::Index>(frame_height) * frame_width) {
    std::ostringstream msg;
    msg << "CasoratiMatrix: " << values_.rows() << " rows but frames are " << frame_height << "x"
        << frame_width;
    throw ShapeError(msg.str());
  }
  if (values_.cols() < 1) throw ShapeError("CasoratiMatrix: at least one frame is required");
  if (!all_finite(values_)) throw ArgumentError("CasoratiMatrix: non-finite entry");
}

CasoratiMatrix CasoratiMatrix::zeros(int frame_height, int frame_width, int frames) {
  require_positive_geometry(frame_height, frame_width, "CasoratiMatrix::zeros");
  return CasoratiMatrix(
      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(frame_height) * frame_width, frames),
      frame_height, frame_width);
}

Frame CasoratiMatrix::frame(Eigen::Index t) const {
  if (t < 0 || t >= frames()) throw ShapeError("CasoratiMatrix::frame: index out of range");
  return Frame(values_.col(t), frame_height_, frame_width_);
}

std::string to_string(RoiLabel label) {
  switch (label) {
    case RoiLabel::ventricle: return "ventricle";
    case RoiLabel::septum: return "septum";
    case RoiLabel::other: return "other";
  }
  return "other";
}

RoiMask::RoiMask(std::vector<bool> mask, int height, int width, RoiLabel label)
    : mask_(std::move(mask)), height_(height), width_(width), label_(label) {
  require_positive_geometry(height, width, "RoiMask");
  if (mask_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw ShapeError("RoiMask: mask length does not match frame geometry");
  }
  if (count() == 0) throw ArgumentError("RoiMask: region '" + to_string(label) + "' is empty");
}

std::size_t RoiMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), true));
}

void require_same_shape(const CasoratiMatrix& a, const CasoratiMatrix& b, const char* what) {
  if (!a.same_shape(b)) {
    std::ostringstream msg;
    msg << what << ": shape mismatch (" << a.frame_height() << "x" << a.frame_width() << "x"
        << a.frames() << " vs " << b.frame_height() << "x" << b.frame_width() << "x" << b.frames()
        << ")";
    throw ShapeError(msg.str());
  }
}

CasoratiMatrix stack_frames(std::span<const Frame> frames) {
  if (frames.empty()) throw ShapeError("stack_frames: empty frame sequence");
  const Frame& first = frames.front();
  Eigen::MatrixXd values(first.size(), static_cast<Eigen::Index>(frames.size()));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (!frames[t].same_shape(first)) {
      std::ostringstream msg;
      msg << "stack_frames: frame " << t << " is " << frames[t].height() << "x" << frames[t].width()
          << ", expected " << first.height() << "x" << first.width();
      throw ShapeError(msg.str());
    }
    values.col(static_cast<Eigen::Index>(t)) = frames[t].values();
  }
  return CasoratiMatrix(std::move(values), first.height(), first.width());
}

std::vector<Frame> unstack_frames(const CasoratiMatrix& m) {
  std::vector<Frame> frames;
  frames.reserve(static_cast<std::size_t>(m.frames()));
  for (Eigen::Index t = 0; t < m.frames(); ++t) frames.push_back(m.frame(t));
  return frames;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint8_t kTensorMagic[4] = {'N', 'D', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[offset + static_cast<std::size_t>(i)];
  return v;
}

}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t count = 1;
  for (auto d : dims) count *= d;
  return count;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
  if (tensor.dims.size() > std::numeric_limits<std::uint8_t>::max()) {
    throw ArgumentError("encode_tensor: rank exceeds 255");
  }
  if (tensor.element_count() != tensor.data.size()) {
    throw ShapeError("encode_tensor: payload length does not match dims");
  }
  std::vector<std::uint8_t> out(std::begin(kTensorMagic), std::end(kTensorMagic));
  out.reserve(5 + 4 * tensor.dims.size() + 4 * tensor.data.size());
  out.push_back(static_cast<std::uint8_t>(tensor.dims.size()));
  for (auto d : tensor.dims) put_u32(out, d);
  for (float v : tensor.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 5) throw FormatError("tensor header truncated", bytes.size());
  if (!std::equal(std::begin(kTensorMagic), std::end(kTensorMagic), bytes.begin())) {
    throw FormatError("bad tensor magic (expected \"NDT1\")", 0);
  }
  Tensor tensor;
  const std::size_t rank = bytes[4];
  std::size_t offset = 5;
  if (bytes.size() < offset + 4 * rank) {
    throw FormatError("tensor dims truncated: expected " + std::to_string(rank) + " dims",
                      bytes.size());
  }
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i, offset += 4) {
    const std::uint32_t d = get_u32(bytes, offset);
    if (d != 0 && count > std::numeric_limits<std::size_t>::max() / 4 / d) {
      throw FormatError("tensor dimension overflow", offset);
    }
    count *= d;
    tensor.dims.push_back(d);
  }
  const std::size_t expected = count * 4;
  const std::size_t actual = bytes.size() - offset;
  if (actual < expected) {
    throw FormatError("tensor payload truncated: expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(actual),
                      bytes.size());
  }
  if (actual > expected) {
    throw FormatError("trailing bytes after tensor payload: expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(actual),
                      offset + expected);
  }
  tensor.data.resize(count);
  for (std::size_t i = 0; i < count; ++i, offset += 4) {
    tensor.data[i] = std::bit_cast<float>(get_u32(bytes, offset));
  }
  return tensor;
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open tensor file " + path.string(), 0);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  const auto bytes = encode_tensor(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

namespace {

int checked_int(std::uint32_t d, const char* what) {
  if (d == 0 || d > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
    throw ShapeError(std::string(what) + ": dimension " + std::to_string(d) + " out of range");
  }
  return static_cast<int>(d);
}

std::vector<float> to_floats(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  std::vector<float> out(static_cast<std::size_t>(m.size()));
  // Column-major traversal == (p, height, width) row-major.
  for (Eigen::Index j = 0, k = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i, ++k) out[static_cast<std::size_t>(k)] = static_cast<float>(m(i, j));
  }
  return out;
}

}  // namespace

CasoratiMatrix to_casorati(const Tensor& tensor) {
  int frames = 1, height = 0, width = 0;
  if (tensor.dims.size() == 3) {
    frames = checked_int(tensor.dims[0], "to_casorati");
    height = checked_int(tensor.dims[1], "to_casorati");
    width = checked_int(tensor.dims[2], "to_casorati");
  } else if (tensor.dims.size() == 2) {
    height = checked_int(tensor.dims[0], "to_casorati");
    width = checked_int(tensor.dims[1], "to_casorati");
  } else {
    throw ShapeError("to_casorati: expected a rank-2 or rank-3 tensor, got rank " +
                     std::to_string(tensor.dims.size()));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(height) * width;
  if (tensor.data.size() != static_cast<std::size_t>(n * frames)) {
    throw ShapeError("to_casorati: payload length does not match dims");
  }
  Eigen::MatrixXd values(n, frames);
  for (Eigen::Index j = 0, k = 0; j < frames; ++j) {
    for (Eigen::Index i = 0; i < n; ++i, ++k) values(i, j) = tensor.data[static_cast<std::size_t>(k)];
  }
  return CasoratiMatrix(std::move(values), height, width);
}

Tensor to_tensor(const CasoratiMatrix& m) {
  return Tensor{{static_cast<std::uint32_t>(m.frames()), static_cast<std::uint32_t>(m.frame_height()),
                 static_cast<std::uint32_t>(m.frame_width())},
                to_floats(m.values())};
}

Frame to_frame(const Tensor& tensor) {
  const auto m = to_casorati(tensor);
  if (m.frames() != 1) throw ShapeError("to_frame: tensor holds more than one frame");
  return m.frame(0);
}

Tensor to_tensor(const Frame& frame) {
  return Tensor{{static_cast<std::uint32_t>(frame.height()), static_cast<std::uint32_t>(frame.width())},
                to_floats(frame.values())};
}

RoiMask to_mask(const Tensor& tensor, RoiLabel label) {
  if (tensor.dims.size() != 2) throw ShapeError("to_mask: expected a rank-2 (height, width) tensor");
  const int height = checked_int(tensor.dims[0], "to_mask");
  const int width = checked_int(tensor.dims[1], "to_mask");
  if (tensor.data.size() != tensor.element_count()) throw ShapeError("to_mask: payload length mismatch");
  std::vector<bool> mask(tensor.data.size());
  std::transform(tensor.data.begin(), tensor.data.end(), mask.begin(), [](float v) { return v != 0.0f; });
  return RoiMask(std::move(mask), height, width, label);
}

Tensor to_tensor(const RoiMask& mask) {
  Tensor t{{static_cast<std::uint32_t>(mask.height()), static_cast<std::uint32_t>(mask.width())}, {}};
  t.data.reserve(mask.mask().size());
  for (bool b : mask.mask()) t.data.push_back(b ? 1.0f : 0.0f);
  return t;
}

}  // namespace nucdiff
