#include "nucdiff/score_models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "nucdiff/errors.hpp"

namespace nucdiff {

namespace {

void require_noisy_step(int tau, const NoiseSchedule& sched, const char* what) {
  sched.require_step(tau, what);
  if (tau < 1) throw ArgumentError(std::string(what) + ": tau must be at least 1");
}

void require_length(const Frame& x, Eigen::Index n, const char* what) {
  if (x.size() != n) {
    std::ostringstream msg;
    msg << what << ": frame has " << x.size() << " pixels, model expects " << n;
    throw ShapeError(msg.str());
  }
}

}  // namespace

// ---------------------------------------------------------------------------

GaussianPrior::GaussianPrior(Frame mean, double stddev) : mean_(std::move(mean)), stddev_(stddev) {
  if (!(stddev > 0.0) || !std::isfinite(stddev)) throw ArgumentError("GaussianPrior: stddev must be positive");
}

Frame GaussianPrior::predict_noise(const Frame& x_tau, int tau, const NoiseSchedule& sched) const {
  require_noisy_step(tau, sched, "GaussianPrior::predict_noise");
  require_length(x_tau, mean_.size(), "GaussianPrior::predict_noise");
  const double a = sched.alpha_at(tau);
  const double s = sched.sigma_at(tau);
  const double var = a * a * stddev_ * stddev_ + s * s;
  const Eigen::VectorXd d = x_tau.values() - a * mean_.values();
  return Frame(s * ((1.0 / var) * d), x_tau.height(), x_tau.width());
}

Frame GaussianPrior::noise_vjp(const Frame& x_tau, int tau, const NoiseSchedule& sched, const Frame& v) const {
  require_noisy_step(tau, sched, "GaussianPrior::noise_vjp");
  require_length(x_tau, mean_.size(), "GaussianPrior::noise_vjp");
  require_length(v, mean_.size(), "GaussianPrior::noise_vjp");
  const double a = sched.alpha_at(tau);
  const double s = sched.sigma_at(tau);
  const double var = a * a * stddev_ * stddev_ + s * s;
  return Frame((s / var) * v.values(), x_tau.height(), x_tau.width());
}

Frame GaussianPrior::posterior_mean(const Frame& x_tau, int tau, const NoiseSchedule& sched) const {
  require_noisy_step(tau, sched, "GaussianPrior::posterior_mean");
  require_length(x_tau, mean_.size(), "GaussianPrior::posterior_mean");
  const double a = sched.alpha_at(tau);
  const double s = sched.sigma_at(tau);
  const double s2 = stddev_ * stddev_;
  return Frame((s2 * a * x_tau.values() + s * s * mean_.values()) / (s2 * a * a + s * s), x_tau.height(),
               x_tau.width());
}

// ---------------------------------------------------------------------------

GmmPrior::GmmPrior(std::vector<GmmComponent> components) : components_(std::move(components)) {
  if (components_.empty()) throw ArgumentError("GmmPrior: at least one component is required");
  double total = 0.0;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    if (!(c.weight > 0.0)) throw ArgumentError("GmmPrior: component " + std::to_string(k) + " weight must be positive");
    if (!(c.stddev > 0.0)) throw ArgumentError("GmmPrior: component " + std::to_string(k) + " stddev must be positive");
    if (!c.mean.same_shape(components_.front().mean)) {
      throw ShapeError("GmmPrior: component " + std::to_string(k) + " mean has a different shape");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("GmmPrior: weights must sum to 1");
}

namespace {

struct MixtureState {
  Eigen::VectorXd log_weights;  // unnormalized log responsibilities
  Eigen::VectorXd resp;
  std::vector<Eigen::VectorXd> diffs;  // x − α m_k
  Eigen::VectorXd var;
  double log_norm = 0.0;  // log Σ_k exp(log_weights_k)
};

MixtureState mixture_state(const std::vector<GmmComponent>& comps, const Frame& x, int tau,
                           const NoiseSchedule& sched) {
  const double a = sched.alpha_at(tau);
  const double s = sched.sigma_at(tau);
  const auto K = static_cast<Eigen::Index>(comps.size());
  const double n = static_cast<double>(x.size());

  MixtureState st;
  st.log_weights.resize(K);
  st.var.resize(K);
  st.diffs.reserve(comps.size());
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& c = comps[static_cast<std::size_t>(k)];
    const double var = a * a * c.stddev * c.stddev + s * s;
    st.diffs.push_back(x.values() - a * c.mean.values());
    st.var[k] = var;
    st.log_weights[k] = std::log(c.weight) - 0.5 * n * std::log(var) -
                        0.5 * st.diffs.back().squaredNorm() / var;
  }
  const double peak = st.log_weights.maxCoeff();
  if (!std::isfinite(peak)) throw NumericalError("GmmPrior: all component responsibilities underflow");
  st.resp = (st.log_weights.array() - peak).exp().matrix();
  const double total = st.resp.sum();
  st.resp /= total;
  st.log_norm = peak + std::log(total);
  return st;
}

}  // namespace

Eigen::VectorXd GmmPrior::responsibilities(const Frame& x_tau, int tau, const NoiseSchedule& sched) const {
  require_noisy_step(tau, sched, "GmmPrior::responsibilities");
  require_length(x_tau, input_size(), "GmmPrior::responsibilities");
  return mixture_state(components_, x_tau, tau, sched).resp;
}

double GmmPrior::log_marginal(const Frame& x_tau, int tau, const NoiseSchedule& sched) const {
  sched.require_step(tau, "GmmPrior::log_marginal");
  require_length(x_tau, input_size(), "GmmPrior::log_marginal");
  const auto st = mixture_state(components_, x_tau, tau, sched);
  return st.log_norm - 0.5 * static_cast<double>(x_tau.size()) * std::log(2.0 * std::numbers::pi);
}

Frame GmmPrior::predict_noise(const Frame& x_tau, int tau, const NoiseSchedule& sched) const {
  require_noisy_step(tau, sched, "GmmPrior::predict_noise");
  require_length(x_tau, input_size(), "GmmPrior::predict_noise");
  const auto st = mixture_state(components_, x_tau, tau, sched);
  // −score = Σ_k r_k (x − α m_k)/v_k
  Eigen::VectorXd acc = (st.resp[0] / st.var[0]) * st.diffs[0];
  for (std::size_t k = 1; k < components_.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    acc += (st.resp[i] / st.var[i]) * st.diffs[k];
  }
  return Frame(sched.sigma_at(tau) * acc, x_tau.height(), x_tau.width());
}

Frame GmmPrior::noise_vjp(const Frame& x_tau, int tau, const NoiseSchedule& sched, const Frame& v) const {
  require_noisy_step(tau, sched, "GmmPrior::noise_vjp");
  require_length(x_tau, input_size(), "GmmPrior::noise_vjp");
  require_length(v, input_size(), "GmmPrior::noise_vjp");
  const auto st = mixture_state(components_, x_tau, tau, sched);
  const Eigen::VectorXd& u = v.values();

  // Hessian of log p: Σ r_k(−I/v_k + g_k g_kᵀ) − ḡḡᵀ with g_k = −(x − α m_k)/v_k.
  Eigen::VectorXd hu = Eigen::VectorXd::Zero(u.size());
  Eigen::VectorXd gbar = Eigen::VectorXd::Zero(u.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    const Eigen::VectorXd g = -st.diffs[k] / st.var[i];
    hu += st.resp[i] * (-u / st.var[i] + g * g.dot(u));
    gbar += st.resp[i] * g;
  }
  hu -= gbar * gbar.dot(u);
  return Frame(-sched.sigma_at(tau) * hu, x_tau.height(), x_tau.width());
}

// ---------------------------------------------------------------------------

namespace {

double activate(double z, Activation act) {
  if (act == Activation::relu) return z > 0.0 ? z : 0.0;
  return z / (1.0 + std::exp(-z));
}

double activate_grad(double z, Activation act) {
  if (act == Activation::relu) return z > 0.0 ? 1.0 : 0.0;
  const double sig = 1.0 / (1.0 + std::exp(-z));
  return sig * (1.0 + z * (1.0 - sig));
}

std::string layer_context(std::size_t i) { return "layer " + std::to_string(i); }

}  // namespace

MlpDenoiser::MlpDenoiser(std::vector<DenseLayer> layers, Activation activation)
    : layers_(std::move(layers)), activation_(activation) {
  if (layers_.empty()) throw ShapeError("MlpDenoiser: at least one layer is required");
  if (activation_ != Activation::relu && activation_ != Activation::silu) {
    throw ArgumentError("MlpDenoiser: unknown activation");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = layers_[i];
    if (layer.weights.rows() < 1 || layer.weights.cols() < 1) {
      throw ShapeError("MlpDenoiser: " + layer_context(i) + " has an empty weight matrix");
    }
    if (layer.bias.size() != layer.weights.rows()) {
      throw ShapeError("MlpDenoiser: " + layer_context(i) + " bias length differs from out_dim");
    }
    if (i > 0 && layer.weights.cols() != layers_[i - 1].weights.rows()) {
      std::ostringstream msg;
      msg << "MlpDenoiser: " << layer_context(i) << " in_dim " << layer.weights.cols()
          << " does not match previous out_dim " << layers_[i - 1].weights.rows();
      throw ShapeError(msg.str());
    }
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
      throw ArgumentError("MlpDenoiser: " + layer_context(i) + " has a non-finite weight");
    }
  }
  if (layers_.front().weights.cols() < 2) throw ShapeError("MlpDenoiser: layer 0 needs at least one pixel input");
  if (layers_.back().weights.rows() != layers_.front().weights.cols() - 1) {
    std::ostringstream msg;
    msg << "MlpDenoiser: " << layer_context(layers_.size() - 1) << " out_dim " << layers_.back().weights.rows()
        << " must equal pixel count " << layers_.front().weights.cols() - 1;
    throw ShapeError(msg.str());
  }
}

std::vector<int> MlpDenoiser::layer_dims() const {
  std::vector<int> dims{static_cast<int>(layers_.front().weights.cols())};
  for (const auto& layer : layers_) dims.push_back(static_cast<int>(layer.weights.rows()));
  return dims;
}

Eigen::VectorXd MlpDenoiser::forward(const Eigen::VectorXd& input) const {
  if (input.size() != layers_.front().weights.cols()) throw ShapeError("MlpDenoiser::forward: input length mismatch");
  Eigen::VectorXd h = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::VectorXd z = layers_[i].weights * h + layers_[i].bias;
    if (i + 1 < layers_.size()) z = z.unaryExpr([this](double v) { return activate(v, activation_); });
    h = std::move(z);
  }
  return h;
}

namespace {

Eigen::VectorXd with_time_channel(const Frame& x, int tau, const NoiseSchedule& sched) {
  Eigen::VectorXd input(x.size() + 1);
  input.head(x.size()) = x.values();
  input[x.size()] = static_cast<double>(tau) / sched.total_steps;
  return input;
}

}  // namespace

Frame MlpDenoiser::predict_noise(const Frame& x_tau, int tau, const NoiseSchedule& sched) const {
  sched.require_step(tau, "MlpDenoiser::predict_noise");
  require_length(x_tau, input_size(), "MlpDenoiser::predict_noise");
  return Frame(forward(with_time_channel(x_tau, tau, sched)), x_tau.height(), x_tau.width());
}

Frame MlpDenoiser::noise_vjp(const Frame& x_tau, int tau, const NoiseSchedule& sched, const Frame& v) const {
  sched.require_step(tau, "MlpDenoiser::noise_vjp");
  require_length(x_tau, input_size(), "MlpDenoiser::noise_vjp");
  require_length(v, input_size(), "MlpDenoiser::noise_vjp");

  // Forward pass keeping pre-activations.
  std::vector<Eigen::VectorXd> pre;
  pre.reserve(layers_.size());
  Eigen::VectorXd h = with_time_channel(x_tau, tau, sched);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    pre.push_back(layers_[i].weights * h + layers_[i].bias);
    if (i + 1 < layers_.size()) h = pre.back().unaryExpr([this](double z) { return activate(z, activation_); });
  }

  // Reverse pass.
  Eigen::VectorXd grad = v.values();
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (i + 1 < layers_.size()) {
      grad = grad.cwiseProduct(pre[i].unaryExpr([this](double z) { return activate_grad(z, activation_); }));
    }
    grad = layers_[i].weights.transpose() * grad;
  }
  return Frame(grad.head(x_tau.size()), x_tau.height(), x_tau.width());
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint8_t kWeightMagic[4] = {'N', 'D', 'W', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const noexcept { return offset_; }
  std::size_t remaining() const noexcept { return bytes_.size() - offset_; }

  void require(std::size_t n, const std::string& what) const {
    if (remaining() < n) {
      throw FormatError(what + " truncated: need " + std::to_string(n) + " bytes, have " +
                            std::to_string(remaining()),
                        bytes_.size());
    }
  }

  std::uint8_t u8(const std::string& what) {
    require(1, what);
    return bytes_[offset_++];
  }

  std::uint32_t u32(const std::string& what) {
    require(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[offset_ + static_cast<std::size_t>(i)];
    offset_ += 4;
    return v;
  }

  float f32(const std::string& what) { return std::bit_cast<float>(u32(what)); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_weights(const MlpDenoiser& model) {
  std::vector<std::uint8_t> out(std::begin(kWeightMagic), std::end(kWeightMagic));
  put_u32(out, static_cast<std::uint32_t>(model.layers().size()));
  for (const auto& layer : model.layers()) {
    put_u32(out, static_cast<std::uint32_t>(layer.weights.cols()));
    put_u32(out, static_cast<std::uint32_t>(layer.weights.rows()));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(layer.weights(r, c))));
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(layer.bias[r])));
    }
  }
  out.push_back(static_cast<std::uint8_t>(model.activation()));
  return out;
}

MlpDenoiser decode_weights(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  in.require(4, "weight file magic");
  if (!std::equal(std::begin(kWeightMagic), std::end(kWeightMagic), bytes.begin())) {
    throw FormatError("bad weight file magic (expected \"NDW1\")", 0);
  }
  in.u32("magic");
  const std::uint32_t count = in.u32("layer count");
  if (count == 0) throw FormatError("weight file declares zero layers", 4);

  std::vector<DenseLayer> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string ctx = layer_context(i);
    const std::size_t header_at = in.offset();
    const std::uint32_t in_dim = in.u32(ctx + " in_dim");
    const std::uint32_t out_dim = in.u32(ctx + " out_dim");
    if (in_dim == 0 || out_dim == 0) throw FormatError(ctx + ": zero dimension", header_at);
    if (i > 0 && in_dim != static_cast<std::uint32_t>(layers.back().weights.rows())) {
      throw FormatError(ctx + ": in_dim " + std::to_string(in_dim) + " does not match previous out_dim " +
                            std::to_string(layers.back().weights.rows()),
                        header_at);
    }
    const std::uint64_t values = (static_cast<std::uint64_t>(in_dim) + 1) * out_dim;
    if (values * 4 > in.remaining()) {
      throw FormatError(ctx + " parameters truncated: need " + std::to_string(values * 4) + " bytes, have " +
                            std::to_string(in.remaining()),
                        bytes.size());
    }
    DenseLayer layer{Eigen::MatrixXd(out_dim, in_dim), Eigen::VectorXd(out_dim)};
    for (std::uint32_t r = 0; r < out_dim; ++r) {
      for (std::uint32_t c = 0; c < in_dim; ++c) layer.weights(r, c) = in.f32(ctx + " weights");
    }
    for (std::uint32_t r = 0; r < out_dim; ++r) layer.bias[r] = in.f32(ctx + " biases");
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
      throw FormatError(ctx + ": non-finite weight", header_at);
    }
    layers.push_back(std::move(layer));
  }
  const std::size_t act_at = in.offset();
  const std::uint8_t act = in.u8("activation code");
  if (act > 1) throw FormatError("unknown activation code " + std::to_string(act), act_at);
  if (in.remaining() != 0) throw FormatError("trailing bytes after weight file", in.offset());

  try {
    return MlpDenoiser(std::move(layers), static_cast<Activation>(act));
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what(), act_at);
  }
}

MlpDenoiser load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open weight file " + path.string(), 0);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

void save_weights(const std::filesystem::path& path, const MlpDenoiser& model) {
  const auto bytes = encode_weights(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace nucdiff
