#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ebsde/error.hpp"
#include "ebsde/rng.hpp"

namespace ebsde {

/// Fully connected network with tanh hidden layers and a linear output.
/// Parameters live in one flat vector, layer by layer, each layer stored as
/// its weight matrix (row-major, out x in) followed by its bias.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    require(sizes_.size() >= 2, ErrorCode::InvalidArgument, "network needs at least two layers");
    offsets_.push_back(0);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
      offsets_.push_back(offsets_.back() + sizes_[l + 1] * sizes_[l] + sizes_[l + 1]);
    params_.assign(offsets_.back(), 0.0);
    std::size_t width = 0;
    for (std::size_t s : sizes_) width += s;
    cache_size_ = width;
  }

  /// The [1, 20+d, 20+d, out] architecture used by both solvers.
  static Mlp standard(std::size_t d, std::size_t out) { return Mlp({1, 20 + d, 20 + d, out}); }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t n_layers() const { return sizes_.size() - 1; }
  std::size_t n_params() const { return params_.size(); }
  std::size_t in_dim() const { return sizes_.front(); }
  std::size_t out_dim() const { return sizes_.back(); }
  std::size_t cache_size() const { return cache_size_; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + sizes_[layer + 1] * sizes_[layer];
  }

  /// Glorot-normal weights (std sqrt(2/(fan_in+fan_out))), zero biases.
  void glorot_init(std::uint64_t seed) {
    std::mt19937_64 eng(stream_seed(seed, 0x6C6F72));
    std::normal_distribution<double> n01(0.0, 1.0);
    for (std::size_t l = 0; l < n_layers(); ++l) {
      const double sd = std::sqrt(2.0 / static_cast<double>(sizes_[l] + sizes_[l + 1]));
      const std::size_t w0 = weight_offset(l), b0 = bias_offset(l);
      for (std::size_t i = w0; i < b0; ++i) params_[i] = sd * n01(eng);
      for (std::size_t i = b0; i < b0 + sizes_[l + 1]; ++i) params_[i] = 0.0;
    }
  }

  /// Forward pass for a scalar input. `cache` (size cache_size()) receives the
  /// input followed by every layer's post-activation; the last out_dim()
  /// entries are the network output.
  void forward(double v, double* cache) const {
    cache[0] = v;
    const double* a = cache;
    double* next = cache + sizes_[0];
    for (std::size_t l = 0; l < n_layers(); ++l) {
      const std::size_t n_in = sizes_[l], n_out = sizes_[l + 1];
      const double* W = params_.data() + weight_offset(l);
      const double* b = params_.data() + bias_offset(l);
      const bool hidden = l + 1 < n_layers();
      for (std::size_t o = 0; o < n_out; ++o) {
        double s = b[o];
        const double* row = W + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) s += row[i] * a[i];
        next[o] = hidden ? std::tanh(s) : s;
      }
      a = next;
      next += n_out;
    }
  }

  const double* output(const double* cache) const { return cache + cache_size_ - out_dim(); }

  std::vector<double> eval(double v) const {
    std::vector<double> cache(cache_size_);
    forward(v, cache.data());
    return {output(cache.data()), output(cache.data()) + out_dim()};
  }

  /// Accumulates d(out . grad_out)/d(params) into grad (size n_params()).
  /// `work` must hold at least 2 * max layer width doubles.
  void backward(const double* cache, const double* grad_out, double* grad, double* work) const {
    std::size_t maxw = 0;
    for (std::size_t s : sizes_) maxw = std::max(maxw, s);
    double* delta = work;         // dL/d(pre-activation) of the current layer
    double* delta_prev = work + maxw;
    const std::size_t L = n_layers();
    std::copy(grad_out, grad_out + out_dim(), delta);
    // offsets of each layer's activations inside the cache
    std::size_t act_off[16];
    act_off[0] = 0;
    for (std::size_t l = 0; l < L; ++l) act_off[l + 1] = act_off[l] + sizes_[l];
    for (std::size_t l = L; l-- > 0;) {
      const std::size_t n_in = sizes_[l], n_out = sizes_[l + 1];
      const double* a_in = cache + act_off[l];
      const double* W = params_.data() + weight_offset(l);
      double* gW = grad + weight_offset(l);
      double* gb = grad + bias_offset(l);
      for (std::size_t o = 0; o < n_out; ++o) {
        const double dl = delta[o];
        gb[o] += dl;
        double* grow = gW + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) grow[i] += dl * a_in[i];
      }
      if (l == 0) break;
      for (std::size_t i = 0; i < n_in; ++i) {
        double s = 0.0;
        for (std::size_t o = 0; o < n_out; ++o) s += W[o * n_in + i] * delta[o];
        delta_prev[i] = s * (1.0 - a_in[i] * a_in[i]);  // a_in = tanh(pre)
      }
      std::swap(delta, delta_prev);
    }
  }

  std::size_t work_size() const {
    std::size_t maxw = 0;
    for (std::size_t s : sizes_) maxw = std::max(maxw, s);
    return 2 * maxw;
  }

  std::vector<double> backward(const std::vector<double>& cache, const std::vector<double>& grad_out) const {
    std::vector<double> grad(n_params(), 0.0), work(work_size());
    backward(cache.data(), grad_out.data(), grad.data(), work.data());
    return grad;
  }

  bool operator==(const Mlp&) const = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  std::size_t cache_size_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool lr_decay = false;  // halve every decay_every steps
  std::size_t decay_every = 2500;
};

/// Networks, the trainable ergodic cost and the Adam moments. The moment
/// vectors cover every network parameter in order, then lambda_bar last.
struct TrainState {
  std::vector<Mlp> nets;
  double lambda_bar = 0.0;
  double K = 1.0;
  std::vector<double> m, v;
  std::size_t step = 0;
  AdamConfig adam;

  std::size_t n_net_params() const {
    std::size_t n = 0;
    for (const auto& net : nets) n += net.n_params();
    return n;
  }

  void reset_moments() {
    m.assign(n_net_params() + 1, 0.0);
    v.assign(n_net_params() + 1, 0.0);
    step = 0;
  }

  double current_lr() const {
    if (!adam.lr_decay) return adam.lr;
    return adam.lr * std::pow(0.5, static_cast<double>(step / adam.decay_every));
  }
};

/// One Adam update of every network parameter and of lambda_bar, followed by
/// the clamp of lambda_bar to [-K, K].
inline void adam_step(TrainState& st, std::span<const double> grads, double grad_lambda) {
  const std::size_t n = st.n_net_params();
  require(grads.size() == n, ErrorCode::InvalidArgument, "gradient size mismatch");
  if (st.m.size() != n + 1) st.reset_moments();
  const double lr = st.current_lr();
  st.step += 1;
  const double b1 = st.adam.beta1, b2 = st.adam.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  auto update = [&](double& p, double g, std::size_t i) {
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * g;
    st.v[i] = b2 * st.v[i] + (1.0 - b2) * g * g;
    const double mh = st.m[i] / c1;
    const double vh = st.v[i] / c2;
    p -= lr * mh / (std::sqrt(vh) + st.adam.eps);
  };
  std::size_t i = 0;
  for (auto& net : st.nets)
    for (double& p : net.params()) {
      update(p, grads[i], i);
      ++i;
    }
  update(st.lambda_bar, grad_lambda, n);
  st.lambda_bar = std::clamp(st.lambda_bar, -st.K, st.K);
}

namespace detail {

inline std::string hex(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::hex);
  return std::string(buf, r.ptr);
}

inline double unhex(const std::string& s) {
  double x = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), x, std::chars_format::hex);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw Error(ErrorCode::IoError, "bad number in checkpoint: " + s);
  return x;
}

}  // namespace detail

// Checkpoint format, text, one token group per line:
//   ebsde-checkpoint 1
//   nets <count>
//   net <n_sizes> <size_0> ... <size_last>     (repeated per network)
//   <param values, hexfloat, one per line>
//   lambda_bar <hexfloat>
//   K <hexfloat>
//   step <integer>
// Hexfloat makes the round trip exact.
inline std::string checkpoint_text(const TrainState& st) {
  std::ostringstream os;
  os << "ebsde-checkpoint 1\n";
  os << "nets " << st.nets.size() << "\n";
  for (const auto& net : st.nets) {
    os << "net " << net.sizes().size();
    for (auto s : net.sizes()) os << ' ' << s;
    os << "\n";
    for (double p : net.params()) os << detail::hex(p) << "\n";
  }
  os << "lambda_bar " << detail::hex(st.lambda_bar) << "\n";
  os << "K " << detail::hex(st.K) << "\n";
  os << "step " << st.step << "\n";
  return os.str();
}

inline TrainState parse_checkpoint(const std::string& text) {
  std::istringstream is(text);
  std::string tag;
  int version = 0;
  is >> tag >> version;
  if (tag != "ebsde-checkpoint" || version != 1)
    throw Error(ErrorCode::IoError, "not a version-1 checkpoint");
  TrainState st;
  std::size_t n_nets = 0;
  is >> tag >> n_nets;
  if (tag != "nets") throw Error(ErrorCode::IoError, "checkpoint: expected 'nets'");
  for (std::size_t k = 0; k < n_nets; ++k) {
    std::size_t n_sizes = 0;
    is >> tag >> n_sizes;
    if (tag != "net" || n_sizes < 2 || n_sizes > 16) throw Error(ErrorCode::IoError, "checkpoint: bad net header");
    std::vector<std::size_t> sizes(n_sizes);
    for (auto& s : sizes) is >> s;
    Mlp net(sizes);
    for (double& p : net.params()) {
      std::string tok;
      is >> tok;
      p = detail::unhex(tok);
    }
    st.nets.push_back(std::move(net));
  }
  std::string tok;
  is >> tag >> tok;
  if (tag != "lambda_bar") throw Error(ErrorCode::IoError, "checkpoint: expected lambda_bar");
  st.lambda_bar = detail::unhex(tok);
  is >> tag >> tok;
  if (tag != "K") throw Error(ErrorCode::IoError, "checkpoint: expected K");
  st.K = detail::unhex(tok);
  is >> tag >> st.step;
  if (tag != "step" || !is) throw Error(ErrorCode::IoError, "checkpoint: expected step");
  return st;
}

inline void save_checkpoint(const TrainState& st, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write checkpoint " + path);
  out << checkpoint_text(st);
}

inline TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "missing checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace ebsde
