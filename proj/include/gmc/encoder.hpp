#pragma once

// The state encoder ψ (an MLP), the learned square matrix A with φ(x) = Aψ(x),
// reverse-mode gradients for both, and the binary checkpoint format.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gmc/rng.hpp"
#include "gmc/tensor.hpp"

namespace gmc {

enum class Activation { tanh, relu };

inline std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw Error("unknown activation '" + s + "'");
}

struct MLPParams {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output
  std::vector<Matrix> weights;           // weights[l] is out × in
  std::vector<Vector> biases;
  Activation activation = Activation::tanh;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }

  void validate() const {
    if (layer_sizes.size() < 2) throw DimensionError("MLP needs at least input and output sizes");
    if (weights.size() != layer_sizes.size() - 1 || biases.size() != weights.size())
      throw DimensionError("MLP parameter count does not match layer sizes");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l] ||
          biases[l].dim() != layer_sizes[l + 1])
        throw DimensionError("MLP layer " + std::to_string(l) + " has incompatible shape");
    }
  }
};

struct EncoderPair {
  MLPParams psi;
  Matrix a_matrix;
  double c = 1.0;
  double dual_lambda = 0.1;
  std::uint64_t step = 0;

  std::size_t repr_dim() const { return psi.output_dim(); }
  std::size_t input_dim() const { return psi.input_dim(); }
};

/// Glorot-uniform weights, zero biases, A = I.
inline EncoderPair init_encoder(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                std::size_t repr_dim, Activation act, std::uint64_t seed,
                                double c = 1.0, double dual_lambda = 0.1) {
  EncoderPair enc;
  enc.psi.activation = act;
  enc.psi.layer_sizes.push_back(input_dim);
  enc.psi.layer_sizes.insert(enc.psi.layer_sizes.end(), hidden.begin(), hidden.end());
  enc.psi.layer_sizes.push_back(repr_dim);
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < enc.psi.layer_sizes.size(); ++l) {
    const std::size_t in = enc.psi.layer_sizes[l], out = enc.psi.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    Matrix w(out, in);
    for (std::size_t i = 0; i < out * in; ++i) w.data()[i] = rng.uniform(-bound, bound);
    enc.psi.weights.push_back(std::move(w));
    enc.psi.biases.emplace_back(out);
  }
  enc.a_matrix = Matrix::identity(repr_dim);
  enc.c = c;
  enc.dual_lambda = dual_lambda;
  return enc;
}

// ---------------------------------------------------------------------------
// Forward

/// Layer outputs for a batch (rows = samples). outputs[0] is the input,
/// outputs[l+1] the post-activation output of layer l.
struct MLPCache {
  std::vector<Matrix> outputs;
  const Matrix& result() const { return outputs.back(); }
};

inline MLPCache mlp_forward(const MLPParams& p, const Matrix& inputs) {
  p.validate();
  if (inputs.cols() != p.input_dim())
    throw DimensionError("psi_forward: input dim " + std::to_string(inputs.cols()) +
                         " but encoder expects " + std::to_string(p.input_dim()));
  MLPCache cache;
  cache.outputs.reserve(p.num_layers() + 1);
  cache.outputs.push_back(inputs);
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    Matrix z = matmul_transposed(cache.outputs.back(), p.weights[l]);
    const bool hidden = l + 1 < p.num_layers();
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto row = z.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) {
        double v = row[j] + p.biases[l][j];
        if (hidden) v = p.activation == Activation::tanh ? std::tanh(v) : (v > 0.0 ? v : 0.0);
        row[j] = v;
      }
    }
    cache.outputs.push_back(std::move(z));
  }
  return cache;
}

inline Matrix stack_rows(std::span<const Vector> xs) {
  if (xs.empty()) return {};
  Matrix m(xs.size(), xs.front().dim());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].dim() != m.cols()) throw DimensionError("stack_rows: ragged vectors");
    std::copy(xs[i].begin(), xs[i].end(), m.row(i).begin());
  }
  return m;
}

inline std::vector<Vector> unstack_rows(const Matrix& m) {
  std::vector<Vector> out;
  out.reserve(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out.push_back(m.row_vector(i));
  return out;
}

inline Vector psi_forward(const EncoderPair& enc, const Vector& x) {
  Matrix in(1, x.dim(), std::vector<double>(x.begin(), x.end()));
  return mlp_forward(enc.psi, in).result().row_vector(0);
}

inline Vector phi_forward(const EncoderPair& enc, const Vector& x) {
  return matvec(enc.a_matrix, psi_forward(enc, x));
}

/// ψ for many inputs at once; rows of the result follow `xs`.
inline std::vector<Vector> psi_forward_batch(const EncoderPair& enc, std::span<const Vector> xs) {
  if (xs.empty()) return {};
  return unstack_rows(mlp_forward(enc.psi, stack_rows(xs)).result());
}

// ---------------------------------------------------------------------------
// Backward

struct GradientBundle {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Matrix a_matrix;

  static GradientBundle zeros_like(const EncoderPair& enc) {
    GradientBundle g;
    for (const auto& w : enc.psi.weights) g.weights.emplace_back(w.rows(), w.cols());
    for (const auto& b : enc.psi.biases) g.biases.emplace_back(b.dim());
    g.a_matrix = Matrix(enc.a_matrix.rows(), enc.a_matrix.cols());
    return g;
  }
};

/// Forward pass over a batch of pairs, kept for backward().
/// Rows 0..B-1 of the ψ cache are the x's, rows B..2B-1 the x⁺'s.
struct PairForward {
  std::size_t batch = 0;
  MLPCache cache;
  Matrix psi_x;
  Matrix phi_x;
  Matrix psi_pos;
};

inline PairForward forward_pairs(const EncoderPair& enc, const Matrix& xs, const Matrix& xs_pos) {
  if (xs.rows() != xs_pos.rows() || xs.cols() != xs_pos.cols())
    throw DimensionError("forward_pairs: x and x+ batches differ in shape");
  const std::size_t b = xs.rows();
  Matrix both(2 * b, xs.cols());
  std::copy(xs.values().begin(), xs.values().end(), both.data());
  std::copy(xs_pos.values().begin(), xs_pos.values().end(), both.data() + b * xs.cols());
  PairForward f;
  f.batch = b;
  f.cache = mlp_forward(enc.psi, both);
  const Matrix& out = f.cache.result();
  const std::size_t k = out.cols();
  f.psi_x = Matrix(b, k, std::vector<double>(out.data(), out.data() + b * k));
  f.psi_pos = Matrix(b, k, std::vector<double>(out.data() + b * k, out.data() + 2 * b * k));
  f.phi_x = matmul_transposed(f.psi_x, enc.a_matrix);
  return f;
}

/// Upstream gradients of a scalar loss with respect to every forward output.
struct PairOutputGrads {
  Matrix psi_x;
  Matrix phi_x;
  Matrix psi_pos;
};

/// Reverse-mode gradients of the loss with respect to all encoder parameters.
inline GradientBundle backward(const EncoderPair& enc, const PairForward& fwd,
                               const PairOutputGrads& grads) {
  const std::size_t b = fwd.batch, k = enc.repr_dim();
  auto check = [&](const Matrix& g, const char* name) {
    if (g.rows() != b || g.cols() != k)
      throw DimensionError(std::string("backward: upstream gradient '") + name +
                           "' does not match forward output shape");
  };
  check(grads.psi_x, "psi_x");
  check(grads.phi_x, "phi_x");
  check(grads.psi_pos, "psi_pos");

  GradientBundle g = GradientBundle::zeros_like(enc);
  // φ = ψ Aᵀ (row form): dA = gφᵀ ψ, dψ += gφ A.
  g.a_matrix = matmul(transpose(grads.phi_x), fwd.psi_x);
  const Matrix via_phi = matmul(grads.phi_x, enc.a_matrix);

  Matrix delta(2 * b, k);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      delta(i, j) = grads.psi_x(i, j) + via_phi(i, j);
      delta(b + i, j) = grads.psi_pos(i, j);
    }

  const auto& p = enc.psi;
  for (std::size_t l = p.num_layers(); l-- > 0;) {
    const Matrix& input = fwd.cache.outputs[l];
    g.weights[l] = matmul(transpose(delta), input);
    for (std::size_t r = 0; r < delta.rows(); ++r)
      for (std::size_t j = 0; j < delta.cols(); ++j) g.biases[l][j] += delta(r, j);
    if (l == 0) break;
    Matrix prev = matmul(delta, p.weights[l]);
    for (std::size_t r = 0; r < prev.rows(); ++r) {
      auto pr = prev.row(r);
      const auto hr = input.row(r);
      for (std::size_t j = 0; j < pr.size(); ++j) {
        if (p.activation == Activation::tanh)
          pr[j] *= 1.0 - hr[j] * hr[j];
        else if (hr[j] <= 0.0)
          pr[j] = 0.0;
      }
    }
    delta = std::move(prev);
  }
  return g;
}

/// Convenience overload: forward then backward on explicit (x, x⁺) pairs.
inline GradientBundle backward(const EncoderPair& enc, std::span<const Vector> xs,
                               std::span<const Vector> xs_pos, const PairOutputGrads& grads) {
  return backward(enc, forward_pairs(enc, stack_rows(xs), stack_rows(xs_pos)), grads);
}

// ---------------------------------------------------------------------------
// Parameter visitation (optimizers, finite differences, checkpoints)

template <typename Fn>
void for_each_tensor(EncoderPair& enc, Fn&& fn) {
  for (auto& w : enc.psi.weights) fn(std::span<double>(w.data(), w.values().size()));
  for (auto& b : enc.psi.biases) fn(b.span());
  fn(std::span<double>(enc.a_matrix.data(), enc.a_matrix.values().size()));
}

template <typename Fn>
void for_each_tensor(GradientBundle& g, Fn&& fn) {
  for (auto& w : g.weights) fn(std::span<double>(w.data(), w.values().size()));
  for (auto& b : g.biases) fn(b.span());
  fn(std::span<double>(g.a_matrix.data(), g.a_matrix.values().size()));
}

// ---------------------------------------------------------------------------
// Checkpoints: "GMC1", one header line of key=value fields, then float32
// little-endian tensors (all weights, all biases, A), row-major.

class CheckpointError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void write_f32_le(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  const unsigned char bytes[4] = {static_cast<unsigned char>(bits & 0xff),
                                  static_cast<unsigned char>((bits >> 8) & 0xff),
                                  static_cast<unsigned char>((bits >> 16) & 0xff),
                                  static_cast<unsigned char>((bits >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

inline double read_f32_le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return static_cast<double>(std::bit_cast<float>(bits));
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline std::size_t parameter_count(const EncoderPair& enc) {
  std::size_t n = 0;
  for (const auto& w : enc.psi.weights) n += w.values().size();
  for (const auto& b : enc.psi.biases) n += b.dim();
  return n + enc.a_matrix.values().size();
}

inline void write_checkpoint(std::ostream& out, const EncoderPair& enc) {
  enc.psi.validate();
  out.write("GMC1", 4);
  std::string layers;
  for (std::size_t i = 0; i < enc.psi.layer_sizes.size(); ++i)
    layers += (i ? "," : "") + std::to_string(enc.psi.layer_sizes[i]);
  out << "layers=" << layers << " activation=" << to_string(enc.psi.activation)
      << " k=" << enc.repr_dim() << " c=" << detail::format_double(enc.c)
      << " dual_lambda=" << detail::format_double(enc.dual_lambda) << " step=" << enc.step
      << "\n";
  EncoderPair copy = enc;
  for_each_tensor(copy, [&](std::span<double> t) {
    for (double v : t) detail::write_f32_le(out, v);
  });
}

inline void save_checkpoint(const std::string& path, const EncoderPair& enc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
  write_checkpoint(out, enc);
  if (!out) throw CheckpointError("failed writing checkpoint: " + path);
}

inline EncoderPair read_checkpoint(std::istream& in) {
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || bytes.compare(0, 4, "GMC1") != 0)
    throw CheckpointError("checkpoint: bad magic (expected GMC1)");
  const auto nl = bytes.find('\n', 4);
  if (nl == std::string::npos) throw CheckpointError("checkpoint: unterminated header");
  std::istringstream header(bytes.substr(4, nl - 4));
  std::string field;
  EncoderPair enc;
  std::size_t k = 0;
  bool have_layers = false, have_k = false;
  while (header >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw CheckpointError("checkpoint: malformed header field '" + field + "'");
    const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
    try {
      if (key == "layers") {
        std::istringstream ls(value);
        std::string tok;
        while (std::getline(ls, tok, ',')) enc.psi.layer_sizes.push_back(std::stoul(tok));
        have_layers = true;
      } else if (key == "activation") {
        enc.psi.activation = parse_activation(value);
      } else if (key == "k") {
        k = std::stoul(value);
        have_k = true;
      } else if (key == "c") {
        enc.c = std::stod(value);
      } else if (key == "dual_lambda") {
        enc.dual_lambda = std::stod(value);
      } else if (key == "step") {
        enc.step = std::stoull(value);
      }
    } catch (const std::logic_error&) {
      throw CheckpointError("checkpoint: bad value for header key '" + key + "'");
    }
  }
  if (!have_layers || !have_k || enc.psi.layer_sizes.size() < 2 || enc.psi.layer_sizes.back() != k)
    throw CheckpointError("checkpoint: header layer sizes and k are inconsistent");
  for (std::size_t l = 0; l + 1 < enc.psi.layer_sizes.size(); ++l) {
    enc.psi.weights.emplace_back(enc.psi.layer_sizes[l + 1], enc.psi.layer_sizes[l]);
    enc.psi.biases.emplace_back(enc.psi.layer_sizes[l + 1]);
  }
  enc.a_matrix = Matrix(k, k);
  const std::size_t expected = parameter_count(enc) * 4;
  const std::size_t payload = bytes.size() - nl - 1;
  if (payload != expected)
    throw CheckpointError("checkpoint: payload is " + std::to_string(payload) +
                          " bytes but header implies " + std::to_string(expected));
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
  for_each_tensor(enc, [&](std::span<double> t) {
    for (double& v : t) {
      v = detail::read_f32_le(p);
      p += 4;
    }
  });
  return enc;
}

inline EncoderPair load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  return read_checkpoint(in);
}

/// Rounds every parameter through float32, i.e. what a checkpoint round trip yields.
inline EncoderPair quantize_to_checkpoint_precision(EncoderPair enc) {
  for_each_tensor(enc, [](std::span<double> t) {
    for (double& v : t) v = static_cast<double>(static_cast<float>(v));
  });
  return enc;
}

}  // namespace gmc
