#include "servoscope/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "servoscope/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "weights file format is little-endian");

namespace servoscope::nn {

namespace {

// z = W * a_prev + b, gathering columns and skipping exact zeros. Input
// vectors coming from state-change preprocessing are mostly zero; hidden
// activations just pay one compare per entry.
Eigen::VectorXd affine(const Layer& layer, const Eigen::VectorXd& a_prev) {
  Eigen::VectorXd z = layer.bias;
  for (Eigen::Index j = 0; j < a_prev.size(); ++j) {
    const double v = a_prev[j];
    if (v != 0.0) z.noalias() += layer.weights.col(j) * v;
  }
  return z;
}

Eigen::VectorXd activate(const Eigen::VectorXd& z, Activation act) {
  if (act == Activation::kIdentity) return z;
  Eigen::VectorXd a(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) a[i] = std::tanh(z[i]);
  return a;
}

// d(act)/dz evaluated from the stored activation (tanh' = 1 - a^2).
Eigen::VectorXd activation_derivative(const Eigen::VectorXd& a, Activation act) {
  if (act == Activation::kIdentity) return Eigen::VectorXd::Ones(a.size());
  return (1.0 - a.array().square()).matrix();
}

void check_cache(const NetworkParams& params, const ForwardCache& cache,
                 const Eigen::VectorXd& output_error) {
  if (output_error.size() != params.output_dim)
    throw ShapeError("backprop: output_error length " +
                     std::to_string(output_error.size()) + " != output_dim " +
                     std::to_string(params.output_dim));
  if (cache.activations.size() != params.layers.size() ||
      cache.pre_activations.size() != params.layers.size() ||
      cache.input.size() != params.input_dim)
    throw ShapeError("backprop: cache does not match network");
}

// Backward sweep: per-layer delta vectors for the functional err . y.
std::vector<Eigen::VectorXd> delta_chain(const NetworkParams& params,
                                         const ForwardCache& cache,
                                         const Eigen::VectorXd& output_error) {
  const std::size_t n = params.layers.size();
  std::vector<Eigen::VectorXd> deltas(n);
  Eigen::VectorXd delta = output_error.cwiseProduct(
      activation_derivative(cache.activations[n - 1], params.layers[n - 1].spec.activation));
  deltas[n - 1] = delta;
  for (std::size_t l = n - 1; l > 0; --l) {
    Eigen::VectorXd back = params.layers[l].weights.transpose() * deltas[l];
    deltas[l - 1] = back.cwiseProduct(activation_derivative(
        cache.activations[l - 1], params.layers[l - 1].spec.activation));
  }
  return deltas;
}

}  // namespace

void validate_specs(std::span<const LayerSpec> specs) {
  if (specs.empty()) throw ConfigError("network needs at least one layer");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].in_dim < 1 || specs[i].out_dim < 1)
      throw ConfigError("layer " + std::to_string(i) + ": dims must be >= 1");
    if (i + 1 < specs.size() && specs[i].out_dim != specs[i + 1].in_dim)
      throw ConfigError("layer " + std::to_string(i) + " out_dim " +
                        std::to_string(specs[i].out_dim) + " != layer " +
                        std::to_string(i + 1) + " in_dim " +
                        std::to_string(specs[i + 1].in_dim));
  }
  if (specs.back().activation != Activation::kTanh)
    throw ConfigError("final activation must be tanh");
}

NetworkParams init_network(std::span<const LayerSpec> specs, std::uint64_t seed) {
  validate_specs(specs);
  NetworkParams params;
  params.input_dim = specs.front().in_dim;
  params.output_dim = specs.back().out_dim;
  params.layers.reserve(specs.size());
  std::mt19937_64 rng(seed);
  for (const LayerSpec& spec : specs) {
    const double limit = std::sqrt(6.0 / (spec.in_dim + spec.out_dim));
    std::uniform_real_distribution<double> unif(-limit, limit);
    Layer layer;
    layer.spec = spec;
    layer.weights.resize(spec.out_dim, spec.in_dim);
    for (int r = 0; r < spec.out_dim; ++r)
      for (int c = 0; c < spec.in_dim; ++c) layer.weights(r, c) = unif(rng);
    layer.bias = Eigen::VectorXd::Zero(spec.out_dim);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

std::vector<LayerSpec> chain_specs(int input_dim, std::span<const int> hidden_dims,
                                   int out_dim) {
  std::vector<LayerSpec> specs;
  int prev = input_dim;
  for (int h : hidden_dims) {
    specs.push_back({prev, h, Activation::kTanh});
    prev = h;
  }
  specs.push_back({prev, out_dim, Activation::kTanh});
  return specs;
}

std::size_t parameter_count(const NetworkParams& params) {
  std::size_t n = 0;
  for (const Layer& layer : params.layers)
    n += static_cast<std::size_t>(layer.weights.size()) + layer.bias.size();
  return n;
}

std::pair<RewardVector, ForwardCache> forward(const NetworkParams& params,
                                              const Eigen::VectorXd& x) {
  if (x.size() != params.input_dim)
    throw ShapeError("forward: input length " + std::to_string(x.size()) +
                     " != input_dim " + std::to_string(params.input_dim));
  if (!x.allFinite()) throw NumericError("forward: non-finite input");
  ForwardCache cache;
  cache.input = x;
  cache.pre_activations.reserve(params.layers.size());
  cache.activations.reserve(params.layers.size());
  const Eigen::VectorXd* a_prev = &cache.input;
  for (const Layer& layer : params.layers) {
    cache.pre_activations.push_back(affine(layer, *a_prev));
    cache.activations.push_back(
        activate(cache.pre_activations.back(), layer.spec.activation));
    a_prev = &cache.activations.back();
  }
  return {cache.activations.back(), std::move(cache)};
}

Gradient backprop(const NetworkParams& params, const ForwardCache& cache,
                  const Eigen::VectorXd& output_error) {
  check_cache(params, cache, output_error);
  const std::vector<Eigen::VectorXd> deltas = delta_chain(params, cache, output_error);
  Gradient grad;
  grad.weights.reserve(params.layers.size());
  grad.bias.reserve(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const Eigen::VectorXd& a_prev = (l == 0) ? cache.input : cache.activations[l - 1];
    grad.weights.push_back(deltas[l] * a_prev.transpose());
    grad.bias.push_back(deltas[l]);
  }
  return grad;
}

NetworkParams ascent_step(NetworkParams params, const Gradient& grad, double lr) {
  if (grad.weights.size() != params.layers.size() ||
      grad.bias.size() != params.layers.size())
    throw ShapeError("ascent_step: gradient layer count mismatch");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Layer& layer = params.layers[l];
    if (grad.weights[l].rows() != layer.weights.rows() ||
        grad.weights[l].cols() != layer.weights.cols() ||
        grad.bias[l].size() != layer.bias.size())
      throw ShapeError("ascent_step: gradient shape mismatch at layer " +
                       std::to_string(l));
    layer.weights += lr * grad.weights[l];
    layer.bias += lr * grad.bias[l];
  }
  return params;
}

namespace detail {

void apply_pair_update(NetworkParams& params, const ForwardCache& cache_a,
                       const Eigen::VectorXd& err_a, const ForwardCache& cache_b,
                       const Eigen::VectorXd& err_b, double lr) {
  check_cache(params, cache_a, err_a);
  check_cache(params, cache_b, err_b);
  const std::vector<Eigen::VectorXd> da = delta_chain(params, cache_a, err_a);
  const std::vector<Eigen::VectorXd> db = delta_chain(params, cache_b, err_b);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Layer& layer = params.layers[l];
    const Eigen::VectorXd& aa = (l == 0) ? cache_a.input : cache_a.activations[l - 1];
    const Eigen::VectorXd& ab = (l == 0) ? cache_b.input : cache_b.activations[l - 1];
    for (Eigen::Index j = 0; j < aa.size(); ++j) {
      const double va = aa[j];
      const double vb = ab[j];
      if (va != 0.0 && vb != 0.0)
        layer.weights.col(j).noalias() += lr * (da[l] * va + db[l] * vb);
      else if (va != 0.0)
        layer.weights.col(j).noalias() += (lr * va) * da[l];
      else if (vb != 0.0)
        layer.weights.col(j).noalias() += (lr * vb) * db[l];
    }
    layer.bias.noalias() += lr * (da[l] + db[l]);
  }
}

}  // namespace detail

namespace {

constexpr char kMagic[4] = {'T', 'F', 'N', '1'};

struct Cursor {
  const char* data;
  std::size_t size;
  std::size_t pos = 0;

  void read(void* out, std::size_t n) {
    if (pos + n > size) throw FormatError("weights file truncated");
    std::memcpy(out, data + pos, n);
    pos += n;
  }
  std::uint32_t read_u32() {
    std::uint32_t v;
    read(&v, sizeof v);
    return v;
  }
  std::uint8_t read_u8() {
    std::uint8_t v;
    read(&v, sizeof v);
    return v;
  }
};

}  // namespace

void save_network(const NetworkParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t count = static_cast<std::uint32_t>(params.layers.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const Layer& layer : params.layers) {
    const std::uint32_t in = static_cast<std::uint32_t>(layer.spec.in_dim);
    const std::uint32_t out_dim = static_cast<std::uint32_t>(layer.spec.out_dim);
    const std::uint8_t act = static_cast<std::uint8_t>(layer.spec.activation);
    out.write(reinterpret_cast<const char*>(&in), sizeof in);
    out.write(reinterpret_cast<const char*>(&out_dim), sizeof out_dim);
    out.write(reinterpret_cast<const char*>(&act), sizeof act);
  }
  for (const Layer& layer : params.layers) {
    // row-major on disk
    for (int r = 0; r < layer.weights.rows(); ++r)
      for (int c = 0; c < layer.weights.cols(); ++c) {
        const double v = layer.weights(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
  }
  for (const Layer& layer : params.layers)
    out.write(reinterpret_cast<const char*>(layer.bias.data()),
              static_cast<std::streamsize>(layer.bias.size() * sizeof(double)));
  if (!out) throw IoError("write failed: " + path.string());
}

NetworkParams load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string blob((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  Cursor cur{blob.data(), blob.size()};

  char magic[4];
  cur.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw FormatError("bad magic bytes in " + path.string());
  const std::uint32_t count = cur.read_u32();
  if (count == 0 || count > 1024) throw FormatError("implausible layer count");

  std::vector<LayerSpec> specs(count);
  std::size_t payload_doubles = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t in_dim = cur.read_u32();
    const std::uint32_t out_dim = cur.read_u32();
    const std::uint8_t act = cur.read_u8();
    if (in_dim == 0 || out_dim == 0 || in_dim > (1u << 24) || out_dim > (1u << 24))
      throw FormatError("implausible layer dims");
    if (act > 1) throw FormatError("unknown activation code");
    specs[i] = {static_cast<int>(in_dim), static_cast<int>(out_dim),
                static_cast<Activation>(act)};
    payload_doubles += static_cast<std::size_t>(in_dim) * out_dim + out_dim;
  }
  if (blob.size() - cur.pos != payload_doubles * sizeof(double))
    throw FormatError("dimension header inconsistent with payload size");
  try {
    validate_specs(specs);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid network in file: ") + e.what());
  }

  NetworkParams params;
  params.input_dim = specs.front().in_dim;
  params.output_dim = specs.back().out_dim;
  params.layers.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    params.layers[i].spec = specs[i];
    params.layers[i].weights.resize(specs[i].out_dim, specs[i].in_dim);
    for (int r = 0; r < specs[i].out_dim; ++r)
      for (int c = 0; c < specs[i].in_dim; ++c) {
        double v;
        cur.read(&v, sizeof v);
        params.layers[i].weights(r, c) = v;
      }
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    params.layers[i].bias.resize(specs[i].out_dim);
    cur.read(params.layers[i].bias.data(),
             static_cast<std::size_t>(specs[i].out_dim) * sizeof(double));
  }
  return params;
}

}  // namespace servoscope::nn
