#include "mars/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mars {

namespace {

// Substream ids shared by every oracle.
constexpr std::uint64_t kStructureStream = 1;
constexpr std::uint64_t kCenterStream = 2;
constexpr std::uint64_t kNoiseStream = 3;
constexpr std::uint64_t kInitStream = 4;

double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

ParamLayout::ParamLayout(std::vector<ParamBlock> blocks) : blocks_(std::move(blocks)) {
  std::size_t offset = 0;
  for (auto& b : blocks_) {
    if (b.offset != offset) throw std::invalid_argument("ParamLayout: blocks must be contiguous");
    offset += b.size();
  }
  total_ = offset;
}

ParamLayout ParamLayout::flat(std::size_t d) {
  return ParamLayout({ParamBlock{"x", 0, d, 1, false, false}});
}

ParamLayout ParamLayout::matrix(std::size_t rows, std::size_t cols) {
  return ParamLayout({ParamBlock{"X", 0, rows, cols, true, false}});
}

bool ParamLayout::has_matrix_blocks() const noexcept {
  return std::any_of(blocks_.begin(), blocks_.end(), [](const ParamBlock& b) { return b.is_matrix; });
}

std::vector<std::size_t> sample_indices(RngStream& rng, std::size_t n, std::size_t batch_size) {
  if (batch_size == 0 || batch_size > n) throw std::invalid_argument("batch_size must be in [1, n]");
  std::vector<std::size_t> pool = all_indices(n);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(batch_size);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Matrix random_orthogonal(RngStream& rng, std::size_t d) {
  // Modified Gram–Schmidt on the columns of a Gaussian matrix.
  Matrix q(d, d);
  for (double& v : q.span()) v = rng.gaussian();
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double proj = 0.0;
      for (std::size_t i = 0; i < d; ++i) proj += q(i, k) * q(i, j);
      for (std::size_t i = 0; i < d; ++i) q(i, j) -= proj * q(i, k);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < d; ++i) q(i, j) /= norm;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Noisy quadratic

NoisyQuadratic::NoisyQuadratic(QuadraticOptions options)
    : options_(std::move(options)), noise_(RngStream(options_.seed).substream(kNoiseStream)) {
  const std::size_t d = options_.spectrum.size();
  if (d == 0) throw std::invalid_argument("quadratic: empty spectrum");
  for (double s : options_.spectrum) {
    if (!(s > 0.0) || !std::isfinite(s))
      throw std::invalid_argument("quadratic: spectrum entries must be positive");
  }
  if (options_.batch_size == 0) throw std::invalid_argument("quadratic: batch_size must be >= 1");

  const RngStream root(options_.seed);
  if (options_.rotate) {
    RngStream rot = root.substream(kStructureStream);
    const Matrix q = random_orthogonal(rot, d);
    // A = Q diag(s) Qᵀ, symmetrised to remove rounding asymmetry.
    Matrix qs = q;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) qs(i, j) *= options_.spectrum[j];
    a_ = matmul_nt(qs, q);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) {
        const double avg = 0.5 * (a_(i, j) + a_(j, i));
        a_(i, j) = avg;
        a_(j, i) = avg;
      }
  } else {
    a_ = Matrix::diagonal(options_.spectrum.span());
  }

  if (options_.center) {
    if (options_.center->size() != d) throw std::invalid_argument("quadratic: center size mismatch");
    mu_ = *options_.center;
  } else {
    RngStream c = root.substream(kCenterStream);
    mu_ = options_.center_scale * gauss_draw(c, d);
  }

  RngStream init = root.substream(kInitStream);
  x0_ = mu_ + (options_.init_scale / std::sqrt(static_cast<double>(d))) * gauss_draw(init, d);

  if (options_.matrix_rows) {
    const std::size_t rows = *options_.matrix_rows;
    if (rows == 0 || d % rows != 0)
      throw std::invalid_argument("quadratic: matrix_rows must divide the dimension");
    layout_ = ParamLayout::matrix(rows, d / rows);
  } else {
    layout_ = ParamLayout::flat(d);
  }
}

Batch NoisyQuadratic::sample_batch(std::uint64_t step) const {
  RngStream r = noise_.substream(step);
  const std::size_t d = dimension();
  Batch b;
  b.step = step;
  b.noise = Vector(d);
  for (std::size_t k = 0; k < options_.batch_size; ++k) b.noise += gauss_draw(r, d);
  if (options_.batch_size > 1) b.noise *= 1.0 / static_cast<double>(options_.batch_size);
  return b;
}

Vector NoisyQuadratic::stochastic_grad(const Vector& x, const Batch& batch) const {
  Vector r = x - mu_;
  if (options_.sigma != 0.0) axpy(-options_.sigma, batch.noise, r.span());
  return matvec(a_, r);
}

Vector NoisyQuadratic::full_grad(const Vector& x) const { return matvec(a_, x - mu_); }

double NoisyQuadratic::loss(const Vector& x) const {
  const Vector r = x - mu_;
  return 0.5 * dot(r, matvec(a_, r));
}

Vector NoisyQuadratic::initial_point() const { return x0_; }

std::optional<double> NoisyQuadratic::smoothness() const {
  return *std::max_element(options_.spectrum.begin(), options_.spectrum.end());
}

// ---------------------------------------------------------------------------
// Logistic regression

Logistic::Logistic(LogisticOptions options)
    : batch_size_(options.batch_size), l2_(options.l2), rng_(RngStream(options.seed)) {
  if (options.samples == 0 || options.dim == 0) throw std::invalid_argument("logistic: empty problem");
  if (batch_size_ == 0 || batch_size_ > options.samples)
    throw std::invalid_argument("logistic: batch_size must be in [1, samples]");
  RngStream data = rng_.substream(kStructureStream);
  RngStream planted = rng_.substream(kCenterStream);
  const Vector w_star = gauss_draw(planted, options.dim);
  features_.reserve(options.samples);
  labels_.reserve(options.samples);
  for (std::size_t i = 0; i < options.samples; ++i) {
    Vector a = gauss_draw(data, options.dim);
    const double p = sigmoid(dot(a, w_star));
    labels_.push_back(data.uniform() < p ? 1 : 0);
    features_.push_back(std::move(a));
  }
  layout_ = ParamLayout::flat(options.dim);
}

Logistic::Logistic(std::vector<Vector> features, std::vector<int> labels, std::size_t batch_size,
                   double l2, std::uint64_t seed)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      batch_size_(batch_size),
      l2_(l2),
      rng_(RngStream(seed)) {
  if (features_.empty() || features_.size() != labels_.size())
    throw std::invalid_argument("logistic: features/labels mismatch");
  if (batch_size_ == 0 || batch_size_ > features_.size())
    throw std::invalid_argument("logistic: batch_size must be in [1, samples]");
  layout_ = ParamLayout::flat(features_.front().size());
}

Batch Logistic::sample_batch(std::uint64_t step) const {
  RngStream r = rng_.substream(kNoiseStream).substream(step);
  Batch b;
  b.step = step;
  b.indices = sample_indices(r, labels_.size(), batch_size_);
  return b;
}

Vector Logistic::grad_over(const Vector& x, const std::vector<std::size_t>& idx) const {
  Vector g(x.size());
  for (std::size_t i : idx) {
    const double residual = sigmoid(dot(features_[i], x)) - labels_[i];
    axpy(residual, features_[i], g.span());
  }
  g *= 1.0 / static_cast<double>(idx.size());
  if (l2_ != 0.0) axpy(l2_, x, g.span());
  return g;
}

Vector Logistic::stochastic_grad(const Vector& x, const Batch& batch) const {
  return grad_over(x, batch.indices);
}

Vector Logistic::full_grad(const Vector& x) const { return grad_over(x, all_indices(labels_.size())); }

double Logistic::loss(const Vector& x) const {
  double total = 0.0;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const double z = dot(features_[i], x);
    total += softplus(z) - labels_[i] * z;
  }
  return total / static_cast<double>(labels_.size()) + 0.5 * l2_ * dot(x, x);
}

Vector Logistic::initial_point() const {
  RngStream init = rng_.substream(kInitStream);
  return 0.1 * gauss_draw(init, dimension());
}

// ---------------------------------------------------------------------------
// Noisy Rosenbrock

NoisyRosenbrock::NoisyRosenbrock(RosenbrockOptions options)
    : options_(options), noise_(RngStream(options.seed).substream(kNoiseStream)) {
  if (options_.dim < 2) throw std::invalid_argument("rosenbrock: dim must be >= 2");
  layout_ = ParamLayout::flat(options_.dim);
}

Batch NoisyRosenbrock::sample_batch(std::uint64_t step) const {
  RngStream r = noise_.substream(step);
  Batch b;
  b.step = step;
  b.noise = gauss_draw(r, options_.dim);
  return b;
}

Vector NoisyRosenbrock::full_grad(const Vector& x) const {
  const std::size_t d = x.size();
  Vector g(d);
  for (std::size_t i = 0; i + 1 < d; ++i) {
    const double t = x[i + 1] - x[i] * x[i];
    g[i] += -400.0 * x[i] * t - 2.0 * (1.0 - x[i]);
    g[i + 1] += 200.0 * t;
  }
  return g;
}

Vector NoisyRosenbrock::stochastic_grad(const Vector& x, const Batch& batch) const {
  Vector g = full_grad(x);
  if (options_.sigma != 0.0) axpy(options_.sigma, batch.noise, g.span());
  return g;
}

double NoisyRosenbrock::loss(const Vector& x) const {
  double f = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double t = x[i + 1] - x[i] * x[i];
    f += 100.0 * t * t + (1.0 - x[i]) * (1.0 - x[i]);
  }
  return f;
}

Vector NoisyRosenbrock::initial_point() const {
  Vector x(options_.dim);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i % 2 == 0) ? -1.2 : 1.0;
  return x;
}

// ---------------------------------------------------------------------------
// MLP

Mlp::Mlp(MlpOptions options)
    : layers_(std::move(options.layers)),
      batch_size_(options.batch_size),
      init_scale_(options.init_scale),
      rng_(RngStream(options.seed)) {
  if (layers_.size() < 3) throw std::invalid_argument("mlp: need input, >=1 hidden, output layer");
  if (layers_.back() < 2) throw std::invalid_argument("mlp: need >= 2 classes");
  if (options.samples == 0 || batch_size_ == 0 || batch_size_ > options.samples)
    throw std::invalid_argument("mlp: batch_size must be in [1, samples]");
  const std::size_t in = layers_.front();
  const std::size_t classes = layers_.back();
  RngStream centers_rng = rng_.substream(kCenterStream);
  std::vector<Vector> centers;
  for (std::size_t k = 0; k < classes; ++k) centers.push_back(2.0 * gauss_draw(centers_rng, in));
  RngStream data = rng_.substream(kStructureStream);
  for (std::size_t i = 0; i < options.samples; ++i) {
    const std::size_t k = i % classes;
    inputs_.push_back(centers[k] + options.cluster_spread * gauss_draw(data, in));
    labels_.push_back(static_cast<int>(k));
  }
  build_layout();
}

Mlp::Mlp(std::vector<std::size_t> layers, std::vector<Vector> inputs, std::vector<int> labels,
         std::size_t batch_size, std::uint64_t seed)
    : layers_(std::move(layers)),
      inputs_(std::move(inputs)),
      labels_(std::move(labels)),
      batch_size_(batch_size),
      rng_(RngStream(seed)) {
  if (layers_.size() < 3) throw std::invalid_argument("mlp: need input, >=1 hidden, output layer");
  if (inputs_.empty() || inputs_.size() != labels_.size())
    throw std::invalid_argument("mlp: inputs/labels mismatch");
  if (batch_size_ == 0 || batch_size_ > inputs_.size())
    throw std::invalid_argument("mlp: batch_size must be in [1, samples]");
  for (const auto& a : inputs_)
    if (a.size() != layers_.front()) throw std::invalid_argument("mlp: input width mismatch");
  build_layout();
}

void Mlp::build_layout() {
  std::vector<ParamBlock> blocks;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    const std::size_t fan_in = layers_[l];
    const std::size_t fan_out = layers_[l + 1];
    blocks.push_back({"W" + std::to_string(l + 1), offset, fan_out, fan_in, true, false});
    offset += fan_out * fan_in;
    blocks.push_back({"b" + std::to_string(l + 1), offset, fan_out, 1, false, true});
    offset += fan_out;
  }
  layout_ = ParamLayout(std::move(blocks));
}

Batch Mlp::sample_batch(std::uint64_t step) const {
  RngStream r = rng_.substream(kNoiseStream).substream(step);
  Batch b;
  b.step = step;
  b.indices = sample_indices(r, labels_.size(), batch_size_);
  return b;
}

double Mlp::loss_and_grad(const Vector& x, const std::vector<std::size_t>& idx, Vector* grad) const {
  const std::size_t n_layers = layers_.size() - 1;
  const auto& blocks = layout_.blocks();
  if (grad) *grad = Vector(x.size());

  std::vector<Vector> acts(n_layers + 1);
  double total = 0.0;
  for (std::size_t s : idx) {
    acts[0] = inputs_[s];
    for (std::size_t l = 0; l < n_layers; ++l) {
      const ParamBlock& w = blocks[2 * l];
      const ParamBlock& b = blocks[2 * l + 1];
      Vector z(w.rows);
      for (std::size_t i = 0; i < w.rows; ++i) {
        double sum = x[b.offset + i];
        const double* wrow = x.data() + w.offset + i * w.cols;
        for (std::size_t j = 0; j < w.cols; ++j) sum += wrow[j] * acts[l][j];
        z[i] = (l + 1 < n_layers) ? std::tanh(sum) : sum;
      }
      acts[l + 1] = std::move(z);
    }

    // Softmax cross-entropy on the logits.
    const Vector& logits = acts[n_layers];
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double z : logits) denom += std::exp(z - zmax);
    const double log_denom = zmax + std::log(denom);
    total += log_denom - logits[static_cast<std::size_t>(labels_[s])];
    if (!grad) continue;

    Vector delta(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) delta[k] = std::exp(logits[k] - log_denom);
    delta[static_cast<std::size_t>(labels_[s])] -= 1.0;

    for (std::size_t l = n_layers; l-- > 0;) {
      const ParamBlock& w = blocks[2 * l];
      const ParamBlock& b = blocks[2 * l + 1];
      const Vector& in = acts[l];
      for (std::size_t i = 0; i < w.rows; ++i) {
        (*grad)[b.offset + i] += delta[i];
        double* grow = grad->data() + w.offset + i * w.cols;
        for (std::size_t j = 0; j < w.cols; ++j) grow[j] += delta[i] * in[j];
      }
      if (l == 0) break;
      Vector prev(w.cols);
      for (std::size_t i = 0; i < w.rows; ++i) {
        const double* wrow = x.data() + w.offset + i * w.cols;
        for (std::size_t j = 0; j < w.cols; ++j) prev[j] += wrow[j] * delta[i];
      }
      for (std::size_t j = 0; j < w.cols; ++j) prev[j] *= 1.0 - in[j] * in[j];
      delta = std::move(prev);
    }
  }
  const double inv = 1.0 / static_cast<double>(idx.size());
  if (grad) *grad *= inv;
  return total * inv;
}

Vector Mlp::stochastic_grad(const Vector& x, const Batch& batch) const {
  Vector g;
  loss_and_grad(x, batch.indices, &g);
  return g;
}

Vector Mlp::full_grad(const Vector& x) const {
  Vector g;
  loss_and_grad(x, all_indices(labels_.size()), &g);
  return g;
}

double Mlp::loss(const Vector& x) const {
  return loss_and_grad(x, all_indices(labels_.size()), nullptr);
}

Vector Mlp::initial_point() const {
  RngStream init = rng_.substream(kInitStream);
  Vector x(dimension());
  for (const ParamBlock& b : layout_.blocks()) {
    if (!b.is_matrix) continue;
    const double scale = init_scale_ / std::sqrt(static_cast<double>(b.cols));
    for (std::size_t i = 0; i < b.size(); ++i) x[b.offset + i] = scale * init.gaussian();
  }
  return x;
}

// ---------------------------------------------------------------------------

std::unique_ptr<GradientOracle> make_noisy_quadratic(std::size_t d, const Vector& spectrum,
                                                     double sigma, std::uint64_t seed) {
  if (spectrum.size() != d) throw std::invalid_argument("quadratic: spectrum length must equal d");
  QuadraticOptions o;
  o.spectrum = spectrum;
  o.sigma = sigma;
  o.seed = seed;
  return std::make_unique<NoisyQuadratic>(std::move(o));
}

std::unique_ptr<GradientOracle> make_noisy_quadratic(QuadraticOptions options) {
  return std::make_unique<NoisyQuadratic>(std::move(options));
}

std::unique_ptr<GradientOracle> make_logistic(std::size_t samples, std::size_t d,
                                              std::size_t batch_size, std::uint64_t seed) {
  LogisticOptions o;
  o.samples = samples;
  o.dim = d;
  o.batch_size = batch_size;
  o.seed = seed;
  return std::make_unique<Logistic>(o);
}

std::unique_ptr<GradientOracle> make_noisy_rosenbrock(std::size_t d, double sigma,
                                                      std::uint64_t seed) {
  return std::make_unique<NoisyRosenbrock>(RosenbrockOptions{d, sigma, seed});
}

std::unique_ptr<GradientOracle> make_mlp(const std::vector<std::size_t>& layers,
                                         std::size_t samples, std::size_t batch_size,
                                         std::uint64_t seed) {
  MlpOptions o;
  o.layers = layers;
  o.samples = samples;
  o.batch_size = batch_size;
  o.seed = seed;
  return std::make_unique<Mlp>(std::move(o));
}

Vector finite_diff_grad(const GradientOracle& oracle, const Vector& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
  Vector g(x.size());
  Vector probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = oracle.loss(probe);
    probe[i] = x[i] - h;
    const double down = oracle.loss(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(const Vector& a, const Vector& b) {
  const double denom = std::max(l2_norm(b), std::numeric_limits<double>::min());
  return l2_norm(a - b) / denom;
}

}  // namespace mars
