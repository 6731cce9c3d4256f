#pragma once

#include <array>
#include <cstring>
#include <span>
#include <tuple>
#include <cmath>
#include <cstdint>
#include <functional>
#ifdef __GLIBC__
#include <malloc.h>
#endif
#include <numeric>
#include <string>
#include <vector>

#include "qvae/binio.hpp"
#include "qvae/dataset.hpp"
#include "qvae/error.hpp"
#include "qvae/mlp.hpp"
#include "qvae/povm.hpp"
#include "qvae/rng.hpp"
#include "qvae/sampler.hpp"

namespace qvae {

/// Affine map of the field onto the network input, (h - center) / halfwidth.
struct FieldScaling {
  double center = 1.0;
  double halfwidth = 1.0;
  double operator()(double h) const { return (h - center) / halfwidth; }
  bool operator==(const FieldScaling&) const = default;
};

/// Conditional VAE over N four-outcome sites with N latent variables.
/// Encoder: [one-hot x (4N), h'] -> [mu (N), xi (N)] with sigma = exp(xi/2).
/// Decoder: [z (N), h'] -> 4N logits, log-softmax per site.
struct CvaeModel {
  std::size_t n_sites = 0;
  Mlp encoder;
  Mlp decoder;
  FieldScaling scaling;
  std::uint64_t seed = 0;
  std::vector<double> loss_history;

  std::vector<std::size_t> hidden() const {
    return {encoder.widths.begin() + 1, encoder.widths.end() - 1};
  }
};

inline CvaeModel make_cvae(std::size_t n_sites, const std::vector<std::size_t>& hidden, Activation act,
                           FieldScaling scaling, std::uint64_t seed) {
  if (n_sites < 1) throw ValidationError("model needs at least one site");
  if (!(scaling.halfwidth > 0)) throw ValidationError("field halfwidth must be positive");
  CvaeModel m;
  m.n_sites = n_sites;
  m.scaling = scaling;
  m.seed = seed;
  std::vector<std::size_t> enc{4 * n_sites + 1}, dec{n_sites + 1};
  enc.insert(enc.end(), hidden.begin(), hidden.end());
  dec.insert(dec.end(), hidden.begin(), hidden.end());
  enc.push_back(2 * n_sites);
  dec.push_back(4 * n_sites);
  Rng rng(derive_seed(seed, 0));
  m.encoder = init_mlp(enc, act, rng);
  m.decoder = init_mlp(dec, act, rng);
  return m;
}

namespace detail {

// Row-wise log-softmax over consecutive blocks of four columns.
inline Matrix block_log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r)
    for (Eigen::Index c = 0; c < logits.cols(); c += 4) {
      const double mx = logits.row(r).segment<4>(c).maxCoeff();
      double s = 0;
      for (int j = 0; j < 4; ++j) s += std::exp(logits(r, c + j) - mx);
      const double lse = mx + std::log(s);
      for (int j = 0; j < 4; ++j) out(r, c + j) = logits(r, c + j) - lse;
    }
  return out;
}

inline Matrix encoder_input(const CvaeModel& m, const Samples& s, const std::vector<std::size_t>& rows,
                            const std::vector<double>& fields) {
  const std::size_t n = m.n_sites;
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(4 * n + 1));
  for (std::size_t b = 0; b < rows.size(); ++b) {
    for (std::size_t i = 0; i < n; ++i) x(b, 4 * i + s(rows[b], i)) = 1.0;
    x(b, 4 * n) = m.scaling(fields[b]);
  }
  return x;
}

inline Matrix decoder_input(const CvaeModel& m, const Matrix& z, double h) {
  Matrix in(z.rows(), z.cols() + 1);
  in.leftCols(z.cols()) = z;
  in.col(z.cols()).setConstant(m.scaling(h));
  return in;
}

}  // namespace detail

/// Posterior parameters for one record.
inline std::pair<Vector, Vector> encode(const CvaeModel& m, std::span<const std::uint8_t> record, double h) {
  if (record.size() != m.n_sites) throw DimensionError("record length does not match the model");
  Vector x = Vector::Zero(static_cast<Eigen::Index>(4 * m.n_sites + 1));
  for (std::size_t i = 0; i < m.n_sites; ++i) {
    if (record[i] > 3) throw ValidationError("outcome symbol out of range");
    x(4 * i + record[i]) = 1.0;
  }
  x(4 * m.n_sites) = m.scaling(h);
  const Vector out = mlp_forward_one(m.encoder, x);
  const auto n = static_cast<Eigen::Index>(m.n_sites);
  return {out.head(n), out.tail(n)};
}

/// Log-probability matrix (N x 4) of the decoder at latent point z.
inline Matrix decode_log_probs(const CvaeModel& m, const Vector& z, double h) {
  if (static_cast<std::size_t>(z.size()) != m.n_sites) throw DimensionError("latent vector length does not match the model");
  Matrix in(1, z.size() + 1);
  in.leftCols(z.size()) = z.transpose();
  in(0, z.size()) = m.scaling(h);
  const Matrix lp = detail::block_log_softmax(mlp_forward(m.decoder, in));
  Matrix out(m.n_sites, 4);
  for (std::size_t i = 0; i < m.n_sites; ++i)
    for (int j = 0; j < 4; ++j) out(i, j) = lp(0, 4 * i + j);
  return out;
}

struct ElboResult {
  double value = 0.0;           // summed over the batch
  double reconstruction = 0.0;  // sum x . Pi
  double regularizer = 0.0;     // 1/2 sum (xi - e^xi - mu^2 + 1)
  MlpGrads encoder_grad;        // d value / d encoder parameters
  MlpGrads decoder_grad;
};

/// Single-draw ELBO of a batch: rows of `eps` are the standard normal draws
/// for the matching records, z = exp(xi/2) * eps + mu.
inline ElboResult elbo(const CvaeModel& m, const Samples& s, const std::vector<std::size_t>& rows,
                       const std::vector<double>& fields, const Matrix& eps, bool with_grads = true,
                       std::size_t batch_index = 0) {
  const std::size_t n = m.n_sites;
  const auto bsz = static_cast<Eigen::Index>(rows.size());
  const auto ni = static_cast<Eigen::Index>(n);
  if (s.n_sites != n) throw DimensionError("records do not match the model chain length");
  if (fields.size() != rows.size() || eps.rows() != bsz || eps.cols() != ni)
    throw DimensionError("batch, field and noise sizes disagree");

  MlpTape enc_tape, dec_tape;
  const Matrix x = detail::encoder_input(m, s, rows, fields);
  const Matrix enc_out = mlp_forward(m.encoder, x, with_grads ? &enc_tape : nullptr);
  const Matrix mu = enc_out.leftCols(ni), xi = enc_out.rightCols(ni);
  const Matrix sigma = (0.5 * xi.array()).exp().matrix();
  const Matrix z = mu + sigma.cwiseProduct(eps);
  Matrix dec_in(bsz, ni + 1);
  dec_in.leftCols(ni) = z;
  for (Eigen::Index b = 0; b < bsz; ++b) dec_in(b, ni) = m.scaling(fields[b]);
  const Matrix logits = mlp_forward(m.decoder, dec_in, with_grads ? &dec_tape : nullptr);
  const Matrix lp = detail::block_log_softmax(logits);

  ElboResult r;
  for (Eigen::Index b = 0; b < bsz; ++b)
    for (std::size_t i = 0; i < n; ++i) r.reconstruction += lp(b, 4 * i + s(rows[b], i));
  r.regularizer = 0.5 * (xi.array() - xi.array().exp() - mu.array().square() + 1.0).sum();
  r.value = r.reconstruction + r.regularizer;
  if (!std::isfinite(r.value)) throw NumericalError("non-finite ELBO in batch " + std::to_string(batch_index));
  if (!with_grads) return r;

  // d/dlogits of sum x . log_softmax = x - softmax.
  Matrix dlogits = -lp.array().exp().matrix();
  for (Eigen::Index b = 0; b < bsz; ++b)
    for (std::size_t i = 0; i < n; ++i) dlogits(b, 4 * i + s(rows[b], i)) += 1.0;
  Matrix ddec_in;
  r.decoder_grad = mlp_backward(dec_tape, dlogits, &ddec_in);
  const Matrix dz = ddec_in.leftCols(ni);
  Matrix denc(bsz, 2 * ni);
  denc.leftCols(ni) = dz - mu;
  denc.rightCols(ni) = (dz.array() * eps.array() * 0.5 * sigma.array() + 0.5 * (1.0 - xi.array().exp())).matrix();
  r.encoder_grad = mlp_backward(enc_tape, denc);
  return r;
}

struct TrainConfig {
  std::size_t batch_size = 100000;
  std::size_t epochs = 750;
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  std::size_t mc_samples = 1;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden{256, 256};
  Activation activation = Activation::relu;
  FieldScaling scaling;

  void validate() const {
    if (batch_size < 1 || epochs < 1 || mc_samples < 1) throw ValidationError("training counts must be >= 1");
    if (!(lr > 0)) throw ValidationError("learning rate must be positive");
    if (hidden.empty()) throw ValidationError("at least one hidden layer is required");
    for (auto w : hidden)
      if (w < 1) throw ValidationError("hidden widths must be positive");
  }
};

/// Called after each epoch with (epoch index, mean ELBO per record, model).
using EpochCallback = std::function<void(std::size_t, double, const CvaeModel&)>;

namespace detail {

// Batch buffers are megabytes each; keep glibc from returning them to the
// kernel between steps, which otherwise dominates the run time.
inline void retain_large_allocations() {
#ifdef __GLIBC__
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace detail

/// Mini-batch ascent on the ELBO. Records from all field groups are shuffled
/// together every epoch; an epoch is one pass over the full dataset and the
/// loss history holds the mean per-record ELBO of each epoch.
inline CvaeModel train(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  detail::retain_large_allocations();
  if (data.total_records() == 0) throw ValidationError("training set is empty");
  CvaeModel m = make_cvae(data.n_sites, cfg.hidden, cfg.activation, cfg.scaling, cfg.seed);

  // One flat record set with a per-record field.
  Samples all(data.n_sites, data.total_records());
  std::vector<double> field_of(all.count());
  std::size_t at = 0;
  for (const auto& g : data.groups) {
    std::copy(g.samples.symbols.begin(), g.samples.symbols.end(), all.symbols.begin() + at * data.n_sites);
    std::fill(field_of.begin() + at, field_of.begin() + at + g.samples.count(), g.field);
    at += g.samples.count();
  }
  const std::size_t total = all.count();
  const auto ni = static_cast<Eigen::Index>(data.n_sites);

  AdamState enc_opt = AdamState::fresh(m.encoder), dec_opt = AdamState::fresh(m.decoder);
  for (auto* o : {&enc_opt, &dec_opt}) {
    o->lr = cfg.lr;
    o->beta1 = cfg.beta1;
    o->beta2 = cfg.beta2;
    o->epsilon = cfg.epsilon;
  }
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::size_t batch_counter = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, epoch + 1));
    for (std::size_t i = total; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double epoch_sum = 0;
    for (std::size_t start = 0; start < total; start += cfg.batch_size) {
      const std::size_t end = std::min(total, start + cfg.batch_size);
      std::vector<std::size_t> rows(order.begin() + start, order.begin() + end);
      std::vector<double> fields(rows.size());
      for (std::size_t b = 0; b < rows.size(); ++b) fields[b] = field_of[rows[b]];
      MlpGrads ge = MlpGrads::zeros_like(m.encoder), gd = MlpGrads::zeros_like(m.decoder);
      double value = 0;
      for (std::size_t rep = 0; rep < cfg.mc_samples; ++rep) {
        Matrix eps(static_cast<Eigen::Index>(rows.size()), ni);
        for (Eigen::Index b = 0; b < eps.rows(); ++b)
          for (Eigen::Index i = 0; i < ni; ++i) eps(b, i) = rng.normal();
        ElboResult r = elbo(m, all, rows, fields, eps, true, batch_counter);
        value += r.value;
        ge += r.encoder_grad;
        gd += r.decoder_grad;
      }
      // Descend on -ELBO per record.
      const double scale = -1.0 / static_cast<double>(rows.size() * cfg.mc_samples);
      ge *= scale;
      gd *= scale;
      try {
        adam_step(m.encoder, ge, enc_opt);
        adam_step(m.decoder, gd, dec_opt);
      } catch (const Error& e) {
        rethrow_with_context(e, "batch " + std::to_string(batch_counter));
      }
      epoch_sum += value / static_cast<double>(cfg.mc_samples);
      ++batch_counter;
    }
    m.loss_history.push_back(epoch_sum / static_cast<double>(total));
    if (on_epoch) on_epoch(epoch, m.loss_history.back(), m);
  }
  return m;
}

/// Shared randomness for generation and relaxed sampling: per draw a latent
/// vector (N) and a Gumbel matrix (N x 4, flattened row-major).
struct DrawNoise {
  Matrix z;  // k x N
  Matrix g;  // k x 4N
};

inline DrawNoise draw_noise(std::size_t n_sites, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  DrawNoise d{Matrix(k, n_sites), Matrix(k, 4 * n_sites)};
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t i = 0; i < n_sites; ++i) d.z(r, i) = rng.normal();
    for (std::size_t c = 0; c < 4 * n_sites; ++c) d.g(r, c) = rng.gumbel();
  }
  return d;
}

namespace detail {

constexpr std::size_t draw_chunk = 4096;

inline Matrix decode_chunk(const CvaeModel& m, const Matrix& z, double h, MlpTape* tape = nullptr) {
  return mlp_forward(m.decoder, decoder_input(m, z, h), tape);
}

}  // namespace detail

/// Hard samples from shared noise: argmax(Pi + G) per site, which is an exact
/// categorical draw from exp(Pi).
inline Samples generate_from_noise(const CvaeModel& m, double h, const DrawNoise& noise) {
  const std::size_t k = static_cast<std::size_t>(noise.z.rows()), n = m.n_sites;
  Samples out(n, k);
  for (std::size_t start = 0; start < k; start += detail::draw_chunk) {
    const std::size_t len = std::min(detail::draw_chunk, k - start);
    const Matrix lp = detail::block_log_softmax(detail::decode_chunk(m, noise.z.middleRows(start, len), h));
    for (std::size_t r = 0; r < len; ++r)
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double bv = -INFINITY;
        for (std::size_t j = 0; j < 4; ++j) {
          const double v = lp(r, 4 * i + j) + noise.g(start + r, 4 * i + j);
          if (v > bv) {
            bv = v;
            best = j;
          }
        }
        out.symbols[(start + r) * n + i] = static_cast<std::uint8_t>(best);
      }
  }
  return out;
}

/// k records from the model at field h: z ~ N(0, I), then one categorical
/// draw per site from the decoder probabilities.
inline Samples generate(const CvaeModel& m, double h, std::size_t k, std::uint64_t seed) {
  Samples out(m.n_sites, 0);
  for (std::size_t start = 0; start < k; start += 65536) {
    const std::size_t len = std::min<std::size_t>(65536, k - start);
    const DrawNoise noise = draw_noise(m.n_sites, len, derive_seed(seed, start / 65536));
    const Samples part = generate_from_noise(m, h, noise);
    out.symbols.insert(out.symbols.end(), part.symbols.begin(), part.symbols.end());
  }
  return out;
}

/// softmax((Pi + G) / T) per site for one draw (N x 4).
inline Matrix gumbel_soft_sample(const CvaeModel& m, double h, double temperature, const Vector& z, const Matrix& gumbel) {
  if (!(temperature > 0)) throw ValidationError("Gumbel-softmax temperature must be positive");
  if (gumbel.rows() != static_cast<Eigen::Index>(m.n_sites) || gumbel.cols() != 4)
    throw DimensionError("Gumbel noise must be N x 4");
  const Matrix lp = decode_log_probs(m, z, h);
  Matrix y = (lp + gumbel) / temperature;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double mx = y.row(i).maxCoeff();
    y.row(i) = (y.row(i).array() - mx).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

/// Per-draw soft and hard estimates of (1/N) sum_i <O_i> and the backprop
/// derivative of the soft estimate with respect to h.
struct DrawEstimates {
  std::vector<double> soft, hard, dsoft_dh;
};

inline DrawEstimates draw_estimates(const CvaeModel& m, double h, const ObservableCoeffs& c, double temperature,
                                    const DrawNoise& noise, bool with_derivative) {
  if (!(temperature > 0)) throw ValidationError("Gumbel-softmax temperature must be positive");
  const std::size_t k = static_cast<std::size_t>(noise.z.rows()), n = m.n_sites;
  const double inv_n = 1.0 / static_cast<double>(n);
  DrawEstimates out;
  out.soft.resize(k);
  out.hard.resize(k);
  if (with_derivative) out.dsoft_dh.resize(k);
  for (std::size_t start = 0; start < k; start += detail::draw_chunk) {
    const std::size_t len = std::min(detail::draw_chunk, k - start);
    MlpTape tape;
    const Matrix logits = detail::decode_chunk(m, noise.z.middleRows(start, len), h, with_derivative ? &tape : nullptr);
    const Matrix lp = detail::block_log_softmax(logits);
    Matrix dlogits = Matrix::Zero(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(4 * n));
    for (std::size_t r = 0; r < len; ++r) {
      double soft = 0, hard = 0;
      for (std::size_t i = 0; i < n; ++i) {
        std::array<double, 4> y{}, sm{};
        double mx = -INFINITY;
        std::size_t best = 0;
        for (std::size_t j = 0; j < 4; ++j) {
          y[j] = (lp(r, 4 * i + j) + noise.g(start + r, 4 * i + j)) / temperature;
          if (y[j] > mx) {
            mx = y[j];
            best = j;
          }
        }
        double s = 0;
        for (std::size_t j = 0; j < 4; ++j) s += (sm[j] = std::exp(y[j] - mx));
        double mean_b = 0;
        for (std::size_t j = 0; j < 4; ++j) mean_b += (sm[j] /= s) * c.b[j];
        soft += mean_b;
        hard += c.b[best];
        if (with_derivative) {
          // d soft / d Pi_j = S_j (b_j - <b>_S) / (N T); then through log-softmax.
          std::array<double, 4> dpi{};
          double dsum = 0;
          for (std::size_t j = 0; j < 4; ++j) dsum += (dpi[j] = sm[j] * (c.b[j] - mean_b) * inv_n / temperature);
          for (std::size_t j = 0; j < 4; ++j) dlogits(r, 4 * i + j) = dpi[j] - std::exp(lp(r, 4 * i + j)) * dsum;
        }
      }
      out.soft[start + r] = soft * inv_n;
      out.hard[start + r] = hard * inv_n;
    }
    if (with_derivative) {
      Matrix din;
      mlp_backward(tape, dlogits, &din);
      for (std::size_t r = 0; r < len; ++r) out.dsoft_dh[start + r] = din(r, n) / m.scaling.halfwidth;
    }
  }
  return out;
}

struct SusceptibilityResult {
  double chi = 0.0, chi_error = 0.0;          // backprop through the relaxed samples
  double central = 0.0, central_error = 0.0;  // central difference of hard samples
  double soft = 0.0, soft_error = 0.0;        // relaxed magnetization at h
  double hard = 0.0, hard_error = 0.0;        // hard magnetization at h
  std::size_t draws = 0;
};

namespace detail {

inline std::pair<double, double> mean_and_error(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

}  // namespace detail

/// chi = d mu_O / dh by reverse-mode differentiation of the relaxed-sample
/// estimate, with the central difference (step `step`) of the hard-sample
/// estimate on the same noise for comparison.
inline SusceptibilityResult susceptibility(const CvaeModel& m, double h, const ObservableCoeffs& c, std::size_t k,
                                           double temperature, std::uint64_t seed, double step = 0.05) {
  if (k < 1) throw ValidationError("susceptibility needs at least one draw");
  if (!(step > 0)) throw ValidationError("finite-difference step must be positive");
  const DrawNoise noise = draw_noise(m.n_sites, k, seed);
  const DrawEstimates at = draw_estimates(m, h, c, temperature, noise, true);
  const DrawEstimates up = draw_estimates(m, h + step, c, temperature, noise, false);
  const DrawEstimates down = draw_estimates(m, h - step, c, temperature, noise, false);
  std::vector<double> diff(k);
  for (std::size_t r = 0; r < k; ++r) diff[r] = (up.hard[r] - down.hard[r]) / (2 * step);
  SusceptibilityResult res;
  res.draws = k;
  std::tie(res.chi, res.chi_error) = detail::mean_and_error(at.dsoft_dh);
  std::tie(res.central, res.central_error) = detail::mean_and_error(diff);
  std::tie(res.soft, res.soft_error) = detail::mean_and_error(at.soft);
  std::tie(res.hard, res.hard_error) = detail::mean_and_error(at.hard);
  return res;
}

/// "CVA1", u32 version, u32 N, u32 hidden count, u32 hidden widths, activation
/// name, f64 center, f64 halfwidth, encoder then decoder parameters (f64),
/// u64 training seed, u32 history length, f64 history; trailing u64 FNV-1a of
/// everything before it.
inline std::vector<std::uint8_t> serialize_model(const CvaeModel& m) {
  binio::Writer w;
  w.magic("CVA1");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(m.n_sites));
  const auto hid = m.hidden();
  w.u32(static_cast<std::uint32_t>(hid.size()));
  for (auto x : hid) w.u32(static_cast<std::uint32_t>(x));
  w.str(activation_name(m.encoder.activation));
  w.f64(m.scaling.center);
  w.f64(m.scaling.halfwidth);
  for (const Mlp* net : {&m.encoder, &m.decoder}) {
    const auto p = mlp_parameters(*net);
    w.f64s(p.data(), p.size());
  }
  w.u64(m.seed);
  w.u32(static_cast<std::uint32_t>(m.loss_history.size()));
  w.f64s(m.loss_history.data(), m.loss_history.size());
  const auto& buf = w.buffer();
  w.u64(binio::fnv1a(buf.data(), buf.size()));
  return std::move(w.buffer());
}

inline CvaeModel deserialize_model(std::vector<std::uint8_t> bytes, const std::string& what = "model") {
  if (bytes.size() < 12) binio::Reader(bytes, what).fail("file too short for a model checkpoint");
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  const std::uint64_t actual = binio::fnv1a(bytes.data(), bytes.size() - 8);
  binio::Reader r(std::move(bytes), what);
  r.expect_magic("CVA1");
  if (stored != actual) r.fail("checksum mismatch (file altered or truncated)");
  const std::uint32_t version = r.u32();
  if (version != 1) r.fail("unsupported model version " + std::to_string(version));
  const std::size_t n = r.u32();
  const std::uint32_t nh = r.u32();
  if (n == 0 || n > 4096 || nh == 0 || nh > 64) r.fail("implausible architecture");
  std::vector<std::size_t> hidden(nh);
  for (auto& x : hidden) {
    x = r.u32();
    if (x == 0 || x > 65536) r.fail("implausible hidden width");
  }
  Activation act;
  try {
    act = parse_activation(r.str());
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  FieldScaling sc;
  sc.center = r.f64();
  sc.halfwidth = r.f64();
  if (!(sc.halfwidth > 0) || !std::isfinite(sc.center)) r.fail("invalid field normalization");
  CvaeModel m = make_cvae(n, hidden, act, sc, 0);
  for (Mlp* net : {&m.encoder, &m.decoder}) {
    std::vector<double> p(net->parameter_count());
    r.f64s(p.data(), p.size());
    set_mlp_parameters(*net, p);
  }
  m.seed = r.u64();
  const std::uint32_t nl = r.u32();
  if (nl > r.remaining() / 8) r.fail("loss history longer than the file");
  m.loss_history.resize(nl);
  r.f64s(m.loss_history.data(), nl);
  r.u64();
  r.expect_end();
  try {
    m.encoder.validate();
    m.decoder.validate();
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return m;
}

inline void save_model(const CvaeModel& m, const std::string& path) { binio::write_file(path, serialize_model(m)); }
inline CvaeModel load_model(const std::string& path) { return deserialize_model(binio::read_file(path), path); }

}  // namespace qvae
