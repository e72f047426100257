#include "defnet/latent_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <json.hpp>

#include "defnet/errors.hpp"
#include "defnet/io.hpp"

namespace defnet {

using nlohmann::json;

namespace {

void require_vae(const EncoderModel& m) {
  if (m.variant != EncoderVariant::LinearVae) {
    throw UnsupportedVariant("loss terms need the linear-vae variant, model is " +
                             to_string(m.variant));
  }
}

Eigen::VectorXd mu_of(const EncoderModel& m, const Eigen::VectorXd& x) {
  return m.mu_w * x + m.mu_b;
}

// Visits every linear-VAE parameter in a fixed order.
template <typename Model, typename Fn>
void for_each_param(Model& m, Fn&& fn) {
  for (Eigen::Index i = 0; i < m.mu_w.size(); ++i) fn(m.mu_w.data()[i]);
  for (Eigen::Index i = 0; i < m.mu_b.size(); ++i) fn(m.mu_b.data()[i]);
  for (Eigen::Index i = 0; i < m.logvar_w.size(); ++i) fn(m.logvar_w.data()[i]);
  for (Eigen::Index i = 0; i < m.logvar_b.size(); ++i) fn(m.logvar_b.data()[i]);
  for (Eigen::Index i = 0; i < m.dec_w.size(); ++i) fn(m.dec_w.data()[i]);
  for (Eigen::Index i = 0; i < m.dec_b.size(); ++i) fn(m.dec_b.data()[i]);
}

VaeGradient zero_gradient(const EncoderModel& m) {
  VaeGradient g;
  g.mu_w = Eigen::MatrixXd::Zero(m.mu_w.rows(), m.mu_w.cols());
  g.mu_b = Eigen::VectorXd::Zero(m.mu_b.size());
  g.logvar_w = Eigen::MatrixXd::Zero(m.logvar_w.rows(), m.logvar_w.cols());
  g.logvar_b = Eigen::VectorXd::Zero(m.logvar_b.size());
  g.dec_w = Eigen::MatrixXd::Zero(m.dec_w.rows(), m.dec_w.cols());
  g.dec_b = Eigen::VectorXd::Zero(m.dec_b.size());
  return g;
}

// Adds weight * dL_vae(x)/dtheta into g.
void accumulate_vae(const EncoderModel& m, const Eigen::VectorXd& x, double weight,
                    VaeGradient& g) {
  const Eigen::VectorXd mu = mu_of(m, x);
  const Eigen::VectorXd lv = m.logvar_w * x + m.logvar_b;
  const Eigen::VectorXd s = lv.array().exp();
  const Eigen::VectorXd r = x - m.dec_w * mu - m.dec_b;
  const Eigen::VectorXd c = m.dec_w.colwise().squaredNorm().transpose();

  const Eigen::VectorXd g_mu = -2.0 * m.dec_w.transpose() * r + mu;
  const Eigen::VectorXd g_lv = (s.array() * c.array() + 0.5 * (s.array() - 1.0)).matrix();

  g.mu_w.noalias() += weight * g_mu * x.transpose();
  g.mu_b += weight * g_mu;
  g.logvar_w.noalias() += weight * g_lv * x.transpose();
  g.logvar_b += weight * g_lv;
  g.dec_w.noalias() += weight * (-2.0 * r * mu.transpose());
  g.dec_w += weight * 2.0 * (m.dec_w * s.asDiagonal());
  g.dec_b += weight * (-2.0 * r);
}

void accumulate_action(const EncoderModel& m, const PairSample& p, double weight,
                       VaeGradient& g) {
  const Eigen::VectorXd delta = mu_of(m, p.x1) - mu_of(m, p.x2);
  Eigen::VectorXd g_mu1;
  if (p.a == 0) {
    g_mu1 = 2.0 * delta;
  } else {
    const double dist = delta.norm();
    if (dist >= m.margin || dist == 0.0) return;
    g_mu1 = (-2.0 * (m.margin - dist) / dist) * delta;
  }
  g.mu_w.noalias() += weight * g_mu1 * (p.x1 - p.x2).transpose();
  // bias contributions cancel: d(mu1 - mu2)/d(mu_b) = 0
}

}  // namespace

std::string to_string(EncoderVariant v) {
  return v == EncoderVariant::FittedPca ? "fitted-pca" : "linear-vae";
}

EncoderVariant encoder_variant_from_string(const std::string& name) {
  if (name == "fitted-pca") return EncoderVariant::FittedPca;
  if (name == "linear-vae") return EncoderVariant::LinearVae;
  throw UnsupportedVariant("unknown encoder variant '" + name + "'");
}

Eigen::VectorXd observation_features(const Observation& obs, const InputSpec& spec) {
  if (obs.resolution != spec.resolution || spec.downsample <= 0 ||
      spec.resolution % spec.downsample != 0) {
    throw ShapeMismatch("observation resolution " + std::to_string(obs.resolution) +
                        " does not match encoder input " +
                        std::to_string(spec.resolution) + "/" +
                        std::to_string(spec.downsample));
  }
  const int k = spec.downsample;
  const int block = spec.resolution / k;
  const double inv = 1.0 / (block * block);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(spec.dim());
  for (int r = 0; r < spec.resolution; ++r) {
    for (int c = 0; c < spec.resolution; ++c) {
      const std::size_t px = obs.index(r, c);
      const int cell = (r / block) * k + (c / block);
      x[cell] += inv * obs.occupancy[px];
      x[k * k + cell] += inv * std::log2(1.0 + obs.height[px]);
    }
  }
  return x;
}

EncoderModel fit_pca(const Eigen::MatrixXd& rows_in, const InputSpec& spec, int latent_dim) {
  if (rows_in.rows() == 0) throw EmptyDataset("cannot fit an encoder on no observations");
  if (latent_dim < 1 || latent_dim > spec.dim()) {
    throw ShapeMismatch("latent dimension " + std::to_string(latent_dim) +
                        " exceeds input dimension " + std::to_string(spec.dim()));
  }
  // Fit on distinct rows so repeated observations do not reweight the axes.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < rows_in.rows(); ++i) {
    bool dup = false;
    for (Eigen::Index j : keep) {
      if (rows_in.row(i) == rows_in.row(j)) {
        dup = true;
        break;
      }
    }
    if (!dup) keep.push_back(i);
  }
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(keep.size()), rows_in.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = rows_in.row(keep[i]);
  }

  EncoderModel m;
  m.variant = EncoderVariant::FittedPca;
  m.input = spec;
  m.latent_dim = latent_dim;
  m.mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - m.mean.transpose();
  m.components = Eigen::MatrixXd::Zero(latent_dim, spec.dim());
  m.variances = Eigen::VectorXd::Zero(latent_dim);

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const Eigen::MatrixXd& v = svd.matrixV();
  const Eigen::Index usable = std::min<Eigen::Index>(latent_dim, sv.size());
  for (Eigen::Index k = 0; k < usable; ++k) {
    Eigen::VectorXd axis = v.col(k);
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis[arg] < 0.0) axis = -axis;
    m.components.row(k) = axis.transpose();
    m.variances[k] = sv[k] * sv[k] / static_cast<double>(rows.rows());
  }
  return m;
}

std::vector<PairSample> pair_samples(const Dataset& d, const InputSpec& spec) {
  std::vector<PairSample> out;
  out.reserve(d.tuples.size());
  for (const auto& t : d.tuples) {
    out.push_back({observation_features(t.obs0, spec), observation_features(t.obs1, spec), t.a});
  }
  return out;
}

EncoderModel fit_encoder(const Dataset& d, EncoderVariant variant, const EncoderHyper& hyper) {
  if (d.tuples.empty()) throw EmptyDataset("cannot fit an encoder on an empty dataset");
  const InputSpec spec{d.resolution, hyper.downsample};
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(2 * d.tuples.size()), spec.dim());
  for (std::size_t i = 0; i < d.tuples.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(2 * i)) =
        observation_features(d.tuples[i].obs0, spec).transpose();
    rows.row(static_cast<Eigen::Index>(2 * i + 1)) =
        observation_features(d.tuples[i].obs1, spec).transpose();
  }
  EncoderModel pca = fit_pca(rows, spec, hyper.latent_dim);
  pca.alpha = hyper.alpha;
  double margin = hyper.margin;
  if (margin <= 0.0) {
    const EncodedDataset warm = encode_dataset(pca, d);
    const double med = median_pair_distance(warm, 0);
    margin = med > 0.0 ? 2.0 * med : 1.0;
  }
  pca.margin = margin;
  if (variant == EncoderVariant::FittedPca) return pca;

  EncoderModel vae = init_linear_vae(spec, hyper.latent_dim, hyper.alpha, margin,
                                     hyper.init_scale, hyper.seed);
  const auto batch = pair_samples(d, spec);
  train_linear_vae(vae, batch, hyper.epochs, hyper.learning_rate);
  return vae;
}

LatentVector encode_features(const EncoderModel& m, const Eigen::VectorXd& x) {
  if (x.size() != m.input.dim()) throw ShapeMismatch("feature vector has wrong length");
  if (m.variant == EncoderVariant::FittedPca) return m.components * (x - m.mean);
  return mu_of(m, x);
}

LatentVector encode(const EncoderModel& m, const Observation& obs) {
  return encode_features(m, observation_features(obs, m.input));
}

std::size_t nearest_bank_index(const LatentVector& z, std::span<const BankEntry> bank) {
  if (bank.empty()) throw EmptyBank("decode needs a nonempty state bank");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const double d = (bank[i].z - z).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

const ClothState& decode(const EncoderModel&, const LatentVector& z,
                         std::span<const BankEntry> bank) {
  return bank[nearest_bank_index(z, bank)].state;
}

EncodedDataset encode_dataset(const EncoderModel& m, const Dataset& d) {
  EncodedDataset out;
  out.tuples.reserve(d.tuples.size());
  for (std::size_t i = 0; i < d.tuples.size(); ++i) {
    const auto& t = d.tuples[i];
    out.tuples.push_back({encode(m, t.obs0), encode(m, t.obs1), t.a, t.u, i});
  }
  return out;
}

std::vector<BankEntry> make_bank(const Dataset& d, const EncodedDataset& enc) {
  std::vector<BankEntry> bank;
  bank.reserve(2 * enc.tuples.size());
  for (const auto& lt : enc.tuples) {
    bank.push_back({lt.z0, d.tuples[lt.source].state0});
    bank.push_back({lt.z1, d.tuples[lt.source].state1});
  }
  return bank;
}

double median_pair_distance(const EncodedDataset& enc, int a) {
  std::vector<double> dists;
  for (const auto& t : enc.tuples) {
    if (t.a == a) dists.push_back((t.z0 - t.z1).norm());
  }
  if (dists.empty()) return 0.0;
  std::sort(dists.begin(), dists.end());
  const std::size_t n = dists.size();
  return n % 2 == 1 ? dists[n / 2] : 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
}

double vae_term(const EncoderModel& m, const Eigen::VectorXd& x) {
  require_vae(m);
  const Eigen::VectorXd mu = mu_of(m, x);
  const Eigen::VectorXd lv = m.logvar_w * x + m.logvar_b;
  const Eigen::VectorXd s = lv.array().exp();
  const Eigen::VectorXd r = x - m.dec_w * mu - m.dec_b;
  const Eigen::VectorXd c = m.dec_w.colwise().squaredNorm().transpose();
  const double recon = r.squaredNorm() + s.dot(c);
  const double kl = 0.5 * (mu.squaredNorm() + s.sum() - lv.sum() - static_cast<double>(lv.size()));
  return recon + kl;
}

double action_term(const EncoderModel& m, const Eigen::VectorXd& x1,
                   const Eigen::VectorXd& x2, int a) {
  require_vae(m);
  const double dist = (mu_of(m, x1) - mu_of(m, x2)).norm();
  if (a == 0) return dist * dist;
  const double gap = std::max(0.0, m.margin - dist);
  return gap * gap;
}

double loss_vae(const EncoderModel& m, const Observation& obs) {
  return vae_term(m, observation_features(obs, m.input));
}

double loss_action(const EncoderModel& m, const Observation& obs1,
                   const Observation& obs2, int a) {
  require_vae(m);
  return action_term(m, observation_features(obs1, m.input),
                     observation_features(obs2, m.input), a);
}

double loss_combined(const EncoderModel& m, const Observation& obs1,
                     const Observation& obs2, int a) {
  require_vae(m);
  const Eigen::VectorXd x1 = observation_features(obs1, m.input);
  const Eigen::VectorXd x2 = observation_features(obs2, m.input);
  return 0.5 * (vae_term(m, x1) + vae_term(m, x2)) + m.alpha * action_term(m, x1, x2, a);
}

double batch_loss(const EncoderModel& m, std::span<const PairSample> batch) {
  require_vae(m);
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : batch) {
    total += 0.5 * (vae_term(m, p.x1) + vae_term(m, p.x2)) +
             m.alpha * action_term(m, p.x1, p.x2, p.a);
  }
  return total / static_cast<double>(batch.size());
}

double VaeGradient::max_abs() const {
  return std::max({mu_w.cwiseAbs().maxCoeff(), mu_b.cwiseAbs().maxCoeff(),
                   logvar_w.cwiseAbs().maxCoeff(), logvar_b.cwiseAbs().maxCoeff(),
                   dec_w.cwiseAbs().maxCoeff(), dec_b.cwiseAbs().maxCoeff()});
}

VaeGradient batch_gradient(const EncoderModel& m, std::span<const PairSample> batch,
                           LossTerms terms) {
  require_vae(m);
  VaeGradient g = zero_gradient(m);
  if (batch.empty()) return g;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& p : batch) {
    if (terms != LossTerms::ActionOnly) {
      accumulate_vae(m, p.x1, 0.5 * w, g);
      accumulate_vae(m, p.x2, 0.5 * w, g);
    }
    if (terms != LossTerms::VaeOnly && m.alpha != 0.0) {
      accumulate_action(m, p, m.alpha * w, g);
    }
  }
  return g;
}

double gradient_check(const EncoderModel& m, std::span<const PairSample> batch) {
  const VaeGradient g = batch_gradient(m, batch);
  std::vector<double> analytic;
  for_each_param(g, [&analytic](const double& v) { analytic.push_back(v); });

  constexpr double kStep = 1e-5;
  EncoderModel probe = m;
  std::vector<double*> params;
  for_each_param(probe, [&params](double& v) { params.push_back(&v); });

  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + kStep;
    const double up = batch_loss(probe, batch);
    *params[i] = saved - kStep;
    const double down = batch_loss(probe, batch);
    *params[i] = saved;
    const double fd = (up - down) / (2.0 * kStep);
    const double denom = std::max({std::abs(analytic[i]), std::abs(fd), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
  }
  return worst;
}

EncoderModel init_linear_vae(const InputSpec& spec, int latent_dim, double alpha,
                             double margin, double init_scale, std::uint64_t seed) {
  if (latent_dim < 1 || latent_dim > spec.dim()) {
    throw ShapeMismatch("latent dimension exceeds input dimension");
  }
  EncoderModel m;
  m.variant = EncoderVariant::LinearVae;
  m.input = spec;
  m.latent_dim = latent_dim;
  m.alpha = alpha;
  m.margin = margin;
  std::mt19937_64 rng(mix_seed(seed));
  std::normal_distribution<double> gauss(0.0, init_scale);
  auto fill = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = gauss(rng);
    return w;
  };
  m.mu_w = fill(latent_dim, spec.dim());
  m.mu_b = Eigen::VectorXd::Zero(latent_dim);
  m.logvar_w = fill(latent_dim, spec.dim());
  m.logvar_b = Eigen::VectorXd::Zero(latent_dim);
  m.dec_w = fill(spec.dim(), latent_dim);
  m.dec_b = Eigen::VectorXd::Zero(spec.dim());
  return m;
}

void train_linear_vae(EncoderModel& m, std::span<const PairSample> batch, int epochs,
                      double learning_rate) {
  require_vae(m);
  for (int e = 0; e < epochs; ++e) {
    m.loss_history.push_back(batch_loss(m, batch));
    const VaeGradient g = batch_gradient(m, batch);
    m.mu_w -= learning_rate * g.mu_w;
    m.mu_b -= learning_rate * g.mu_b;
    m.logvar_w -= learning_rate * g.logvar_w;
    m.logvar_b -= learning_rate * g.logvar_b;
    m.dec_w -= learning_rate * g.dec_w;
    m.dec_b -= learning_rate * g.dec_b;
  }
  m.loss_history.push_back(batch_loss(m, batch));
}

// ---- persistence ----------------------------------------------------------

namespace {

json matrix_to_json(const Eigen::MatrixXd& a) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(a.size()));
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) data.push_back(a(r, c));
  }
  return {{"rows", a.rows()}, {"cols", a.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw FormatError("matrix payload has wrong length");
  }
  Eigen::MatrixXd a(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) a(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  }
  return a;
}

json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

}  // namespace

std::string serialize_model(const EncoderModel& m) {
  json j{{"version", kModelVersion},
         {"variant", to_string(m.variant)},
         {"resolution", m.input.resolution},
         {"downsample", m.input.downsample},
         {"latent_dim", m.latent_dim},
         {"alpha", m.alpha},
         {"margin", m.margin}};
  if (m.variant == EncoderVariant::FittedPca) {
    j["mean"] = vector_to_json(m.mean);
    j["components"] = matrix_to_json(m.components);
    j["variances"] = vector_to_json(m.variances);
  } else {
    j["mu_w"] = matrix_to_json(m.mu_w);
    j["mu_b"] = vector_to_json(m.mu_b);
    j["logvar_w"] = matrix_to_json(m.logvar_w);
    j["logvar_b"] = vector_to_json(m.logvar_b);
    j["dec_w"] = matrix_to_json(m.dec_w);
    j["dec_b"] = vector_to_json(m.dec_b);
    j["loss_history"] = m.loss_history;
  }
  return j.dump() + "\n";
}

EncoderModel parse_model(const std::string& text) {
  try {
    const json j = json::parse(text);
    const int version = j.at("version").get<int>();
    if (version != kModelVersion) {
      throw FormatError("unsupported model version " + std::to_string(version));
    }
    EncoderModel m;
    m.variant = encoder_variant_from_string(j.at("variant").get<std::string>());
    m.input = {j.at("resolution").get<int>(), j.at("downsample").get<int>()};
    m.latent_dim = j.at("latent_dim").get<int>();
    m.alpha = j.at("alpha").get<double>();
    m.margin = j.at("margin").get<double>();
    if (m.variant == EncoderVariant::FittedPca) {
      m.mean = vector_from_json(j.at("mean"));
      m.components = matrix_from_json(j.at("components"));
      m.variances = vector_from_json(j.at("variances"));
      if (m.components.rows() != m.latent_dim || m.components.cols() != m.input.dim() ||
          m.mean.size() != m.input.dim()) {
        throw FormatError("model matrices do not match the declared shapes");
      }
    } else {
      m.mu_w = matrix_from_json(j.at("mu_w"));
      m.mu_b = vector_from_json(j.at("mu_b"));
      m.logvar_w = matrix_from_json(j.at("logvar_w"));
      m.logvar_b = vector_from_json(j.at("logvar_b"));
      m.dec_w = matrix_from_json(j.at("dec_w"));
      m.dec_b = vector_from_json(j.at("dec_b"));
      m.loss_history = j.at("loss_history").get<std::vector<double>>();
      if (m.mu_w.rows() != m.latent_dim || m.mu_w.cols() != m.input.dim()) {
        throw FormatError("model matrices do not match the declared shapes");
      }
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad model file: ") + e.what());
  }
}

void save_model(const EncoderModel& m, const std::string& path) {
  write_file_atomic(path, serialize_model(m));
}

EncoderModel load_model(const std::string& path) { return parse_model(read_file(path)); }

}  // namespace defnet
