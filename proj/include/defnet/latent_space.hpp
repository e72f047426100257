#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "defnet/cloth_sim.hpp"
#include "defnet/data_gen.hpp"

namespace defnet {

using LatentVector = Eigen::VectorXd;

enum class EncoderVariant { FittedPca, LinearVae };

std::string to_string(EncoderVariant v);
EncoderVariant encoder_variant_from_string(const std::string& name);

inline constexpr int kDefaultLatentDim = 12;
inline constexpr int kDefaultDownsample = 32;

/// Observations are average-pooled to downsample x downsample per channel
/// (occupancy, then height) and flattened.
struct InputSpec {
  int resolution = 64;
  int downsample = kDefaultDownsample;

  int dim() const { return 2 * downsample * downsample; }
  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

struct EncoderHyper {
  int latent_dim = kDefaultLatentDim;
  int downsample = kDefaultDownsample;
  double alpha = 1.0;
  /// Minimum latent distance for action pairs. Non-positive means "twice the
  /// median no-action distance of a warm-up PCA fit".
  double margin = 0.0;
  // Linear-VAE training.
  int epochs = 200;
  double learning_rate = 1e-4;
  double init_scale = 0.01;
  std::uint64_t seed = 0;
};

struct EncoderModel {
  EncoderVariant variant = EncoderVariant::FittedPca;
  InputSpec input;
  int latent_dim = 0;
  double alpha = 1.0;
  double margin = 1.0;

  // fitted-pca
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // latent_dim x input dim
  Eigen::VectorXd variances;

  // linear-vae: mu = Wm x + bm, logvar = Wv x + bv, x_hat = Wd z + bd
  Eigen::MatrixXd mu_w;
  Eigen::VectorXd mu_b;
  Eigen::MatrixXd logvar_w;
  Eigen::VectorXd logvar_b;
  Eigen::MatrixXd dec_w;
  Eigen::VectorXd dec_b;
  std::vector<double> loss_history;
};

/// Block means of occupancy and of log2(1 + height), occupancy first.
Eigen::VectorXd observation_features(const Observation& obs, const InputSpec& spec);

EncoderModel fit_encoder(const Dataset& d, EncoderVariant variant,
                         const EncoderHyper& hyper = {});

/// PCA on raw feature rows (one observation per row).
EncoderModel fit_pca(const Eigen::MatrixXd& rows, const InputSpec& spec, int latent_dim);

LatentVector encode(const EncoderModel& m, const Observation& obs);
LatentVector encode_features(const EncoderModel& m, const Eigen::VectorXd& x);

struct BankEntry {
  LatentVector z;
  ClothState state;
};

/// Nearest bank state to `z`; ties go to the lowest index.
const ClothState& decode(const EncoderModel& m, const LatentVector& z,
                         std::span<const BankEntry> bank);
std::size_t nearest_bank_index(const LatentVector& z, std::span<const BankEntry> bank);

struct LatentTuple {
  LatentVector z0;
  LatentVector z1;
  int a = 0;
  FoldAction u;
  std::size_t source = 0;
};

struct EncodedDataset {
  std::vector<LatentTuple> tuples;
};

EncodedDataset encode_dataset(const EncoderModel& m, const Dataset& d);

/// Covered states paired with their encodings: entry 2i is tuple i's first
/// state, entry 2i + 1 its second.
std::vector<BankEntry> make_bank(const Dataset& d, const EncodedDataset& enc);

/// Median of ||z0 - z1|| over the given action class.
double median_pair_distance(const EncodedDataset& enc, int a);

// ---- Combined objective of the linear VAE -------------------------------

/// Reconstruction uses the closed-form expectation over the reparameterized
/// sample, so the loss is deterministic:
///   E||x - Wd(mu + sigma*eps) - bd||^2 = ||x - Wd mu - bd||^2
///                                        + sum_j sigma_j^2 ||Wd_j||^2.
double loss_vae(const EncoderModel& m, const Observation& obs);
double loss_action(const EncoderModel& m, const Observation& obs1,
                   const Observation& obs2, int a);
double loss_combined(const EncoderModel& m, const Observation& obs1,
                     const Observation& obs2, int a);

struct PairSample {
  Eigen::VectorXd x1;
  Eigen::VectorXd x2;
  int a = 0;
};

std::vector<PairSample> pair_samples(const Dataset& d, const InputSpec& spec);

double vae_term(const EncoderModel& m, const Eigen::VectorXd& x);
double action_term(const EncoderModel& m, const Eigen::VectorXd& x1,
                   const Eigen::VectorXd& x2, int a);
/// Mean combined loss over the batch.
double batch_loss(const EncoderModel& m, std::span<const PairSample> batch);

/// Parameter gradients, same shapes as the linear-VAE fields.
struct VaeGradient {
  Eigen::MatrixXd mu_w;
  Eigen::VectorXd mu_b;
  Eigen::MatrixXd logvar_w;
  Eigen::VectorXd logvar_b;
  Eigen::MatrixXd dec_w;
  Eigen::VectorXd dec_b;

  double max_abs() const;
};

enum class LossTerms { Combined, VaeOnly, ActionOnly };

VaeGradient batch_gradient(const EncoderModel& m, std::span<const PairSample> batch,
                           LossTerms terms = LossTerms::Combined);

/// Max relative deviation between analytic gradients and central finite
/// differences (step 1e-5). Relative error is |g - fd| / max(|g|, |fd|, 1e-6).
double gradient_check(const EncoderModel& m, std::span<const PairSample> batch);

/// Random linear-VAE with the given shape (used for fitting and checks).
EncoderModel init_linear_vae(const InputSpec& spec, int latent_dim, double alpha,
                             double margin, double init_scale, std::uint64_t seed);

/// Full-batch gradient descent; appends the loss before every epoch and the
/// final loss to loss_history.
void train_linear_vae(EncoderModel& m, std::span<const PairSample> batch, int epochs,
                      double learning_rate);

inline constexpr int kModelVersion = 1;

std::string serialize_model(const EncoderModel& m);
EncoderModel parse_model(const std::string& text);
void save_model(const EncoderModel& m, const std::string& path);
EncoderModel load_model(const std::string& path);

}  // namespace defnet
