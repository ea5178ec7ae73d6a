#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "recon/mri_types.hpp"

namespace recon::metrics {

// ||x - ref||^2 / ||ref||^2 over complex values.
double nmse(const mri::ComplexImage& x, const mri::ComplexImage& ref);

struct FIDStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;  // symmetric, PSD up to -1e-8 eigenvalue tolerance
  int n = 0;
};

// Sample mean and covariance (n-1 divisor), symmetry enforced exactly.
FIDStats fit_stats(const std::vector<Eigen::VectorXd>& features);

// Frechet distance between the two Gaussians:
//   ||mu_a - mu_b||^2 + Tr(Sigma_a + Sigma_b - 2 (Sigma_a Sigma_b)^{1/2}).
// The product square root is evaluated through the symmetric form
// A^{1/2} B A^{1/2}; eigenvalue noise below 1e-6 relative is clamped away,
// anything larger raises a numeric-instability error.
double fid(const FIDStats& a, const FIDStats& b);

// Maps a magnitude plane (already min-max normalized to [0, 1]) to a feature
// vector of fixed length.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int dim() const = 0;
  virtual Eigen::VectorXd extract(const Eigen::MatrixXd& image) const = 0;
};

// Offline default: a fixed random-weight 3-layer strided convolutional net
// (channels 1 -> 16 -> 32 -> 64, kernel 3, stride 2, leaky ReLU) followed by
// global average pooling. Deterministic for a given seed.
class DeskExtractor : public FeatureExtractor {
 public:
  static constexpr int kDim = 64;
  static constexpr std::uint64_t kDefaultSeed = 7340;

  explicit DeskExtractor(std::uint64_t seed = kDefaultSeed);
  int dim() const override { return kDim; }
  Eigen::VectorXd extract(const Eigen::MatrixXd& image) const override;

 private:
  struct Layer {
    int in_ch, out_ch;
    std::vector<double> w;  // [out][in][3][3]
  };
  std::vector<Layer> layers_;
};

// "desk" is built in; "pretrained" needs external classifier weights that are
// not bundled, so requesting it reports that instead of guessing.
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name);

// Per-image min-max normalization of the magnitude to [0, 1]; a constant
// image maps to all zeros.
Eigen::MatrixXd normalized_magnitude(const mri::ComplexImage& img);

std::vector<Eigen::VectorXd> extract_features(
    const std::vector<mri::ComplexImage>& images, const FeatureExtractor& ex);

// extract -> fit_stats -> fid. Warns (stderr) when a set is smaller than
// dim + 1; if the plain evaluation is numerically unstable, retries once with
// a 1e-6 ridge on both covariances and logs that it did.
double fid_between_image_sets(const std::vector<mri::ComplexImage>& a,
                              const std::vector<mri::ComplexImage>& b,
                              const FeatureExtractor& ex);

}  // namespace recon::metrics
