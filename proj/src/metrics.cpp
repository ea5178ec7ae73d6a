#include "recon/metrics.hpp"

#include <cmath>
#include <complex>
#include <iostream>

#include "recon/errors.hpp"
#include "recon/rng.hpp"

namespace recon::metrics {

namespace {

// Square root of a symmetric PSD matrix. Eigenvalues may carry rounding noise
// below `tol` (relative to the largest magnitude); anything more negative is a
// genuine violation.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double tol,
                         const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success)
    throw NumericError(std::string("eigendecomposition failed for ") + what);
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] < -tol * scale)
      throw NumericError(std::string(what) + " is not positive semidefinite: "
                         "eigenvalue " + std::to_string(ev[i]));
    ev[i] = std::sqrt(std::max(0.0, ev[i]));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double nmse(const mri::ComplexImage& x, const mri::ComplexImage& ref) {
  if (x.height() != ref.height() || x.width() != ref.width())
    throw DimensionError("nmse: image shapes differ");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += std::norm(x.data()[i] - ref.data()[i]);
    den += std::norm(ref.data()[i]);
  }
  if (den == 0.0) throw NumericError("nmse undefined for a zero reference");
  return num / den;
}

FIDStats fit_stats(const std::vector<Eigen::VectorXd>& features) {
  if (features.size() < 2)
    throw DimensionError("fit_stats needs at least 2 feature vectors, got " +
                         std::to_string(features.size()));
  const int d = static_cast<int>(features.front().size());
  for (const auto& f : features) {
    if (f.size() != d)
      throw DimensionError("fit_stats: inconsistent feature lengths");
  }
  FIDStats stats;
  stats.n = static_cast<int>(features.size());
  stats.mu = Eigen::VectorXd::Zero(d);
  for (const auto& f : features) stats.mu += f;
  stats.mu /= static_cast<double>(stats.n);
  stats.sigma = Eigen::MatrixXd::Zero(d, d);
  for (const auto& f : features) {
    const Eigen::VectorXd c = f - stats.mu;
    stats.sigma.noalias() += c * c.transpose();
  }
  stats.sigma /= static_cast<double>(stats.n - 1);
  stats.sigma = ((stats.sigma + stats.sigma.transpose()) / 2.0).eval();
  return stats;
}

double fid(const FIDStats& a, const FIDStats& b) {
  if (a.mu.size() != b.mu.size())
    throw DimensionError("fid: feature dimensions differ");
  if (a.n < 2 || b.n < 2) throw DimensionError("fid: stats need n >= 2");

  // Tr((Sigma_a Sigma_b)^{1/2}) = Tr((A^{1/2} B A^{1/2})^{1/2}), and the
  // inner matrix is symmetric PSD, so a self-adjoint solver applies.
  const Eigen::MatrixXd ra = psd_sqrt(a.sigma, 1e-8, "first covariance");
  Eigen::MatrixXd inner = ra * b.sigma * ra;
  inner = ((inner + inner.transpose()) / 2.0).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
  if (es.info() != Eigen::Success)
    throw NumericError("eigendecomposition failed for the product term");
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  double tr_sqrt = 0.0;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-6 * scale)
      throw NumericError(
          "fid: product term eigenvalue " + std::to_string(ev[i]) +
          " exceeds the numeric tolerance; covariances are too ill-conditioned");
    tr_sqrt += std::sqrt(std::max(0.0, ev[i]));
  }

  const double mean_term = (a.mu - b.mu).squaredNorm();
  double value =
      mean_term + a.sigma.trace() + b.sigma.trace() - 2.0 * tr_sqrt;
  if (value < 0.0) {
    if (value < -1e-6)
      throw NumericError("fid came out negative beyond tolerance: " +
                         std::to_string(value));
    value = 0.0;
  }
  return value;
}

DeskExtractor::DeskExtractor(std::uint64_t seed) {
  const int plan[4] = {1, 16, 32, kDim};
  for (int l = 0; l < 3; ++l) {
    Rng rng(derive_seed(seed, "desk-layer", static_cast<std::uint64_t>(l)));
    Layer layer;
    layer.in_ch = plan[l];
    layer.out_ch = plan[l + 1];
    const double stddev = std::sqrt(2.0 / (9.0 * layer.in_ch));
    layer.w.resize(static_cast<std::size_t>(layer.out_ch) * layer.in_ch * 9);
    for (double& v : layer.w) v = stddev * rng.normal();
    layers_.push_back(std::move(layer));
  }
}

Eigen::VectorXd DeskExtractor::extract(const Eigen::MatrixXd& image) const {
  std::vector<Eigen::MatrixXd> maps{image};
  for (const Layer& layer : layers_) {
    const int h = static_cast<int>(maps[0].rows());
    const int w = static_cast<int>(maps[0].cols());
    const int ho = (h + 2 - 3) / 2 + 1;  // kernel 3, stride 2, pad 1
    const int wo = (w + 2 - 3) / 2 + 1;
    std::vector<Eigen::MatrixXd> next(
        static_cast<std::size_t>(layer.out_ch),
        Eigen::MatrixXd::Zero(ho, wo));
    for (int oc = 0; oc < layer.out_ch; ++oc) {
      for (int ic = 0; ic < layer.in_ch; ++ic) {
        const double* k =
            &layer.w[(static_cast<std::size_t>(oc) * layer.in_ch + ic) * 9];
        const Eigen::MatrixXd& src = maps[static_cast<std::size_t>(ic)];
        for (int r = 0; r < ho; ++r) {
          for (int c = 0; c < wo; ++c) {
            double acc = 0.0;
            for (int kr = 0; kr < 3; ++kr) {
              const int sr = 2 * r - 1 + kr;
              if (sr < 0 || sr >= h) continue;
              for (int kc = 0; kc < 3; ++kc) {
                const int sc = 2 * c - 1 + kc;
                if (sc < 0 || sc >= w) continue;
                acc += k[kr * 3 + kc] * src(sr, sc);
              }
            }
            next[static_cast<std::size_t>(oc)](r, c) += acc;
          }
        }
      }
      double* vals = next[static_cast<std::size_t>(oc)].data();
      for (std::size_t i = 0; i < static_cast<std::size_t>(ho) * wo; ++i)
        vals[i] = vals[i] > 0.0 ? vals[i] : 0.2 * vals[i];
    }
    maps = std::move(next);
  }
  Eigen::VectorXd out(kDim);
  for (int i = 0; i < kDim; ++i) out[i] = maps[static_cast<std::size_t>(i)].mean();
  return out;
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name) {
  if (name == "desk") return std::make_unique<DeskExtractor>();
  if (name == "pretrained")
    throw NotFoundError(
        "the pretrained extractor needs external classifier weights, which "
        "are not bundled; use \"desk\" for offline runs");
  throw ConfigError("unknown feature extractor \"" + name + "\"",
                    "metrics.extractor");
}

Eigen::MatrixXd normalized_magnitude(const mri::ComplexImage& img) {
  Eigen::MatrixXd m(img.height(), img.width());
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) m(r, c) = std::abs(img.at(r, c));
  }
  const double lo = m.minCoeff(), hi = m.maxCoeff();
  if (hi == lo) return Eigen::MatrixXd::Zero(img.height(), img.width());
  return (m.array() - lo) / (hi - lo);
}

std::vector<Eigen::VectorXd> extract_features(
    const std::vector<mri::ComplexImage>& images, const FeatureExtractor& ex) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(ex.extract(normalized_magnitude(img)));
  return out;
}

double fid_between_image_sets(const std::vector<mri::ComplexImage>& a,
                              const std::vector<mri::ComplexImage>& b,
                              const FeatureExtractor& ex) {
  const std::size_t want = static_cast<std::size_t>(ex.dim()) + 1;
  if (a.size() < want || b.size() < want)
    std::cerr << "warning: fid on sets of " << a.size() << " and " << b.size()
              << " images; at least " << want
              << " are recommended for a " << ex.dim()
              << "-dimensional extractor\n";
  FIDStats sa = fit_stats(extract_features(a, ex));
  FIDStats sb = fit_stats(extract_features(b, ex));
  try {
    return fid(sa, sb);
  } catch (const NumericError&) {
    std::cerr << "warning: fid unstable on raw covariances; "
                 "retrying with a 1e-6 ridge\n";
    const double d = static_cast<double>(sa.mu.size());
    sa.sigma += 1e-6 * Eigen::MatrixXd::Identity(static_cast<int>(d),
                                                 static_cast<int>(d));
    sb.sigma += 1e-6 * Eigen::MatrixXd::Identity(static_cast<int>(d),
                                                 static_cast<int>(d));
    return fid(sa, sb);
  }
}

}  // namespace recon::metrics
