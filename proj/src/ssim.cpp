#include "gsicp/ssim.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "gsicp/errors.hpp"

namespace gsicp {

namespace {

constexpr int kRadius = 5;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, 2 * kRadius + 1> gaussianKernel() {
  std::array<double, 2 * kRadius + 1> k{};
  double sum = 0.0;
  for (int i = -kRadius; i <= kRadius; ++i) {
    k[i + kRadius] = std::exp(-(i * i) / (2.0 * kSigma * kSigma));
    sum += k[i + kRadius];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable filter with zero extension outside the image (single channel plane).
std::vector<double> blur(const std::vector<double>& in, int w, int h) {
  static const auto kernel = gaussianKernel();
  std::vector<double> tmp(in.size(), 0.0);
  std::vector<double> out(in.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -kRadius; d <= kRadius; ++d) {
        const int xx = x + d;
        if (xx < 0 || xx >= w) continue;
        s += kernel[d + kRadius] * in[static_cast<std::size_t>(y) * w + xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -kRadius; d <= kRadius; ++d) {
        const int yy = y + d;
        if (yy < 0 || yy >= h) continue;
        s += kernel[d + kRadius] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  return out;
}

std::vector<double> plane(const Image& img, int c) {
  std::vector<double> p(img.pixelCount());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = img.data[i * img.channels + c];
  return p;
}

}  // namespace

double ssimWithGrad(const Image& a, const Image& b, Image* grad_a) {
  if (!a.sameShape(b)) throw InputError("ssim: image shapes differ");
  if (a.empty()) throw InputError("ssim: empty image");
  const int w = a.width;
  const int h = a.height;
  const std::size_t n = a.pixelCount();
  const double inv_count = 1.0 / static_cast<double>(n * a.channels);
  if (grad_a) *grad_a = Image(w, h, a.channels);

  // Window weights are g(p - q) / norm(p), norm = blurred ones.
  const std::vector<double> norm = blur(std::vector<double>(n, 1.0), w, h);
  auto windowed = [&](const std::vector<double>& v) {
    std::vector<double> out = blur(v, w, h);
    for (std::size_t i = 0; i < n; ++i) out[i] /= norm[i];
    return out;
  };

  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    const std::vector<double> pa = plane(a, c);
    const std::vector<double> pb = plane(b, c);
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = windowed(pa);
    const auto mu_b = windowed(pb);
    const auto e_aa = windowed(aa);
    const auto e_bb = windowed(bb);
    const auto e_ab = windowed(ab);

    // Per-window partials of the SSIM map, pre-divided by the window norm for
    // the transposed filter.
    std::vector<double> f_mu(n), f_var(n), f_cov(n), f_var_mu(n), f_cov_mu(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double ma = mu_a[i];
      const double mb = mu_b[i];
      const double va = e_aa[i] - ma * ma;
      const double vb = e_bb[i] - mb * mb;
      const double cab = e_ab[i] - ma * mb;
      const double a1 = 2.0 * ma * mb + kC1;
      const double a2 = 2.0 * cab + kC2;
      const double b1 = ma * ma + mb * mb + kC1;
      const double b2 = va + vb + kC2;
      const double s = a1 * a2 / (b1 * b2);
      total += s;
      if (!grad_a) continue;
      const double d_mu = (2.0 * mb * a2) / (b1 * b2) - s * 2.0 * ma / b1;
      const double d_var = -s / b2;
      const double d_cov = 2.0 * a1 / (b1 * b2);
      const double scale = inv_count / norm[i];
      f_mu[i] = d_mu * scale;
      f_var[i] = d_var * scale;
      f_cov[i] = d_cov * scale;
      f_var_mu[i] = d_var * ma * scale;
      f_cov_mu[i] = d_cov * mb * scale;
    }
    if (!grad_a) continue;
    // The Gaussian kernel is symmetric, so the transposed filter is the same blur.
    const auto t_mu = blur(f_mu, w, h);
    const auto t_var = blur(f_var, w, h);
    const auto t_cov = blur(f_cov, w, h);
    const auto t_var_mu = blur(f_var_mu, w, h);
    const auto t_cov_mu = blur(f_cov_mu, w, h);
    for (std::size_t i = 0; i < n; ++i) {
      grad_a->data[i * a.channels + c] = t_mu[i] + 2.0 * pa[i] * t_var[i] - 2.0 * t_var_mu[i] +
                                         pb[i] * t_cov[i] - t_cov_mu[i];
    }
  }
  // Identical images sit at the maximum; the analytic gradient is exactly zero
  // there but the expression above leaves round-off.
  if (grad_a && a.data == b.data) std::fill(grad_a->data.begin(), grad_a->data.end(), 0.0);
  return total * inv_count;
}

double ssim(const Image& a, const Image& b) { return ssimWithGrad(a, b, nullptr); }

}  // namespace gsicp
