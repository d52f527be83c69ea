#include "filterattack/detector.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "filterattack/errors.hpp"

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

namespace filterattack {

void SqueezerConfig::validate() const {
  if (bit_depth < 1 || bit_depth > 8) throw ArgumentError("bit_depth must lie in [1, 8]");
  if (median_window < 2) throw ArgumentError("median_window must be at least 2");
  if (nlm_search < 1 || nlm_search % 2 == 0) throw ArgumentError("nlm_search must be odd");
  if (nlm_patch < 1 || nlm_patch % 2 == 0) throw ArgumentError("nlm_patch must be odd");
  if (nlm_patch > nlm_search) throw ArgumentError("nlm_patch exceeds nlm_search");
  if (!(nlm_strength > 0.0)) throw ArgumentError("nlm_strength must be positive");
  if (!(nlm_sigma >= 0.0)) throw ArgumentError("nlm_sigma must be non-negative");
}

namespace {

// Range-reduced polynomial exp, accurate to a few ulp over the range used.
constexpr float kLog2e = 1.44269504088896341f;
constexpr float kLn2Hi = 0.693359375f;
constexpr float kLn2Lo = -2.12194440e-4f;
constexpr float kExpPoly[6] = {1.9875691500e-4f, 1.3981999507e-3f, 8.3334519073e-3f,
                               4.1665795894e-2f, 1.6666665459e-1f, 5.0000001201e-1f};

float exp_poly(float x) {
  const float fx = std::floor(x * kLog2e + 0.5f);
  x = x - fx * kLn2Hi - fx * kLn2Lo;
  float y = kExpPoly[0];
  for (int i = 1; i < 6; ++i) y = y * x + kExpPoly[i];
  y = y * (x * x) + x + 1.0f;
  return y * std::bit_cast<float>(static_cast<std::uint32_t>(static_cast<int>(fx) + 127) << 23);
}

#if defined(__SSE2__)
__m128 exp_poly(__m128 x) {
  const __m128 one = _mm_set1_ps(1.0f);
  __m128 fx = _mm_add_ps(_mm_mul_ps(x, _mm_set1_ps(kLog2e)), _mm_set1_ps(0.5f));
  const __m128 truncated = _mm_cvtepi32_ps(_mm_cvttps_epi32(fx));
  fx = _mm_sub_ps(truncated, _mm_and_ps(_mm_cmpgt_ps(truncated, fx), one));
  x = _mm_sub_ps(x, _mm_mul_ps(fx, _mm_set1_ps(kLn2Hi)));
  x = _mm_sub_ps(x, _mm_mul_ps(fx, _mm_set1_ps(kLn2Lo)));
  __m128 y = _mm_set1_ps(kExpPoly[0]);
  for (int i = 1; i < 6; ++i) y = _mm_add_ps(_mm_mul_ps(y, x), _mm_set1_ps(kExpPoly[i]));
  y = _mm_add_ps(_mm_add_ps(_mm_mul_ps(y, _mm_mul_ps(x, x)), x), one);
  const __m128i e = _mm_slli_epi32(_mm_add_epi32(_mm_cvttps_epi32(fx), _mm_set1_epi32(127)), 23);
  return _mm_mul_ps(y, _mm_castsi128_ps(e));
}
#endif

// d[i] = sum over channels of (a[c][i] - b[c][i])^2
void square_diff_row(float* d, const std::array<const float*, 3>& a,
                     const std::array<const float*, 3>& b, int n) {
  const float *a0 = a[0], *a1 = a[1], *a2 = a[2];
  const float *b0 = b[0], *b1 = b[1], *b2 = b[2];
  int x = 0;
#if defined(__SSE2__)
  for (; x + 4 <= n; x += 4) {
    const __m128 t0 = _mm_sub_ps(_mm_loadu_ps(a0 + x), _mm_loadu_ps(b0 + x));
    const __m128 t1 = _mm_sub_ps(_mm_loadu_ps(a1 + x), _mm_loadu_ps(b1 + x));
    const __m128 t2 = _mm_sub_ps(_mm_loadu_ps(a2 + x), _mm_loadu_ps(b2 + x));
    const __m128 s = _mm_add_ps(_mm_add_ps(_mm_mul_ps(t0, t0), _mm_mul_ps(t1, t1)), _mm_mul_ps(t2, t2));
    _mm_storeu_ps(d + x, s);
  }
#endif
  for (; x < n; ++x) {
    const float t0 = a0[x] - b0[x];
    const float t1 = a1[x] - b1[x];
    const float t2 = a2[x] - b2[x];
    d[x] = t0 * t0 + t1 * t1 + t2 * t2;
  }
}

// out[i] = sum over k < count of src[i + k * step]
void box_sum_row(float* out, const float* src, std::size_t step, int count, int n) {
  int x = 0;
#if defined(__SSE2__)
  if (count == 3) {
    const float* s1 = src + step;
    const float* s2 = src + 2 * step;
    for (; x + 4 <= n; x += 4) {
      const __m128 s = _mm_add_ps(_mm_add_ps(_mm_loadu_ps(src + x), _mm_loadu_ps(s1 + x)),
                                  _mm_loadu_ps(s2 + x));
      _mm_storeu_ps(out + x, s);
    }
  }
  for (; x + 4 <= n; x += 4) {
    __m128 s = _mm_loadu_ps(src + x);
    for (int k = 1; k < count; ++k) s = _mm_add_ps(s, _mm_loadu_ps(src + x + k * step));
    _mm_storeu_ps(out + x, s);
  }
#endif
  for (; x < n; ++x) {
    float s = src[x];
    for (int k = 1; k < count; ++k) s += src[x + k * step];
    out[x] = s;
  }
}

// sum[i] += wt[i]; acc[c][i] += wt[i] * src[c][i]
void gather_row(float* sum, const std::array<float*, 3>& acc, const float* wt,
                const std::array<const float*, 3>& src, int n) {
  float *acc0 = acc[0], *acc1 = acc[1], *acc2 = acc[2];
  const float *src0 = src[0], *src1 = src[1], *src2 = src[2];
  int x = 0;
#if defined(__SSE2__)
  for (; x + 4 <= n; x += 4) {
    const __m128 v = _mm_loadu_ps(wt + x);
    _mm_storeu_ps(sum + x, _mm_add_ps(_mm_loadu_ps(sum + x), v));
    _mm_storeu_ps(acc0 + x, _mm_add_ps(_mm_loadu_ps(acc0 + x), _mm_mul_ps(v, _mm_loadu_ps(src0 + x))));
    _mm_storeu_ps(acc1 + x, _mm_add_ps(_mm_loadu_ps(acc1 + x), _mm_mul_ps(v, _mm_loadu_ps(src1 + x))));
    _mm_storeu_ps(acc2 + x, _mm_add_ps(_mm_loadu_ps(acc2 + x), _mm_mul_ps(v, _mm_loadu_ps(src2 + x))));
  }
#endif
  for (; x < n; ++x) {
    sum[x] += wt[x];
    acc0[x] += wt[x] * src0[x];
    acc1[x] += wt[x] * src1[x];
    acc2[x] += wt[x] * src2[x];
  }
}

// Turns patch distance sums into weights in place; returns whether any
// weight is non-zero. Exponents of at least `cutoff` give weight 0.
bool nlm_weights(float* v, int n, float norm, float bias, float inv_h2, float cutoff) {
  int x = 0;
  bool any = false;
#if defined(__SSE2__)
  const __m128 vnorm = _mm_set1_ps(norm);
  const __m128 vbias = _mm_set1_ps(bias);
  const __m128 vscale = _mm_set1_ps(inv_h2);
  const __m128 vcut = _mm_set1_ps(cutoff);
  const __m128 zero = _mm_setzero_ps();
  int live = 0;
  for (; x + 4 <= n; x += 4) {
    const __m128 d = _mm_sub_ps(_mm_mul_ps(_mm_loadu_ps(v + x), vnorm), vbias);
    const __m128 arg = _mm_mul_ps(_mm_max_ps(d, zero), vscale);
    const __m128 keep = _mm_cmplt_ps(arg, vcut);
    live |= _mm_movemask_ps(keep);
    _mm_storeu_ps(v + x, _mm_and_ps(exp_poly(_mm_sub_ps(zero, _mm_min_ps(arg, vcut))), keep));
  }
  any = live != 0;
#endif
  for (; x < n; ++x) {
    const float arg = std::max(v[x] * norm - bias, 0.0f) * inv_h2;
    v[x] = arg < cutoff ? exp_poly(-arg) : 0.0f;
    any = any || v[x] != 0.0f;
  }
  return any;
}

// Symmetric border: ... c b a | a b c ... | x y z | z y x ...
int reflect(int i, int n) {
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

}  // namespace

Image squeeze_bit_depth(const Image& image, int bits) {
  if (bits < 1 || bits > 8) throw ArgumentError("bit depth must lie in [1, 8]");
  const double levels = static_cast<double>((1 << bits) - 1);
  std::vector<float> out(image.size());
  const auto src = image.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    out[i] = static_cast<float>(std::round(static_cast<double>(src[i]) * levels) / levels);
  }
  return Image(image.height(), image.width(), std::move(out));
}

Image squeeze_median(const Image& image, int window) {
  if (window < 2) throw ArgumentError("median window must be at least 2");
  const int h = image.height();
  const int w = image.width();
  if (window > h || window > w) {
    throw ArgumentError("median window " + std::to_string(window) + " larger than image");
  }
  const int lo = -(window / 2);
  const int hi = window - 1 - window / 2;
  const std::size_t middle = (static_cast<std::size_t>(window) * window - 1) / 2;

  std::vector<float> out(image.size());
  if (window == 2) {
    // Lower middle of four values: the second smallest.
    for (int y = 0; y < h; ++y) {
      const int y0 = reflect(y - 1, h);
      for (int x = 0; x < w; ++x) {
        const int x0 = reflect(x - 1, w);
        for (int c = 0; c < Image::kChannels; ++c) {
          const float a = image.at(y0, x0, c), b = image.at(y0, x, c);
          const float p = image.at(y, x0, c), q = image.at(y, x, c);
          const float lo1 = std::min(a, b), hi1 = std::max(a, b);
          const float lo2 = std::min(p, q), hi2 = std::max(p, q);
          out[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
              std::min(std::max(lo1, lo2), std::min(hi1, hi2));
        }
      }
    }
    return Image(h, w, std::move(out));
  }
  std::vector<float> values(static_cast<std::size_t>(window) * window);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        std::size_t n = 0;
        for (int dy = lo; dy <= hi; ++dy) {
          for (int dx = lo; dx <= hi; ++dx) {
            values[n++] = image.at(reflect(y + dy, h), reflect(x + dx, w), c);
          }
        }
        std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(middle),
                         values.end());
        out[(static_cast<std::size_t>(y) * w + x) * 3 + c] = values[middle];
      }
    }
  }
  return Image(h, w, std::move(out));
}

Image squeeze_nlm(const Image& image, const SqueezerConfig& cfg) {
  cfg.validate();
  const int h = image.height();
  const int w = image.width();
  if (h < cfg.nlm_search || w < cfg.nlm_search) {
    throw ArgumentError("image smaller than the non-local means search window");
  }
  const int search_r = cfg.nlm_search / 2;
  const int patch = cfg.nlm_patch;
  const int patch_r = patch / 2;
  const int pad = search_r + patch_r;
  // Spare columns on the right let row loops run in whole vectors.
  constexpr int kSpare = 8;
  const int pw = w + 2 * pad + kSpare;
  const int ph = h + 2 * pad;

  // Reflect-padded copy, one plane per channel.
  std::array<std::vector<float>, 3> planes;
  for (auto& p : planes) p.resize(static_cast<std::size_t>(ph) * pw);
  for (int y = 0; y < ph; ++y) {
    const int sy = reflect(y - pad, h);
    for (int x = 0; x < pw; ++x) {
      const int sx = reflect(x - pad, w);
      for (int c = 0; c < 3; ++c) planes[c][static_cast<std::size_t>(y) * pw + x] = image.at(sy, sx, c);
    }
  }

  const double h_unit = cfg.nlm_strength / 255.0;
  const double sigma_unit = cfg.nlm_sigma / 255.0;
  const float inv_h2 = static_cast<float>(1.0 / (h_unit * h_unit));
  const float bias = static_cast<float>(2.0 * sigma_unit * sigma_unit);
  const float patch_norm = 1.0f / static_cast<float>(3 * patch * patch);
  // exp(-60) is far below float resolution relative to the centre weight 1.
  constexpr float kNegligible = 60.0f;

  // Pair weights are computed for every p with p or p + o inside the image,
  // on a grid that extends past the image by |o|, grown by the patch radius.
  // Row widths are rounded up to whole vectors.
  auto round_up = [](int n) { return (n + 3) & ~3; };
  const int max_ew = round_up(w + search_r);
  const int max_eh = h + search_r;
  std::vector<float> diff(static_cast<std::size_t>(max_eh + 2 * patch_r) *
                          round_up(max_ew + 2 * patch_r));
  std::vector<float> row_sum(static_cast<std::size_t>(max_eh + 2 * patch_r) * max_ew);
  std::vector<float> weights(static_cast<std::size_t>(max_ew));
  std::vector<float> weight_sum(static_cast<std::size_t>(h) * w, 1.0f);
  std::array<std::vector<float>, 3> acc;

  // The centre offset always has weight 1.
  for (int c = 0; c < 3; ++c) {
    acc[c].resize(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
      std::copy_n(&planes[c][static_cast<std::size_t>(y + pad) * pw + pad], w,
                  &acc[c][static_cast<std::size_t>(y) * w]);
    }
  }

  auto plane_rows = [&](std::size_t offset) {
    return std::array<const float*, 3>{&planes[0][offset], &planes[1][offset], &planes[2][offset]};
  };
  auto acc_rows = [&](std::size_t offset) {
    return std::array<float*, 3>{&acc[0][offset], &acc[1][offset], &acc[2][offset]};
  };

  // Patch distance is symmetric, so offset o at pixel p also gives the weight
  // of offset -o at pixel p + o. Only half of the offsets are visited.
  for (int oy = 0; oy <= search_r; ++oy) {
    for (int ox = oy == 0 ? 1 : -search_r; ox <= search_r; ++ox) {
      const int y0 = -oy;
      const int x0 = std::min(0, -ox);
      const int eh = h + oy;
      const int ew = round_up(w + std::abs(ox));
      const int dh = eh + 2 * patch_r;
      const int dw = round_up(ew + 2 * patch_r);
      for (int y = 0; y < dh; ++y) {
        float* d = &diff[static_cast<std::size_t>(y) * dw];
        const std::size_t base =
            static_cast<std::size_t>(y + y0 + search_r) * pw + x0 + search_r;
        const std::size_t shifted = base + static_cast<std::size_t>(oy) * pw + ox;
        square_diff_row(d, plane_rows(base), plane_rows(shifted), dw);
        box_sum_row(&row_sum[static_cast<std::size_t>(y) * ew], d, 1, patch, ew);
      }
      for (int ey = 0; ey < eh; ++ey) {
        box_sum_row(weights.data(), &row_sum[static_cast<std::size_t>(ey) * ew],
                    static_cast<std::size_t>(ew), patch, ew);
        if (!nlm_weights(weights.data(), ew, patch_norm, bias, inv_h2, kNegligible)) continue;
        const int y = ey + y0;

        // Forward: pixel (y, x) inside the image gathers (y + oy, x + ox).
        if (y >= 0) {
          const std::size_t row = static_cast<std::size_t>(y) * w;
          const std::size_t nbr = static_cast<std::size_t>(y + pad + oy) * pw + pad + ox;
          gather_row(&weight_sum[row], acc_rows(row), &weights[static_cast<std::size_t>(-x0)],
                     plane_rows(nbr), w);
        }

        // Mirror: pixel (y + oy, x + ox) inside the image gathers (y, x).
        const int qy = y + oy;
        if (qy >= h) continue;
        const std::size_t qrow = static_cast<std::size_t>(qy) * w;
        const std::size_t self = static_cast<std::size_t>(y + pad) * pw + pad - ox;
        gather_row(&weight_sum[qrow], acc_rows(qrow), &weights[static_cast<std::size_t>(-ox - x0)],
                   plane_rows(self), w);
      }
    }
  }

  std::vector<float> out(image.size());
  for (std::size_t p = 0; p < weight_sum.size(); ++p) {
    for (int c = 0; c < 3; ++c) out[p * 3 + c] = std::clamp(acc[c][p] / weight_sum[p], 0.0f, 1.0f);
  }
  return Image(h, w, std::move(out));
}

DetectorVerdict detect(const Classifier& classifier, const Image& image,
                       const PredictionVector& prediction, const SqueezerConfig& cfg,
                       double threshold) {
  cfg.validate();
  double score = l1_distance(prediction, classifier.predict(squeeze_bit_depth(image, cfg.bit_depth)));
  score = std::max(score, l1_distance(prediction,
                                      classifier.predict(squeeze_median(image, cfg.median_window))));
  score = std::max(score, l1_distance(prediction, classifier.predict(squeeze_nlm(image, cfg))));
  return {score, score > threshold, threshold};
}

DetectorVerdict detect(const Classifier& classifier, const Image& image,
                       const SqueezerConfig& cfg, double threshold) {
  return detect(classifier, image, classifier.predict(image), cfg, threshold);
}

FeatureSqueezeDetector::FeatureSqueezeDetector(const Classifier& classifier, SqueezerConfig cfg,
                                               double threshold)
    : classifier_(classifier), cfg_(cfg), threshold_(threshold) {
  cfg_.validate();
}

}  // namespace filterattack
