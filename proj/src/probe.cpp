/*
 * Copyright 2026 The ModAdapter Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "modadapter/probe.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "modadapter/errors.hpp"

namespace modadapter {

namespace {

constexpr Scalar kSaturationThreshold = 0.45;

Scalar median(std::vector<Scalar> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  Scalar hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  Scalar lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

int probe_tone(const Image& img) {
  Eigen::Vector3d m;
  for (Index c = 0; c < 3; ++c) {
    std::vector<Scalar> ch(img.rgb.col(c).data(), img.rgb.col(c).data() + 0);
    ch.resize(static_cast<std::size_t>(img.rgb.rows()));
    for (Index i = 0; i < img.rgb.rows(); ++i) ch[static_cast<std::size_t>(i)] = img.rgb(i, c);
    m(c) = median(std::move(ch));
  }
  const Scalar total = m.sum();
  if (total <= 0) return 0;
  m /= total;
  int best = 0;
  Scalar best_d = 0;
  for (int k = 0; k < 4; ++k) {
    const auto& t = tone_tint(k);
    Eigen::Vector3d r(t[0], t[1], t[2]);
    r /= r.sum();
    const Scalar d = (m - r).squaredNorm();
    if (k == 0 || d < best_d) {
      best = k;
      best_d = d;
    }
  }
  return best;
}

struct Corrected {
  std::vector<Scalar> lum;
  std::vector<std::uint8_t> object;
};

// Divides out the probed tint, then derives luminance and an object mask from
// saturation (the background is grey before tinting, objects are saturated).
Corrected tint_corrected(const Image& img) {
  const auto& tint = tone_tint(probe_tone(img));
  Corrected out;
  const auto n = static_cast<std::size_t>(img.rgb.rows());
  out.lum.resize(n);
  out.object.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Scalar v[3];
    for (int c = 0; c < 3; ++c) v[c] = std::max(img.rgb(static_cast<Index>(i), c), 0.0) / tint[static_cast<std::size_t>(c)];
    const Scalar hi = std::max({v[0], v[1], v[2]});
    const Scalar lo = std::min({v[0], v[1], v[2]});
    out.lum[i] = (v[0] + v[1] + v[2]) / 3.0;
    out.object[i] = (hi > 1e-6 && (hi - lo) / hi > kSaturationThreshold) ? 1 : 0;
  }
  return out;
}

int probe_shape(const Image& img) {
  const Corrected cor = tint_corrected(img);
  int best = 0;
  Scalar best_iou = -1;
  for (int s = 0; s < 4; ++s) {
    Scalar shape_best = 0;
    for (int p = 0; p < kPlacementCount; ++p) {
      SceneSpec pos;
      pos.placement = p;
      int inter = 0, uni = 0;
      for (Index y = 0; y < img.height; ++y) {
        for (Index x = 0; x < img.width; ++x) {
          const bool t = shape_covers(s, pos.offset_x(), pos.offset_y(), y, x);
          const bool m = cor.object[static_cast<std::size_t>(y * img.width + x)] != 0;
          inter += (t && m) ? 1 : 0;
          uni += (t || m) ? 1 : 0;
        }
      }
      const Scalar iou = uni > 0 ? static_cast<Scalar>(inter) / uni : 0.0;
      shape_best = std::max(shape_best, iou);
    }
    if (shape_best > best_iou) {
      best = s;
      best_iou = shape_best;
    }
  }
  return best;
}

struct PlaneFit {
  Eigen::Vector3d coef = Eigen::Vector3d::Zero();  // intercept, d/dx, d/dy
  std::vector<Index> rows;                          // background pixel indices
  std::vector<Scalar> log_lum;
};

PlaneFit fit_background_plane(const Image& img) {
  const Corrected cor = tint_corrected(img);
  PlaneFit fit;
  for (Index i = 0; i < static_cast<Index>(cor.lum.size()); ++i) {
    if (cor.object[static_cast<std::size_t>(i)]) continue;
    fit.rows.push_back(i);
    fit.log_lum.push_back(std::log(std::max(cor.lum[static_cast<std::size_t>(i)], 1e-3)));
  }
  if (fit.rows.size() < 3) return fit;
  Eigen::MatrixXd a(static_cast<Index>(fit.rows.size()), 3);
  Eigen::VectorXd b(static_cast<Index>(fit.rows.size()));
  for (std::size_t k = 0; k < fit.rows.size(); ++k) {
    const Index i = fit.rows[k];
    a(static_cast<Index>(k), 0) = 1.0;
    a(static_cast<Index>(k), 1) = static_cast<Scalar>(i % img.width);
    a(static_cast<Index>(k), 2) = static_cast<Scalar>(i / img.width);
    b(static_cast<Index>(k)) = fit.log_lum[k];
  }
  fit.coef = a.colPivHouseholderQr().solve(b);
  return fit;
}

int probe_light(const Image& img) {
  const PlaneFit fit = fit_background_plane(img);
  const Scalar scores[4] = {-fit.coef(1), fit.coef(1), -fit.coef(2), fit.coef(2)};
  return static_cast<int>(std::max_element(scores, scores + 4) - scores);
}

int probe_texture(const Image& img) {
  const PlaneFit fit = fit_background_plane(img);
  const std::size_t n = fit.rows.size();
  if (n < 3) return 3;
  std::vector<Scalar> resid(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Index i = fit.rows[k];
    resid[k] = fit.log_lum[k] - (fit.coef(0) + fit.coef(1) * static_cast<Scalar>(i % img.width) +
                                 fit.coef(2) * static_cast<Scalar>(i / img.width));
  }
  int best = 3;
  Scalar best_score = kPlainTextureThreshold;
  for (int tex = 0; tex < 3; ++tex) {
    std::vector<Scalar> t(n);
    Scalar mean_t = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const Index i = fit.rows[k];
      t[k] = texture_pattern(tex, i / img.width, i % img.width);
      mean_t += t[k];
    }
    mean_t /= static_cast<Scalar>(n);
    Scalar mean_r = 0;
    for (Scalar r : resid) mean_r += r;
    mean_r /= static_cast<Scalar>(n);
    Scalar srt = 0, stt = 0, srr = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const Scalar dt = t[k] - mean_t;
      const Scalar dr = resid[k] - mean_r;
      srt += dr * dt;
      stt += dt * dt;
      srr += dr * dr;
    }
    const Scalar corr = (stt > 0 && srr > 0) ? srt / std::sqrt(stt * srr) : 0.0;
    if (corr > best_score) {
      best = tex;
      best_score = corr;
    }
  }
  return best;
}

}  // namespace

int probe_value(const Image& image, Category category) {
  if (image.rgb.rows() != image.height * image.width || image.rgb.cols() != 3 || image.rgb.rows() == 0) {
    throw ShapeError("probe: malformed image");
  }
  switch (category) {
    case Category::shape: return probe_shape(image);
    case Category::texture: return probe_texture(image);
    case Category::tone: return probe_tone(image);
    case Category::light: return probe_light(image);
  }
  throw RangeError("probe: unknown category");
}

std::string probe_attribute(const Image& image, Category category) {
  return std::string(category_values(category)[static_cast<std::size_t>(probe_value(image, category))]);
}

std::string probe_attribute(const Image& image, std::string_view category) {
  auto c = parse_category(category);
  if (!c) throw RangeError("probe: unknown category '" + std::string(category) + "'");
  return probe_attribute(image, *c);
}

}  // namespace modadapter
