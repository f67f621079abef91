// Copyright 2026 The wsireg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef WSIREG_DEFORM_HPP_
#define WSIREG_DEFORM_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "wsireg/error.hpp"
#include "wsireg/raster.hpp"

namespace wsireg {

/// Dense displacement field on the fixed grid with pull semantics: output
/// pixel (x, y) samples the source at (x + u(y, x), y + v(y, x)).
template <typename Scalar>
struct BasicDisplacementField {
  Plane<Scalar> u;
  Plane<Scalar> v;

  BasicDisplacementField() = default;
  BasicDisplacementField(Plane<Scalar> u_, Plane<Scalar> v_) : u(std::move(u_)), v(std::move(v_)) {
    if (u.rows() != v.rows() || u.cols() != v.cols()) {
      throw Error(ErrorCode::ShapeMismatch, "field components differ in shape");
    }
  }

  static BasicDisplacementField Zero(Index width, Index height) {
    return {Plane<Scalar>::Zero(height, width), Plane<Scalar>::Zero(height, width)};
  }

  Index width() const { return u.cols(); }
  Index height() const { return u.rows(); }
  bool all_finite() const { return u.allFinite() && v.allFinite(); }

  /// Largest vector norm over the grid.
  Scalar max_norm() const { return (u.square() + v.square()).sqrt().maxCoeff(); }

  bool operator==(const BasicDisplacementField& o) const {
    return u.rows() == o.u.rows() && u.cols() == o.u.cols() && (u == o.u).all() && (v == o.v).all();
  }
};

using DisplacementField = BasicDisplacementField<double>;

struct DeformConfig {
  double lr0 = 0.001;
  int iterations = 500;
  double lambda_smooth = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double eta_min = 0.0;
  int levels = 3;

  void validate() const {
    if (!(lr0 > 0.0)) throw Error(ErrorCode::InvalidConfig, "deform.lr0 must be positive");
    if (iterations < 1) throw Error(ErrorCode::InvalidConfig, "deform.iterations must be >= 1");
    if (!(lambda_smooth >= 0.0)) throw Error(ErrorCode::InvalidConfig, "deform.lambda_smooth must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "deform.beta1 and deform.beta2 must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidConfig, "deform.epsilon must be positive");
    if (!(eta_min >= 0.0 && eta_min <= lr0)) throw Error(ErrorCode::InvalidConfig, "deform.eta_min must lie in [0, lr0]");
    if (levels < 1) throw Error(ErrorCode::InvalidConfig, "deform.levels must be >= 1");
  }
};

template <typename Scalar>
struct BasicAdamState {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> m;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> v;
  long t = 0;

  BasicAdamState() = default;
  explicit BasicAdamState(Index n)
      : m(Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(n)), v(Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(n)) {}
};

using AdamState = BasicAdamState<double>;

struct LossTerms {
  double mse = 0.0;
  double smooth = 0.0;
  double total = 0.0;
};

struct TraceRecord {
  long iter = 0;       // optimizer steps taken before this evaluation
  int level = 0;       // 0 is the coarsest pyramid level
  long step = 0;       // step index within the level's schedule
  long level_steps = 0;
  double mse = 0.0;
  double smooth = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

using LossTrace = std::vector<TraceRecord>;

template <typename Scalar>
struct BasicDeformResult {
  BasicDisplacementField<Scalar> field;
  LossTrace trace;
  LossTerms initial;  // zero field on the finest grid
  LossTerms final;    // returned field on the finest grid
  int levels_used = 1;
};

using DeformResult = BasicDeformResult<double>;

/// Gathers moving at x + field(x) for every grid point of the field.
template <typename Scalar>
BasicGrayImage<Scalar> warp(const BasicGrayImage<Scalar>& moving, const BasicDisplacementField<Scalar>& field) {
  const Index w = field.width();
  const Index h = field.height();
  Plane<Scalar> out(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      out(y, x) = bilinear_sample(moving.pixels, Scalar(x) + field.u(y, x), Scalar(y) + field.v(y, x));
    }
  }
  return {std::move(out), moving.spacing_um};
}

template <typename Scalar>
BasicGrayImage<Scalar> warp(const BasicGrayImage<Scalar>& moving, const BasicDisplacementField<Scalar>& field,
                            Index out_width, Index out_height) {
  if (field.width() != out_width || field.height() != out_height) {
    throw Error(ErrorCode::ShapeMismatch, "field grid differs from the requested output grid");
  }
  return warp(moving, field);
}

template <typename Scalar>
double mse_loss(const BasicGrayImage<Scalar>& fixed, const BasicGrayImage<Scalar>& warped) {
  if (fixed.width() != warped.width() || fixed.height() != warped.height()) {
    throw Error(ErrorCode::ShapeMismatch, "MSE inputs differ in shape");
  }
  double acc = 0.0;
  for (Index i = 0; i < fixed.size(); ++i) {
    const double d = static_cast<double>(fixed.pixels.data()[i]) - static_cast<double>(warped.pixels.data()[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(fixed.size());
}

/// Diffusion regularizer: the mean squared horizontal forward difference of
/// (u, v) plus the mean squared vertical forward difference. A direction with
/// no pairs (a single row or column) contributes nothing.
template <typename Scalar>
double smoothness_loss(const BasicDisplacementField<Scalar>& field) {
  const Index w = field.width();
  const Index h = field.height();
  double sh = 0.0, sv = 0.0;
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      if (x + 1 < w) {
        const double du = double(field.u(y, x + 1)) - double(field.u(y, x));
        const double dv = double(field.v(y, x + 1)) - double(field.v(y, x));
        sh += du * du + dv * dv;
      }
      if (y + 1 < h) {
        const double du = double(field.u(y + 1, x)) - double(field.u(y, x));
        const double dv = double(field.v(y + 1, x)) - double(field.v(y, x));
        sv += du * du + dv * dv;
      }
    }
  }
  const Index nh = h * (w - 1);
  const Index nv = (h - 1) * w;
  return (nh > 0 ? sh / double(nh) : 0.0) + (nv > 0 ? sv / double(nv) : 0.0);
}

namespace detail {

inline void require_same_grid(Index fw, Index fh, Index w, Index h, const char* what) {
  if (fw != w || fh != h) throw Error(ErrorCode::ShapeMismatch, what);
}

// Objective value and, when grad is non-null, its analytic gradient in pixel
// units. One gather pass serves both.
template <typename Scalar>
LossTerms evaluate_objective(const BasicGrayImage<Scalar>& fixed, const BasicGrayImage<Scalar>& moving,
                             const BasicDisplacementField<Scalar>& field, double lambda_smooth,
                             BasicDisplacementField<Scalar>* grad) {
  const Index w = fixed.width();
  const Index h = fixed.height();
  require_same_grid(field.width(), field.height(), w, h, "field grid differs from the fixed image");
  const double n = static_cast<double>(w * h);
  if (grad) *grad = BasicDisplacementField<Scalar>::Zero(w, h);

  double sse = 0.0;
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const auto s = bilinear_sample_with_gradient(moving.pixels, Scalar(x) + field.u(y, x), Scalar(y) + field.v(y, x));
      const double r = double(s.value) - double(fixed.pixels(y, x));
      sse += r * r;
      if (grad) {
        grad->u(y, x) = Scalar(2.0 / n * r * double(s.d_dx));
        grad->v(y, x) = Scalar(2.0 / n * r * double(s.d_dy));
      }
    }
  }
  LossTerms terms;
  terms.mse = sse / n;
  terms.smooth = smoothness_loss(field);
  terms.total = terms.mse + lambda_smooth * terms.smooth;

  if (grad && lambda_smooth > 0.0) {
    const Index nh = h * (w - 1);
    const Index nv = (h - 1) * w;
    const double ch = nh > 0 ? 2.0 * lambda_smooth / double(nh) : 0.0;
    const double cv = nv > 0 ? 2.0 * lambda_smooth / double(nv) : 0.0;
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        if (x + 1 < w) {
          const Scalar du = Scalar(ch * (double(field.u(y, x + 1)) - double(field.u(y, x))));
          const Scalar dv = Scalar(ch * (double(field.v(y, x + 1)) - double(field.v(y, x))));
          grad->u(y, x) -= du;
          grad->u(y, x + 1) += du;
          grad->v(y, x) -= dv;
          grad->v(y, x + 1) += dv;
        }
        if (y + 1 < h) {
          const Scalar du = Scalar(cv * (double(field.u(y + 1, x)) - double(field.u(y, x))));
          const Scalar dv = Scalar(cv * (double(field.v(y + 1, x)) - double(field.v(y, x))));
          grad->u(y, x) -= du;
          grad->u(y + 1, x) += du;
          grad->v(y, x) -= dv;
          grad->v(y + 1, x) += dv;
        }
      }
    }
  }
  return terms;
}

}  // namespace detail

/// mse(fixed, warp(moving, field)) + lambda * smoothness(field).
template <typename Scalar>
LossTerms objective(const BasicGrayImage<Scalar>& fixed, const BasicGrayImage<Scalar>& moving,
                    const BasicDisplacementField<Scalar>& field, double lambda_smooth) {
  return detail::evaluate_objective<Scalar>(fixed, moving, field, lambda_smooth, nullptr);
}

/// Gradient of the objective with respect to every (u, v) component, in
/// pixel units. The image term is piecewise smooth: it uses the bilinear
/// partials of the interpolation cell the sample falls in.
template <typename Scalar>
BasicDisplacementField<Scalar> loss_gradient(const BasicGrayImage<Scalar>& fixed, const BasicGrayImage<Scalar>& moving,
                                             const BasicDisplacementField<Scalar>& field, double lambda_smooth) {
  BasicDisplacementField<Scalar> grad;
  detail::evaluate_objective<Scalar>(fixed, moving, field, lambda_smooth, &grad);
  return grad;
}

/// One bias-corrected Adam update of params in place.
template <typename Scalar, typename DerivedP, typename DerivedG>
void adam_step(BasicAdamState<Scalar>& state, Eigen::ArrayBase<DerivedP>& params, const Eigen::ArrayBase<DerivedG>& grads,
               double lr, const DeformConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw Error(ErrorCode::ShapeMismatch, "Adam parameter, gradient and state sizes differ");
  }
  ++state.t;
  const Scalar b1 = Scalar(cfg.beta1);
  const Scalar b2 = Scalar(cfg.beta2);
  state.m = b1 * state.m + (Scalar(1) - b1) * grads.derived();
  state.v = b2 * state.v + (Scalar(1) - b2) * grads.derived().square();
  const Scalar c1 = Scalar(1) - Scalar(std::pow(cfg.beta1, double(state.t)));
  const Scalar c2 = Scalar(1) - Scalar(std::pow(cfg.beta2, double(state.t)));
  params.derived() -= Scalar(lr) * (state.m / c1) / ((state.v / c2).sqrt() + Scalar(cfg.epsilon));
}

/// Cosine annealing from lr0 at step 0 to eta_min at step == total.
inline double cosine_lr(double lr0, long step, long total, double eta_min) {
  if (total < 1 || step < 0 || step > total) {
    throw Error(ErrorCode::InvalidConfig, "cosine schedule step out of range");
  }
  return eta_min + (lr0 - eta_min) * (1.0 + std::cos(std::numbers::pi * double(step) / double(total))) / 2.0;
}

/// Bilinear 2x upsampling of a field onto a width x height grid with vector
/// magnitudes doubled. Fine pixel x sits at coarse coordinate (x - 0.5) / 2,
/// which is where box downsampling by two puts it.
template <typename Scalar>
BasicDisplacementField<Scalar> upsample_field(const BasicDisplacementField<Scalar>& coarse, Index width, Index height) {
  auto out = BasicDisplacementField<Scalar>::Zero(width, height);
  for (Index y = 0; y < height; ++y) {
    const Scalar cy = (Scalar(y) - Scalar(0.5)) / Scalar(2);
    for (Index x = 0; x < width; ++x) {
      const Scalar cx = (Scalar(x) - Scalar(0.5)) / Scalar(2);
      out.u(y, x) = Scalar(2) * bilinear_sample(coarse.u, cx, cy);
      out.v(y, x) = Scalar(2) * bilinear_sample(coarse.v, cx, cy);
    }
  }
  return out;
}

/// Number of pyramid levels actually used: at most cfg.levels, and the
/// coarsest level keeps at least 8 pixels along its shorter side.
inline int effective_levels(Index width, Index height, int requested) {
  int levels = 1;
  Index shorter = std::min(width, height);
  while (levels < requested && (shorter + 1) / 2 >= 8) {
    shorter = (shorter + 1) / 2;
    ++levels;
  }
  return levels;
}

/// Step 2: coarse-to-fine Adam optimization of a dense displacement field.
///
/// Each pyramid level runs its share of cfg.iterations with its own cosine
/// schedule (the finest level takes the remainder). The optimizer state is
/// kept in normalized grid units, where [-1, 1] spans the image along each
/// axis, so one learning rate means the same physical step at every level.
/// The returned field is the lowest-objective iterate seen on the finest
/// grid, the zero field included, so the final objective never exceeds the
/// initial one.
template <typename Scalar>
BasicDeformResult<Scalar> optimize_deformation(const BasicGrayImage<Scalar>& fixed,
                                               const BasicGrayImage<Scalar>& moving_rigid, const DeformConfig& cfg) {
  cfg.validate();
  detail::require_same_grid(moving_rigid.width(), moving_rigid.height(), fixed.width(), fixed.height(),
                            "moving image is not on the fixed grid");
  if (fixed.width() < 2 || fixed.height() < 2) {
    throw Error(ErrorCode::ShapeMismatch, "deformable registration needs at least a 2x2 grid");
  }

  const int levels = effective_levels(fixed.width(), fixed.height(), cfg.levels);
  std::vector<BasicGrayImage<Scalar>> fixed_pyr{fixed};
  std::vector<BasicGrayImage<Scalar>> moving_pyr{moving_rigid};
  for (int l = 1; l < levels; ++l) {
    fixed_pyr.insert(fixed_pyr.begin(), downsample(fixed_pyr.front(), 2));
    moving_pyr.insert(moving_pyr.begin(), downsample(moving_pyr.front(), 2));
  }

  BasicDeformResult<Scalar> result;
  result.levels_used = levels;
  const auto zero = BasicDisplacementField<Scalar>::Zero(fixed.width(), fixed.height());
  result.initial = objective(fixed, moving_rigid, zero, cfg.lambda_smooth);
  if (!std::isfinite(result.initial.total)) throw Error(ErrorCode::NonFiniteLoss, "initial objective is not finite");

  const long per_level = cfg.iterations / levels;
  long global_iter = 0;
  BasicDisplacementField<Scalar> field =
      BasicDisplacementField<Scalar>::Zero(fixed_pyr.front().width(), fixed_pyr.front().height());
  BasicDisplacementField<Scalar> best = zero;
  LossTerms best_terms = result.initial;

  for (int level = 0; level < levels; ++level) {
    const auto& f = fixed_pyr[static_cast<std::size_t>(level)];
    const auto& m = moving_pyr[static_cast<std::size_t>(level)];
    if (level > 0) field = upsample_field(field, f.width(), f.height());
    const bool finest = level == levels - 1;
    const long steps = finest ? cfg.iterations - per_level * (levels - 1) : per_level;

    const Index n = f.width() * f.height();
    const Scalar to_norm_x = Scalar(2.0 / double(f.width() - 1));
    const Scalar to_norm_y = Scalar(2.0 / double(f.height() - 1));
    Eigen::Array<Scalar, Eigen::Dynamic, 1> params(2 * n);
    Eigen::Array<Scalar, Eigen::Dynamic, 1> gparams(2 * n);
    params.head(n) = field.u.reshaped() * to_norm_x;
    params.tail(n) = field.v.reshaped() * to_norm_y;
    BasicAdamState<Scalar> state(2 * n);
    BasicDisplacementField<Scalar> grad;

    auto sync_field = [&] {
      field.u.reshaped() = params.head(n) / to_norm_x;
      field.v.reshaped() = params.tail(n) / to_norm_y;
    };

    for (long step = 0; step < steps; ++step) {
      const LossTerms terms = detail::evaluate_objective<Scalar>(f, m, field, cfg.lambda_smooth, &grad);
      if (!std::isfinite(terms.total) || !grad.all_finite()) {
        throw Error(ErrorCode::NonFiniteLoss, "objective or gradient diverged at iteration " + std::to_string(global_iter));
      }
      const double lr = cosine_lr(cfg.lr0, step, steps, cfg.eta_min);
      result.trace.push_back({global_iter, level, step, steps, terms.mse, terms.smooth, terms.total, lr});
      if (finest && terms.total < best_terms.total) {
        best = field;
        best_terms = terms;
      }
      // d/d(normalized) = d/d(pixels) * (pixels per normalized unit)
      gparams.head(n) = grad.u.reshaped() / to_norm_x;
      gparams.tail(n) = grad.v.reshaped() / to_norm_y;
      adam_step(state, params, gparams, lr, cfg);
      sync_field();
      ++global_iter;
    }
    if (finest) {
      const LossTerms terms = objective(f, m, field, cfg.lambda_smooth);
      if (!std::isfinite(terms.total) || !field.all_finite()) {
        throw Error(ErrorCode::NonFiniteLoss, "final objective is not finite");
      }
      if (terms.total < best_terms.total) {
        best = field;
        best_terms = terms;
      }
    }
  }

  result.field = std::move(best);
  result.final = best_terms;
  const long finest_steps = cfg.iterations - per_level * (levels - 1);
  result.trace.push_back({global_iter, levels - 1, finest_steps, finest_steps, best_terms.mse, best_terms.smooth,
                          best_terms.total, cosine_lr(cfg.lr0, finest_steps, finest_steps, cfg.eta_min)});
  return result;
}

}  // namespace wsireg

#endif  // WSIREG_DEFORM_HPP_
