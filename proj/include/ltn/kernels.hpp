#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>

#include "ltn/types.hpp"

namespace ltn {

/// Truncated interaction kernel gamma(x, y) = phi(x, y) * 1[|x - y| < delta].
/// Shape derivatives only use the smooth part phi and its gradients.
class Kernel {
public:
    enum class Kind { Constant, Quadratic, Custom };

    using ValueFn = std::function<double(const Vec2&, const Vec2&)>;
    using GradFn = std::function<Vec2(const Vec2&, const Vec2&)>;

    /// Arbitrary smooth part; used for validation experiments.
    static Kernel custom(std::string name, double delta, ValueFn value, GradFn grad_x, GradFn grad_y,
                         double lower_bound, double lower_bound_radius, double upper_bound) {
        check_delta(delta);
        Kernel k(Kind::Custom, std::move(name), delta);
        k.value_ = std::move(value);
        k.grad_x_ = std::move(grad_x);
        k.grad_y_ = std::move(grad_y);
        k.gamma0_ = lower_bound;
        k.eps_ = lower_bound_radius;
        k.sup_ = upper_bound;
        return k;
    }

    Kind kind() const { return kind_; }
    const std::string& name() const { return name_; }
    double delta() const { return delta_; }
    /// Scale 4 / (pi delta^4) shared by both built-in kernels.
    double scale() const { return scale_; }
    /// gamma >= lower_bound() for |x - y| <= lower_bound_radius().
    double lower_bound() const { return gamma0_; }
    double lower_bound_radius() const { return eps_; }
    double upper_bound() const { return sup_; }
    bool has_gradient() const { return kind_ != Kind::Constant; }

    double smooth_value(const Vec2& x, const Vec2& y) const {
        switch (kind_) {
        case Kind::Constant: return scale_;
        case Kind::Quadratic: return scale_ * (1.0 - 0.5 * (x - y).squaredNorm() / (delta_ * delta_));
        case Kind::Custom: return value_(x, y);
        }
        return 0.0;
    }

    Vec2 smooth_grad_x(const Vec2& x, const Vec2& y) const {
        switch (kind_) {
        case Kind::Constant: return Vec2::Zero();
        case Kind::Quadratic: return -scale_ / (delta_ * delta_) * (x - y);
        case Kind::Custom: return grad_x_(x, y);
        }
        return Vec2::Zero();
    }

    Vec2 smooth_grad_y(const Vec2& x, const Vec2& y) const {
        switch (kind_) {
        case Kind::Constant: return Vec2::Zero();
        case Kind::Quadratic: return scale_ / (delta_ * delta_) * (x - y);
        case Kind::Custom: return grad_y_(x, y);
        }
        return Vec2::Zero();
    }

    bool in_horizon(const Vec2& x, const Vec2& y) const { return (x - y).squaredNorm() < delta_ * delta_; }

    double value(const Vec2& x, const Vec2& y) const { return in_horizon(x, y) ? smooth_value(x, y) : 0.0; }

private:
    friend Kernel gamma1(double);
    friend Kernel gamma2(double);

    Kernel(Kind kind, std::string name, double delta)
        : kind_(kind), name_(std::move(name)), delta_(delta),
          scale_(4.0 / (std::numbers::pi * delta * delta * delta * delta)) {}

    static void check_delta(double delta) {
        if (!(delta > 0.0) || !std::isfinite(delta))
            throw Error(ErrorCode::InvalidArgument, "kernel horizon must be positive");
    }

    Kind kind_;
    std::string name_;
    double delta_;
    double scale_;
    double gamma0_ = 0.0, eps_ = 0.0, sup_ = 0.0;
    ValueFn value_;
    GradFn grad_x_, grad_y_;
};

/// Constant kernel 4/(pi delta^4) on the ball.
inline Kernel gamma1(double delta) {
    Kernel::check_delta(delta);
    Kernel k(Kernel::Kind::Constant, "gamma1", delta);
    k.gamma0_ = k.scale_;
    k.eps_ = 0.5 * delta;
    k.sup_ = k.scale_;
    return k;
}

/// 4/(pi delta^4) (1 - |x-y|^2 / (2 delta^2)) on the ball.
inline Kernel gamma2(double delta) {
    Kernel::check_delta(delta);
    Kernel k(Kernel::Kind::Quadratic, "gamma2", delta);
    k.eps_ = 0.5 * delta;
    k.gamma0_ = k.scale_ * (1.0 - 0.125);
    k.sup_ = k.scale_;
    return k;
}

inline Kernel make_kernel(const std::string& name, double delta) {
    if (name == "gamma1") return gamma1(delta);
    if (name == "gamma2") return gamma2(delta);
    throw Error(ErrorCode::ConfigError, "unknown kernel '" + name + "'");
}

struct KernelReport {
    bool nonnegative = true;       // K1: gamma >= 0
    bool truncated = true;         // K1: zero outside the horizon
    bool lower_bound = true;       // K2
    bool bounded = true;           // K3
    bool translation_invariant = true;  // K4
    bool symmetric = true;
    bool gradient_consistent = true;
    double max_gradient_rel_error = 0.0;
    int samples = 0;

    bool all_pass() const {
        return nonnegative && truncated && lower_bound && bounded && translation_invariant && symmetric &&
               gradient_consistent;
    }
};

/// Sampled checks of the kernel conditions over random pairs in the box
/// [lo, hi]^2 plus central-difference checks (step 1e-6 delta) of the smooth
/// gradients at pairs with |x - y| < 0.9 delta.
inline KernelReport validate_kernel(const Kernel& k, int samples, std::uint64_t seed = 7, double lo = -0.1,
                                    double hi = 1.1, double gradient_tolerance = 1e-5) {
    if (samples < 100) throw Error(ErrorCode::InvalidArgument, "at least 100 samples required");
    KernelReport r;
    r.samples = samples;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> box(lo, hi), unit(0.0, 1.0), shift(-1.0, 1.0);
    const double d = k.delta();
    const double h = 1e-6 * d;
    auto near_point = [&](const Vec2& x, double radius) {
        const double rr = radius * std::sqrt(unit(rng));
        const double th = 2.0 * std::numbers::pi * unit(rng);
        return Vec2(x + rr * Vec2(std::cos(th), std::sin(th)));
    };
    for (int s = 0; s < samples; ++s) {
        const Vec2 x(box(rng), box(rng));
        const Vec2 y_far(box(rng), box(rng));
        const Vec2 y = near_point(x, 2.0 * d);
        for (const Vec2& yy : {y, y_far}) {
            const double v = k.value(x, yy);
            if (!(v >= 0.0)) r.nonnegative = false;
            if (!k.in_horizon(x, yy) && v != 0.0) r.truncated = false;
            if (!(v <= k.upper_bound()) || !std::isfinite(v)) r.bounded = false;
            if (std::abs(v - k.value(yy, x)) > 1e-12 * k.upper_bound()) r.symmetric = false;
            const Vec2 t(shift(rng), shift(rng));
            if (std::abs(v - k.value(x + t, yy + t)) > 1e-9 * k.upper_bound()) r.translation_invariant = false;
        }
        const Vec2 y_eps = near_point(x, k.lower_bound_radius());
        if (k.value(x, y_eps) < k.lower_bound() || !(k.lower_bound() > 0.0)) r.lower_bound = false;

        // Gradient consistency.
        const Vec2 yg = near_point(x, 0.9 * d);
        Vec2 fd_x, fd_y;
        for (int c = 0; c < 2; ++c) {
            Vec2 e = Vec2::Zero();
            e[c] = h;
            fd_x[c] = (k.smooth_value(x + e, yg) - k.smooth_value(x - e, yg)) / (2.0 * h);
            fd_y[c] = (k.smooth_value(x, yg + e) - k.smooth_value(x, yg - e)) / (2.0 * h);
        }
        const double floor = 1e-9 * k.upper_bound() / d;
        auto rel = [floor](const Vec2& g, const Vec2& fd) {
            const double denom = std::max(fd.norm(), floor);
            return (g - fd).norm() / denom;
        };
        const double e = std::max(rel(k.smooth_grad_x(x, yg), fd_x), rel(k.smooth_grad_y(x, yg), fd_y));
        r.max_gradient_rel_error = std::max(r.max_gradient_rel_error, e);
    }
    r.gradient_consistent = r.max_gradient_rel_error <= gradient_tolerance;
    return r;
}

}  // namespace ltn
