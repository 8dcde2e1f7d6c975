// Small control blocks and three-phase frame transforms shared by the
// machine, inverter and wind-plant models.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

namespace emtsim {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

using Complex = std::complex<double>;
using Phases = std::array<double, 3>;  // instantaneous a, b, c values

// Space phasor of a balanced three-phase set: for v_a = V cos(wt + phi),
// space_phasor() returns V * exp(j(wt + phi)).
inline Complex space_phasor(const Phases& x) {
    static const Complex a{-0.5, 0.86602540378443864676};
    return (2.0 / 3.0) * (x[0] + a * x[1] + a * a * x[2]);
}

inline Phases phases_from_phasor(Complex s) {
    static const Complex a{-0.5, 0.86602540378443864676};
    return {s.real(), (s * std::conj(a)).real(), (s * a).real()};
}

// Rotate the space phasor into a frame at angle theta (dq components with the
// d axis along theta).
inline Complex to_dq(Complex s, double theta) {
    return s * std::polar(1.0, -theta);
}

inline Complex from_dq(Complex dq, double theta) {
    return dq * std::polar(1.0, theta);
}

inline double wrap_angle(double theta) {
    theta = std::fmod(theta, kTwoPi);
    return theta < 0.0 ? theta + kTwoPi : theta;
}

// Symmetric deadband: zero inside +/- band, shifted linear outside.
inline double apply_deadband(double x, double band) {
    if (x > band) return x - band;
    if (x < -band) return x + band;
    return 0.0;
}

// PI regulator with output clamping and conditional anti-windup.
struct PiController {
    double kp = 1.0;
    double ki = 0.0;
    double out_min = -1e30;
    double out_max = 1e30;
    double integ = 0.0;

    double step(double error, double dt) {
        integ += ki * error * dt;
        integ = std::clamp(integ, out_min, out_max);
        return std::clamp(kp * error + integ, out_min, out_max);
    }
    void reset(double value = 0.0) { integ = value; }
};

// Trapezoidal first-order lag y' = (u - y)/tau with the input held across the
// step; tau <= 0 passes the input through.
struct LagFilter {
    double tau = 0.0;
    double y = 0.0;

    double step(double u, double dt) {
        if (tau <= 0.0) {
            y = u;
            return y;
        }
        const double a = dt / (2.0 * tau);
        y = ((1.0 - a) * y + 2.0 * a * u) / (1.0 + a);
        return y;
    }
};

struct RateLimiter {
    double rate_up = 1e30;
    double rate_down = 1e30;
    double y = 0.0;

    double step(double u, double dt) {
        const double hi = y + rate_up * dt;
        const double lo = y - rate_down * dt;
        y = std::clamp(u, lo, hi);
        return y;
    }
};

// Sliding one-cycle window over (2/3)*(va^2+vb^2+vc^2); for a balanced set the
// square root of the mean equals the waveform amplitude.
class RmsWindow {
public:
    RmsWindow() = default;
    RmsWindow(int samples, double initial_mag) { reset(samples, initial_mag); }

    void reset(int samples, double initial_mag) {
        buf_.assign(std::max(samples, 1), initial_mag * initial_mag);
        sum_ = buf_.size() * initial_mag * initial_mag;
        pos_ = 0;
    }

    double push(const Phases& v) {
        const double sq = (2.0 / 3.0) * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        sum_ += sq - buf_[pos_];
        buf_[pos_] = sq;
        pos_ = (pos_ + 1) % buf_.size();
        return value();
    }

    double value() const { return std::sqrt(std::max(sum_ / buf_.size(), 0.0)); }

private:
    std::vector<double> buf_{1.0};
    double sum_ = 1.0;
    std::size_t pos_ = 0;
};

}  // namespace emtsim
