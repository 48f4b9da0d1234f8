#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gsq/gaussian_state.hpp"
#include "gsq/riccati.hpp"

namespace gsq {

/// Degenerate OPO below threshold: cavity decay gamma, parametric gain g
/// (stable regime 4 g < gamma), beam discretized in segments of duration tau.
struct OpoParams {
    double gamma;  // s^-1
    double g;      // s^-1
    double tau;    // s

    void validate() const {
        if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be > 0");
        if (!(4.0 * g < gamma))
            throw std::invalid_argument("OPO unstable: requires 4g < gamma");
        if (!(tau > 0.0) || !(tau * gamma < 0.1))
            throw std::invalid_argument("segment stepping requires 0 < tau*gamma < 0.1");
    }

    /// Fig.-2-style experimental parameters: gamma = 2*pi*6e6 s^-1, g = 0.2 gamma.
    static OpoParams defaults() {
        const double gamma = 2.0 * M_PI * 6e6;
        return {gamma, 0.2 * gamma, 1e-3 / gamma};
    }
};

enum class Quadrature { X, P, None };

inline const char* to_string(Quadrature q) {
    switch (q) {
        case Quadrature::X: return "x";
        case Quadrature::P: return "p";
        default: return "none";
    }
}

/// One-segment cavity/beam map over (x_c, p_c, x_ph, p_ph), with
/// xi = 1 - gamma*tau/2:
///   x_c  -> (xi + 2 g tau) x_c + sqrt(gamma tau) x_ph
///   p_c  -> (xi - 2 g tau) p_c + sqrt(gamma tau) p_ph
///   x_ph -> -sqrt(gamma tau) x_c + xi x_ph
///   p_ph -> -sqrt(gamma tau) p_c + xi p_ph
inline StepMatrix opo_step_matrix(const OpoParams& p) {
    p.validate();
    const double xi = 1.0 - p.gamma * p.tau / 2.0;
    const double s = std::sqrt(p.gamma * p.tau);
    Matrix m(4, 4);
    m << xi + 2.0 * p.g * p.tau, 0, s, 0,
         0, xi - 2.0 * p.g * p.tau, 0, s,
         -s, 0, xi, 0,
         0, -s, 0, xi;
    return StepMatrix(std::move(m), {pos("x_c"), mom("p_c"), pos("x_ph"), mom("p_ph")});
}

/// tau -> 0 structure of the same map, for the continuous-limit Riccati.
inline SegmentCoupling opo_coupling(const OpoParams& p) {
    const double root_gamma = std::sqrt(p.gamma);
    Matrix drift(2, 2);
    drift << 2.0 * p.g - p.gamma / 2.0, 0, 0, -2.0 * p.g - p.gamma / 2.0;
    return {drift, root_gamma * Matrix::Identity(2, 2), -root_gamma * Matrix::Identity(2, 2),
            Matrix::Identity(2, 2)};
}

/// Riccati coefficients for the cavity covariance, conditioned on homodyne
/// detection of the chosen output quadrature (Quadrature::None = beam traced
/// out, F = 0). Detecting p reproduces the conditioned closed forms; see
/// oracle_intracavity.
inline RiccatiSystem riccati_system_for(const OpoParams& p, Quadrature measured) {
    p.validate();
    std::optional<Eigen::Index> slot;
    if (measured == Quadrature::X) slot = 0;
    if (measured == Quadrature::P) slot = 1;
    return measurement_limit(opo_coupling(p), slot);
}

namespace detail {

// var(x_c) without detection, vacuum start (mirrors under g -> -g).
inline double opo_var_unconditional(double gamma, double g, double t) {
    const double k = gamma - 4.0 * g;
    if (k == 0.0) return 0.5 * (1.0 + gamma * t);  // limit form
    return 0.5 * (gamma - 4.0 * g * std::exp(-k * t)) / k;
}

// var(p_c) with the output p quadrature detected, vacuum start.
inline double opo_var_conditioned(double gamma, double g, double t) {
    const double k = gamma - 4.0 * g;
    if (k == 0.0) return 0.5 / (1.0 + gamma * t);
    return 0.5 * k / (gamma - 4.0 * g * std::exp(-k * t));
}

}  // namespace detail

/// Closed-form intracavity variances (var_xc, var_pc) at time t from vacuum.
/// measured = None: both quadratures are the unconditional solutions.
/// measured = P: var_xc is unchanged, var_pc is the conditioned solution
/// (their product is exactly 1/4). measured = X is the g -> -g mirror.
inline std::pair<double, double> oracle_intracavity(const OpoParams& p, double t,
                                                    Quadrature measured) {
    if (!(t >= 0.0)) throw std::invalid_argument("time must be >= 0");
    const double gamma = p.gamma, g = p.g;
    switch (measured) {
        case Quadrature::None:
            return {detail::opo_var_unconditional(gamma, g, t),
                    detail::opo_var_unconditional(gamma, -g, t)};
        case Quadrature::P:
            return {detail::opo_var_unconditional(gamma, g, t),
                    detail::opo_var_conditioned(gamma, g, t)};
        case Quadrature::X:
            return {detail::opo_var_conditioned(gamma, -g, t),
                    detail::opo_var_unconditional(gamma, -g, t)};
    }
    throw std::logic_error("unreachable");
}

/// Normal-ordered output spectral density at detuning omega from the cavity
/// resonance (steady state): 2 gamma g / ((gamma/2 - 2g)^2 + omega^2).
inline double oracle_spectrum(const OpoParams& p, double omega) {
    p.validate();
    const double half_width = p.gamma / 2.0 - 2.0 * p.g;
    return 2.0 * p.gamma * p.g / (half_width * half_width + omega * omega);
}

/// Normal-ordered variance of the time-integrated output quadrature x_T
/// (steady state). Adding the vacuum 1/2 gives the full var(x_T); the
/// steady-seeded collective oracle equals this + 1/2 identically.
inline double oracle_integrated_spectrum(const OpoParams& p, double t_total) {
    p.validate();
    if (!(t_total > 0.0)) throw std::invalid_argument("integration time must be > 0");
    const double gamma = p.gamma, g = p.g;
    const double k = gamma - 4.0 * g;
    if (g == 0.0) return 0.0;
    const double x = (-gamma / 2.0 + 2.0 * g) * t_total;
    return 8.0 * g * gamma / (t_total * k * k * k) * (k * t_total + 2.0 * std::expm1(x));
}

struct IntracavityTrace {
    std::vector<double> times;
    std::vector<double> var_xc;
    std::vector<double> var_pc;
    std::vector<double> purity;  // 1/sqrt(det of the cavity cov block)
};

/// Segment-chain simulation of the cavity: repeat attach_vacuum ->
/// apply_linear -> (condition_homodyne | trace_out). First-order in tau
/// against the matching Riccati / closed-form solution.
inline IntracavityTrace simulate_intracavity(const OpoParams& p, double t_max,
                                             Quadrature measured, double dt_out = 0.0) {
    p.validate();
    if (!(t_max > 0.0)) throw std::invalid_argument("t_max must be > 0");
    if (dt_out <= 0.0) dt_out = t_max / 200.0;

    const StepMatrix step = opo_step_matrix(p);
    const std::vector<Label> segment = {pos("x_ph"), mom("p_ph")};
    GaussianState state = new_vacuum({pos("x_c"), mom("p_c")});

    IntracavityTrace trace;
    auto record = [&](double t) {
        trace.times.push_back(t);
        trace.var_xc.push_back(state.variance("x_c"));
        trace.var_pc.push_back(state.variance("p_c"));
        const double det = state.cov()(0, 0) * state.cov()(1, 1) - state.cov()(0, 1) * state.cov()(1, 0);
        trace.purity.push_back(det > 0.0 ? 1.0 / std::sqrt(det) : 0.0);
    };

    record(0.0);
    const auto n_steps = static_cast<long>(std::llround(t_max / p.tau));
    long next_out = std::max<long>(1, static_cast<long>(std::llround(dt_out / p.tau)));
    const long out_every = next_out;
    for (long k = 1; k <= n_steps; ++k) {
        state = attach_vacuum(state, segment);
        state = apply_linear(state, step);
        if (measured == Quadrature::None) {
            state = trace_out(state, {"x_ph", "p_ph"});
        } else {
            const char* name = measured == Quadrature::X ? "x_ph" : "p_ph";
            state = condition_homodyne(state, name, state.mean_of(name));
        }
        if (k == next_out || k == n_steps) {
            record(static_cast<double>(k) * p.tau);
            next_out += out_every;
        }
    }
    return trace;
}

}  // namespace gsq
