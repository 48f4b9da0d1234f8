#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsq/gaussian_state.hpp"

namespace gsq {

/// Coefficients of the covariance flow  dA/dt = G - D A - A E - A F A.
struct RiccatiSystem {
    Matrix G, D, E, F;

    RiccatiSystem(Matrix g, Matrix d, Matrix e, Matrix f)
        : G(std::move(g)), D(std::move(d)), E(std::move(e)), F(std::move(f)) {
        const auto n = G.rows();
        auto square = [n](const Matrix& m) { return m.rows() == n && m.cols() == n; };
        if (!square(G) || !square(D) || !square(E) || !square(F))
            throw std::invalid_argument("Riccati coefficient matrices must share one square size");
    }

    Eigen::Index dim() const { return G.rows(); }

    Matrix residual(const Matrix& a) const { return G - D * a - a * E - a * F * a; }
};

struct CovTrajectory {
    std::vector<double> times;
    std::vector<Matrix> covariances;
};

/// One-step coupling of a retained block to a fresh beam segment,
///   S_aa = 1 + tau N,   S_as = sqrt(tau) M_in,   S_sa = sqrt(tau) M_out,
/// with the segment prepared in `segment_cov` (vacuum = identity). The
/// continuous limit of repeated attach -> step -> (condition | trace out)
/// is a Riccati flow; this struct carries everything needed to build it.
struct SegmentCoupling {
    Matrix drift;        // N
    Matrix noise_in;     // M_in,  retained x segment
    Matrix readout;      // M_out, segment x retained
    Matrix segment_cov;  // 2x2
};

/// Riccati system of the continuous measurement limit. `measured_slot` is the
/// segment row that gets detected each step (std::nullopt = traced out).
inline RiccatiSystem measurement_limit(const SegmentCoupling& coupling,
                                       std::optional<Eigen::Index> measured_slot) {
    const Matrix& n = coupling.drift;
    const Matrix& min = coupling.noise_in;
    const Matrix& mout = coupling.readout;
    const Matrix& bseg = coupling.segment_cov;
    Matrix g = min * bseg * min.transpose();
    Matrix d = -n;
    Matrix f = Matrix::Zero(n.rows(), n.cols());
    if (measured_slot) {
        const auto q = *measured_slot;
        const double denom = bseg(q, q);
        if (!(denom > 0.0)) throw std::invalid_argument("measured segment slot has no noise");
        const Vector w = mout.row(q).transpose();
        const Vector c = min * bseg.col(q);
        g -= (c * c.transpose()) / denom;
        d += (c * w.transpose()) / denom;
        f = (w * w.transpose()) / denom;
    }
    Matrix e = d.transpose();
    return RiccatiSystem(std::move(g), std::move(d), std::move(e), std::move(f));
}

namespace detail {

inline double riccati_rate(const RiccatiSystem& sys, const Matrix& a0) {
    const double nd = sys.D.cwiseAbs().rowwise().sum().maxCoeff();
    const double ne = sys.E.cwiseAbs().rowwise().sum().maxCoeff();
    const double nf = sys.F.cwiseAbs().rowwise().sum().maxCoeff();
    const double na = a0.size() > 0 ? a0.cwiseAbs().rowwise().sum().maxCoeff() : 0.0;
    const double ng = sys.G.cwiseAbs().rowwise().sum().maxCoeff();
    return std::max({nd, ne, nf * (1.0 + na), std::sqrt(ng * (nf + 1e-300))});
}

inline void rk4_riccati_step(const RiccatiSystem& sys, Matrix& a, double h) {
    const Matrix k1 = sys.residual(a);
    const Matrix k2 = sys.residual(a + 0.5 * h * k1);
    const Matrix k3 = sys.residual(a + 0.5 * h * k2);
    const Matrix k4 = sys.residual(a + h * k3);
    a += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    a = 0.5 * (a + a.transpose()).eval();
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

}  // namespace detail

/// Classical fixed-step 4th-order integration of the Riccati flow, sampled at
/// `times`. The internal step never exceeds min(1e-3 / rate, output spacing)
/// where rate bounds the stiffest coefficient scale.
inline CovTrajectory integrate(const RiccatiSystem& sys, Matrix a0,
                               const std::vector<double>& times) {
    if (a0.rows() != sys.dim() || a0.cols() != sys.dim())
        throw std::invalid_argument("initial covariance size mismatch");
    if ((a0 - a0.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, a0.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("initial covariance must be symmetric");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1])) throw std::invalid_argument("times must increase");

    const double rate = detail::riccati_rate(sys, a0);
    const double h_max = rate > 0.0 ? 1e-3 / rate : std::numeric_limits<double>::infinity();

    CovTrajectory traj;
    double t = 0.0;
    Matrix a = 0.5 * (a0 + a0.transpose());
    for (double t_out : times) {
        if (t_out > t) {
            const double span = t_out - t;
            const auto steps = static_cast<long>(std::ceil(span / std::min(h_max, span)));
            const double h = span / static_cast<double>(steps);
            for (long s = 0; s < steps; ++s) {
                detail::rk4_riccati_step(sys, a, h);
                if (!a.allFinite())
                    throw std::runtime_error("Riccati integration diverged at t = " +
                                             std::to_string(t + (s + 1) * h));
            }
            t = t_out;
        }
        traj.times.push_back(t_out);
        traj.covariances.push_back(a);
    }
    return traj;
}

/// Linearized two-matrix route: A(t) = W(t) U(t)^-1 with
///   dW/dt = -D W + G U,   dU/dt = F W + E U,   W(0) = A0, U(0) = 1.
/// W and U are refactored along the way so that U never overflows.
inline Matrix integrate_linearized(const RiccatiSystem& sys, const Matrix& a0, double t_end) {
    const auto n = sys.dim();
    Matrix w = 0.5 * (a0 + a0.transpose());
    Matrix u = Matrix::Identity(n, n);

    auto refactor = [&]() {
        Eigen::FullPivLU<Matrix> lu(u);
        lu.setThreshold(1e-12);
        if (!lu.isInvertible())
            throw std::runtime_error("linearized Riccati propagator became singular");
        w = lu.solve(w.transpose()).transpose().eval();  // w <- w u^-1
        u = Matrix::Identity(n, n);
    };

    const double rate = detail::riccati_rate(sys, a0);
    const double h_max = rate > 0.0 ? 1e-3 / rate : t_end;
    if (t_end > 0.0) {
        const auto steps = static_cast<long>(std::ceil(t_end / std::min(h_max, t_end)));
        const double h = t_end / static_cast<double>(steps);
        auto dw = [&](const Matrix& wv, const Matrix& uv) { return -sys.D * wv + sys.G * uv; };
        auto du = [&](const Matrix& wv, const Matrix& uv) { return sys.F * wv + sys.E * uv; };
        for (long s = 0; s < steps; ++s) {
            const Matrix kw1 = dw(w, u), ku1 = du(w, u);
            const Matrix kw2 = dw(w + 0.5 * h * kw1, u + 0.5 * h * ku1),
                         ku2 = du(w + 0.5 * h * kw1, u + 0.5 * h * ku1);
            const Matrix kw3 = dw(w + 0.5 * h * kw2, u + 0.5 * h * ku2),
                         ku3 = du(w + 0.5 * h * kw2, u + 0.5 * h * ku2);
            const Matrix kw4 = dw(w + h * kw3, u + h * ku3), ku4 = du(w + h * kw3, u + h * ku3);
            w += (h / 6.0) * (kw1 + 2.0 * kw2 + 2.0 * kw3 + kw4);
            u += (h / 6.0) * (ku1 + 2.0 * ku2 + 2.0 * ku3 + ku4);
            if (!w.allFinite() || !u.allFinite())
                throw std::runtime_error("linearized Riccati integration diverged at t = " +
                                         std::to_string((s + 1) * h));
            if (u.cwiseAbs().maxCoeff() > 1e8) refactor();
        }
    }
    Eigen::FullPivLU<Matrix> lu(u);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible())
        throw std::runtime_error("linearized Riccati propagator became singular");
    Matrix a = lu.solve(w.transpose()).transpose().eval();
    return 0.5 * (a + a.transpose()).eval();
}

/// Stabilizing root of G - D A - A E - A F A = 0, found by damped Newton
/// iteration from A = 1 (each update solves the linearized Sylvester
/// equation; steps are halved until the residual decreases). Converges to
/// residual 1e-12 within the iteration cap or throws.
inline Matrix steady_state(const RiccatiSystem& sys) {
    const auto n = sys.dim();
    constexpr int kMaxIterations = 100000;

    auto solve_from = [&](Matrix a) -> std::optional<Matrix> {
        double res_norm = sys.residual(a).cwiseAbs().maxCoeff();
        for (int it = 0; it < kMaxIterations; ++it) {
            const double tol = 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff());
            if (res_norm < tol) {
                Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
                if (eig.eigenvalues().minCoeff() < -1e3 * tol) return std::nullopt;  // wrong root
                return a;
            }
            const Matrix res = sys.residual(a);
            const Matrix left = sys.D + a * sys.F;
            const Matrix right = sys.E + sys.F * a;
            const Matrix m = detail::kron(Matrix::Identity(n, n), left) +
                             detail::kron(right.transpose(), Matrix::Identity(n, n));
            Eigen::FullPivLU<Matrix> lu(m);
            Matrix h;
            if (lu.isInvertible()) {
                Vector vec_res = Eigen::Map<const Vector>(res.data(), res.size());
                Vector vec_h = lu.solve(vec_res);
                h = Eigen::Map<Matrix>(vec_h.data(), n, n);
            } else {
                h = 0.1 / std::max(1.0, detail::riccati_rate(sys, a)) * res;
            }
            double scale = 1.0;
            bool accepted = false;
            for (int back = 0; back < 60; ++back) {
                Matrix trial = a + scale * h;
                trial = 0.5 * (trial + trial.transpose()).eval();
                const double trial_norm = sys.residual(trial).cwiseAbs().maxCoeff();
                if (trial_norm < res_norm) {
                    a = std::move(trial);
                    res_norm = trial_norm;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if (!accepted) return std::nullopt;  // stalled
        }
        return std::nullopt;
    };

    for (double s : {1.0, 0.1, 10.0}) {
        if (auto a = solve_from(s * Matrix::Identity(n, n))) return *a;
    }
    throw std::runtime_error("Riccati steady state did not converge");
}

}  // namespace gsq
