#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gsq/labels.hpp"
#include "gsq/rng.hpp"

namespace gsq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Multimode Gaussian state over labelled rows.
///
/// Covariance convention: cov_ij = 2 Re<(y_i - <y_i>)(y_j - <y_j>)>, so the
/// vacuum covariance is the identity and variance(v) = cov_vv / 2. Classical
/// parameter rows use the same doubling (cov_BB = 2 var(B)).
class GaussianState {
public:
    GaussianState() = default;

    GaussianState(std::vector<Label> labels, Matrix cov, Vector mean)
        : labels_(std::move(labels)), cov_(std::move(cov)), mean_(std::move(mean)) {
        require_unique(labels_);
        const auto n = static_cast<Eigen::Index>(labels_.size());
        if (cov_.rows() != n || cov_.cols() != n || mean_.size() != n)
            throw std::invalid_argument("state dimensions do not match label count");
        symmetrize();
    }

    Eigen::Index dim() const { return static_cast<Eigen::Index>(labels_.size()); }
    const std::vector<Label>& labels() const { return labels_; }
    const Matrix& cov() const { return cov_; }
    const Vector& mean() const { return mean_; }

    Eigen::Index index_of(const std::string& name) const {
        for (std::size_t i = 0; i < labels_.size(); ++i)
            if (labels_[i].name == name) return static_cast<Eigen::Index>(i);
        throw std::invalid_argument("unknown label: " + name);
    }

    bool has_label(const std::string& name) const {
        for (const auto& l : labels_)
            if (l.name == name) return true;
        return false;
    }

    /// variance(v) = cov_vv / 2
    double variance(const std::string& name) const {
        const auto i = index_of(name);
        return 0.5 * cov_(i, i);
    }

    double mean_of(const std::string& name) const { return mean_(index_of(name)); }

    void set_mean(const std::string& name, double value) { mean_(index_of(name)) = value; }

    /// Overrides the diagonal entry for one row (cov_vv = 2 var).
    void set_variance(const std::string& name, double var) {
        const auto i = index_of(name);
        cov_(i, i) = 2.0 * var;
    }

    void symmetrize() { cov_ = 0.5 * (cov_ + cov_.transpose()).eval(); }

private:
    std::vector<Label> labels_;
    Matrix cov_{0, 0};
    Vector mean_{0};
};

/// Linear per-timestep map y -> S y acting on a labelled subset of a state.
struct StepMatrix {
    Matrix matrix;
    std::vector<Label> labels;

    StepMatrix(Matrix m, std::vector<Label> l) : matrix(std::move(m)), labels(std::move(l)) {
        const auto n = static_cast<Eigen::Index>(labels.size());
        if (matrix.rows() != n || matrix.cols() != n)
            throw std::invalid_argument("step matrix must be square and match its label count");
    }
};

struct HomodyneOutcome {
    double value = 0.0;
    Label measured;
    double log_likelihood = 0.0;
};

struct ModePairPurity {
    std::string position_name;
    std::string momentum_name;
    double purity = 0.0;  // 1/sqrt(det of the 2x2 cov block); 1 = pure minimum uncertainty
};

struct PhysicalityReport {
    /// Smallest eigenvalue of cov + i*Omega over the quantum rows
    /// (>= 0 up to tolerance for physical states).
    double min_eigenvalue = 0.0;
    double symmetric_defect = 0.0;
    std::vector<ModePairPurity> purities;
};

namespace detail {

inline Matrix gather(const Matrix& m, const std::vector<Eigen::Index>& rows,
                     const std::vector<Eigen::Index>& cols) {
    Matrix out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
    return out;
}

inline Vector gather(const Vector& v, const std::vector<Eigen::Index>& idx) {
    Vector out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out(i) = v(idx[i]);
    return out;
}

/// (x, p) pairs found by scanning for a Position row immediately followed by
/// its Momentum partner. Classical rows are skipped.
inline std::vector<std::pair<Eigen::Index, Eigen::Index>> mode_pairs(
    const std::vector<Label>& labels) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
    for (std::size_t i = 0; i + 1 < labels.size(); ++i) {
        if (labels[i].kind == LabelKind::Position && labels[i + 1].kind == LabelKind::Momentum) {
            pairs.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i + 1));
            ++i;
        }
    }
    return pairs;
}

}  // namespace detail

inline GaussianState new_vacuum(const std::vector<Label>& labels) {
    require_unique(labels);
    const auto n = static_cast<Eigen::Index>(labels.size());
    return GaussianState(labels, Matrix::Identity(n, n), Vector::Zero(n));
}

/// m <- S m,  cov <- S cov S^T. Step labels must be a subset of the state's
/// labels; the map is the identity on all other rows.
inline GaussianState apply_linear(const GaussianState& state, const StepMatrix& step) {
    const auto n = state.dim();
    std::vector<Eigen::Index> idx(step.labels.size());
    for (std::size_t i = 0; i < step.labels.size(); ++i) idx[i] = state.index_of(step.labels[i].name);

    Matrix full = Matrix::Identity(n, n);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        full.row(idx[i]).setZero();
        for (std::size_t j = 0; j < idx.size(); ++j) full(idx[i], idx[j]) = step.matrix(i, j);
    }
    Matrix cov = full * state.cov() * full.transpose();
    Vector mean = full * state.mean();
    return GaussianState(state.labels(), std::move(cov), std::move(mean));
}

namespace detail {

inline GaussianState attach_block(const GaussianState& state, const std::vector<Label>& labels,
                                  const Matrix& block) {
    std::vector<Label> all = state.labels();
    all.insert(all.end(), labels.begin(), labels.end());
    require_unique(all);
    const auto n = state.dim();
    const auto m = static_cast<Eigen::Index>(labels.size());
    Matrix cov = Matrix::Zero(n + m, n + m);
    cov.topLeftCorner(n, n) = state.cov();
    cov.bottomRightCorner(m, m) = block;
    Vector mean = Vector::Zero(n + m);
    mean.head(n) = state.mean();
    return GaussianState(std::move(all), std::move(cov), std::move(mean));
}

}  // namespace detail

inline GaussianState attach_vacuum(const GaussianState& state, const std::vector<Label>& labels) {
    const auto m = static_cast<Eigen::Index>(labels.size());
    return detail::attach_block(state, labels, Matrix::Identity(m, m));
}

/// Appends one mode pair in a squeezed vacuum state, cov block diag(1/r, r).
inline GaussianState attach_squeezed(const GaussianState& state, const std::vector<Label>& labels,
                                     double r) {
    if (!(r > 0.0)) throw std::invalid_argument("squeezing ratio r must be > 0");
    if (labels.size() != 2)
        throw std::invalid_argument("attach_squeezed expects one (x, p) label pair");
    Matrix block(2, 2);
    block << 1.0 / r, 0.0, 0.0, r;
    return detail::attach_block(state, labels, block);
}

inline GaussianState trace_out(const GaussianState& state, const std::vector<std::string>& names) {
    std::vector<bool> drop(state.dim(), false);
    for (const auto& name : names) drop[state.index_of(name)] = true;
    std::vector<Eigen::Index> keep;
    std::vector<Label> labels;
    for (Eigen::Index i = 0; i < state.dim(); ++i)
        if (!drop[i]) {
            keep.push_back(i);
            labels.push_back(state.labels()[i]);
        }
    return GaussianState(std::move(labels), detail::gather(state.cov(), keep, keep),
                         detail::gather(state.mean(), keep));
}

namespace detail {

struct MeasuredMode {
    Eigen::Index q;        // state row of the measured quadrature
    Eigen::Index partner;  // state row of its conjugate partner
};

inline MeasuredMode find_measured_mode(const GaussianState& state, const std::string& measured) {
    const auto q = state.index_of(measured);
    const auto& labels = state.labels();
    const auto kind = labels[q].kind;
    if (kind == LabelKind::Classical)
        throw std::invalid_argument("cannot homodyne a classical parameter row: " + measured);
    if (kind == LabelKind::Position) {
        if (q + 1 >= state.dim() || labels[q + 1].kind != LabelKind::Momentum)
            throw std::invalid_argument("measured label " + measured + " has no adjacent partner");
        return {q, q + 1};
    }
    if (q == 0 || labels[q - 1].kind != LabelKind::Position)
        throw std::invalid_argument("measured label " + measured + " has no adjacent partner");
    return {q, q - 1};
}

}  // namespace detail

/// Homodyne detection of one quadrature. The retained covariance shrinks by
/// C (pi B pi)^- C^T, the retained means shift linearly in the measurement
/// residual, and the measured mode's pair of rows leaves the state.
/// The factor of 2 between this cov convention and true covariances cancels
/// between C and the pseudoinverse, so the update uses cov-units throughout.
inline GaussianState condition_homodyne(const GaussianState& state, const std::string& measured,
                                        double outcome, HomodyneOutcome* info = nullptr) {
    const auto mode = detail::find_measured_mode(state, measured);
    const std::vector<Eigen::Index> pair =
        mode.q < mode.partner ? std::vector<Eigen::Index>{mode.q, mode.partner}
                              : std::vector<Eigen::Index>{mode.partner, mode.q};
    const Eigen::Index slot = (pair[0] == mode.q) ? 0 : 1;

    std::vector<Eigen::Index> keep;
    std::vector<Label> labels;
    for (Eigen::Index i = 0; i < state.dim(); ++i)
        if (i != pair[0] && i != pair[1]) {
            keep.push_back(i);
            labels.push_back(state.labels()[i]);
        }

    Matrix a = detail::gather(state.cov(), keep, keep);
    const Matrix b = detail::gather(state.cov(), pair, pair);
    const Matrix c = detail::gather(state.cov(), keep, pair);
    Vector mean = detail::gather(state.mean(), keep);

    const double b_qq = b(slot, slot);
    const double scale = b.cwiseAbs().maxCoeff();
    const double rank_tol = 1e-12 * std::max(scale, 1.0);
    if (b_qq < -rank_tol)
        throw std::invalid_argument("measured quadrature has negative variance (unphysical)");

    const double mean_q = state.mean()(mode.q);
    const double residual = outcome - mean_q;
    const double var = 0.5 * std::max(b_qq, 0.0);

    if (b_qq > rank_tol) {  // pseudoinverse has rank 1
        const Vector u = c.col(slot);
        a -= (u * u.transpose()) / b_qq;
        mean += u * (residual / b_qq);
    }
    if (info) {
        info->value = outcome;
        info->measured = state.labels()[mode.q];
        if (var > 0.0)
            info->log_likelihood = -0.5 * std::log(2.0 * M_PI * var) - residual * residual / (2.0 * var);
        else
            info->log_likelihood = (residual == 0.0) ? std::numeric_limits<double>::infinity()
                                                     : -std::numeric_limits<double>::infinity();
    }
    return GaussianState(std::move(labels), std::move(a), std::move(mean));
}

/// Draws the outcome from the marginal Normal(mean_q, cov_qq / 2), then
/// conditions on it. The covariance update does not depend on the draw.
inline std::pair<HomodyneOutcome, GaussianState> sample_homodyne(const GaussianState& state,
                                                                 const std::string& measured,
                                                                 Rng& rng) {
    const auto mode = detail::find_measured_mode(state, measured);
    const double var = 0.5 * std::max(state.cov()(mode.q, mode.q), 0.0);
    const double outcome =
        var > 0.0 ? rng.gaussian(state.mean()(mode.q), var) : state.mean()(mode.q);
    HomodyneOutcome info;
    GaussianState next = condition_homodyne(state, measured, outcome, &info);
    return {info, std::move(next)};
}

/// Physicality diagnostics; reports, never throws.
inline PhysicalityReport check_physical(const GaussianState& state) {
    PhysicalityReport report;
    report.symmetric_defect =
        state.dim() == 0 ? 0.0 : (state.cov() - state.cov().transpose()).cwiseAbs().maxCoeff();

    const auto pairs = detail::mode_pairs(state.labels());
    if (!pairs.empty()) {
        std::vector<Eigen::Index> rows;
        for (const auto& [x, p] : pairs) {
            rows.push_back(x);
            rows.push_back(p);
        }
        const Matrix cov_q = detail::gather(state.cov(), rows, rows);
        Eigen::MatrixXcd herm = cov_q.cast<std::complex<double>>();
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            herm(2 * k, 2 * k + 1) += std::complex<double>(0.0, 1.0);
            herm(2 * k + 1, 2 * k) += std::complex<double>(0.0, -1.0);
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(herm);
        report.min_eigenvalue = solver.eigenvalues().minCoeff();
        for (const auto& [x, p] : pairs) {
            const double det = state.cov()(x, x) * state.cov()(p, p) -
                               state.cov()(x, p) * state.cov()(p, x);
            report.purities.push_back({state.labels()[x].name, state.labels()[p].name,
                                       det > 0.0 ? 1.0 / std::sqrt(det) : 0.0});
        }
    }
    return report;
}

}  // namespace gsq
