#include "rfexplore/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <limits>

#include "rfexplore/errors.hpp"

namespace rfe {

double symmetry_defect(const Mat& m) {
    return (m - m.transpose()).cwiseAbs().maxCoeff();
}

Vec sym_eigenvalues(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

double min_eigenvalue(const Mat& m) { return sym_eigenvalues(m).minCoeff(); }
double max_eigenvalue(const Mat& m) { return sym_eigenvalues(m).maxCoeff(); }

Mat psd_floor(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    Vec ev = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Mat dominant_eigenbasis(const Mat& m, double rel_tol) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    const Vec& ev = es.eigenvalues();
    const double cutoff = ev.maxCoeff() * rel_tol;
    int rank = 0;
    for (int i = 0; i < ev.size(); ++i)
        if (ev[i] > cutoff) ++rank;
    Mat basis(m.rows(), rank);
    int j = 0;
    for (int i = 0; i < ev.size(); ++i)
        if (ev[i] > cutoff) basis.col(j++) = es.eigenvectors().col(i);
    return basis;
}

double logdet_spd(const Mat& m) {
    Eigen::LLT<Mat> llt(m);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

Mat solve_spd_jittered(const Mat& m, const Mat& rhs, double jitter0,
                       double jitter_max, const std::string& what) {
    const int d = static_cast<int>(m.rows());
    double jitter = jitter0;
    for (;;) {
        Mat mj = m;
        if (jitter > 0) mj += jitter * Mat::Identity(d, d);
        Eigen::LLT<Mat> llt(mj);
        if (llt.info() == Eigen::Success) return llt.solve(rhs);
        if (jitter >= jitter_max) break;
        jitter = (jitter == 0) ? ((jitter0 > 0) ? jitter0 : 1e-12) : jitter * 10;
        if (jitter > jitter_max) jitter = jitter_max;
    }
    // Name the direction that kills the factorization.
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    Vec null_dir = es.eigenvectors().col(0);
    std::string dir = "[";
    for (int i = 0; i < null_dir.size(); ++i) {
        dir += std::to_string(null_dir[i]);
        dir += (i + 1 < null_dir.size()) ? "," : "]";
    }
    throw SingularityError(what + ": matrix is numerically singular, null direction " + dir);
}

namespace {

void simplex_rec(int k, int steps, int coord, int remaining, Vec& point,
                 const std::function<void(const Vec&)>& fn) {
    if (coord == k - 1) {
        point[coord] = static_cast<double>(remaining) / steps;
        fn(point);
        return;
    }
    for (int c = 0; c <= remaining; ++c) {
        point[coord] = static_cast<double>(c) / steps;
        simplex_rec(k, steps, coord + 1, remaining - c, point, fn);
    }
}

}  // namespace

void for_each_simplex_grid_point(int k, int steps,
                                 const std::function<void(const Vec&)>& fn) {
    if (k <= 0 || steps <= 0) throw ContractError("simplex grid: k and steps must be positive");
    Vec point(k);
    simplex_rec(k, steps, 0, steps, point, fn);
}

}  // namespace rfe
