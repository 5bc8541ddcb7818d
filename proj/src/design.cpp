#include "rfexplore/design.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

#include "rfexplore/errors.hpp"

namespace rfe {

namespace {

constexpr double kSymTol = 1e-10;
constexpr double kEigTol = 1e-10;
constexpr double kTraceTol = 1e-9;

Mat mixture_matrix(const Vec& mu, const DesignProblem& p) {
    const int d = p.dim();
    Mat v = p.ridge * Mat::Identity(d, d);
    for (std::size_t i = 0; i < p.size(); ++i) v += mu[static_cast<Eigen::Index>(i)] * p.matrices[i];
    return v;
}

// Inverse of V with the ridge-0 singularity contract: name the null
// direction instead of jittering.
Mat strict_inverse(const Mat& v, double ridge) {
    Eigen::LLT<Mat> llt(v);
    if (llt.info() == Eigen::Success) return llt.solve(Mat::Identity(v.rows(), v.cols()));
    if (ridge > 0) {
        // Estimated atoms can make V borderline; escalate a jitter x10 up
        // to 1e-5 before giving up.
        double jitter = std::max(ridge, 1e-12);
        while (jitter <= 1e-5) {
            Eigen::LLT<Mat> jllt(v + jitter * Mat::Identity(v.rows(), v.cols()));
            if (jllt.info() == Eigen::Success)
                return jllt.solve(Mat::Identity(v.rows(), v.cols()));
            jitter *= 10;
        }
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(v);
    const Vec dir = es.eigenvectors().col(0);
    std::string msg = "V(mu) is singular; null direction [";
    for (int i = 0; i < dir.size(); ++i) {
        msg += std::to_string(dir[i]);
        msg += (i + 1 < dir.size()) ? "," : "]";
    }
    throw SingularityError(msg);
}

}  // namespace

void DesignProblem::check() const {
    if (matrices.empty()) throw ContractError("design problem has no labels");
    if (labels.size() != matrices.size())
        throw ContractError("design problem labels and matrices differ in count");
    if (ridge < 0) throw ContractError("design ridge must be nonnegative");
    const int d = dim();
    for (std::size_t i = 0; i < matrices.size(); ++i) {
        const Mat& m = matrices[i];
        if (m.rows() != d || m.cols() != d)
            throw ContractError("design matrix " + labels[i] + " has inconsistent dimensions");
        if (symmetry_defect(m) > kSymTol)
            throw ContractError("design matrix " + labels[i] + " is not symmetric");
        if (min_eigenvalue(m) < -kEigTol)
            throw ContractError("design matrix " + labels[i] + " is not PSD");
        if (m.trace() > 1.0 + kTraceTol)
            throw ContractError("design matrix " + labels[i] + " has trace " +
                                std::to_string(m.trace()) + " > 1");
    }
}

double g_value(const Vec& mu, const DesignProblem& problem) {
    problem.check();
    if (mu.size() != static_cast<Eigen::Index>(problem.size()))
        throw ContractError("mu dimension differs from label count");
    const Mat inv = strict_inverse(mixture_matrix(mu, problem), problem.ridge);
    double g = -std::numeric_limits<double>::infinity();
    for (const Mat& m : problem.matrices) g = std::max(g, inv.cwiseProduct(m).sum());
    return g;
}

DesignResult solve_design(const DesignProblem& problem, double tol, int max_iter) {
    problem.check();
    const int n = static_cast<int>(problem.size());
    const int d = problem.dim();
    if (max_iter < 0) max_iter = 500 * n;

    DesignResult res;
    res.mu = Vec::Constant(n, 1.0 / n);
    Mat v = mixture_matrix(res.mu, problem);

    for (int it = 0; it < max_iter; ++it) {
        const Mat inv = strict_inverse(v, problem.ridge);
        // Gradient coordinates of log det V(mu).
        double g = -std::numeric_limits<double>::infinity();
        double identity = 0;
        int pick = 0;
        for (int i = 0; i < n; ++i) {
            const double gi = inv.cwiseProduct(problem.matrices[static_cast<std::size_t>(i)]).sum();
            identity += res.mu[i] * gi;
            if (gi > g) {
                g = gi;
                pick = i;
            }
        }
        res.g = g;
        res.iterations = it;
        res.trace.push_back({it, logdet_spd(v), g, identity, pick, 0.0});
        if (g <= d * (1.0 + tol)) {
            res.converged = true;
            break;
        }

        // Exact line search toward the picked vertex: log det along the
        // segment is concave, golden-section with 40 evaluations, keeping
        // the best point seen (so the ascent is monotone).
        const Mat& atom = problem.matrices[static_cast<std::size_t>(pick)];
        const Mat atom_full = atom + problem.ridge * Mat::Identity(d, d);
        auto f = [&](double gamma) { return logdet_spd((1.0 - gamma) * v + gamma * atom_full); };
        const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
        double lo = 0.0, hi = 1.0;
        double best_gamma = 0.0, best_val = f(0.0);
        double x1 = hi - invphi * (hi - lo), x2 = lo + invphi * (hi - lo);
        double f1 = f(x1), f2 = f(x2);
        for (int e = 0; e < 38; ++e) {
            if (f1 > best_val) {
                best_val = f1;
                best_gamma = x1;
            }
            if (f2 > best_val) {
                best_val = f2;
                best_gamma = x2;
            }
            if (f1 < f2) {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + invphi * (hi - lo);
                f2 = f(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - invphi * (hi - lo);
                f1 = f(x1);
            }
        }
        res.trace.back().gamma = best_gamma;
        if (best_gamma == 0.0) {
            // No ascent direction improves; the certificate already decided
            // convergence above, so stop to avoid cycling.
            break;
        }
        res.mu *= (1.0 - best_gamma);
        res.mu[pick] += best_gamma;
        v = mixture_matrix(res.mu, problem);
    }

    if (!res.converged) {
        // Final certificate evaluation after the loop budget.
        const Mat inv = strict_inverse(v, problem.ridge);
        double g = -std::numeric_limits<double>::infinity();
        for (const Mat& m : problem.matrices) g = std::max(g, inv.cwiseProduct(m).sum());
        res.g = g;
        res.converged = g <= d * (1.0 + tol);
    }
    res.V = v;
    return res;
}

DesignResult brute_force_design(const DesignProblem& problem, double grid_step) {
    problem.check();
    const int n = static_cast<int>(problem.size());
    if (n > 4) throw SizeError("brute_force_design supports at most 4 labels");
    if (grid_step <= 0 || grid_step > 1) throw ContractError("grid step must lie in (0,1]");
    const int steps = std::max(1, static_cast<int>(std::lround(1.0 / grid_step)));

    DesignResult best;
    best.g = std::numeric_limits<double>::infinity();
    for_each_simplex_grid_point(n, steps, [&](const Vec& mu) {
        const Mat v = mixture_matrix(mu, problem);
        Eigen::LLT<Mat> llt(v);
        if (llt.info() != Eigen::Success) return;
        const Mat inv = llt.solve(Mat::Identity(v.rows(), v.cols()));
        double g = -std::numeric_limits<double>::infinity();
        for (const Mat& m : problem.matrices) g = std::max(g, inv.cwiseProduct(m).sum());
        if (g < best.g) {
            best.g = g;
            best.mu = mu;
            best.V = v;
        }
    });
    if (!best.mu.size()) throw SingularityError("no grid point yields an invertible V(mu)");
    best.converged = true;
    return best;
}

EigBoundCheck check_min_eig_bound(const DesignProblem& problem, const Vec& mu,
                                  double lambda_star_estimate, double tolerance) {
    EigBoundCheck out;
    out.lambda_min_v = min_eigenvalue(mixture_matrix(mu, problem) -
                                      problem.ridge * Mat::Identity(problem.dim(), problem.dim()));
    out.bound = lambda_star_estimate / problem.dim() - tolerance;
    out.margin = out.lambda_min_v - out.bound;
    out.ok = out.margin >= 0;
    return out;
}

double grid_lambda_star(const std::vector<Mat>& matrices, double grid_step) {
    if (matrices.empty()) throw ContractError("grid_lambda_star: no matrices");
    const int steps = std::max(1, static_cast<int>(std::lround(1.0 / grid_step)));
    double best = -std::numeric_limits<double>::infinity();
    for_each_simplex_grid_point(static_cast<int>(matrices.size()), steps, [&](const Vec& mu) {
        Mat v = Mat::Zero(matrices[0].rows(), matrices[0].cols());
        for (std::size_t i = 0; i < matrices.size(); ++i) v += mu[static_cast<Eigen::Index>(i)] * matrices[i];
        best = std::max(best, min_eigenvalue(v));
    });
    return best;
}

}  // namespace rfe
