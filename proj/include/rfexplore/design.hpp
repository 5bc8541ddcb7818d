#pragma once

#include <string>
#include <vector>

#include "rfexplore/linalg.hpp"

namespace rfe {

// Generalized design problem: each label carries the d x d symmetric PSD
// covariance its policy induces (trace <= 1 since ||phi|| <= 1). The ridge
// is added to V(mu) for conditioning when atoms are estimated.
struct DesignProblem {
    std::vector<std::string> labels;
    std::vector<Mat> matrices;
    double ridge = 0;

    int dim() const { return matrices.empty() ? 0 : static_cast<int>(matrices[0].rows()); }
    std::size_t size() const { return matrices.size(); }
    // Throws ContractError on asymmetric / non-PSD / oversized-trace atoms.
    void check() const;
};

struct DesignIteration {
    int step = 0;
    double logdet = 0;
    double g = 0;
    double grad_identity = 0;  // sum_i mu_i Tr(V^-1 A_i); equals d at ridge 0
    int picked = -1;
    double gamma = 0;
};

struct DesignResult {
    Vec mu;
    Mat V;          // V(mu) + ridge I
    double g = 0;
    int iterations = 0;
    bool converged = false;
    std::vector<DesignIteration> trace;
};

// max_i Tr(V(mu)^-1 A_i). Throws SingularityError (naming the null
// direction) when V(mu) is singular at ridge 0.
double g_value(const Vec& mu, const DesignProblem& problem);

// Frank-Wolfe ascent of log det V(mu) from the uniform start; each step
// moves toward the label with the largest gradient coordinate
// Tr(V^-1 A_i) with a golden-section line search along the segment.
// Converged means the certificate g(mu) <= d (1 + tol) was reached.
DesignResult solve_design(const DesignProblem& problem, double tol = 0.05, int max_iter = -1);

// Exhaustive simplex-grid search over <= 4 labels; test oracle.
DesignResult brute_force_design(const DesignProblem& problem, double grid_step);

struct EigBoundCheck {
    bool ok = false;
    double margin = 0;        // lambda_min(V) - bound
    double lambda_min_v = 0;
    double bound = 0;         // lambda_star_estimate / d - tolerance
};

// Checks lambda_min(V(mu)) >= lambda_star_estimate / d - tolerance.
EigBoundCheck check_min_eig_bound(const DesignProblem& problem, const Vec& mu,
                                  double lambda_star_estimate, double tolerance = 0.02);

// Brute-force mixture-grid estimate of the best achievable minimum
// eigenvalue over distributions on the given matrices.
double grid_lambda_star(const std::vector<Mat>& matrices, double grid_step);

}  // namespace rfe
