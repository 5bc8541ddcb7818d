#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace rfe {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Largest absolute asymmetry |M - M^T|_max.
double symmetry_defect(const Mat& m);

// Eigenvalues of a symmetric matrix (ascending).
Vec sym_eigenvalues(const Mat& m);

double min_eigenvalue(const Mat& m);
double max_eigenvalue(const Mat& m);

// Symmetrize, then clamp negative eigenvalues to zero.
Mat psd_floor(const Mat& m);

// Orthonormal basis of the dominant eigenspace: eigenvectors of the
// symmetric PSD matrix `m` whose eigenvalue exceeds rel_tol * lambda_max.
// Columns of the result span the "reachable" subspace.
Mat dominant_eigenbasis(const Mat& m, double rel_tol);

// log det of a symmetric positive definite matrix; -inf if not PD.
double logdet_spd(const Mat& m);

// Solve M x = b for symmetric PD M, escalating a diagonal jitter from
// `jitter0` by x10 up to `jitter_max` when the factorization fails.
// Throws SingularityError when all attempts fail. `what` names the matrix
// in the error message.
Mat solve_spd_jittered(const Mat& m, const Mat& rhs, double jitter0,
                       double jitter_max, const std::string& what);

// Enumerate all probability vectors on the k-simplex whose entries are
// multiples of 1/steps, invoking fn on each.
void for_each_simplex_grid_point(int k, int steps,
                                 const std::function<void(const Vec&)>& fn);

}  // namespace rfe
