#pragma once

#include <dlo/types.hpp>

namespace dlo {

// Dense convex QP: minimize 1/2 x'Px + q'x subject to l <= Ax <= u, solved
// by operator-splitting (ADMM with a cached KKT factorization). Problems
// here are small (tens of variables, a few hundred rows).
struct QpSettings {
    double rho = 0.4;
    double sigma = 1e-6;
    int max_iterations = 2000;
    double eps_primal = 1e-6;
    double eps_dual = 1e-6;
    int check_every = 20;
};

enum class QpStatus { Optimal, MaxIterations, PrimalInfeasible };

struct QpResult {
    VecX x;
    VecX y;  // dual
    QpStatus status = QpStatus::MaxIterations;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    int iterations = 0;
};

QpResult solveQp(const MatX& P, const VecX& q, const MatX& A, const VecX& l, const VecX& u,
                 const QpSettings& settings = {}, const VecX* x_warm = nullptr, const VecX* y_warm = nullptr);

}  // namespace dlo
