#include <dlo/qp.hpp>

#include <Eigen/Dense>

namespace dlo {

QpResult solveQp(const MatX& P, const VecX& q, const MatX& A, const VecX& l, const VecX& u,
                 const QpSettings& s, const VecX* x_warm, const VecX* y_warm) {
    const int n = static_cast<int>(P.rows());
    const int m = static_cast<int>(A.rows());

    QpResult res;
    res.x = x_warm && x_warm->size() == n ? *x_warm : VecX::Zero(n);
    res.y = y_warm && y_warm->size() == m ? *y_warm : VecX::Zero(m);
    VecX z = (A * res.x).cwiseMax(l).cwiseMin(u);

    MatX kkt = P + s.sigma * MatX::Identity(n, n) + s.rho * A.transpose() * A;
    Eigen::LDLT<MatX> ldlt(kkt);

    VecX ax = A * res.x;
    VecX delta_y_acc = VecX::Zero(m);  // accumulated dual change, crude infeasibility signal

    for (int it = 1; it <= s.max_iterations; ++it) {
        const VecX rhs = s.sigma * res.x - q + A.transpose() * (s.rho * z - res.y);
        res.x = ldlt.solve(rhs);
        ax = A * res.x;
        const VecX z_new = (ax + res.y / s.rho).cwiseMax(l).cwiseMin(u);
        const VecX dy = s.rho * (ax - z_new);
        res.y += dy;
        delta_y_acc += dy;
        z = z_new;
        res.iterations = it;

        if (it % s.check_every == 0 || it == s.max_iterations) {
            res.primal_residual = (ax - z).cwiseAbs().maxCoeff();
            res.dual_residual = (P * res.x + q + A.transpose() * res.y).cwiseAbs().maxCoeff();
            if (res.primal_residual <= s.eps_primal && res.dual_residual <= s.eps_dual) {
                res.status = QpStatus::Optimal;
                return res;
            }
        }
    }

    // primal infeasibility: the dual ray keeps growing while the primal
    // residual refuses to shrink
    const double ray = delta_y_acc.cwiseAbs().maxCoeff();
    if (res.primal_residual > 1e3 * s.eps_primal && ray > 1e3) {
        res.status = QpStatus::PrimalInfeasible;
    } else {
        res.status = QpStatus::MaxIterations;
    }
    return res;
}

}  // namespace dlo
