#include <dlo/der.hpp>
#include <dlo/lbfgs.hpp>

#include <Eigen/Dense>

#include <cmath>

namespace dlo {

namespace {

constexpr double kDegenerateEdge = 1e-12;

// Rotation of v about the axis a x b taking unit a to unit b. Stable form of
// Rodrigues for c = a.b > -1.
Vec3 rotateBetween(const Vec3& a, const Vec3& b, const Vec3& v) {
    const Vec3 w = a.cross(b);
    const double c = a.dot(b);
    if (c <= -1.0 + 1e-14) throw SingularityError("parallel transport through antiparallel tangents");
    return v + w.cross(v) + w.cross(w.cross(v)) / (1.0 + c);
}

double unwrapNear(double angle, double hint) {
    return angle + 2.0 * M_PI * std::round((hint - angle) / (2.0 * M_PI));
}

// theta^k sequence of a full configuration: Bishop transport seeded with
// b1^0 = m1^0, each angle unwrapped to the branch nearest its predecessor.
std::vector<double> twistAngles(const DloConfig& cfg) {
    const int ne = static_cast<int>(cfg.frames.size());
    std::vector<double> theta(ne);
    std::vector<Vec3> t(ne);
    for (int k = 0; k < ne; ++k) {
        const Vec3 e = cfg.vertices[k + 1] - cfg.vertices[k];
        const double n = e.norm();
        if (n < kDegenerateEdge) throw SingularityError("degenerate edge in twist sweep");
        t[k] = e / n;
    }
    Vec3 b1 = cfg.frames[0].m1;
    b1 = (b1 - b1.dot(t[0]) * t[0]).normalized();
    theta[0] = 0.0;
    for (int k = 1; k < ne; ++k) {
        b1 = rotateBetween(t[k - 1], t[k], b1);
        b1 = (b1 - b1.dot(t[k]) * t[k]).normalized();
        const Vec3 b2 = t[k].cross(b1);
        const double raw = std::atan2(cfg.frames[k].m1.dot(b2), cfg.frames[k].m1.dot(b1));
        theta[k] = unwrapNear(raw, theta[k - 1]);
    }
    return theta;
}

}  // namespace

void DloParams::validate() const {
    if (!(bend_stiffness > 0)) throw ConfigError("bend_stiffness must be > 0");
    if (!(twist_stiffness >= 0)) throw ConfigError("twist_stiffness must be >= 0");
    if (!(linear_density >= 0)) throw ConfigError("linear_density must be >= 0");
    if (!(total_length > 0)) throw ConfigError("total_length must be > 0");
    if (segment_count < 3) throw ConfigError("segment_count must be >= 3");
    if (bend_multipliers.size() != 0 && bend_multipliers.size() != segment_count)
        throw ConfigError("bend_multipliers must be empty or of size m");
}

VecX DloConfig::featurePoints() const {
    const int mm = m();
    VecX x(3 * mm);
    for (int k = 1; k <= mm; ++k) x.segment<3>(3 * (k - 1)) = vertices[k];
    return x;
}

double DloConfig::maxFrameOrthonormalityError() const {
    double e = 0.0;
    for (const auto& f : frames) e = std::max(e, f.maxOrthonormalityError());
    return e;
}

double DloConfig::maxTangentAlignmentError() const {
    double e = 0.0;
    for (size_t k = 0; k < frames.size(); ++k) {
        const Vec3 edge = (vertices[k + 1] - vertices[k]).normalized();
        e = std::max(e, std::atan2(edge.cross(frames[k].t).norm(), edge.dot(frames[k].t)));
    }
    return e;
}

double DloConfig::maxEdgeLengthViolation() const {
    double e = 0.0;
    for (size_t k = 0; k < frames.size(); ++k)
        e = std::max(e, std::abs((vertices[k + 1] - vertices[k]).norm() - rest_lengths[k]));
    return e;
}

Mat3 transportRotation(const Vec3& a_unit, const Vec3& b_unit) {
    const Vec3 w = a_unit.cross(b_unit);
    const double c = a_unit.dot(b_unit);
    if (c <= -1.0 + 1e-14) throw SingularityError("transport rotation undefined for antiparallel tangents");
    Mat3 wx;
    wx << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return Mat3::Identity() + wx + wx * wx / (1.0 + c);
}

std::vector<MaterialFrame> parallelTransport(std::span<const Vec3> centerline, const MaterialFrame& seed_frame) {
    const int nv = static_cast<int>(centerline.size());
    if (nv < 2) throw ConfigError("parallel transport needs at least one edge");
    const int ne = nv - 1;
    std::vector<Vec3> t(ne);
    for (int k = 0; k < ne; ++k) {
        const Vec3 e = centerline[k + 1] - centerline[k];
        const double n = e.norm();
        if (n < kDegenerateEdge) throw SingularityError("degenerate edge (coincident vertices)");
        t[k] = e / n;
    }
    std::vector<MaterialFrame> frames(ne);
    Vec3 b1 = (seed_frame.m1 - seed_frame.m1.dot(t[0]) * t[0]).normalized();
    frames[0] = {t[0], b1, t[0].cross(b1)};
    for (int k = 1; k < ne; ++k) {
        b1 = rotateBetween(t[k - 1], t[k], b1);
        b1 = (b1 - b1.dot(t[k]) * t[k]).normalized();
        frames[k] = {t[k], b1, t[k].cross(b1)};
    }
    return frames;
}

double boundaryTwist(const DloConfig& cfg) {
    return twistAngles(cfg).back();
}

double maxTwistRateDeviation(const DloConfig& cfg) {
    const auto theta = twistAngles(cfg);
    const int mm = cfg.m();
    double sum_l = 0.0;
    std::vector<double> lbar(mm + 1);
    for (int k = 1; k <= mm; ++k) {
        lbar[k] = cfg.rest_lengths[k - 1] + cfg.rest_lengths[k];
        sum_l += lbar[k];
    }
    const double rate = (theta[mm] - theta[0]) / sum_l;
    double dev = 0.0;
    for (int k = 1; k <= mm; ++k) dev = std::max(dev, std::abs((theta[k] - theta[k - 1]) / lbar[k] - rate));
    return dev;
}

EnergyBreakdown potentialEnergy(const DloConfig& cfg, const DloParams& params) {
    params.validate();
    const int mm = cfg.m();
    if (mm < 3) throw ConfigError("config has fewer than 3 feature points");

    std::vector<Vec3> e(mm + 1);
    std::vector<double> en(mm + 1);
    for (int k = 0; k <= mm; ++k) {
        e[k] = cfg.vertices[k + 1] - cfg.vertices[k];
        en[k] = e[k].norm();
        if (en[k] < kDegenerateEdge) throw SingularityError("degenerate edge (coincident vertices)");
    }

    EnergyBreakdown out;
    const double cos_max = std::cos(kMaxBendAngle);
    for (int k = 1; k <= mm; ++k) {
        const double lbar = cfg.rest_lengths[k - 1] + cfg.rest_lengths[k];
        const double cos_phi = e[k - 1].dot(e[k]) / (en[k - 1] * en[k]);
        if (cos_phi < cos_max) throw SingularityError("near-antiparallel edges (singular curvature)");
        const double chi = en[k - 1] * en[k] + e[k - 1].dot(e[k]);
        const Vec3 kb = 2.0 * e[k - 1].cross(e[k]) / chi;
        const double mult = params.bend_multipliers.size() ? params.bend_multipliers[k - 1] : 1.0;
        out.bend += params.bend_stiffness * mult * kb.squaredNorm() / lbar;
        out.gravity += params.linear_density * params.gravity * cfg.vertices[k].z() * lbar / 2.0;
    }

    const auto theta = twistAngles(cfg);
    for (int k = 1; k <= mm; ++k) {
        const double lbar = cfg.rest_lengths[k - 1] + cfg.rest_lengths[k];
        const double d = theta[k] - theta[k - 1];
        out.twist += params.twist_stiffness * d * d / lbar;
    }

    out.total = out.bend + out.twist + out.gravity;
    return out;
}

namespace {

// Energy of the centerline with the boundary held fixed, as minimized by the
// stable projection: bend + uniform-twist resultant + gravity, plus a
// quadratic penalty keeping the internal edges at their rest lengths.
// Variables are the free vertices x_2..x_{m-1}.
class CenterlineObjective {
  public:
    CenterlineObjective(const DloConfig& boundary_source, const DloParams& params, double theta_hint)
        : params_(params), theta_hint_(theta_hint) {
        m_ = boundary_source.m();
        rest_ = boundary_source.rest_lengths;
        x_.resize(m_ + 2);
        x_[0] = boundary_source.vertices[0];
        x_[1] = boundary_source.vertices[1];
        x_[m_] = boundary_source.vertices[m_];
        x_[m_ + 1] = boundary_source.vertices[m_ + 1];
        seed_m1_ = boundary_source.frames.front().m1;
        material_m1_ = boundary_source.frames.back().m1;
        lbar_.resize(m_ + 1);
        sum_lbar_ = 0.0;
        for (int k = 1; k <= m_; ++k) {
            lbar_[k] = rest_[k - 1] + rest_[k];
            sum_lbar_ += lbar_[k];
        }
        e_.resize(m_ + 1);
        en_.resize(m_ + 1);
        t_.resize(m_ + 1);
        dtheta_.assign(m_ + 2, Vec3::Zero());
    }

    void setPenaltyWeight(double w) { penalty_weight_ = w; }
    int freeCount() const { return m_ - 2; }
    double thetaHint() const { return theta_hint_; }

    VecX initialFree(const DloConfig& cfg) const {
        VecX x0(3 * freeCount());
        for (int k = 2; k <= m_ - 1; ++k) x0.segment<3>(3 * (k - 2)) = cfg.vertices[k];
        return x0;
    }

    void fillVertices(const VecX& xfree) {
        for (int k = 2; k <= m_ - 1; ++k) x_[k] = xfree.segment<3>(3 * (k - 2));
    }
    const std::vector<Vec3>& vertices() const { return x_; }

    double operator()(const VecX& xfree, VecX& grad) { return evalImpl(xfree, &grad, true); }

    double energyWithGradient(const VecX& xfree, VecX& grad) {
        const double f = evalImpl(xfree, &grad, false);
        return f;
    }

    double lastThetaM() const { return theta_m_; }

    // Rows are the gradients of c_k = ||e^k|| - r_k, k = 1..m-1, w.r.t. the
    // free vertices; evaluated at the currently filled vertex array.
    MatX constraintJacobian(const VecX& xfree) {
        fillVertices(xfree);
        MatX C = MatX::Zero(m_ - 1, 3 * freeCount());
        for (int k = 1; k <= m_ - 1; ++k) {
            const Vec3 e = x_[k + 1] - x_[k];
            const Vec3 tk = e / e.norm();
            if (k + 1 >= 2 && k + 1 <= m_ - 1) C.block<1, 3>(k - 1, 3 * (k + 1 - 2)) = tk.transpose();
            if (k >= 2 && k <= m_ - 1) C.block<1, 3>(k - 1, 3 * (k - 2)) -= tk.transpose();
        }
        return C;
    }

    double maxEdgeViolation(const VecX& xfree) {
        fillVertices(xfree);
        double v = 0.0;
        for (int k = 1; k <= m_ - 1; ++k) v = std::max(v, std::abs((x_[k + 1] - x_[k]).norm() - rest_[k]));
        return v;
    }

  private:
    double evalImpl(const VecX& xfree, VecX* grad, bool with_penalty) {
        fillVertices(xfree);
        const double inf = std::numeric_limits<double>::infinity();

        for (int k = 0; k <= m_; ++k) {
            e_[k] = x_[k + 1] - x_[k];
            en_[k] = e_[k].norm();
            if (en_[k] < kDegenerateEdge) return inf;
            t_[k] = e_[k] / en_[k];
        }

        if (grad) grad->setZero(3 * freeCount());
        double E = 0.0;
        const double cos_max = std::cos(kMaxBendAngle);

        // bend + gravity
        for (int k = 1; k <= m_; ++k) {
            const double cos_phi = t_[k - 1].dot(t_[k]);
            if (cos_phi < cos_max) return inf;
            const double chi = en_[k - 1] * en_[k] + e_[k - 1].dot(e_[k]);
            const Vec3 kb = 2.0 * e_[k - 1].cross(e_[k]) / chi;
            const double mult = params_.bend_multipliers.size() ? params_.bend_multipliers[k - 1] : 1.0;
            const double w = params_.bend_stiffness * mult / lbar_[k];
            E += w * kb.squaredNorm();
            E += params_.linear_density * params_.gravity * x_[k].z() * lbar_[k] / 2.0;
            if (grad) {
                const Vec3 dchi_da = (en_[k] / en_[k - 1]) * e_[k - 1] + e_[k];
                const Vec3 dchi_db = (en_[k - 1] / en_[k]) * e_[k] + e_[k - 1];
                const double kb2 = kb.squaredNorm();
                const Vec3 ga = (2.0 / chi) * (2.0 * e_[k].cross(kb) - kb2 * dchi_da);
                const Vec3 gb = (2.0 / chi) * (-2.0 * e_[k - 1].cross(kb) - kb2 * dchi_db);
                addFree(grad, k - 1, -w * ga);
                addFree(grad, k, w * (ga - gb));
                addFree(grad, k + 1, w * gb);
                if (k >= 2 && k <= m_ - 1)
                    (*grad)[3 * (k - 2) + 2] += params_.linear_density * params_.gravity * lbar_[k] / 2.0;
            }
        }

        // uniform-twist resultant: E_t = lambda_t (theta^m - theta^0)^2 / sum(l_k)
        Vec3 b1 = (seed_m1_ - seed_m1_.dot(t_[0]) * t_[0]).normalized();
        for (int k = 1; k <= m_; ++k) {
            b1 = rotateBetween(t_[k - 1], t_[k], b1);
            b1 = (b1 - b1.dot(t_[k]) * t_[k]).normalized();
        }
        const Vec3 b2 = t_[m_].cross(b1);
        const double raw = std::atan2(material_m1_.dot(b2), material_m1_.dot(b1));
        theta_m_ = unwrapNear(raw, theta_hint_);
        E += params_.twist_stiffness * theta_m_ * theta_m_ / sum_lbar_;

        if (grad && params_.twist_stiffness > 0.0) {
            // d theta^m / dx via the holonomy gradient of the Bishop transport
            const double coef = 2.0 * params_.twist_stiffness * theta_m_ / sum_lbar_;
            for (auto& v : dtheta_) v.setZero();
            for (int k = 1; k <= m_; ++k) {
                const double chi = en_[k - 1] * en_[k] + e_[k - 1].dot(e_[k]);
                const Vec3 kb = 2.0 * e_[k - 1].cross(e_[k]) / chi;
                const Vec3 g_prev = kb / (2.0 * en_[k - 1]);
                const Vec3 g_next = -kb / (2.0 * en_[k]);
                dtheta_[k - 1] += g_prev;
                dtheta_[k + 1] += g_next;
                dtheta_[k] -= g_prev + g_next;
            }
            for (int k = 2; k <= m_ - 1; ++k) grad->segment<3>(3 * (k - 2)) += coef * kTwistSign * dtheta_[k];
        }

        if (with_penalty) {
            for (int k = 1; k <= m_ - 1; ++k) {
                const double c = en_[k] - rest_[k];
                E += penalty_weight_ * c * c;
                if (grad) {
                    const Vec3 gc = 2.0 * penalty_weight_ * c * t_[k];
                    addFree(grad, k + 1, gc);
                    addFree(grad, k, -gc);
                }
            }
        }
        return E;
    }

    void addFree(VecX* grad, int vertex, const Vec3& g) {
        if (vertex >= 2 && vertex <= m_ - 1) grad->segment<3>(3 * (vertex - 2)) += g;
    }

  public:
    static constexpr double kTwistSign = -1.0;

  private:
    DloParams params_;
    int m_ = 0;
    VecX rest_;
    std::vector<Vec3> x_;
    Vec3 seed_m1_, material_m1_;
    std::vector<double> lbar_;
    double sum_lbar_ = 0.0;
    double theta_hint_ = 0.0;
    double penalty_weight_ = 0.0;
    double theta_m_ = 0.0;

    std::vector<Vec3> e_, t_, dtheta_;
    std::vector<double> en_;
};

DloConfig reconstruct(const DloConfig& boundary_source, const std::vector<Vec3>& vertices, double theta_hint) {
    DloConfig out;
    out.vertices = vertices;
    out.rest_lengths = boundary_source.rest_lengths;
    const int mm = boundary_source.m();
    const auto bishop = parallelTransport(std::span<const Vec3>(out.vertices), boundary_source.frames.front());

    const Vec3 b2 = bishop[mm].t.cross(bishop[mm].m1);
    const Vec3 mat_m1 = boundary_source.frames.back().m1;
    const double theta_m = unwrapNear(std::atan2(mat_m1.dot(b2), mat_m1.dot(bishop[mm].m1)), theta_hint);

    double sum_lbar = 0.0;
    std::vector<double> lbar(mm + 1);
    for (int k = 1; k <= mm; ++k) {
        lbar[k] = out.rest_lengths[k - 1] + out.rest_lengths[k];
        sum_lbar += lbar[k];
    }

    out.frames.resize(mm + 1);
    out.frames[0] = boundary_source.frames.front();
    out.frames[mm] = boundary_source.frames.back();
    double theta = 0.0;
    const double rate = theta_m / sum_lbar;
    for (int k = 1; k <= mm - 1; ++k) {
        theta += rate * lbar[k];
        const Vec3 m1 = std::cos(theta) * bishop[k].m1 + std::sin(theta) * bishop[k].t.cross(bishop[k].m1);
        out.frames[k] = {bishop[k].t, m1, bishop[k].t.cross(m1)};
    }
    return out;
}

}  // namespace

double stationarityResidual(const DloConfig& cfg, const DloParams& params) {
    params.validate();
    CenterlineObjective obj(cfg, params, boundaryTwist(cfg));
    VecX g;
    const VecX x = obj.initialFree(cfg);
    const double f = obj.energyWithGradient(x, g);
    if (!std::isfinite(f)) return std::numeric_limits<double>::infinity();
    MatX C = obj.constraintJacobian(x);
    Eigen::LDLT<MatX> ldlt(C * C.transpose());
    return (g - C.transpose() * ldlt.solve(C * g)).norm();
}

VecX energyGradient(const DloConfig& cfg, const DloParams& params) {
    params.validate();
    const double theta_hint = boundaryTwist(cfg);
    CenterlineObjective obj(cfg, params, theta_hint);
    VecX g;
    const VecX x0 = obj.initialFree(cfg);
    const double f = obj.energyWithGradient(x0, g);
    if (!std::isfinite(f)) throw SingularityError("energy gradient at singular configuration");
    return g;
}

std::optional<DloConfig> projectStable(const DloConfig& init, const DloParams& params,
                                       const ProjectionSettings& settings, ProjectionStats* stats,
                                       std::optional<double> theta_m_hint) {
    params.validate();
    const int mm = init.m();
    if (mm < 3) throw ConfigError("projection needs m >= 3");
    if (static_cast<int>(init.frames.size()) != mm + 1 || init.rest_lengths.size() != mm + 1)
        throw ConfigError("inconsistent configuration sizes");

    const double L = params.total_length;
    const double hint = theta_m_hint ? *theta_m_hint : boundaryTwist(init);
    CenterlineObjective obj(init, params, hint);

    const double w_base = settings.penalty_scale * params.bend_stiffness / (L * L);
    double w_pen = std::max(settings.initial_penalty_weight, w_base);
    const double gtol = settings.stationarity_scale * params.bend_stiffness / L;
    const double edge_tol = settings.edge_violation_frac * L;

    LbfgsOptions lopts;
    lopts.max_iterations = settings.max_iterations;

    VecX x = obj.initialFree(init);
    ProjectionStats local;

    // Quasi-Newton descent gets within the Newton basin; a damped-Newton loop
    // with the penalty continuation embedded then takes stationarity to the
    // tolerance, which f-based line searches cannot certify in double
    // precision at these penalty weights. The Hessian is finite-differenced
    // from the analytic gradient (cheap at 3(m-2) variables).
    const int n_free = 3 * obj.freeCount();
    VecX g(n_free), gp(n_free), xp(n_free), d(n_free);
    MatX H(n_free, n_free);
    const double fd_h = 1e-7;
    lopts.gradient_tolerance = 1e7 * gtol;
    lopts.max_iterations = std::min(settings.max_iterations, 150);

    bool done = false;
    for (int attempt = 0; attempt < 3 && !done; ++attempt) {
        obj.setPenaltyWeight(w_pen);
        auto r0 = lbfgsMinimize([&obj](const VecX& xf, VecX& g2) { return obj(xf, g2); }, x, lopts);
        local.iterations += r0.iterations;
        local.evaluations += r0.evaluations;
        x = r0.x;
        lopts.gradient_tolerance *= 0.01;  // tighten if another pass is needed

        obj(x, g);
        ++local.evaluations;
        local.max_edge_violation = obj.maxEdgeViolation(x);
        for (int round = 0; round < 40; ++round) {
            if (g.norm() <= gtol) {
                if (local.max_edge_violation <= edge_tol || local.continuations >= settings.max_continuations) {
                    done = true;
                    break;
                }
                w_pen *= 2.0;
                local.continuations += 1;
                obj.setPenaltyWeight(w_pen);
                obj(x, g);
                ++local.evaluations;
            }
            for (int j = 0; j < n_free; ++j) {
                xp = x;
                xp[j] += fd_h;
                obj(xp, gp);
                H.col(j) = (gp - g) / fd_h;
            }
            local.evaluations += n_free;
            H = 0.5 * (H + H.transpose()).eval();
            double lm = 1e-9 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
            bool stepped = false;
            for (int t = 0; t < 12; ++t) {
                d = (H + lm * MatX::Identity(n_free, n_free)).ldlt().solve(-g);
                xp = x + d;
                const double fp = obj(xp, gp);
                ++local.evaluations;
                if (std::isfinite(fp) && gp.norm() < g.norm()) {
                    x = xp;
                    g = gp;
                    stepped = true;
                    break;
                }
                lm *= 100.0;
            }
            local.iterations += 1;
            local.max_edge_violation = obj.maxEdgeViolation(x);
            if (!stepped) {
                if (g.norm() <= gtol &&
                    (local.max_edge_violation <= edge_tol || local.continuations >= settings.max_continuations)) {
                    done = true;
                } else if (local.max_edge_violation > edge_tol &&
                           local.continuations < settings.max_continuations) {
                    w_pen *= 2.0;
                    local.continuations += 1;
                    obj.setPenaltyWeight(w_pen);
                    obj(x, g);
                    ++local.evaluations;
                } else {
                    break;  // alternate back to the quasi-Newton phase
                }
            }
        }
    }
    local.final_penalty_weight = w_pen;

    // Stationarity of the pure energy along the feasible directions.
    VecX g_energy;
    const double energy = obj.energyWithGradient(x, g_energy);
    if (!std::isfinite(energy)) return std::nullopt;
    MatX C = obj.constraintJacobian(x);
    Eigen::LDLT<MatX> ldlt(C * C.transpose());
    VecX g_proj = g_energy - C.transpose() * ldlt.solve(C * g_energy);
    local.projected_gradient_norm = g_proj.norm();
    local.energy = energy;
    if (stats) *stats = local;

    if (local.projected_gradient_norm > gtol) return std::nullopt;
    if (local.max_edge_violation > edge_tol) return std::nullopt;

    obj.fillVertices(x);
    return reconstruct(init, obj.vertices(), hint);
}

std::optional<DloConfig> forwardPred(const DloConfig& from, const GripPose& left, const GripPose& right,
                                     const DloParams& params, const ProjectionSettings& settings,
                                     ProjectionStats* stats) {
    const int mm = from.m();
    double internal_len = 0.0;
    for (int k = 1; k <= mm - 1; ++k) internal_len += from.rest_lengths[k];
    if ((left.p - right.p).norm() > internal_len) return std::nullopt;  // beyond reach

    DloConfig init = from;
    init.vertices[1] = left.p;
    init.vertices[0] = left.p - from.rest_lengths[0] * left.frame.t;
    init.vertices[mm] = right.p;
    init.vertices[mm + 1] = right.p + from.rest_lengths[mm] * right.frame.t;
    init.frames.front() = left.frame;
    init.frames.back() = right.frame;

    return projectStable(init, params, settings, stats, boundaryTwist(from));
}

DloConfig dloErp(const DloConfig& from, const DloConfig& to, double eta) {
    const int n = static_cast<int>(from.vertices.size());
    if (static_cast<int>(to.vertices.size()) != n || from.frames.size() != to.frames.size())
        throw ConfigError("dloErp: mismatched discretization");
    if ((from.rest_lengths - to.rest_lengths).cwiseAbs().maxCoeff() > 1e-12)
        throw ConfigError("dloErp: mismatched rest lengths");

    Vec3 c_from = Vec3::Zero(), c_to = Vec3::Zero();
    for (int k = 0; k < n; ++k) {
        c_from += from.vertices[k];
        c_to += to.vertices[k];
    }
    c_from /= n;
    c_to /= n;
    const Vec3 c_erp = (1.0 - eta) * c_from + eta * c_to;

    DloConfig out;
    out.rest_lengths = from.rest_lengths;
    out.frames.resize(from.frames.size());
    for (size_t k = 0; k < from.frames.size(); ++k) {
        Quat qa = from.frames[k].quaternion();
        Quat qb = to.frames[k].quaternion();
        if (qa.dot(qb) < 0.0) qb.coeffs() = -qb.coeffs();
        out.frames[k] = MaterialFrame::fromQuaternion(qa.slerp(eta, qb));
    }

    out.vertices.resize(n);
    out.vertices[0] = Vec3::Zero();
    for (int k = 0; k + 1 < n; ++k) out.vertices[k + 1] = out.vertices[k] + out.rest_lengths[k] * out.frames[k].t;
    Vec3 c_tmp = Vec3::Zero();
    for (int k = 0; k < n; ++k) c_tmp += out.vertices[k];
    c_tmp /= n;
    const Vec3 shift = c_erp - c_tmp;
    for (auto& v : out.vertices) v += shift;
    return out;
}

DloConfig configFromPerceptible(const PerceptibleConfig& p, const VecX& rest_lengths, double theta_m_hint) {
    const int mm = static_cast<int>(p.centerline.size());
    if (mm < 3) throw ConfigError("perceptible config needs m >= 3");
    if (rest_lengths.size() != mm + 1) throw ConfigError("rest length count must be m+1");

    DloConfig boundary;
    boundary.rest_lengths = rest_lengths;
    boundary.vertices.resize(mm + 2);
    boundary.vertices[1 + 0] = p.centerline[0];
    for (int k = 1; k < mm; ++k) boundary.vertices[1 + k] = p.centerline[k];
    boundary.vertices[0] = p.centerline.front() - rest_lengths[0] * p.left_frame.t;
    boundary.vertices[mm + 1] = p.centerline.back() + rest_lengths[mm] * p.right_frame.t;

    boundary.frames.assign(mm + 1, p.left_frame);
    boundary.frames.back() = p.right_frame;

    return reconstruct(boundary, boundary.vertices, theta_m_hint);
}

PerceptibleConfig toPerceptible(const DloConfig& cfg) {
    PerceptibleConfig p;
    const int mm = cfg.m();
    p.centerline.assign(cfg.vertices.begin() + 1, cfg.vertices.begin() + 1 + mm);
    p.left_frame = cfg.frames.front();
    p.right_frame = cfg.frames.back();
    return p;
}

VecX uniformRestLengths(int m, double total_length) {
    return VecX::Constant(m + 1, total_length / (m - 1));
}

namespace {

MaterialFrame frameFromTangent(const Vec3& t, const Vec3& up_hint) {
    Vec3 m2 = up_hint - up_hint.dot(t) * t;
    if (m2.norm() < 1e-9) m2 = Vec3::UnitX() - Vec3::UnitX().dot(t) * t;
    m2.normalize();
    const Vec3 m1 = m2.cross(t);
    return {t, m1, t.cross(m1)};
}

DloConfig configFromPolyline(const DloParams& params, const std::vector<Vec3>& feature_points) {
    const int mm = params.segment_count;
    PerceptibleConfig p;
    p.centerline = feature_points;
    const Vec3 t0 = (feature_points[1] - feature_points[0]).normalized();
    const Vec3 tm = (feature_points[mm - 1] - feature_points[mm - 2]).normalized();
    p.left_frame = frameFromTangent(t0, Vec3::UnitZ());
    p.right_frame = frameFromTangent(tm, Vec3::UnitZ());
    return configFromPerceptible(p, uniformRestLengths(mm, params.total_length), 0.0);
}

}  // namespace

DloConfig makeStraightConfig(const DloParams& params, const Vec3& start, const Vec3& direction) {
    const int mm = params.segment_count;
    const double step = params.edgeLength();
    const Vec3 d = direction.normalized();
    std::vector<Vec3> pts(mm);
    for (int k = 0; k < mm; ++k) pts[k] = start + step * k * d;
    return configFromPolyline(params, pts);
}

DloConfig makeArcConfig(const DloParams& params, const Vec3& center, const Vec3& plane_x, const Vec3& plane_y,
                        double arc_angle) {
    const int mm = params.segment_count;
    const double radius = params.total_length / arc_angle;
    std::vector<Vec3> pts(mm);
    for (int k = 0; k < mm; ++k) {
        const double a = -arc_angle / 2.0 + arc_angle * k / (mm - 1);
        pts[k] = center + radius * (std::cos(a) * plane_x.normalized() + std::sin(a) * plane_y.normalized());
    }
    // chord lengths of a circular arc are uniform but slightly below the rest
    // length; rescale about the centroid so edges match the rest lengths
    const double chord = (pts[1] - pts[0]).norm();
    const double scale = params.edgeLength() / chord;
    Vec3 c = Vec3::Zero();
    for (const auto& q : pts) c += q;
    c /= mm;
    for (auto& q : pts) q = c + scale * (q - c);
    return configFromPolyline(params, pts);
}

}  // namespace dlo
