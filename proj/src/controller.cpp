#include "cvpm/controller.hpp"

#include "cvpm/errors.hpp"
#include "cvpm/linalg.hpp"
#include "cvpm/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>
#include <numeric>
#include <sstream>

namespace cvpm {

namespace {

constexpr double kSetEqTol = 1e-10;
constexpr double kRciCertTol = 1e-8;
constexpr double kDispatchBand = 1e-5;

Vector unit(int n, int i, double s = 1.0) {
    Vector e = Vector::Zero(n);
    e(i) = s;
    return e;
}

Vector stack_copies(const Vector& v, int n) {
    Vector out(v.size() * n);
    for (int k = 0; k < n; ++k) out.segment(k * v.size(), v.size()) = v;
    return out;
}

// Componentwise bounding box of a polytope via support LPs.
void bounding_box(const Polytope& P, Vector& lo, Vector& hi) {
    const int n = P.dim();
    lo.resize(n);
    hi.resize(n);
    for (int i = 0; i < n; ++i) {
        hi(i) = support(P, unit(n, i));
        lo(i) = -support(P, unit(n, i, -1.0));
    }
}

double min_eigenvalue(const Matrix& M) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()));
    return es.eigenvalues().minCoeff();
}

}  // namespace

std::string to_string(StepCase c) {
    return c == StepCase::Safe ? "safe" : "probabilistic";
}

bool AssumptionReport::all_passed() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return true;
}

std::string AssumptionReport::summary() const {
    std::ostringstream os;
    for (const auto& c : checks) {
        os << (c.passed ? "[pass] " : "[FAIL] ") << c.name
           << " (margin " << c.margin << ")";
        if (!c.detail.empty()) os << ": " << c.detail;
        os << "\n";
    }
    for (const auto& w : warnings) os << "[warn] " << w << "\n";
    return os.str();
}

namespace {

struct BuildArtifacts {
    AssumptionReport report;
    LiftedSystem lifted;
    Matrix P, K, Sigma_x, S;
    std::optional<Polytope> X_f;
    bool core_ok = false;  // checks 1, 2, 4, 5 all passed
};

AssumptionCheck check_disturbance(const LinearSystem& sys) {
    AssumptionCheck c{"A1 truncated-Gaussian disturbance", false, 0.0, ""};
    const double sig_eig = min_eigenvalue(sys.Sigma_w);
    if (sig_eig <= 0.0) {
        c.detail = "Sigma_w not positive definite";
        return c;
    }
    try {
        Vector lo, hi;
        bounding_box(sys.W, lo, hi);  // throws if unbounded
    } catch (const Error&) {
        c.detail = "W unbounded";
        return c;
    }
    const double zero_margin = (sys.W.g() - sys.W.F() * Vector::Zero(sys.W.dim())).minCoeff();
    if (zero_margin < 0.0) {
        c.detail = "0 not in W";
        c.margin = zero_margin;
        return c;
    }
    c.passed = true;
    c.margin = std::min(sig_eig, zero_margin);
    return c;
}

AssumptionCheck check_state_set(const MpcConfig& cfg, const Polytope& X_P,
                                const Polytope& U_set) {
    AssumptionCheck c{"A2 bounded state set containing the reference", false, 0.0, ""};
    try {
        Vector lo, hi;
        bounding_box(X_P, lo, hi);
    } catch (const Error&) {
        c.detail = "X_P unbounded";
        return c;
    }
    const double x_margin = (X_P.g() - X_P.F() * cfg.x_ref).minCoeff();
    const double u_margin = (U_set.g() - U_set.F() * cfg.u_ref).minCoeff();
    c.margin = std::min(x_margin, u_margin);
    if (x_margin < 0.0) {
        c.detail = "x_ref outside X_P";
        return c;
    }
    if (u_margin < 0.0) {
        c.detail = "u_ref outside U";
        return c;
    }
    c.passed = true;
    return c;
}

AssumptionCheck check_propagation(const LiftedSystem& L, const Polytope& img_GW,
                                  const Polytope& X_P, const Vector& x_ref) {
    // Propagated disturbances alone never exceed the state constraints,
    // taken about the reference: block_k(G_lift W^N) within X_P - x_ref.
    AssumptionCheck c{"A3 propagated disturbances within state constraints", false,
                      0.0, ""};
    double margin = std::numeric_limits<double>::infinity();
    const int nx = L.n_x;
    for (int k = 0; k < L.N; ++k) {
        for (int i = 0; i < X_P.rows(); ++i) {
            Vector dir = Vector::Zero(L.N * nx);
            dir.segment(k * nx, nx) = X_P.F().row(i).transpose();
            const double s = support(img_GW, dir);
            margin = std::min(margin, X_P.g()(i) - X_P.F().row(i).dot(x_ref) - s);
        }
    }
    c.margin = margin;
    c.passed = margin > 0.0;
    if (!c.passed) c.detail = "G_lift W^N exceeds shifted X_P^N";
    return c;
}

AssumptionCheck check_stability(const Matrix& A) {
    AssumptionCheck c{"A4 stable system matrix", false, 0.0, ""};
    const double rho = spectral_radius(A);
    c.margin = 1.0 - rho;
    c.passed = rho < 1.0;
    if (!c.passed) c.detail = "spectral radius " + std::to_string(rho);
    return c;
}

AssumptionCheck check_cost(const MpcConfig& cfg, const LinearSystem& sys, Matrix* P_out) {
    AssumptionCheck c{"A5 positive definite cost, Riccati terminal weight", false, 0.0, ""};
    const double qe = min_eigenvalue(cfg.Q);
    const double re = min_eigenvalue(cfg.R);
    c.margin = std::min(qe, re);
    if (qe <= 0.0 || re <= 0.0) {
        c.detail = "Q or R not positive definite";
        return c;
    }
    try {
        *P_out = solve_dare(sys.A, sys.B, cfg.Q, cfg.R);
    } catch (const Error& e) {
        c.detail = e.what();
        return c;
    }
    std::ostringstream os;
    os << "DARE residual " << dare_residual(sys.A, sys.B, cfg.Q, cfg.R, *P_out);
    c.detail = os.str();
    c.passed = true;
    return c;
}

// Facet-wise certificate of A X_f + A^N G W subset X_f + (-B) U.
double rci_certificate_slack(const LinearSystem& sys, int N, const Polytope& X_f,
                             const Polytope& U_set) {
    const int nx = static_cast<int>(sys.A.rows());
    Matrix AN = Matrix::Identity(nx, nx);
    for (int i = 0; i < N; ++i) AN = sys.A * AN;
    const Polytope img_ANGW = affine_image(AN * sys.G, sys.W);
    const Polytope img_mBU = affine_image(-sys.B, U_set);
    const Polytope rhs = minkowski_sum(X_f, img_mBU);
    double slack = std::numeric_limits<double>::infinity();
    for (int i = 0; i < rhs.rows(); ++i) {
        const Vector f = rhs.F().row(i).transpose();
        const double lhs = support(X_f, sys.A.transpose() * f) + support(img_ANGW, f);
        slack = std::min(slack, rhs.g()(i) - lhs);
    }
    return slack;
}

AssumptionCheck check_terminal(const LinearSystem& sys, int N, const Polytope& X_f,
                               const Polytope& X_P, const Polytope& U_set) {
    AssumptionCheck c{"A6 robust control invariant terminal set", false, 0.0, ""};
    double subset_slack = std::numeric_limits<double>::infinity();
    for (int i = 0; i < X_P.rows(); ++i)
        subset_slack = std::min(subset_slack,
                                X_P.g()(i) - support(X_f, X_P.F().row(i).transpose()));
    double rci_slack;
    try {
        rci_slack = rci_certificate_slack(sys, N, X_f, U_set);
    } catch (const Error& e) {
        c.detail = e.what();
        return c;
    }
    c.margin = std::min(subset_slack, rci_slack);
    c.passed = c.margin >= -kRciCertTol;
    std::ostringstream os;
    os << "subset slack " << subset_slack << ", invariance slack " << rci_slack;
    c.detail = os.str();
    return c;
}

void validate_shapes(const LinearSystem& sys, const MpcConfig& cfg, const Polytope& X_P,
                     const Polytope& U_set) {
    const int nx = static_cast<int>(sys.A.rows());
    const int nu = static_cast<int>(sys.B.cols());
    if (sys.A.cols() != nx || nx < 1) throw InvalidInputError("A must be square");
    if (sys.B.rows() != nx || nu < 1) throw InvalidInputError("B shape mismatch");
    if (sys.G.rows() != nx || sys.G.cols() != nx)
        throw InvalidInputError("G must be square n_x x n_x");
    if (!Eigen::FullPivLU<Matrix>(sys.G).isInvertible())
        throw InvalidInputError("G must be nonsingular");
    if (sys.Sigma_w.rows() != nx || sys.Sigma_w.cols() != nx)
        throw InvalidInputError("Sigma_w shape mismatch");
    if (sys.W.dim() != nx) throw InvalidInputError("W dimension mismatch");
    if (cfg.N < 1) throw InvalidInputError("horizon N must be >= 1");
    if (cfg.Q.rows() != nx || cfg.Q.cols() != nx) throw InvalidInputError("Q shape mismatch");
    if (cfg.R.rows() != nu || cfg.R.cols() != nu) throw InvalidInputError("R shape mismatch");
    if (cfg.x_ref.size() != nx || cfg.u_ref.size() != nu)
        throw InvalidInputError("reference shape mismatch");
    if (X_P.dim() != nx) throw InvalidInputError("X_P dimension mismatch");
    if (U_set.dim() != nu) throw InvalidInputError("U dimension mismatch");
}

BuildArtifacts run_validation(const LinearSystem& sys, const MpcConfig& cfg,
                              const Polytope& X_P, const Polytope& U_set,
                              const Polytope* pinned_Xf) {
    validate_shapes(sys, cfg, X_P, U_set);
    BuildArtifacts art;
    auto& checks = art.report.checks;

    checks.push_back(check_disturbance(sys));
    checks.push_back(check_state_set(cfg, X_P, U_set));
    checks.push_back(check_stability(sys.A));

    Matrix P;
    checks.push_back(check_cost(cfg, sys, &P));
    const bool core = checks[0].passed && checks[1].passed && checks[2].passed &&
                      checks[3].passed;
    art.core_ok = core;
    if (!core) {
        // Order the report as A1..A6 even though A3/A6 were not reachable.
        AssumptionCheck a3{"A3 propagated disturbances within state constraints",
                           false, 0.0, "not evaluated (earlier failure)"};
        AssumptionCheck a6{"A6 robust control invariant terminal set", false, 0.0,
                           "not evaluated (earlier failure)"};
        checks.insert(checks.begin() + 2, a3);
        checks.push_back(a6);
        return art;
    }
    art.P = P;
    art.K = lqr_gain(sys.A, sys.B, cfg.Q, cfg.R);
    art.Sigma_x = solve_dlyap(sys.A, sys.G * sys.Sigma_w * sys.G.transpose());
    Eigen::LLT<Matrix> sx_llt(art.Sigma_x);
    Matrix Sx_inv = sx_llt.solve(Matrix::Identity(art.Sigma_x.rows(), art.Sigma_x.cols()));
    Sx_inv = 0.5 * (Sx_inv + Sx_inv.transpose());
    art.S = solve_dlyap((sys.A - sys.B * art.K).transpose(), Sx_inv);

    art.lifted = build_lifted(sys.A, sys.B, sys.G, cfg.N);
    const Polytope img_GW =
        affine_image(art.lifted.G_lift, cartesian_power(sys.W, cfg.N));
    AssumptionCheck a3 = check_propagation(art.lifted, img_GW, X_P, cfg.x_ref);
    checks.insert(checks.begin() + 2, a3);

    if (pinned_Xf) {
        art.X_f = *pinned_Xf;
    } else {
        try {
            art.X_f = compute_terminal_set(sys, cfg.N, X_P, U_set);
        } catch (const Error& e) {
            AssumptionCheck a6{"A6 robust control invariant terminal set", false, 0.0,
                               std::string("terminal set computation failed: ") + e.what()};
            checks.push_back(a6);
            return art;
        }
    }
    checks.push_back(check_terminal(sys, cfg.N, *art.X_f, X_P, U_set));

    const double ss_res =
        (sys.A * cfg.x_ref + sys.B * cfg.u_ref - cfg.x_ref).cwiseAbs().maxCoeff();
    if (ss_res > 1e-6) {
        std::ostringstream os;
        os << "reference pair is not a steady state (residual " << ss_res
           << "); tracking converges to a nearby offset point";
        art.report.warnings.push_back(os.str());
    }
    return art;
}

}  // namespace

AssumptionReport validate_assumptions(const LinearSystem& sys, const MpcConfig& cfg,
                                      const Polytope& X_P, const Polytope& U_set,
                                      const Polytope* X_f) {
    return run_validation(sys, cfg, X_P, U_set, X_f).report;
}

Polytope compute_terminal_set(const LinearSystem& sys, int N, const Polytope& X_P,
                              const Polytope& U_set) {
    const int nx = static_cast<int>(sys.A.rows());
    Matrix AN = Matrix::Identity(nx, nx);
    for (int i = 0; i < N; ++i) AN = sys.A * AN;
    const Polytope img_ANGW = affine_image(AN * sys.G, sys.W);
    const Polytope img_mBU = affine_image(-sys.B, U_set);

    Polytope omega = remove_redundancy(X_P);
    const int max_iter = 500;
    for (int it = 0; it < max_iter; ++it) {
        Polytope tightened = pontryagin_diff(omega, img_ANGW);
        if (is_empty(tightened))
            throw AssumptionError("compute_terminal_set: tightened iterate is empty, "
                                  "no terminal set exists");
        Polytope pre = affine_preimage(minkowski_sum(tightened, img_mBU), sys.A);
        Polytope next = remove_redundancy(intersect(X_P, pre));
        // The iterates are nested decreasing; equality is mutual support
        // agreement on both facet families.
        bool equal = true;
        for (int i = 0; i < next.rows() && equal; ++i)
            if (support(omega, next.F().row(i).transpose()) > next.g()(i) + kSetEqTol)
                equal = false;
        for (int i = 0; i < omega.rows() && equal; ++i)
            if (support(next, omega.F().row(i).transpose()) > omega.g()(i) + kSetEqTol)
                equal = false;
        omega = next;
        if (equal) {
            const double slack = rci_certificate_slack(sys, N, omega, U_set);
            if (slack < -kRciCertTol)
                throw SolverFailureError(
                    "compute_terminal_set: fixed point failed the invariance "
                    "certificate, slack " + std::to_string(slack));
            return omega;
        }
    }
    throw ResourceLimitError("compute_terminal_set: iteration budget exhausted");
}

Polytope compute_case1_set(const CvpmProblem& problem) {
    const LiftedSystem& L = problem.lifted();
    const Polytope& tube = problem.tube();
    const Polytope U_N = cartesian_power(problem.input_set(), problem.horizon());
    const int nx = L.n_x;
    const int nU = L.N * L.n_u;

    Matrix F = Matrix::Zero(tube.rows() + U_N.rows(), nx + nU);
    Vector g(tube.rows() + U_N.rows());
    F.block(0, 0, tube.rows(), nx) = tube.F() * L.A_lift;
    F.block(0, nx, tube.rows(), nU) = tube.F() * L.B_lift;
    g.head(tube.rows()) = tube.g();
    F.block(tube.rows(), nx, U_N.rows(), nU) = U_N.F();
    g.tail(U_N.rows()) = U_N.g();

    std::vector<int> keep(nx);
    std::iota(keep.begin(), keep.end(), 0);
    return project(Polytope(std::move(F), std::move(g)), keep);
}

CvpmProblem CvpmProblem::build(const LinearSystem& sys, const MpcConfig& cfg,
                               const Polytope& X_P, const Polytope& U_set,
                               const BuildOptions& opts) {
    BuildArtifacts art = run_validation(sys, cfg, X_P, U_set,
                                        opts.pinned_terminal ? &*opts.pinned_terminal
                                                             : nullptr);
    if (!art.core_ok)
        throw AssumptionError("CvpmProblem: hard assumption failure\n" +
                              art.report.summary());
    if (opts.strict && !art.report.all_passed())
        throw AssumptionError("CvpmProblem: assumption failure\n" +
                              art.report.summary());
    if (!art.X_f)
        throw AssumptionError("CvpmProblem: no terminal set available\n" +
                              art.report.summary());

    CvpmProblem p;
    p.sys_ = sys;
    p.cfg_ = cfg;
    p.X_P_ = remove_redundancy(X_P);
    p.U_set_ = remove_redundancy(U_set);
    p.lifted_ = art.lifted;
    p.X_f_ = *art.X_f;
    p.P_ = art.P;
    p.K_ = art.K;
    p.Sigma_x_ = art.Sigma_x;
    p.S_ = art.S;
    p.report_ = art.report;

    std::vector<Polytope> factors(static_cast<size_t>(cfg.N - 1), p.X_P_);
    factors.push_back(p.X_f_);
    p.augmented_ = std::make_shared<const Polytope>(direct_product(factors));

    const Polytope img_GW = affine_image(p.lifted_.G_lift, cartesian_power(sys.W, cfg.N));
    Polytope tube = pontryagin_diff(*p.augmented_, img_GW);
    p.tube_nonempty_ = !is_empty(tube);
    p.tube_ = std::make_shared<const Polytope>(std::move(tube));

    if (p.tube_nonempty_) {
        Polytope xc1 = compute_case1_set(p);
        p.X_C1_nonempty_ = !is_empty(xc1);
        p.X_C1_ = std::make_shared<const Polytope>(std::move(xc1));
    } else {
        p.X_C1_nonempty_ = false;
        p.X_C1_ = std::make_shared<const Polytope>(Polytope::empty_set(p.n_x()));
    }

    p.cov_plain_ = block_cov_inverse(p.Sigma_x_, p.S_, cfg.N, false);
    p.cov_adapted_ = block_cov_inverse(p.Sigma_x_, p.S_, cfg.N, true);

    const int nu = p.n_u();
    p.u_lower_.resize(cfg.N * nu);
    p.u_upper_.resize(cfg.N * nu);
    for (int i = 0; i < nu; ++i) {
        const double hi = support(p.U_set_, unit(nu, i));
        const double lo = -support(p.U_set_, unit(nu, i, -1.0));
        for (int k = 0; k < cfg.N; ++k) {
            p.u_upper_(k * nu + i) = hi;
            p.u_lower_(k * nu + i) = lo;
        }
    }

    // Diagnostic spot check of the feedback-gain requirement behind the
    // adapted covariance: u = u_ref - K (x - x_ref) should keep sampled
    // X_C1 states inside X_C1 for every disturbance vertex.
    if (p.X_C1_nonempty_ && p.n_x() <= 3) {
        Vector lo, hi;
        bounding_box(*p.X_C1_, lo, hi);
        std::vector<Vector> wv = vertices(sys.W);
        RngStream rng(0x5eed);
        int checked = 0, failures = 0;
        int attempts = 0;
        while (checked < 50 && attempts < 5000) {
            ++attempts;
            Vector x(p.n_x());
            for (int i = 0; i < p.n_x(); ++i)
                x(i) = lo(i) + (hi(i) - lo(i)) * rng.next_uniform();
            if (!p.X_C1_->contains(x, 0.0)) continue;
            ++checked;
            const Vector u = cfg.u_ref - p.K_ * (x - cfg.x_ref);
            bool ok = p.U_set_.contains(u, 1e-9);
            for (const auto& w : wv) {
                if (!ok) break;
                const Vector xn = sys.A * x + sys.B * u + sys.G * w;
                ok = p.X_C1_->contains(xn, 1e-6);
            }
            if (!ok) ++failures;
        }
        if (failures > 0) {
            std::ostringstream os;
            os << "LQR gain fails the X_C1 invariance requirement on " << failures
               << " of " << checked << " sampled states; the Case-2 terminal "
                  "weight rests on an unverified gain for those states";
            p.report_.warnings.push_back(os.str());
        }
    }

    // Reporting volume for the violation-probability approximation.
    if (p.n_x() == 2) {
        try {
            if (p.X_C1_nonempty_) {
                const double v = volume_2d(*p.X_C1_);
                if (v > 0.0) p.log_volume_ = cfg.N * std::log(v);
            } else {
                const double vp = volume_2d(p.X_P_);
                const double vf = volume_2d(p.X_f_);
                if (vp > 0.0 && vf > 0.0)
                    p.log_volume_ = (cfg.N - 1) * std::log(vp) + std::log(vf);
            }
        } catch (const Error&) {
            // leave unset; p_violation then reports 1
        }
    }
    return p;
}

CvpmProblem CvpmProblem::update_disturbance_set(const Polytope& W_new,
                                                const Matrix& Sigma_w_new,
                                                bool keep_terminal) const {
    LinearSystem sys = sys_;
    sys.W = W_new;
    sys.Sigma_w = Sigma_w_new;
    BuildOptions opts;
    opts.strict = false;
    if (keep_terminal) opts.pinned_terminal = X_f_;
    return build(sys, cfg_, X_P_, U_set_, opts);
}

CvpmProblem CvpmProblem::update_state_constraints(const Polytope& X_P_new,
                                                  bool keep_terminal) const {
    BuildOptions opts;
    opts.strict = false;
    if (keep_terminal) opts.pinned_terminal = X_f_;
    return build(sys_, cfg_, X_P_new, U_set_, opts);
}

Polytope admissible_input_polytope(const CvpmProblem& problem, const Vector& x) {
    const LiftedSystem& L = problem.lifted();
    const Polytope& tube = problem.tube();
    const Polytope U_N = cartesian_power(problem.input_set(), problem.horizon());
    const int nU = L.N * L.n_u;
    // The tube rows carry a solver-tolerance slack so that boundary-exact
    // handovers (closed X_C1 contains its boundary) classify as feasible.
    const double eps = 1e-8 * (1.0 + tube.g().cwiseAbs().maxCoeff());
    Matrix F(U_N.rows() + tube.rows(), nU);
    Vector g(U_N.rows() + tube.rows());
    F.topRows(U_N.rows()) = U_N.F();
    g.head(U_N.rows()) = U_N.g();
    F.bottomRows(tube.rows()) = tube.F() * L.B_lift;
    g.tail(tube.rows()) =
        tube.g() - tube.F() * (L.A_lift * x) + Vector::Constant(tube.rows(), eps);
    return Polytope(std::move(F), std::move(g));
}

StepCase detect_case(const CvpmProblem& problem, const Vector& x) {
    const EmptinessCertificate cert = check_empty(admissible_input_polytope(problem, x));
    const bool feasible = !cert.empty;
    if (problem.case1_set_nonempty()) {
        const bool strictly_inside = problem.case1_set().contains(x, -kDispatchBand);
        const bool strictly_outside = !problem.case1_set().contains(x, kDispatchBand);
        if (strictly_inside && !feasible)
            throw InternalConsistencyError(
                "detect_case: x strictly inside X_C1 but no admissible inputs");
        if (strictly_outside && feasible)
            throw InternalConsistencyError(
                "detect_case: x strictly outside X_C1 but admissible inputs exist");
    } else if (feasible) {
        throw InternalConsistencyError(
            "detect_case: X_C1 empty but admissible inputs exist");
    }
    return feasible ? StepCase::Safe : StepCase::Probabilistic;
}

StepOutcome solve_case1(const CvpmProblem& problem, const Vector& x,
                        const QpWarmStart* warm) {
    const LiftedSystem& L = problem.lifted();
    const MpcConfig& cfg = problem.config();
    const int N = cfg.N;
    const int nx = L.n_x, nu = L.n_u;

    // Condensed tracking cost over U: blocks 1..N-1 weighted by Q, terminal
    // by P, inputs by R; the constant time-t stage term is added back into
    // the reported objective.
    Matrix Qbar = Matrix::Zero(N * nx, N * nx);
    for (int k = 0; k + 1 < N; ++k) Qbar.block(k * nx, k * nx, nx, nx) = cfg.Q;
    Qbar.block((N - 1) * nx, (N - 1) * nx, nx, nx) = problem.terminal_weight();
    Matrix Rbar = Matrix::Zero(N * nu, N * nu);
    for (int k = 0; k < N; ++k) Rbar.block(k * nu, k * nu, nu, nu) = cfg.R;

    const Vector X_ref = stack_copies(cfg.x_ref, N);
    const Vector U_ref = stack_copies(cfg.u_ref, N);
    const Vector c0 = L.A_lift * x - X_ref;

    QpProblem qp;
    qp.H = 2.0 * (L.B_lift.transpose() * Qbar * L.B_lift + Rbar);
    qp.f = 2.0 * (L.B_lift.transpose() * Qbar * c0 - Rbar * U_ref);
    const Polytope adm = admissible_input_polytope(problem, x);
    qp.G = adm.F();
    qp.h = adm.g();

    QpResult r = solve_qp(qp, warm);
    if (r.status.state == SolveState::Infeasible)
        throw InternalConsistencyError(
            "solve_case1: QP infeasible although the safe case was detected");
    if (r.status.state != SolveState::Optimal)
        throw SolverFailureError("solve_case1: QP backend failed (" +
                                 to_string(r.status.state) + ")");

    StepOutcome out;
    out.step_case = StepCase::Safe;
    out.U_star = r.z;
    out.u_applied = r.z.head(nu);
    out.X_bar = predict_mean(L, x, r.z);
    const Vector dx = x - cfg.x_ref;
    const Vector dX = out.X_bar - X_ref;
    const Vector dU = r.z - U_ref;
    out.objective = dX.dot(Qbar * dX) + dU.dot(Rbar * dU) + dx.dot(cfg.Q * dx);
    out.p_violation = 0.0;
    out.diagnostics = r.status;
    return out;
}

StepOutcome solve_case2(const CvpmProblem& problem, const Vector& x,
                        const QpWarmStart* warm) {
    const LiftedSystem& L = problem.lifted();
    const int N = problem.horizon();
    const int nx = L.n_x, nu = L.n_u;
    const int nU = N * nu, nX = N * nx;

    // Target for the auxiliary trajectory: X_C1^N, or the augmented
    // constraint set with the plain covariance when X_C1 is empty (declared
    // fallback for runtime set updates that break the disturbance bound).
    const bool fallback = !problem.case1_set_nonempty();
    const Polytope target = fallback
                                ? problem.augmented_constraints()
                                : cartesian_power(problem.case1_set(), N);
    const BlockCovariance& cov =
        fallback ? problem.cov_plain() : problem.cov_adapted();

    const Matrix Sinv = cov.assemble_inverse();
    const Vector a = L.A_lift * x;

    // z = (U, xi); residual M z + a with M = [B_lift, -I].
    Matrix M(nX, nU + nX);
    M.leftCols(nU) = L.B_lift;
    M.rightCols(nX) = -Matrix::Identity(nX, nX);

    QpProblem qp;
    qp.H = 2.0 * M.transpose() * Sinv * M;
    qp.f = 2.0 * M.transpose() * Sinv * a;

    const Polytope U_N = cartesian_power(problem.input_set(), N);
    qp.G = Matrix::Zero(U_N.rows() + target.rows(), nU + nX);
    qp.h = Vector(U_N.rows() + target.rows());
    qp.G.block(0, 0, U_N.rows(), nU) = U_N.F();
    qp.h.head(U_N.rows()) = U_N.g();
    qp.G.block(U_N.rows(), nU, target.rows(), nX) = target.F();
    qp.h.tail(target.rows()) = target.g();

    QpResult r = solve_qp(qp, warm);
    if (r.status.state != SolveState::Optimal)
        throw SolverFailureError("solve_case2: QP backend failed (" +
                                 to_string(r.status.state) + ")");

    StepOutcome out;
    out.step_case = StepCase::Probabilistic;
    out.U_star = r.z.head(nU);
    out.xi_star = r.z.tail(nX);
    out.u_applied = out.U_star.head(nu);
    out.X_bar = a + L.B_lift * out.U_star;
    out.objective = cov.quadratic_form(out.X_bar - *out.xi_star);
    out.p_violation = approx_violation_probability(problem, out.X_bar, *out.xi_star);
    out.diagnostics = r.status;
    return out;
}

double approx_violation_probability(const CvpmProblem& problem, const Vector& X_bar,
                                    const Vector& xi) {
    const int N = problem.horizon();
    const int nx = problem.n_x();
    if (X_bar.size() != N * nx || xi.size() != N * nx)
        throw InvalidInputError("approx_violation_probability: shape mismatch");
    if (!problem.log_volume())
        return 1.0;  // no volume available (degenerate target)

    Eigen::LLT<Matrix> llt(problem.state_covariance());
    if (llt.info() != Eigen::Success)
        throw InvalidInputError("approx_violation_probability: singular covariance");
    double logdet = 0.0;
    for (int i = 0; i < nx; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));

    const double d2 = problem.cov_plain().quadratic_form(X_bar - xi);
    const double log_c = -0.5 * (nx * N * std::log(2.0 * M_PI) + N * logdet);
    const double log_mass = log_c + *problem.log_volume() - 0.5 * d2;
    const double mass = log_mass >= 0.0 ? 1.0 : std::exp(log_mass);
    return 1.0 - std::min(1.0, std::max(0.0, mass));
}

StepOutcome cvpm_step(const CvpmProblem& problem, const Vector& x) {
    return detect_case(problem, x) == StepCase::Safe ? solve_case1(problem, x)
                                                     : solve_case2(problem, x);
}

double lyapunov_value(const CvpmProblem& problem, const Vector& x) {
    return cvpm_step(problem, x).objective;
}

void CvpmController::reset_problem(std::shared_ptr<const CvpmProblem> problem) {
    problem_ = std::move(problem);
    warm_case1_.reset();
}

StepOutcome CvpmController::step(const Vector& x) {
    const StepCase c = detect_case(*problem_, x);
    if (c == StepCase::Probabilistic) {
        warm_case1_.reset();
        return solve_case2(*problem_, x);
    }
    StepOutcome out = solve_case1(*problem_, x,
                                  warm_case1_ ? &*warm_case1_ : nullptr);
    // Receding-horizon warm start: shift the sequence one block.
    const int nu = problem_->n_u();
    QpWarmStart warm;
    warm.z = out.U_star;
    warm.z.head(warm.z.size() - nu) = out.U_star.tail(out.U_star.size() - nu);
    warm_case1_ = std::move(warm);
    return out;
}

}  // namespace cvpm
