#include "nestmi/lmm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <cmath>

#include "nestmi/error.hpp"
#include "nestmi/optim.hpp"
#include "nestmi/text.hpp"

namespace nestmi {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kBoundaryTol = 1e-8;  // Lambda diagonal below this is a zero variance

struct GroupStats {
    Matrix ZtZ;  // q x q
    Matrix ZtX;  // q x p
    Vector Zty;  // q
    int n = 0;
};

struct SuffStats {
    std::vector<GroupStats> groups;
    Matrix XtX;
    Vector Xty;
    double yty = 0.0;
    int N = 0, p = 0, q = 0;
};

SuffStats collect(const DesignMatrices& m) {
    SuffStats s;
    s.N = m.n_rows();
    s.p = m.p();
    s.q = m.q();
    s.XtX = Matrix::Zero(s.p, s.p);
    s.Xty = Vector::Zero(s.p);
    const Vector y = m.Y.col(0);
    s.XtX.selfadjointView<Eigen::Lower>().rankUpdate(m.X.transpose());
    s.XtX.triangularView<Eigen::StrictlyUpper>() = s.XtX.transpose();
    s.Xty = m.X.transpose() * y;
    s.yty = y.squaredNorm();
    s.groups.resize(static_cast<size_t>(m.groups.J));
    for (int j = 0; j < m.groups.J; ++j) {
        const auto& rows = m.groups.rows[static_cast<size_t>(j)];
        auto& g = s.groups[static_cast<size_t>(j)];
        g.n = static_cast<int>(rows.size());
        Matrix Zj(g.n, s.q), Xj(g.n, s.p);
        Vector yj(g.n);
        for (int i = 0; i < g.n; ++i) {
            Zj.row(i) = m.Z.row(rows[static_cast<size_t>(i)]);
            Xj.row(i) = m.X.row(rows[static_cast<size_t>(i)]);
            yj(i) = y(rows[static_cast<size_t>(i)]);
        }
        g.ZtZ = Zj.transpose() * Zj;
        g.ZtX = Zj.transpose() * Xj;
        g.Zty = Zj.transpose() * yj;
    }
    return s;
}

int theta_size(int q) { return q * (q + 1) / 2; }

// Lower-triangular relative covariance factor; diagonal on an exp scale so
// variances stay nonnegative by construction.
Matrix lambda_from_theta(const Vector& theta, int q) {
    Matrix L = Matrix::Zero(q, q);
    int idx = 0;
    for (int c = 0; c < q; ++c) {
        for (int r = c; r < q; ++r) {
            const double t = theta(idx++);
            L(r, c) = (r == c) ? std::exp(std::clamp(t, -30.0, 30.0)) : t;
        }
    }
    return L;
}

struct ProfiledEval {
    bool ok = false;
    double dev = 1e300;
    Vector beta;
    Matrix XtVX;      // X' (I + Z Lambda Lambda' Z')^{-1} X
    double r2 = 0.0;  // profiled residual sum of squares under V
    double logdet = 0.0;
};

ProfiledEval profile(const SuffStats& s, const Matrix& lambda, EstMethod method) {
    ProfiledEval out;
    Matrix XtVX = s.XtX;
    Vector XtVy = s.Xty;
    double yTVy = s.yty;
    double logdet = 0.0;
    for (const auto& g : s.groups) {
        const Matrix M = Matrix::Identity(s.q, s.q) +
                         lambda.transpose() * g.ZtZ * lambda;
        Eigen::LLT<Matrix> llt(M);
        if (llt.info() != Eigen::Success) return out;
        const Matrix Lm = llt.matrixL();
        logdet += 2.0 * Lm.diagonal().array().log().sum();
        const Matrix A = Lm.triangularView<Eigen::Lower>().solve(
            Matrix(lambda.transpose() * g.ZtX));
        const Vector a = Lm.triangularView<Eigen::Lower>().solve(
            Vector(lambda.transpose() * g.Zty));
        XtVX.noalias() -= A.transpose() * A;
        XtVy.noalias() -= A.transpose() * a;
        yTVy -= a.squaredNorm();
    }
    Eigen::LLT<Matrix> lltX(XtVX);
    if (lltX.info() != Eigen::Success) return out;
    const Vector beta = lltX.solve(XtVy);
    const double r2 = yTVy - beta.dot(XtVy);
    if (!(r2 > 0.0) || !std::isfinite(r2)) return out;

    double dev;
    if (method == EstMethod::ML) {
        dev = logdet + s.N * (1.0 + std::log(kTwoPi * r2 / s.N));
    } else {
        const Matrix LmX = lltX.matrixL();
        const double logdetX = 2.0 * LmX.diagonal().array().log().sum();
        const double nmp = s.N - s.p;
        dev = logdet + logdetX + nmp * (1.0 + std::log(kTwoPi * r2 / nmp));
    }
    out.ok = true;
    out.dev = dev;
    out.beta = beta;
    out.XtVX = XtVX;
    out.r2 = r2;
    out.logdet = logdet;
    return out;
}

bool at_boundary(const Vector& theta, int q) {
    int idx = 0;
    for (int c = 0; c < q; ++c) {
        for (int r = c; r < q; ++r, ++idx) {
            if (r == c && std::exp(theta(idx)) < kBoundaryTol) return true;
        }
    }
    return false;
}

}  // namespace

LmmFit fit_lmm(const AnalysisModel& model, const Dataset& d) {
    if (model.formula.n_responses() != 1) {
        throw ValidationError("analysis model must have exactly one response");
    }
    const DesignMatrices m = build_design(model.formula, d);
    if (m.y_missing.any()) {
        throw ValidationError("analysis dataset has missing values in response " +
                              m.y_names[0]);
    }
    if (m.groups.J < 2) {
        throw ValidationError("mixed model needs at least 2 groups to separate variance "
                              "components");
    }
    if (m.n_rows() <= m.p()) throw ValidationError("more coefficients than observations");
    {
        Eigen::ColPivHouseholderQR<Matrix> qr(m.X);
        qr.setThreshold(1e-10);
        if (qr.rank() < m.p()) {
            throw ValidationError("singular fixed-effects design; remove collinear predictors");
        }
    }

    const SuffStats s = collect(m);
    auto objective = [&](const Vector& theta) {
        return profile(s, lambda_from_theta(theta, s.q), model.method).dev;
    };

    SimplexOptions opt;
    opt.initial_step = 1.0;
    Vector theta0 = Vector::Zero(theta_size(s.q));
    SimplexResult res = nelder_mead(objective, theta0, opt);
    int evals = res.n_evals;
    if (!res.converged) {
        throw NumericalError("mixed-model fit did not converge in " +
                             std::to_string(opt.max_evals) +
                             " evaluations; best deviance " + format_double(res.fx));
    }
    if (at_boundary(res.x, s.q)) {
        // One restart from an interior point guards against a premature
        // collapse of the simplex onto the boundary.
        Vector theta1 = res.x;
        int idx = 0;
        for (int c = 0; c < s.q; ++c) {
            for (int r = c; r < s.q; ++r, ++idx) {
                if (r == c && std::exp(theta1(idx)) < kBoundaryTol) theta1(idx) = std::log(0.1);
            }
        }
        SimplexResult res2 = nelder_mead(objective, theta1, opt);
        evals += res2.n_evals;
        if (res2.converged && res2.fx < res.fx) res = res2;
    }

    const Matrix lambda = lambda_from_theta(res.x, s.q);
    const ProfiledEval ev = profile(s, lambda, model.method);
    if (!ev.ok) throw NumericalError("mixed-model profile evaluation failed at the optimum");

    LmmFit fit;
    fit.coef_names = m.x_names;
    fit.random_names = m.z_names;
    fit.method = model.method;
    fit.n_obs = s.N;
    fit.n_groups = m.groups.J;
    fit.df_com = static_cast<double>(s.N - s.p);
    fit.beta = ev.beta;
    fit.sigma2 = model.method == EstMethod::ML ? ev.r2 / s.N : ev.r2 / (s.N - s.p);
    Eigen::LLT<Matrix> lltX(ev.XtVX);
    Matrix inv = lltX.solve(Matrix::Identity(s.p, s.p));
    fit.vcov = fit.sigma2 * 0.5 * (inv + inv.transpose());
    Matrix G = fit.sigma2 * lambda * lambda.transpose();
    fit.G = 0.5 * (G + G.transpose());
    fit.deviance = ev.dev;
    fit.loglik = -0.5 * ev.dev;
    fit.converged = true;
    fit.boundary = at_boundary(res.x, s.q);
    fit.n_evals = evals;
    return fit;
}

double icc(const LmmFit& fit) {
    if (fit.q() != 1 || fit.p() != 1) {
        throw ValidationError("ICC is defined for intercept-only fits");
    }
    const double v0 = fit.G(0, 0);
    return v0 / (v0 + fit.sigma2);
}

double loglik_at(const AnalysisModel& model, const Dataset& d, const Vector& beta,
                 const Matrix& G, double sigma2) {
    if (model.formula.n_responses() != 1) {
        throw ValidationError("analysis model must have exactly one response");
    }
    const DesignMatrices m = build_design(model.formula, d);
    if (m.y_missing.any()) {
        throw ValidationError("log-likelihood evaluation requires a complete response");
    }
    if (beta.size() != m.p()) throw ValidationError("fixed-effects vector has wrong length");
    if (G.rows() != m.q() || G.cols() != m.q()) {
        throw ValidationError("random-effects covariance has wrong dimensions");
    }
    if (!(sigma2 > 0.0)) throw NumericalError("residual variance must be positive");

    const Matrix Gs = 0.5 * (G + G.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(Gs);
    if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    if (eig.eigenvalues().minCoeff() < -1e-10 * scale) {
        throw NumericalError("random-effects covariance is not positive semidefinite");
    }
    // G = W W' with small negative eigenvalues clamped; Wt = W / sigma so that
    // V_j = sigma2 (I + Z_j Wt Wt' Z_j').
    const Vector ev = eig.eigenvalues().cwiseMax(0.0);
    const Matrix Wt =
        eig.eigenvectors() * ev.cwiseSqrt().asDiagonal() / std::sqrt(sigma2);

    const int q = m.q();
    const Vector y = m.Y.col(0);
    double ee = 0.0, quad = 0.0, logdet = 0.0;
    double n_total = 0.0;
    for (int j = 0; j < m.groups.J; ++j) {
        const auto& rows = m.groups.rows[static_cast<size_t>(j)];
        Matrix ZtZ = Matrix::Zero(q, q);
        Vector Zte = Vector::Zero(q);
        for (int row : rows) {
            const double e = y(row) - m.X.row(row).dot(beta);
            ee += e * e;
            ZtZ.noalias() += m.Z.row(row).transpose() * m.Z.row(row);
            Zte.noalias() += m.Z.row(row).transpose() * e;
        }
        const Matrix M = Matrix::Identity(q, q) + Wt.transpose() * ZtZ * Wt;
        Eigen::LLT<Matrix> llt(M);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("covariance factorization failed in group " +
                                 m.groups.labels[static_cast<size_t>(j)]);
        }
        const Matrix Lm = llt.matrixL();
        logdet += 2.0 * Lm.diagonal().array().log().sum();
        const Vector w = Wt.transpose() * Zte;
        quad += w.dot(llt.solve(w));
        n_total += static_cast<double>(rows.size());
    }
    return -0.5 * (n_total * std::log(kTwoPi * sigma2) + logdet + (ee - quad) / sigma2);
}

}  // namespace nestmi
