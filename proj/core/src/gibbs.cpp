#include "nestmi/gibbs.hpp"

#include <chrono>
#include <cmath>
#include <map>

#include <Eigen/Dense>

#include "nestmi/error.hpp"

namespace nestmi {

namespace {

Matrix spd_inverse(const Matrix& a, const std::string& what) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success)
        throw NumericalError(what + " is not positive definite");
    Matrix inv = llt.solve(Matrix::Identity(a.rows(), a.cols()));
    return 0.5 * (inv + inv.transpose());
}

// Column-major fill so the draw stream does not depend on Eigen's storage.
Matrix normal_matrix(Rng& rng, int rows, int cols) {
    Matrix e(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int i = 0; i < rows; ++i) e(i, c) = rng.normal();
    return e;
}

Prior checked_prior(const Prior& prior, const DesignMatrices& design) {
    int r = design.r();
    int qr = design.q() * r;
    if (prior.lambda_sigma.rows() != r || prior.lambda_sigma.cols() != r)
        throw ValidationError("lambda_sigma must be " + std::to_string(r) + "x" +
                              std::to_string(r));
    if (prior.lambda_psi.rows() != qr || prior.lambda_psi.cols() != qr)
        throw ValidationError("lambda_psi must be " + std::to_string(qr) + "x" +
                              std::to_string(qr));
    if (prior.nu_sigma < r)
        throw ValidationError("nu_sigma must be at least the number of responses");
    if (prior.nu_psi < qr)
        throw ValidationError("nu_psi must be at least the stacked random-effect dimension");
    Eigen::LLT<Matrix> ls(prior.lambda_sigma);
    if (ls.info() != Eigen::Success)
        throw ValidationError("lambda_sigma is not positive definite");
    Eigen::LLT<Matrix> lp(prior.lambda_psi);
    if (lp.info() != Eigen::Success)
        throw ValidationError("lambda_psi is not positive definite");
    return prior;
}

}  // namespace

Prior default_prior(int r, int q, const Vector& response_variances) {
    if (r < 1 || q < 1) throw ValidationError("default_prior requires r >= 1 and q >= 1");
    if (response_variances.size() != r)
        throw ValidationError("expected one observed-case variance per response");
    for (int k = 0; k < r; ++k) {
        double v = response_variances(k);
        if (!std::isfinite(v) || v <= 0.0)
            throw ValidationError("response " + std::to_string(k + 1) +
                                  " has zero or undefined observed variance; the default "
                                  "prior scale would be degenerate");
    }
    Prior prior;
    prior.nu_sigma = r;
    prior.lambda_sigma = response_variances.asDiagonal();
    prior.nu_psi = static_cast<double>(q) * r;
    Vector psi_diag(q * r);
    for (int k = 0; k < r; ++k)
        for (int l = 0; l < q; ++l) psi_diag(k * q + l) = response_variances(k);
    prior.lambda_psi = psi_diag.asDiagonal();
    return prior;
}

GibbsState init_state(const DesignMatrices& design, const Prior& prior, std::uint64_t seed) {
    int n = design.n_rows();
    int r = design.r();

    Matrix y = design.Y;
    for (int k = 0; k < r; ++k) {
        double sum = 0.0;
        long cnt = 0;
        for (int i = 0; i < n; ++i) {
            if (!design.y_missing(i, k)) {
                sum += y(i, k);
                ++cnt;
            }
        }
        if (cnt == 0)
            throw ValidationError("response '" + design.y_names[static_cast<size_t>(k)] +
                                  "' has no observed values");
        double mean = sum / static_cast<double>(cnt);
        for (int i = 0; i < n; ++i)
            if (design.y_missing(i, k)) y(i, k) = mean;
    }

    Eigen::ColPivHouseholderQR<Matrix> qr(design.X);
    qr.setThreshold(1e-10);
    if (qr.rank() < design.p())
        throw ValidationError(
            "fixed-effect design is rank deficient; remove collinear predictors");

    GibbsState st{qr.solve(y),
                  std::vector<Matrix>(static_cast<size_t>(design.groups.J),
                                      Matrix::Zero(design.q(), r)),
                  prior.lambda_psi,
                  prior.lambda_sigma,
                  std::move(y),
                  Rng(seed),
                  0};
    return st;
}

GibbsSampler::GibbsSampler(const DesignMatrices& design, const Prior& prior, std::uint64_t seed)
    : design_(design),
      prior_(checked_prior(prior, design)),
      state_(init_state(design_, prior_, seed)) {
    Matrix xtx = Matrix::Zero(design_.p(), design_.p());
    xtx.selfadjointView<Eigen::Lower>().rankUpdate(design_.X.transpose());
    xtx_llt_.compute(Matrix(xtx.selfadjointView<Eigen::Lower>()));
    if (xtx_llt_.info() != Eigen::Success)
        throw ValidationError(
            "fixed-effect design is rank deficient; remove collinear predictors");
    ztz_.reserve(static_cast<size_t>(design_.groups.J));
    group_of_row_.assign(static_cast<size_t>(design_.n_rows()), 0);
    for (int j = 0; j < design_.groups.J; ++j) {
        const auto& rows = design_.groups.rows[static_cast<size_t>(j)];
        Matrix ztz = Matrix::Zero(design_.q(), design_.q());
        for (int i : rows) {
            ztz.selfadjointView<Eigen::Lower>().rankUpdate(design_.Z.row(i).transpose());
            group_of_row_[static_cast<size_t>(i)] = j;
        }
        ztz_.push_back(Matrix(ztz.selfadjointView<Eigen::Lower>()));
    }
}

Matrix GibbsSampler::zb_rows() const {
    Matrix zb = Matrix::Zero(design_.n_rows(), design_.r());
    for (int j = 0; j < design_.groups.J; ++j)
        for (int i : design_.groups.rows[static_cast<size_t>(j)])
            zb.row(i) = design_.Z.row(i) * state_.b[static_cast<size_t>(j)];
    return zb;
}

void GibbsSampler::impute_missing() {
    int r = design_.r();

    // Conditioning on the observed part depends only on the missingness
    // pattern, so factorizations are shared across rows within this call.
    struct PatternCache {
        std::vector<int> obs, mis;
        Matrix k;          // mis x obs, Sigma_mo Sigma_oo^-1
        Matrix chol_cond;  // lower factor of the conditional covariance
    };
    std::map<std::vector<bool>, PatternCache> cache;

    for (int i = 0; i < design_.n_rows(); ++i) {
        std::vector<bool> key(static_cast<size_t>(r));
        int n_mis = 0;
        for (int k = 0; k < r; ++k) {
            key[static_cast<size_t>(k)] = design_.y_missing(i, k);
            if (design_.y_missing(i, k)) ++n_mis;
        }
        if (n_mis == 0) continue;

        auto it = cache.find(key);
        if (it == cache.end()) {
            PatternCache pc;
            for (int k = 0; k < r; ++k)
                (key[static_cast<size_t>(k)] ? pc.mis : pc.obs).push_back(k);
            int no = static_cast<int>(pc.obs.size());
            int nm = static_cast<int>(pc.mis.size());
            Matrix cond;
            if (no == 0) {
                pc.k = Matrix::Zero(nm, 0);
                cond = state_.sigma;
            } else {
                Matrix s_oo(no, no), s_mo(nm, no), s_mm(nm, nm);
                for (int a = 0; a < no; ++a)
                    for (int c = 0; c < no; ++c) s_oo(a, c) = state_.sigma(pc.obs[a], pc.obs[c]);
                for (int a = 0; a < nm; ++a)
                    for (int c = 0; c < no; ++c) s_mo(a, c) = state_.sigma(pc.mis[a], pc.obs[c]);
                for (int a = 0; a < nm; ++a)
                    for (int c = 0; c < nm; ++c) s_mm(a, c) = state_.sigma(pc.mis[a], pc.mis[c]);
                Eigen::LLT<Matrix> llt_oo(s_oo);
                if (llt_oo.info() != Eigen::Success)
                    throw NumericalError(
                        "observed-block residual covariance is not positive definite at row " +
                        std::to_string(i + 1));
                pc.k = llt_oo.solve(s_mo.transpose()).transpose();
                cond = s_mm - pc.k * s_mo.transpose();
                cond = 0.5 * (cond + cond.transpose());
            }
            Eigen::LLT<Matrix> llt_cond(cond);
            if (llt_cond.info() != Eigen::Success)
                throw NumericalError(
                    "conditional residual covariance is not positive definite at row " +
                    std::to_string(i + 1));
            pc.chol_cond = llt_cond.matrixL();
            it = cache.emplace(std::move(key), std::move(pc)).first;
        }
        const PatternCache& pc = it->second;
        const Matrix& bj = state_.b[static_cast<size_t>(group_of_row_[static_cast<size_t>(i)])];
        Vector mu = state_.beta.transpose() * design_.X.row(i).transpose() +
                    bj.transpose() * design_.Z.row(i).transpose();

        int no = static_cast<int>(pc.obs.size());
        int nm = static_cast<int>(pc.mis.size());
        Vector cm(nm);
        if (no == 0) {
            for (int a = 0; a < nm; ++a) cm(a) = mu(pc.mis[a]);
        } else {
            Vector delta(no);
            for (int a = 0; a < no; ++a)
                delta(a) = state_.y_complete(i, pc.obs[a]) - mu(pc.obs[a]);
            Vector shift = pc.k * delta;
            for (int a = 0; a < nm; ++a) cm(a) = mu(pc.mis[a]) + shift(a);
        }
        Vector z(nm);
        for (int a = 0; a < nm; ++a) z(a) = state_.rng.normal();
        Vector draw = cm + pc.chol_cond * z;
        for (int a = 0; a < nm; ++a) state_.y_complete(i, pc.mis[a]) = draw(a);
    }
}

void GibbsSampler::draw_b() {
    int r = design_.r();
    int q = design_.q();
    int qr = q * r;
    Matrix sigma_inv = spd_inverse(state_.sigma, "Sigma");
    Matrix psi_inv = spd_inverse(state_.psi, "Psi");
    Matrix resid = state_.y_complete - design_.X * state_.beta;

    for (int j = 0; j < design_.groups.J; ++j) {
        Matrix ztr = Matrix::Zero(q, r);
        for (int i : design_.groups.rows[static_cast<size_t>(j)])
            ztr.noalias() += design_.Z.row(i).transpose() * resid.row(i);

        Matrix prec = psi_inv;
        const Matrix& ztz = ztz_[static_cast<size_t>(j)];
        for (int k = 0; k < r; ++k)
            for (int l = 0; l < r; ++l)
                prec.block(k * q, l * q, q, q).noalias() += sigma_inv(k, l) * ztz;

        Eigen::LLT<Matrix> llt(0.5 * (prec + prec.transpose()));
        if (llt.info() != Eigen::Success)
            throw NumericalError("random-effect precision is not positive definite for group '" +
                                 design_.groups.labels[static_cast<size_t>(j)] + "'");

        Matrix m = ztr * sigma_inv;  // q x r
        Vector mean = llt.solve(Eigen::Map<const Vector>(m.data(), qr));
        Vector z(qr);
        for (int a = 0; a < qr; ++a) z(a) = state_.rng.normal();
        Vector v = mean + llt.matrixU().solve(z);
        state_.b[static_cast<size_t>(j)] = Eigen::Map<const Matrix>(v.data(), q, r);
    }
}

void GibbsSampler::draw_beta() {
    Matrix yres = state_.y_complete - zb_rows();
    Matrix beta_hat = xtx_llt_.solve(design_.X.transpose() * yres);
    Eigen::LLT<Matrix> llt_s(state_.sigma);
    if (llt_s.info() != Eigen::Success)
        throw NumericalError("Sigma is not positive definite");
    Matrix e = normal_matrix(state_.rng, design_.p(), design_.r());
    state_.beta = beta_hat + xtx_llt_.matrixU().solve(e * Matrix(llt_s.matrixL()).transpose());
}

void GibbsSampler::draw_sigma() {
    Matrix e = state_.y_complete - design_.X * state_.beta - zb_rows();
    Matrix ss = prior_.lambda_sigma + e.transpose() * e;
    ss = 0.5 * (ss + ss.transpose());
    Matrix scale = spd_inverse(ss, "residual cross-product");
    Matrix w = wishart(state_.rng, prior_.nu_sigma + design_.n_rows(), scale);
    state_.sigma = spd_inverse(w, "residual precision draw");
}

void GibbsSampler::draw_psi() {
    int qr = design_.q() * design_.r();
    Matrix ss = prior_.lambda_psi;
    for (const Matrix& bj : state_.b) {
        Eigen::Map<const Vector> v(bj.data(), qr);
        ss.noalias() += v * v.transpose();
    }
    ss = 0.5 * (ss + ss.transpose());
    Matrix scale = spd_inverse(ss, "random-effect cross-product");
    Matrix w = wishart(state_.rng, prior_.nu_psi + design_.groups.J, scale);
    state_.psi = spd_inverse(w, "random-effect precision draw");
}

void GibbsSampler::step() {
    long it = state_.iteration + 1;
    try {
        if (toggles_.impute) impute_missing();
        if (toggles_.b) draw_b();
        if (toggles_.beta) draw_beta();
        if (toggles_.sigma) draw_sigma();
        if (toggles_.psi) draw_psi();
    } catch (const NumericalError& e) {
        throw NumericalError("iteration " + std::to_string(it) + ": " + e.what());
    }
    state_.iteration = it;

    const char* bad = nullptr;
    if (!state_.beta.allFinite()) bad = "fixed effects";
    if (!bad && !state_.sigma.allFinite()) bad = "residual covariance";
    if (!bad && !state_.psi.allFinite()) bad = "random-effect covariance";
    if (!bad)
        for (const Matrix& bj : state_.b)
            if (!bj.allFinite()) {
                bad = "random effects";
                break;
            }
    if (!bad && !state_.y_complete.allFinite()) bad = "imputed responses";
    if (bad)
        throw NumericalError("sampler diverged at iteration " + std::to_string(it) +
                             ": non-finite " + bad);
}

namespace {

std::vector<std::string> trace_names(const DesignMatrices& d, bool flat) {
    std::vector<std::string> names;
    int p = d.p(), r = d.r(), qr = d.q() * r;
    for (int c = 1; c <= r; ++c)
        for (int i = 1; i <= p; ++i)
            names.push_back("Beta[" + std::to_string(i) + "," + std::to_string(c) + "]");
    if (!flat)
        for (int c = 1; c <= qr; ++c)
            for (int i = c; i <= qr; ++i)
                names.push_back("Psi[" + std::to_string(i) + "," + std::to_string(c) + "]");
    for (int c = 1; c <= r; ++c)
        for (int i = c; i <= r; ++i)
            names.push_back("Sigma[" + std::to_string(i) + "," + std::to_string(c) + "]");
    return names;
}

std::vector<double> trace_row(const GibbsState& st, const DesignMatrices& d, bool flat) {
    std::vector<double> row;
    int p = d.p(), r = d.r(), qr = d.q() * r;
    row.reserve(static_cast<size_t>(p * r + (flat ? 0 : qr * (qr + 1) / 2) + r * (r + 1) / 2));
    for (int c = 0; c < r; ++c)
        for (int i = 0; i < p; ++i) row.push_back(st.beta(i, c));
    if (!flat)
        for (int c = 0; c < qr; ++c)
            for (int i = c; i < qr; ++i) row.push_back(st.psi(i, c));
    for (int c = 0; c < r; ++c)
        for (int i = c; i < r; ++i) row.push_back(st.sigma(i, c));
    return row;
}

Vector observed_variances(const DesignMatrices& d) {
    Vector vars(d.r());
    for (int k = 0; k < d.r(); ++k) {
        double sum = 0.0;
        long cnt = 0;
        for (int i = 0; i < d.n_rows(); ++i)
            if (!d.y_missing(i, k)) {
                sum += d.Y(i, k);
                ++cnt;
            }
        if (cnt < 2)
            throw ValidationError("response '" + d.y_names[static_cast<size_t>(k)] +
                                  "' has fewer than two observed values");
        double mean = sum / static_cast<double>(cnt);
        double ss = 0.0;
        for (int i = 0; i < d.n_rows(); ++i)
            if (!d.y_missing(i, k)) {
                double dev = d.Y(i, k) - mean;
                ss += dev * dev;
            }
        double v = ss / static_cast<double>(cnt - 1);
        if (v <= 0.0)
            throw ValidationError("response '" + d.y_names[static_cast<size_t>(k)] +
                                  "' has zero observed variance");
        vars(k) = v;
    }
    return vars;
}

}  // namespace

ImputationResult run_imputation(const ImputationSpec& spec, const Dataset& data) {
    if (spec.n_burn < 0) throw ValidationError("n_burn must be nonnegative");
    if (spec.n_between < 1) throw ValidationError("n_between must be at least 1");
    if (spec.m < 1) throw ValidationError("m must be at least 1");
    if (spec.trace_stride < 1) throw ValidationError("trace_stride must be at least 1");

    auto t0 = std::chrono::steady_clock::now();

    ModelFormula f = parse_formula(spec.formula);
    DesignMatrices design = build_design(f, data);
    Prior prior = spec.prior ? *spec.prior
                             : default_prior(design.r(), design.q(), observed_variances(design));

    GibbsSampler sampler(design, prior, spec.seed);
    if (spec.flat) {
        sampler.toggles().b = false;
        sampler.toggles().psi = false;
    }

    ImputationResult result;
    result.spec = spec;
    result.chains.names = trace_names(design, spec.flat);
    result.chains.traces.resize(result.chains.names.size());
    result.chains.n_burn = spec.n_burn;
    result.chains.stride = spec.trace_stride;

    long total = spec.n_burn + static_cast<long>(spec.m) * spec.n_between;
    result.datasets.reserve(static_cast<size_t>(spec.m));

    for (long it = 1; it <= total; ++it) {
        sampler.step();
        if (it % spec.trace_stride == 0)
            result.chains.append(it, trace_row(sampler.state(), design, spec.flat));
        if (it > spec.n_burn && (it - spec.n_burn) % spec.n_between == 0) {
            Dataset completed = data;
            for (int k = 0; k < design.r(); ++k) {
                int v = completed.var_index(design.y_names[static_cast<size_t>(k)]);
                for (int i = 0; i < design.n_rows(); ++i)
                    if (design.y_missing(i, k))
                        completed.set_value(i, v, sampler.state().y_complete(i, k));
            }
            result.datasets.push_back(std::move(completed));
        }
    }

    result.total_iterations = total;
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace nestmi
