#pragma once

// Sliding-window echo state network with multi-symbol readout.
//
// One reservoir update consumes a window of M = 2k+1 symbols (all slices, all
// samples) and the readout emits N_out consecutive symbols centred in that
// window. Windows advance by N_out symbols and the state carries across
// windows within a frame; it starts from zero at the beginning of a frame.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include "rcpam/error.hpp"
#include "rcpam/link_sim.hpp"
#include "rcpam/rng.hpp"

namespace rcpam::esn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

struct EsnConfig {
    std::size_t k = 11;            // one-sided window, in symbols
    std::size_t sps = 2;
    std::size_t num_slices = 4;
    std::size_t n_res = 30;
    std::size_t n_out = 1;
    double spectral_radius = 1.2;
    double leak = 0.7;
    double s_in = 0.1;
    double s_res = 0.05;
    double s_out = 0.1;            // enters the complexity count
    double readout_density = 1.0;  // nonzero fraction of the trained readout mask
    double input_scaling = 1.0;
    double ridge_lambda = 1e-4;
    std::size_t washout = 100;
    std::uint64_t seed = 1;

    std::size_t window() const noexcept { return 2 * k + 1; }
    std::size_t n_in() const noexcept { return window() * sps * num_slices; }
    /// Position of the first target symbol inside the window.
    std::size_t target_offset() const noexcept { return (window() - std::min(n_out, window())) / 2; }

    void validate() const
    {
        auto fraction = [](double v) { return v > 0.0 && v <= 1.0; };
        if (sps < 1) throw validation_error("esn.sps must be >= 1");
        if (num_slices < 1) throw validation_error("esn.num_slices must be >= 1");
        if (n_res < 1) throw validation_error("esn.n_res must be >= 1");
        if (n_out < 1 || n_out > window()) throw validation_error("esn.n_out must lie in [1, 2k+1]");
        if (!(spectral_radius > 0.0)) throw validation_error("esn.spectral_radius must be > 0");
        if (!fraction(leak)) throw validation_error("esn.leak must lie in (0, 1]");
        if (!fraction(s_in)) throw validation_error("esn.s_in must lie in (0, 1]");
        if (!fraction(s_res)) throw validation_error("esn.s_res must lie in (0, 1]");
        if (!fraction(s_out)) throw validation_error("esn.s_out must lie in (0, 1]");
        if (!fraction(readout_density)) throw validation_error("esn.readout_density must lie in (0, 1]");
        if (!(input_scaling > 0.0)) throw validation_error("esn.input_scaling must be > 0");
        if (!(ridge_lambda >= 0.0)) throw validation_error("esn.ridge_lambda must be >= 0");
    }
};

struct EsnWeights {
    SparseMatrix w_in;  // n_res x n_in
    SparseMatrix w_res; // n_res x n_res
    MaskMatrix out_mask; // n_out x n_res, 1 = trainable coefficient
    Matrix w_out;       // n_out x (n_res + 1), last column is the bias

    std::size_t n_in() const noexcept { return static_cast<std::size_t>(w_in.cols()); }
    std::size_t n_res() const noexcept { return static_cast<std::size_t>(w_res.rows()); }
    std::size_t n_out() const noexcept { return static_cast<std::size_t>(w_out.rows()); }
};

/// Largest eigenvalue magnitude, from a full Hessenberg-QR eigen-decomposition.
inline double spectral_radius(const Matrix& m)
{
    if (m.rows() != m.cols()) throw validation_error("spectral_radius: matrix must be square");
    if (m.size() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) throw std::runtime_error("spectral_radius: eigenvalue iteration did not converge");
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

namespace detail {

inline SparseMatrix random_sparse(std::size_t rows, std::size_t cols, double density, double amplitude, rng_engine& rng)
{
    std::bernoulli_distribution keep(density);
    std::uniform_real_distribution<double> value(-amplitude, amplitude);
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(density * static_cast<double>(rows * cols)) + 16);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            if (keep(rng)) {
                const double v = value(rng);
                if (v != 0.0) entries.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
            }
    SparseMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    m.setFromTriplets(entries.begin(), entries.end());
    m.makeCompressed();
    return m;
}

} // namespace detail

/// Draws W_in, W_res (rescaled to the target spectral radius) and the readout
/// mask. W_out starts at zero.
inline EsnWeights init_weights(const EsnConfig& cfg)
{
    cfg.validate();
    EsnWeights w;

    auto rng_in = make_stream(cfg.seed, stream::w_in);
    w.w_in = detail::random_sparse(cfg.n_res, cfg.n_in(), cfg.s_in, cfg.input_scaling, rng_in);

    // A sparse draw can be nilpotent (all eigenvalues zero); redraw once.
    auto rng_res = make_stream(cfg.seed, stream::w_res);
    double rho = 0.0;
    for (int attempt = 0; attempt < 2; ++attempt) {
        w.w_res = detail::random_sparse(cfg.n_res, cfg.n_res, cfg.s_res, 1.0, rng_res);
        rho = spectral_radius(Matrix(w.w_res));
        if (rho > 1e-12) break;
    }
    if (!(rho > 1e-12)) throw std::runtime_error("init_weights: reservoir draw has zero spectral radius twice");
    w.w_res *= cfg.spectral_radius / rho;

    auto rng_mask = make_stream(cfg.seed, stream::out_mask);
    std::bernoulli_distribution keep(cfg.readout_density);
    w.out_mask.resize(static_cast<Eigen::Index>(cfg.n_out), static_cast<Eigen::Index>(cfg.n_res));
    for (Eigen::Index r = 0; r < w.out_mask.rows(); ++r)
        for (Eigen::Index c = 0; c < w.out_mask.cols(); ++c) w.out_mask(r, c) = keep(rng_mask) ? 1 : 0;

    w.w_out = Matrix::Zero(static_cast<Eigen::Index>(cfg.n_out), static_cast<Eigen::Index>(cfg.n_res + 1));
    return w;
}

// ---------------------------------------------------------------------------
// Windowing

/// Strided windows over a symbol-aligned observation. Inputs are produced on
/// demand; the dataset keeps a pointer to the observation, which must outlive it.
struct WindowedDataset {
    const link::SlicedObservation* observation = nullptr;
    std::size_t n_symbols = 0;
    std::size_t window = 0;
    std::size_t sps = 0;
    std::size_t num_slices = 0;
    std::size_t n_out = 0;
    std::size_t target_offset = 0;
    std::size_t first_symbol = 0; // first target symbol of step 0
    std::size_t n_steps = 0;
    Matrix targets;               // n_steps x n_out, PAM levels

    std::size_t n_in() const noexcept { return window * sps * num_slices; }
    std::size_t center_symbol_index(std::size_t step) const noexcept { return first_symbol + step * n_out; }

    /// Input vector of one step: slices outer, window symbols inner, sps samples innermost.
    /// Positions outside the frame are zero.
    void input(std::size_t step, std::span<double> out) const
    {
        const auto start = static_cast<long long>(center_symbol_index(step)) - static_cast<long long>(target_offset);
        const auto& data = observation->data;
        std::size_t idx = 0;
        for (std::size_t s = 0; s < num_slices; ++s) {
            const double* row = data.row(static_cast<Eigen::Index>(s)).data();
            for (std::size_t w = 0; w < window; ++w) {
                const long long sym = start + static_cast<long long>(w);
                if (sym < 0 || sym >= static_cast<long long>(n_symbols)) {
                    for (std::size_t j = 0; j < sps; ++j) out[idx++] = 0.0;
                } else {
                    const double* src = row + static_cast<std::size_t>(sym) * sps;
                    for (std::size_t j = 0; j < sps; ++j) out[idx++] = src[j];
                }
            }
        }
    }

    /// All inputs as an n_steps x n_in matrix (row-major copy, for small cases).
    Matrix inputs() const
    {
        Matrix m(static_cast<Eigen::Index>(n_steps), static_cast<Eigen::Index>(n_in()));
        std::vector<double> buf(n_in());
        for (std::size_t t = 0; t < n_steps; ++t) {
            input(t, buf);
            for (std::size_t j = 0; j < buf.size(); ++j) m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = buf[j];
        }
        return m;
    }
};

/// Windows whose targets cover symbols [first_symbol, end_symbol). A tail
/// shorter than n_out is left untargeted.
inline WindowedDataset build_windows(const link::SlicedObservation& obs, const link::SymbolFrame& frame,
                                     const EsnConfig& cfg, std::size_t first_symbol, std::size_t end_symbol)
{
    if (cfg.n_out > cfg.window()) throw validation_error("build_windows: n_out exceeds the window length");
    if (cfg.n_out == 0) throw validation_error("build_windows: n_out must be >= 1");
    const std::size_t n = frame.size();
    if (obs.num_slices() != cfg.num_slices)
        throw validation_error("build_windows: observation has " + std::to_string(obs.num_slices()) + " slices, config expects "
                               + std::to_string(cfg.num_slices));
    if (obs.num_samples() != n * cfg.sps) throw validation_error("build_windows: observation length is not n_symbols * sps");
    if (n < cfg.window()) throw validation_error("build_windows: frame shorter than the window");
    if (first_symbol > end_symbol || end_symbol > n) throw validation_error("build_windows: invalid target range");

    WindowedDataset ds;
    ds.observation = &obs;
    ds.n_symbols = n;
    ds.window = cfg.window();
    ds.sps = cfg.sps;
    ds.num_slices = cfg.num_slices;
    ds.n_out = cfg.n_out;
    ds.target_offset = cfg.target_offset();
    ds.first_symbol = first_symbol;
    ds.n_steps = (end_symbol - first_symbol) / cfg.n_out;
    ds.targets.resize(static_cast<Eigen::Index>(ds.n_steps), static_cast<Eigen::Index>(cfg.n_out));
    for (std::size_t t = 0; t < ds.n_steps; ++t)
        for (std::size_t o = 0; o < cfg.n_out; ++o)
            ds.targets(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(o)) = frame.levels[ds.center_symbol_index(t) + o];
    return ds;
}

/// Windows over the frame with `guard` symbols excluded at both edges.
inline WindowedDataset build_windows(const link::SlicedObservation& obs, const link::SymbolFrame& frame,
                                     const EsnConfig& cfg, std::size_t guard = 0)
{
    if (2 * guard >= frame.size()) throw validation_error("build_windows: guard leaves no usable symbols");
    return build_windows(obs, frame, cfg, guard, frame.size() - guard);
}

// ---------------------------------------------------------------------------
// Reservoir

/// x' = (1 - a) x + a tanh(W_in u + W_res x)
inline Vector update_state(const Vector& x, const Eigen::Ref<const Vector>& u, const EsnWeights& w, double leak)
{
    if (static_cast<std::size_t>(u.size()) != w.n_in() || static_cast<std::size_t>(x.size()) != w.n_res())
        throw validation_error("update_state: dimension mismatch");
    Vector pre = w.w_in * u;
    pre.noalias() += w.w_res * x;
    return (1.0 - leak) * x + leak * pre.array().tanh().matrix();
}

/// Folds update_state over all steps from a zero state and calls
/// visit(step, state) after each update.
template <typename Visitor>
void run_reservoir(const WindowedDataset& ds, const EsnWeights& w, const EsnConfig& cfg, Visitor&& visit)
{
    if (ds.n_in() != w.n_in()) throw validation_error("run_reservoir: input size does not match W_in");
    Vector x = Vector::Zero(static_cast<Eigen::Index>(w.n_res()));
    Vector u(static_cast<Eigen::Index>(ds.n_in()));
    Vector pre(static_cast<Eigen::Index>(w.n_res()));
    const double a = cfg.leak;
    for (std::size_t t = 0; t < ds.n_steps; ++t) {
        ds.input(t, std::span<double>(u.data(), static_cast<std::size_t>(u.size())));
        pre.noalias() = w.w_in * u;
        pre.noalias() += w.w_res * x;
        x = (1.0 - a) * x + a * pre.array().tanh().matrix();
        visit(t, static_cast<const Vector&>(x));
    }
}

/// State matrix [n_steps x n_res].
inline Matrix run_reservoir(const WindowedDataset& ds, const EsnWeights& w, const EsnConfig& cfg)
{
    Matrix states(static_cast<Eigen::Index>(ds.n_steps), static_cast<Eigen::Index>(w.n_res()));
    run_reservoir(ds, w, cfg, [&](std::size_t t, const Vector& x) { states.row(static_cast<Eigen::Index>(t)) = x.transpose(); });
    return states;
}

// ---------------------------------------------------------------------------
// Readout

/// Sufficient statistics for the ridge readout: Gram matrix of the extended
/// states [x; 1], cross products with the targets and target energy.
class ReadoutAccumulator {
public:
    ReadoutAccumulator(std::size_t n_res, std::size_t n_out, std::size_t block = 256)
        : n_ext_(n_res + 1), n_out_(n_out), block_(block),
          gram_(Matrix::Zero(static_cast<Eigen::Index>(n_ext_), static_cast<Eigen::Index>(n_ext_))),
          cross_(Matrix::Zero(static_cast<Eigen::Index>(n_ext_), static_cast<Eigen::Index>(n_out))),
          y_energy_(Vector::Zero(static_cast<Eigen::Index>(n_out))),
          xbuf_(static_cast<Eigen::Index>(block), static_cast<Eigen::Index>(n_ext_)),
          ybuf_(static_cast<Eigen::Index>(block), static_cast<Eigen::Index>(n_out))
    {
    }

    template <typename StateVec, typename TargetRow>
    void add(const StateVec& x, const TargetRow& y)
    {
        const auto r = static_cast<Eigen::Index>(fill_);
        const auto n_res = static_cast<Eigen::Index>(n_ext_ - 1);
        xbuf_.row(r).head(n_res) = x.transpose();
        xbuf_(r, n_res) = 1.0;
        ybuf_.row(r) = y;
        ++rows_;
        if (++fill_ == block_) flush();
    }

    void merge(ReadoutAccumulator other)
    {
        flush();
        other.flush();
        gram_ += other.gram_;
        cross_ += other.cross_;
        y_energy_ += other.y_energy_;
        rows_ += other.rows_;
    }

    const Matrix& gram() { flush(); return gram_; }
    const Matrix& cross() { flush(); return cross_; }
    const Vector& target_energy() { flush(); return y_energy_; }
    std::size_t rows() const noexcept { return rows_; }
    std::size_t n_res() const noexcept { return n_ext_ - 1; }
    std::size_t n_out() const noexcept { return n_out_; }

private:
    void flush()
    {
        if (fill_ == 0) return;
        const auto n = static_cast<Eigen::Index>(fill_);
        const auto xb = xbuf_.topRows(n);
        const auto yb = ybuf_.topRows(n);
        gram_.noalias() += xb.transpose() * xb;
        cross_.noalias() += xb.transpose() * yb;
        y_energy_ += yb.colwise().squaredNorm().transpose();
        fill_ = 0;
    }

    std::size_t n_ext_, n_out_, block_;
    Matrix gram_, cross_;
    Vector y_energy_;
    Matrix xbuf_, ybuf_;
    std::size_t fill_ = 0;
    std::size_t rows_ = 0;
};

namespace detail {

inline std::vector<Eigen::Index> active_columns(const MaskMatrix& mask, Eigen::Index row)
{
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
        if (mask(row, j)) cols.push_back(j);
    if (cols.empty()) throw validation_error("train_readout: readout mask row " + std::to_string(row) + " has no predictors");
    cols.push_back(mask.cols()); // bias
    return cols;
}

} // namespace detail

/// Masked ridge regression per output row via the normal equations. The bias
/// coefficient is not penalized. Masked coefficients are exactly zero.
inline Matrix solve_readout(ReadoutAccumulator& acc, const MaskMatrix& mask, double lambda)
{
    if (static_cast<std::size_t>(mask.rows()) != acc.n_out() || static_cast<std::size_t>(mask.cols()) != acc.n_res())
        throw validation_error("solve_readout: mask shape does not match the accumulated statistics");
    if (!(lambda >= 0.0)) throw validation_error("solve_readout: lambda must be >= 0");
    const Matrix& gram = acc.gram();
    const Matrix& cross = acc.cross();
    const auto n_res = static_cast<Eigen::Index>(acc.n_res());

    Matrix w_out = Matrix::Zero(mask.rows(), n_res + 1);
    for (Eigen::Index r = 0; r < mask.rows(); ++r) {
        const auto cols = detail::active_columns(mask, r);
        const auto m = static_cast<Eigen::Index>(cols.size());
        Matrix a(m, m);
        Vector b(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            b(i) = cross(cols[static_cast<std::size_t>(i)], r);
            for (Eigen::Index j = 0; j < m; ++j) a(i, j) = gram(cols[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]);
        }
        for (Eigen::Index i = 0; i + 1 < m; ++i) a(i, i) += lambda;

        Eigen::LLT<Matrix> llt(a);
        if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14))
            throw singular_system("solve_readout: normal matrix is singular for output " + std::to_string(r)
                                  + (lambda == 0.0 ? " (use ridge_lambda > 0)" : ""));
        const Vector beta = llt.solve(b);
        for (Eigen::Index i = 0; i < m; ++i) w_out(r, cols[static_cast<std::size_t>(i)]) = beta(i);
    }
    return w_out;
}

/// Sum of squared training errors implied by the statistics for a given readout.
inline double readout_sse(ReadoutAccumulator& acc, const Matrix& w_out)
{
    const Matrix& gram = acc.gram();
    const Matrix& cross = acc.cross();
    const Vector& yy = acc.target_energy();
    double sse = 0;
    for (Eigen::Index r = 0; r < w_out.rows(); ++r) {
        const Vector beta = w_out.row(r).transpose();
        sse += yy(r) - 2.0 * beta.dot(cross.col(r)) + beta.dot(gram * beta);
    }
    return sse;
}

/// Picks the lambda from `grid` with the lowest validation error when fitted on `fit`.
inline double select_ridge_lambda(ReadoutAccumulator& fit, ReadoutAccumulator& validation, const MaskMatrix& mask,
                                  std::span<const double> grid)
{
    if (grid.empty()) throw validation_error("select_ridge_lambda: empty grid");
    double best = grid.front();
    double best_err = std::numeric_limits<double>::infinity();
    for (double lambda : grid) {
        double err;
        try {
            err = readout_sse(validation, solve_readout(fit, mask, lambda));
        } catch (const singular_system&) {
            continue;
        }
        if (err < best_err) {
            best_err = err;
            best = lambda;
        }
    }
    return best;
}

/// Trains W_out on a state matrix row-aligned with ds.targets, skipping the washout.
inline Matrix train_readout(const Matrix& states, const WindowedDataset& ds, const EsnConfig& cfg, const MaskMatrix& mask)
{
    if (static_cast<std::size_t>(states.rows()) != ds.n_steps) throw validation_error("train_readout: states and targets are not row-aligned");
    if (cfg.washout >= ds.n_steps) throw validation_error("train_readout: washout must be smaller than the number of training steps");
    ReadoutAccumulator acc(static_cast<std::size_t>(states.cols()), ds.n_out);
    for (std::size_t t = cfg.washout; t < ds.n_steps; ++t)
        acc.add(states.row(static_cast<Eigen::Index>(t)).transpose(), ds.targets.row(static_cast<Eigen::Index>(t)));
    return solve_readout(acc, mask, cfg.ridge_lambda);
}

/// Readout output for one state: W_out [x; 1].
inline Vector readout(const EsnWeights& w, const Vector& x)
{
    const auto n = static_cast<Eigen::Index>(w.n_res());
    return w.w_out.leftCols(n) * x + w.w_out.col(n);
}

/// Soft estimates for a contiguous run of symbols.
struct SymbolEstimates {
    std::size_t first_symbol = 0;
    std::vector<double> values;
};

/// Runs the trained equalizer over one frame (state reset at frame start).
inline SymbolEstimates equalize(const link::SlicedObservation& obs, const link::SymbolFrame& frame, const EsnWeights& w,
                                const EsnConfig& cfg, std::size_t guard = 0)
{
    const auto ds = build_windows(obs, frame, cfg, guard);
    SymbolEstimates est;
    est.first_symbol = ds.first_symbol;
    est.values.resize(ds.n_steps * ds.n_out);
    run_reservoir(ds, w, cfg, [&](std::size_t t, const Vector& x) {
        const Vector y = readout(w, x);
        for (std::size_t o = 0; o < ds.n_out; ++o) est.values[t * ds.n_out + o] = y(static_cast<Eigen::Index>(o));
    });
    return est;
}

// ---------------------------------------------------------------------------
// Serialization
//
// Text format, one token stream:
//   rcpam-esn-weights 1
//   <n_in> <n_res> <n_out>
//   W_in   : n_res rows of n_in values (row-major)
//   W_res  : n_res rows of n_res values
//   mask   : n_out rows of n_res characters '0'/'1'
//   W_out  : n_out rows of n_res+1 values (last = bias)
// Values are written with 17 significant digits so they round-trip exactly.

inline void write_weights(std::ostream& os, const EsnWeights& w)
{
    os.precision(17);
    os << "rcpam-esn-weights 1\n" << w.n_in() << ' ' << w.n_res() << ' ' << w.n_out() << '\n';
    auto dense = [&](const Matrix& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? " " : "") << m(r, c);
            os << '\n';
        }
    };
    dense(Matrix(w.w_in));
    dense(Matrix(w.w_res));
    for (Eigen::Index r = 0; r < w.out_mask.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.out_mask.cols(); ++c) os << (w.out_mask(r, c) ? '1' : '0');
        os << '\n';
    }
    dense(w.w_out);
}

inline EsnWeights read_weights(std::istream& is)
{
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != "rcpam-esn-weights" || version != 1)
        throw validation_error("read_weights: not an rcpam weights file");
    std::size_t n_in = 0, n_res = 0, n_out = 0;
    if (!(is >> n_in >> n_res >> n_out)) throw validation_error("read_weights: truncated header");
    auto dense = [&](std::size_t rows, std::size_t cols) {
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                if (!(is >> m(r, c))) throw validation_error("read_weights: truncated matrix data");
        return m;
    };
    EsnWeights w;
    w.w_in = dense(n_res, n_in).sparseView(0.0, 0.0);
    w.w_res = dense(n_res, n_res).sparseView(0.0, 0.0);
    w.out_mask.resize(static_cast<Eigen::Index>(n_out), static_cast<Eigen::Index>(n_res));
    for (Eigen::Index r = 0; r < w.out_mask.rows(); ++r) {
        std::string bits;
        if (!(is >> bits) || bits.size() != n_res) throw validation_error("read_weights: malformed mask row");
        for (Eigen::Index c = 0; c < w.out_mask.cols(); ++c) {
            const char ch = bits[static_cast<std::size_t>(c)];
            if (ch != '0' && ch != '1') throw validation_error("read_weights: mask must contain only 0/1");
            w.out_mask(r, c) = ch == '1';
        }
    }
    w.w_out = dense(n_out, n_res + 1);
    w.w_in.makeCompressed();
    w.w_res.makeCompressed();
    return w;
}

inline void save_weights(const EsnWeights& w, const std::string& path)
{
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    write_weights(os, w);
}

inline EsnWeights load_weights(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_weights(is);
}

} // namespace rcpam::esn
