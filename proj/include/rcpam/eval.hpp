#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rcpam/error.hpp"
#include "rcpam/esn.hpp"
#include "rcpam/link_sim.hpp"

namespace rcpam::eval {

/// KP4 pre-FEC threshold.
inline constexpr double kp4_ber = 2.26e-4;

struct FecThreshold {
    double ber_threshold = kp4_ber;
};

struct BerReport {
    double ber = 0.0;
    double ser = 0.0;
    std::uint64_t n_bits = 0;
    std::uint64_t n_bit_errors = 0;
    std::uint64_t n_symbols = 0;
    std::uint64_t n_symbol_errors = 0;
    std::vector<double> per_position_ber;          // by position within the N_out block
    std::vector<std::uint64_t> per_position_bits;  // bits counted at each position
};

/// Nearest PAM4 level with thresholds at -2, 0, +2; ties go to the lower level.
inline constexpr int hard_decision(double x) noexcept
{
    if (x <= -2.0) return -3;
    if (x <= 0.0) return -1;
    if (x <= 2.0) return +1;
    return +3;
}

inline std::vector<int> hard_decision(std::span<const double> estimates)
{
    std::vector<int> out(estimates.size());
    std::transform(estimates.begin(), estimates.end(), out.begin(), [](double v) { return hard_decision(v); });
    return out;
}

/// Bit errors between two PAM4 levels under the Gray map.
inline int bit_errors(int decided, int truth)
{
    return std::popcount(static_cast<unsigned>(link::gray_demap(decided) ^ link::gray_demap(truth)));
}

/// Compares decisions with the transmitted levels. Both sequences start at
/// the same (first usable) symbol; position = index mod n_out.
inline BerReport count_errors(std::span<const int> decided, std::span<const int> truth, std::size_t n_out = 1)
{
    if (decided.size() != truth.size()) throw validation_error("count_errors: length mismatch");
    if (n_out == 0) throw validation_error("count_errors: n_out must be >= 1");
    BerReport rep;
    std::vector<std::uint64_t> pos_err(n_out, 0);
    rep.per_position_bits.assign(n_out, 0);
    for (std::size_t i = 0; i < decided.size(); ++i) {
        const int e = bit_errors(decided[i], truth[i]);
        const std::size_t pos = i % n_out;
        pos_err[pos] += static_cast<std::uint64_t>(e);
        rep.per_position_bits[pos] += 2;
        rep.n_bit_errors += static_cast<std::uint64_t>(e);
        rep.n_symbol_errors += e != 0;
    }
    rep.n_symbols = decided.size();
    rep.n_bits = 2 * rep.n_symbols;
    rep.ber = rep.n_bits ? static_cast<double>(rep.n_bit_errors) / static_cast<double>(rep.n_bits) : 0.0;
    rep.ser = rep.n_symbols ? static_cast<double>(rep.n_symbol_errors) / static_cast<double>(rep.n_symbols) : 0.0;
    rep.per_position_ber.resize(n_out);
    for (std::size_t p = 0; p < n_out; ++p)
        rep.per_position_ber[p] =
            rep.per_position_bits[p] ? static_cast<double>(pos_err[p]) / static_cast<double>(rep.per_position_bits[p]) : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// BER curves and SNR penalty

struct CurvePoint {
    double snr_db = 0.0;
    double ber = 0.0;
    bool floor_flag = false; // no errors observed; ber holds 1/(2 n_bits)
};

struct BerSnrCurve {
    std::vector<CurvePoint> points;

    /// Adds a measurement; zero-error points are stored at the 1/(2 n_bits) floor.
    void add(double snr_db, std::uint64_t n_bit_errors, std::uint64_t n_bits)
    {
        if (n_bits == 0) throw validation_error("BerSnrCurve: n_bits must be > 0");
        if (n_bit_errors == 0)
            points.push_back({snr_db, 1.0 / (2.0 * static_cast<double>(n_bits)), true});
        else
            points.push_back({snr_db, static_cast<double>(n_bit_errors) / static_cast<double>(n_bits), false});
    }

    void validate() const
    {
        if (points.size() < 2) throw validation_error("BerSnrCurve: at least two points required");
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!(points[i].ber > 0.0 && points[i].ber <= 1.0)) throw validation_error("BerSnrCurve: ber must lie in (0, 1]");
            if (i && !(points[i].snr_db > points[i - 1].snr_db))
                throw validation_error("BerSnrCurve: snr values must be strictly increasing");
        }
    }
};

/// SNR at which the curve reaches the threshold, by linear interpolation of
/// log10(BER) against SNR on the first decreasing segment that brackets it.
inline double snr_at_threshold(const BerSnrCurve& curve, const FecThreshold& fec = {})
{
    curve.validate();
    const double thr = fec.ber_threshold;
    if (!(thr > 0.0 && thr < 1.0)) throw validation_error("FecThreshold must lie in (0, 1)");
    const auto& p = curve.points;

    bool above = false, below = false;
    for (const auto& pt : p) {
        above |= pt.ber >= thr;
        below |= pt.ber <= thr;
    }
    if (!above || !below) throw not_bracketed("BER curve does not cross " + std::to_string(thr) + "; widen the SNR range");

    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        const auto& a = p[i];
        const auto& b = p[i + 1];
        if (a.floor_flag && b.floor_flag) continue;
        if (a.ber == thr) return a.snr_db;
        if (a.ber > thr && b.ber <= thr) {
            if (b.ber == thr) return b.snr_db;
            const double la = std::log10(a.ber), lb = std::log10(b.ber), lt = std::log10(thr);
            return a.snr_db + (lt - la) / (lb - la) * (b.snr_db - a.snr_db);
        }
    }
    if (p.back().ber == thr) return p.back().snr_db;
    throw non_monotone("BER curve crosses the threshold only on non-decreasing segments");
}

/// Extra SNR the curve needs to reach the threshold relative to the reference.
inline double snr_penalty(const BerSnrCurve& curve, const BerSnrCurve& reference, const FecThreshold& fec = {})
{
    return snr_at_threshold(curve, fec) - snr_at_threshold(reference, fec);
}

// ---------------------------------------------------------------------------
// Complexity

/// Real multiplications per equalized symbol:
///   [N_in N_res s_in + N_res^2 s_res + N_res N_out s_out + 2 N_res + N_out (1 + N_res)] / N_out
inline double complexity_rmps(const esn::EsnConfig& cfg)
{
    const auto n_in = static_cast<double>(cfg.n_in());
    const auto n_res = static_cast<double>(cfg.n_res);
    const auto n_out = static_cast<double>(cfg.n_out);
    const double total = n_in * n_res * cfg.s_in + n_res * n_res * cfg.s_res + n_res * n_out * cfg.s_out + 2.0 * n_res
                         + n_out * (1.0 + n_res);
    return total / n_out;
}

} // namespace rcpam::eval
