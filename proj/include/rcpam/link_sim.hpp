#pragma once

// PAM4 IM/DD link: Gray-mapped PAM4 source, RRC pulse shaping, push-pull MZM,
// chromatic dispersion, spectral slicing and square-law detection with AWGN.
//
// Every function here is a pure function of its arguments (the RNG state is
// always derived from the config seed), so simulations may run concurrently.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rcpam/error.hpp"
#include "rcpam/fft.hpp"
#include "rcpam/rng.hpp"

namespace rcpam::link {

inline constexpr double speed_of_light = 299792458.0;

struct LinkConfig {
    double baud_rate = 32e9;            // Hz
    std::size_t sps = 2;                // samples per symbol
    double rolloff = 0.1;
    std::size_t rrc_span_symbols = 1024; // half-support of the RRC filter
    double dispersion_ps_nm_km = 16.4;
    double fiber_length_km = 0.0;
    double wavelength_nm = 1550.0;
    std::size_t num_slices = 4;
    double snr_db = 20.0;               // per-slice electrical SNR; +inf disables noise
    double mzm_mod_index = 0.5;
    bool share_carrier = true;          // tap the carrier and split it across all slice paths
    std::size_t n_symbols = 1u << 16;
    std::uint64_t seed = 1;

    double sample_rate() const { return baud_rate * static_cast<double>(sps); }
    double occupied_bandwidth() const { return (1.0 + rolloff) * baud_rate; }

    /// Group-velocity dispersion in s^2/m, beta2 = -D lambda^2 / (2 pi c).
    double beta2() const
    {
        const double d_si = dispersion_ps_nm_km * 1e-6; // ps/(nm km) -> s/m^2
        const double lambda = wavelength_nm * 1e-9;
        return -d_si * lambda * lambda / (2.0 * std::numbers::pi * speed_of_light);
    }

    void validate() const
    {
        if (!(baud_rate > 0)) throw validation_error("link.baud_rate must be > 0");
        if (sps < 2) throw validation_error("link.sps must be >= 2");
        if (!(rolloff >= 0.0 && rolloff <= 1.0)) throw validation_error("link.rolloff must lie in [0, 1]");
        if (rrc_span_symbols < 8) throw validation_error("link.rrc_span_symbols must be >= 8");
        if (!(fiber_length_km >= 0.0)) throw validation_error("link.fiber_length_km must be >= 0");
        if (!(wavelength_nm > 0.0)) throw validation_error("link.wavelength_nm must be > 0");
        if (num_slices < 1) throw validation_error("link.num_slices must be >= 1");
        if (!(mzm_mod_index > 0.0 && mzm_mod_index <= 1.0))
            throw validation_error("link.mzm_mod_index must lie in (0, 1]");
        if (n_symbols == 0) throw validation_error("link.n_symbols must be > 0");
        if (std::isnan(snr_db)) throw validation_error("link.snr_db must be a number");
        if (occupied_bandwidth() > sample_rate())
            throw validation_error("occupied bandwidth (1+rolloff)*baud exceeds the sample rate");
    }
};

// ---------------------------------------------------------------------------
// Symbols

struct SymbolFrame {
    std::vector<std::uint8_t> bits; // 2 per symbol, MSB first
    std::vector<int> levels;        // each in {-3, -1, +1, +3}

    std::size_t size() const noexcept { return levels.size(); }
};

/// Gray map: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3.
inline constexpr int gray_map(std::uint8_t msb, std::uint8_t lsb) noexcept
{
    constexpr int table[4] = {-3, -1, +3, +1}; // indexed by (msb << 1) | lsb
    return table[((msb & 1u) << 1) | (lsb & 1u)];
}

/// Inverse Gray map. Returns the bit pair packed as (msb << 1) | lsb.
inline constexpr std::uint8_t gray_demap(int level)
{
    switch (level) {
    case -3: return 0b00;
    case -1: return 0b01;
    case +1: return 0b11;
    case +3: return 0b10;
    default: throw validation_error("gray_demap: level must be one of -3, -1, +1, +3");
    }
}

inline SymbolFrame generate_frame(std::size_t n_symbols, rng_engine& rng)
{
    if (n_symbols == 0) throw validation_error("generate_frame: n_symbols must be > 0");
    SymbolFrame frame;
    frame.bits.resize(2 * n_symbols);
    frame.levels.resize(n_symbols);
    for (std::size_t i = 0; i < n_symbols; ++i) {
        // one 64-bit draw per symbol keeps the stream layout simple
        const auto word = rng();
        frame.bits[2 * i] = static_cast<std::uint8_t>((word >> 63) & 1u);
        frame.bits[2 * i + 1] = static_cast<std::uint8_t>((word >> 62) & 1u);
        frame.levels[i] = gray_map(frame.bits[2 * i], frame.bits[2 * i + 1]);
    }
    return frame;
}

// ---------------------------------------------------------------------------
// Signals

struct Waveform {
    std::vector<std::complex<double>> samples;
    double sample_rate = 0.0;

    std::size_t size() const noexcept { return samples.size(); }
    double energy() const
    {
        double e = 0;
        for (const auto& s : samples) e += std::norm(s);
        return e;
    }
};

using ObservationMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One row per spectral slice, n_symbols * sps columns, symbol aligned.
struct SlicedObservation {
    ObservationMatrix data;
    double sample_rate = 0.0;

    std::size_t num_slices() const noexcept { return static_cast<std::size_t>(data.rows()); }
    std::size_t num_samples() const noexcept { return static_cast<std::size_t>(data.cols()); }
};

/// Root-raised-cosine taps sampled at `sps` per symbol over +-span_symbols,
/// normalized to unit energy. Length is 2*span*sps + 1.
inline std::vector<double> rrc_taps(double rolloff, std::size_t sps, std::size_t span_symbols)
{
    if (!(rolloff >= 0.0 && rolloff <= 1.0)) throw validation_error("rrc_taps: rolloff must lie in [0, 1]");
    if (sps < 1) throw validation_error("rrc_taps: sps must be >= 1");
    if (span_symbols < 8) throw validation_error("rrc_taps: span must be >= 8 symbols to hold the main lobe");

    constexpr double pi = std::numbers::pi;
    const double beta = rolloff;
    const std::size_t half = span_symbols * sps;
    std::vector<double> taps(2 * half + 1);

    for (std::size_t i = 0; i < taps.size(); ++i) {
        const double t = (static_cast<double>(i) - static_cast<double>(half)) / static_cast<double>(sps);
        double h;
        if (t == 0.0) {
            h = 1.0 - beta + 4.0 * beta / pi;
        } else if (beta > 0.0 && std::abs(1.0 - 16.0 * beta * beta * t * t) < 1e-10) {
            // t = +-1/(4 beta)
            h = beta / std::numbers::sqrt2
                * ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * beta)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * beta)));
        } else {
            const double num = std::sin(pi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(pi * t * (1.0 + beta));
            const double den = pi * t * (1.0 - 16.0 * beta * beta * t * t);
            h = num / den;
        }
        taps[i] = h;
    }

    double energy = 0;
    for (double h : taps) energy += h * h;
    const double scale = 1.0 / std::sqrt(energy);
    for (double& h : taps) h *= scale;
    return taps;
}

/// Zero-insertion upsampling followed by RRC filtering. The filter delay is
/// removed so sample i*sps is the centre of symbol i.
inline Waveform pulse_shape(const SymbolFrame& frame, const LinkConfig& cfg)
{
    const std::size_t n = frame.size();
    const std::size_t sps = cfg.sps;
    std::vector<double> up(n * sps, 0.0);
    for (std::size_t i = 0; i < n; ++i) up[i * sps] = frame.levels[i];

    const auto taps = rrc_taps(cfg.rolloff, sps, cfg.rrc_span_symbols);
    const auto full = dsp::convolve(up, taps);
    const std::size_t delay = cfg.rrc_span_symbols * sps;

    Waveform out;
    out.sample_rate = cfg.sample_rate();
    out.samples.resize(n * sps);
    for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] = full[i + delay];
    return out;
}

/// Scales a real drive signal so that its peak magnitude is exactly 1.
inline Waveform normalize_drive(Waveform wave)
{
    double peak = 0;
    for (const auto& s : wave.samples) peak = std::max(peak, std::abs(s.real()));
    if (peak > 0)
        for (auto& s : wave.samples) s = {s.real() / peak, 0.0};
    return wave;
}

/// Push-pull MZM biased at quadrature: E = cos(pi/4 * (1 - m v)).
inline Waveform mzm_modulate(const Waveform& drive, const LinkConfig& cfg)
{
    const double m = cfg.mzm_mod_index;
    if (!(m > 0.0 && m <= 1.0)) throw validation_error("mzm_modulate: modulation index must lie in (0, 1]");

    Waveform out;
    out.sample_rate = drive.sample_rate;
    out.samples.resize(drive.size());
    for (std::size_t i = 0; i < drive.size(); ++i) {
        const double v = drive.samples[i].real();
        if (std::abs(v) > 1.0 + 1e-12) throw validation_error("mzm_modulate: drive must be normalized to |v| <= 1");
        out.samples[i] = std::cos(std::numbers::pi / 4.0 * (1.0 - m * v));
    }
    return out;
}

/// Chromatic dispersion as a circular all-pass filter over the whole frame,
/// H(f) = exp(+j beta2/2 (2 pi f)^2 L).
inline Waveform propagate_cd(const Waveform& wave, const LinkConfig& cfg)
{
    if (!(cfg.fiber_length_km >= 0.0)) throw validation_error("propagate_cd: fiber length must be >= 0");
    const std::size_t n = wave.size();
    auto spectrum = dsp::fft(wave.samples);
    const double coeff = 0.5 * cfg.beta2() * cfg.fiber_length_km * 1e3;
    for (std::size_t k = 0; k < n; ++k) {
        const double w = 2.0 * std::numbers::pi * dsp::bin_frequency(k, n, wave.sample_rate);
        spectrum[k] *= std::polar(1.0, coeff * w * w);
    }
    return {dsp::ifft(spectrum), wave.sample_rate};
}

namespace detail {

/// Slice index for frequency f, or -1 when f lies outside [-B/2, B/2].
inline long slice_of(double f, double bandwidth, std::size_t num_slices)
{
    const double half = 0.5 * bandwidth;
    if (f < -half || f > half) return -1;
    const double width = bandwidth / static_cast<double>(num_slices);
    auto idx = static_cast<long>(std::floor((f + half) / width));
    return std::min<long>(idx, static_cast<long>(num_slices) - 1);
}

inline std::vector<Waveform> split_spectrum(const dsp::cvec& spectrum, double sample_rate, const LinkConfig& cfg)
{
    const std::size_t n = spectrum.size();
    const double bandwidth = cfg.occupied_bandwidth();
    std::vector<dsp::cvec> parts(cfg.num_slices, dsp::cvec(n));
    for (std::size_t k = 0; k < n; ++k) {
        const long s = slice_of(dsp::bin_frequency(k, n, sample_rate), bandwidth, cfg.num_slices);
        if (s >= 0) parts[static_cast<std::size_t>(s)][k] = spectrum[k];
    }
    std::vector<Waveform> out;
    out.reserve(parts.size());
    for (auto& p : parts) out.push_back({dsp::ifft(p), sample_rate});
    return out;
}

} // namespace detail

/// Ideal brick-wall partition of the occupied band [-B/2, B/2], B = (1+rolloff)*baud,
/// into num_slices equal contiguous intervals. Intervals are half-open on the
/// right except the last, so every in-band bin belongs to exactly one slice.
inline std::vector<Waveform> slice_spectrum(const Waveform& wave, const LinkConfig& cfg)
{
    if (cfg.num_slices < 1) throw validation_error("slice_spectrum: num_slices must be >= 1");
    if (cfg.occupied_bandwidth() > wave.sample_rate)
        throw validation_error("slice_spectrum: occupied bandwidth exceeds the sample rate");
    return detail::split_spectrum(dsp::fft(wave.samples), wave.sample_rate, cfg);
}

/// Optical fields reaching the photodiodes. With share_carrier the carrier
/// (DC bin) is tapped before the filter bank and power-split 1:N into every
/// slice path; the sidebands are partitioned exactly as in slice_spectrum.
/// Total optical power is preserved either way.
inline std::vector<Waveform> receiver_slices(const Waveform& wave, const LinkConfig& cfg)
{
    if (!cfg.share_carrier || cfg.num_slices == 1) return slice_spectrum(wave, cfg);
    if (cfg.occupied_bandwidth() > wave.sample_rate)
        throw validation_error("receiver_slices: occupied bandwidth exceeds the sample rate");

    auto spectrum = dsp::fft(wave.samples);
    const std::complex<double> carrier = spectrum[0];
    spectrum[0] = 0.0;
    auto slices = detail::split_spectrum(spectrum, wave.sample_rate, cfg);
    // carrier bin amplitude c/N in time domain is c/(N_fft); split power evenly
    const std::complex<double> share =
        carrier / (static_cast<double>(wave.size()) * std::sqrt(static_cast<double>(cfg.num_slices)));
    for (auto& s : slices)
        for (auto& v : s.samples) v += share;
    return slices;
}

/// Square-law detection of each slice, no noise.
inline SlicedObservation photodetect(const std::vector<Waveform>& slices)
{
    if (slices.empty()) throw validation_error("photodetect: at least one slice required");
    const std::size_t n = slices.front().size();
    SlicedObservation obs;
    obs.sample_rate = slices.front().sample_rate;
    obs.data.resize(static_cast<Eigen::Index>(slices.size()), static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < slices.size(); ++r) {
        if (slices[r].size() != n) throw validation_error("photodetect: slices differ in length");
        for (std::size_t i = 0; i < n; ++i)
            obs.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = std::norm(slices[r].samples[i]);
    }
    return obs;
}

/// Mean-removed (AC) power of each row.
inline std::vector<double> ac_power(const SlicedObservation& obs)
{
    std::vector<double> out(obs.num_slices());
    for (Eigen::Index r = 0; r < obs.data.rows(); ++r) {
        const auto row = obs.data.row(r);
        const double mean = row.mean();
        out[static_cast<std::size_t>(r)] = (row.array() - mean).square().mean();
    }
    return out;
}

/// Adds independent zero-mean Gaussian noise to each row, with variance set
/// by that row's AC power and snr_db. Slice i draws from substream noise_base+i.
inline SlicedObservation load_noise(SlicedObservation obs, double snr_db, std::uint64_t seed)
{
    if (std::isinf(snr_db) && snr_db > 0) return obs;
    const double snr_lin = std::pow(10.0, snr_db / 10.0);
    const auto power = ac_power(obs);
    for (Eigen::Index r = 0; r < obs.data.rows(); ++r) {
        auto rng = make_stream(seed, stream::noise_base + static_cast<std::uint64_t>(r));
        std::normal_distribution<double> gauss(0.0, std::sqrt(power[static_cast<std::size_t>(r)] / snr_lin));
        for (Eigen::Index i = 0; i < obs.data.cols(); ++i) obs.data(r, i) += gauss(rng);
    }
    return obs;
}

inline SlicedObservation photodetect_and_load_noise(const std::vector<Waveform>& slices, const LinkConfig& cfg)
{
    return load_noise(photodetect(slices), cfg.snr_db, cfg.seed);
}

struct LinkOutput {
    SlicedObservation observation;
    SymbolFrame frame;
};

/// Transmitter, fiber and receiver front end without the electrical noise.
/// The result depends on the config but not on snr_db.
inline LinkOutput simulate_link_noiseless(const LinkConfig& cfg)
{
    cfg.validate();
    auto bit_rng = make_stream(cfg.seed, stream::bits);
    auto frame = generate_frame(cfg.n_symbols, bit_rng);
    auto drive = normalize_drive(pulse_shape(frame, cfg));
    auto field = propagate_cd(mzm_modulate(drive, cfg), cfg);
    auto obs = photodetect(receiver_slices(field, cfg));
    return {std::move(obs), std::move(frame)};
}

inline LinkOutput simulate_link(const LinkConfig& cfg)
{
    auto out = simulate_link_noiseless(cfg);
    out.observation = load_noise(std::move(out.observation), cfg.snr_db, cfg.seed);
    return out;
}

/// Dispersion-induced spread across the occupied band, in symbol periods.
inline double cd_memory_symbols(const LinkConfig& cfg)
{
    const double omega_span = 2.0 * std::numbers::pi * cfg.occupied_bandwidth();
    const double spread = std::abs(cfg.beta2()) * cfg.fiber_length_km * 1e3 * omega_span;
    return spread * cfg.baud_rate;
}

/// Minimum number of edge symbols discarded at each end of a frame.
inline constexpr std::size_t edge_guard_floor = 32;

/// Symbols excluded from statistics at each frame edge: 4x the CD memory plus
/// a fixed floor that covers the wrap-around of the circular slicing filters.
inline std::size_t guard_symbols(const LinkConfig& cfg)
{
    return 4 * static_cast<std::size_t>(std::ceil(cd_memory_symbols(cfg))) + edge_guard_floor;
}

/// Debug dump, one "index,re,im" line per sample.
inline void dump_waveform_csv(const Waveform& wave, const std::string& path)
{
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.precision(17);
    os << "index,re,im\n";
    for (std::size_t i = 0; i < wave.size(); ++i)
        os << i << ',' << wave.samples[i].real() << ',' << wave.samples[i].imag() << '\n';
}

} // namespace rcpam::link
