#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace rcpam::dsp {

using cvec = std::vector<std::complex<double>>;

namespace detail {
inline Eigen::FFT<double>& engine()
{
    // Eigen's FFT caches twiddle plans internally; one engine per thread.
    thread_local Eigen::FFT<double> fft;
    return fft;
}
} // namespace detail

/// Unnormalized forward DFT, X[k] = sum_n x[n] exp(-j 2 pi k n / N).
inline cvec fft(const cvec& x)
{
    cvec out;
    if (x.empty()) return out;
    detail::engine().fwd(out, x);
    return out;
}

/// Inverse DFT including the 1/N factor.
inline cvec ifft(const cvec& x)
{
    cvec out;
    if (x.empty()) return out;
    detail::engine().inv(out, x);
    return out;
}

/// Frequency (Hz) of DFT bin k for an N-point transform at the given rate,
/// using the usual [0, +fs/2) then [-fs/2, 0) ordering.
inline double bin_frequency(std::size_t k, std::size_t n, double sample_rate)
{
    const auto ki = static_cast<double>(k);
    const auto ni = static_cast<double>(n);
    const double f = (2 * k < n) ? ki : ki - ni;
    return f * sample_rate / ni;
}

inline std::size_t next_pow2(std::size_t n)
{
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

/// Full linear convolution of two real sequences via zero-padded FFT.
inline std::vector<double> convolve(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a.empty() || b.empty()) return {};
    const std::size_t out_len = a.size() + b.size() - 1;
    const std::size_t n = next_pow2(out_len);
    cvec fa(n), fb(n);
    for (std::size_t i = 0; i < a.size(); ++i) fa[i] = a[i];
    for (std::size_t i = 0; i < b.size(); ++i) fb[i] = b[i];
    fa = fft(fa);
    fb = fft(fb);
    for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
    fa = ifft(fa);
    std::vector<double> out(out_len);
    for (std::size_t i = 0; i < out_len; ++i) out[i] = fa[i].real();
    return out;
}

} // namespace rcpam::dsp
