// Short back-to-back and 10 km runs of the 23-to-1 and 23-to-17 equalizers.

#include <cstdio>

#include "rcpam/rcpam.hpp"

int main()
{
    using namespace rcpam;
    harness::ExperimentConfig cfg;
    cfg.label = "demo";
    cfg.total_symbols = 1u << 15;
    cfg.fiber_length_km = {0.0, 10.0};
    cfg.snr_db = {20.0, 30.0};
    cfg.n_out = {1, 17};

    std::printf("%-6s %-6s %-14s %-12s %-12s %s\n", "L/km", "SNR", "equalizer", "BER", "SER", "RMPS");
    for (const auto& r : harness::run_sweep(cfg)) {
        char eq[32];
        std::snprintf(eq, sizeof eq, "RC-(%zu-to-%zu)", r.window, r.n_out);
        if (!r.ok()) {
            std::printf("%-6g %-6g %-14s error: %s\n", r.fiber_length_km, r.snr_db, eq, r.error.c_str());
            continue;
        }
        std::printf("%-6g %-6g %-14s %-12.4g %-12.4g %.2f\n", r.fiber_length_km, r.snr_db, eq, r.ber, r.ser, r.rmps);
    }
}
