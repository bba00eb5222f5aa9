// rcpam: command line front end for the link simulator, equalizer sweeps and
// plot-data emission.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rcpam/rcpam.hpp"

namespace {

using namespace rcpam;

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> symbols;
    std::size_t parallel = 1;
};

harness::ExperimentConfig load_or_default(const Common& c)
{
    harness::ExperimentConfig cfg;
    if (!c.config.empty()) {
        cfg = harness::load_config(c.config);
    } else {
        cfg.fiber_length_km = {0.0};
        cfg.snr_db = harness::default_snr_grid();
        cfg.n_out = {1};
    }
    if (c.seed) cfg.seeds = {*c.seed};
    if (c.symbols) cfg.total_symbols = *c.symbols;
    harness::validate(cfg);
    return cfg;
}

void print_record(const harness::SweepRecord& r)
{
    std::printf("label            %s\n", r.label.c_str());
    std::printf("seed             %llu\n", static_cast<unsigned long long>(r.seed));
    std::printf("fiber_length_km  %g\n", r.fiber_length_km);
    std::printf("snr_db           %g\n", r.snr_db);
    std::printf("equalizer        RC-(%zu-to-%zu), %zu nodes\n", r.window, r.n_out, r.n_res);
    if (!r.ok()) {
        std::printf("error            %s\n", r.error.c_str());
        return;
    }
    const auto bits = r.n_bits();
    if (r.n_bit_errors() == 0)
        std::printf("ber              0 (below %.3g, floor)\n", 1.0 / (2.0 * static_cast<double>(bits)));
    else
        std::printf("ber              %.6g (%llu / %llu bits)\n", r.ber, static_cast<unsigned long long>(r.n_bit_errors()),
                    static_cast<unsigned long long>(bits));
    std::printf("ser              %.6g\n", r.ser);
    std::printf("train/test       %zu / %zu symbols\n", r.train_symbols, r.test_symbols);
    std::printf("rmps             %.6g\n", r.rmps);
    std::printf("per_position_ber");
    for (double b : r.per_position_ber) std::printf(" %.3g", b);
    std::printf("\nwall_time_s      %.3f\n", r.wall_time_s);
}

void dump_waveforms(const harness::ExperimentConfig& cfg, const harness::GridPoint& pt, std::uint64_t seed,
                    const std::string& dir)
{
    std::filesystem::create_directories(dir);
    auto l = cfg.link;
    l.fiber_length_km = pt.fiber_length_km;
    l.snr_db = pt.snr_db;
    l.n_symbols = cfg.total_symbols;
    l.seed = seed;
    auto rng = make_stream(seed, stream::bits);
    const auto frame = link::generate_frame(l.n_symbols, rng);
    const auto drive = link::normalize_drive(link::pulse_shape(frame, l));
    const auto tx = link::mzm_modulate(drive, l);
    const auto rx = link::propagate_cd(tx, l);
    const std::filesystem::path d(dir);
    link::dump_waveform_csv(drive, (d / "drive.csv").string());
    link::dump_waveform_csv(tx, (d / "tx_field.csv").string());
    link::dump_waveform_csv(rx, (d / "rx_field.csv").string());
    const auto slices = link::receiver_slices(rx, l);
    for (std::size_t i = 0; i < slices.size(); ++i)
        link::dump_waveform_csv(slices[i], (d / ("slice_" + std::to_string(i) + ".csv")).string());
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"PAM4 IM/DD link simulator with a sliced-receiver reservoir equalizer"};
    app.require_subcommand(1);
    Common c;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", c.config, "Experiment config (JSON with comments)");
        sub->add_option("--seed", c.seed, "Override the seed list with a single seed");
        sub->add_option("--symbols", c.symbols, "Override total_symbols");
    };

    auto* simulate = app.add_subcommand("simulate", "Run one grid point and print its BER report");
    add_common(simulate);
    std::optional<double> snr, length;
    std::optional<std::size_t> n_out;
    std::string save_weights, dump_dir;
    simulate->add_option("--snr", snr, "SNR in dB (default: first grid value)");
    simulate->add_option("--length", length, "Fiber length in km (default: first grid value)");
    simulate->add_option("--n-out", n_out, "Readout outputs per window (default: first listed)");
    simulate->add_option("--save-weights", save_weights, "Write the trained weights to this file");
    simulate->add_option("--dump-waveforms", dump_dir, "Write intermediate waveforms as CSV into this directory");

    auto* sweep = app.add_subcommand("sweep", "Run the full grid and write results.csv and manifest.json");
    add_common(sweep);
    sweep->get_option("--config")->required();
    sweep->add_option("--out", c.out, "Output directory")->required();
    sweep->add_option("--parallel", c.parallel, "Worker threads")->check(CLI::PositiveNumber);

    auto* complexity = app.add_subcommand("complexity", "Print RMPS for a list of N_out values");
    complexity->add_option("--config", c.config, "Experiment config supplying the other ESN parameters");
    std::vector<std::size_t> n_out_list{1, 17, 23};
    complexity->add_option("--n-out", n_out_list, "N_out values")->delimiter(',');

    auto* plotdata = app.add_subcommand("plotdata", "Turn results.csv into BER, penalty and RMPS series");
    std::string in_path;
    double fec = eval::kp4_ber;
    plotdata->add_option("--in", in_path, "results.csv from a sweep")->required();
    plotdata->add_option("--out", c.out, "Output directory")->required();
    plotdata->add_option("--fec", fec, "Pre-FEC BER threshold");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (simulate->parsed()) {
            const auto cfg = load_or_default(c);
            const harness::GridPoint pt{length.value_or(cfg.fiber_length_km.front()), snr.value_or(cfg.snr_db.front()),
                                        n_out.value_or(cfg.n_out.front())};
            const auto seed = cfg.seeds.front();
            if (!dump_dir.empty()) dump_waveforms(cfg, pt, seed, dump_dir);
            esn::EsnWeights trained;
            const auto rec = harness::run_experiment(cfg, pt, seed, save_weights.empty() ? nullptr : &trained);
            print_record(rec);
            if (!rec.ok()) return 2;
            if (!save_weights.empty()) esn::save_weights(trained, save_weights);
        } else if (sweep->parsed()) {
            const auto cfg = load_or_default(c);
            std::filesystem::create_directories(c.out);
            harness::SweepOptions opt;
            opt.parallel = c.parallel;
            opt.log_path = (std::filesystem::path(c.out) / "records.jsonl").string();
            const auto started = harness::detail::timestamp_utc();
            const auto records = harness::run_sweep(cfg, opt);
            harness::write_results(records, cfg, c.out, started);
            std::size_t failed = 0;
            for (const auto& r : records)
                if (!r.ok()) {
                    ++failed;
                    std::cerr << "point failed: L=" << r.fiber_length_km << " km, SNR=" << r.snr_db << " dB, N_out=" << r.n_out
                              << ", seed=" << r.seed << ": " << r.error << "\n";
                }
            std::printf("%zu records (%zu failed) written to %s\n", records.size(), failed, c.out.c_str());
        } else if (complexity->parsed()) {
            esn::EsnConfig e;
            if (!c.config.empty()) {
                const auto cfg = harness::load_config(c.config);
                e = cfg.esn;
                e.sps = cfg.link.sps;
                e.num_slices = cfg.link.num_slices;
            }
            std::printf("%-8s %-8s %-8s %s\n", "window", "n_res", "n_out", "rmps");
            for (auto n : n_out_list) {
                e.n_out = n;
                e.validate();
                std::printf("%-8zu %-8zu %-8zu %.6g\n", e.window(), e.n_res, n, eval::complexity_rmps(e));
            }
        } else if (plotdata->parsed()) {
            if (!(fec > 0.0 && fec < 1.0)) throw validation_error("--fec must lie in (0, 1)");
            const auto records = harness::read_results(in_path);
            const auto summary = harness::emit_plot_data(records, {fec}, c.out);
            for (const auto& note : summary.notes) std::cerr << "note: " << note << "\n";
            std::printf("%zu BER series, %zu penalty rows, %zu RMPS rows written to %s\n", summary.ber_series,
                        summary.penalty_rows, summary.rmps_rows, c.out.c_str());
        }
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
