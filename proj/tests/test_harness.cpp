#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "rcpam/harness.hpp"

using namespace rcpam;
using namespace rcpam::harness;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("rcpam_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Small, fast configuration for sweep mechanics.
ExperimentConfig small_config()
{
    ExperimentConfig cfg;
    cfg.label = "small";
    cfg.total_symbols = 4096;
    cfg.link.rrc_span_symbols = 64;
    cfg.fiber_length_km = {0.0};
    cfg.snr_db = {14, 16, 18, 20, 22};
    cfg.n_out = {1, 17, 23};
    cfg.seeds = {1, 2};
    cfg.esn.washout = 20;
    return cfg;
}

std::vector<SweepRecord> without_time(std::vector<SweepRecord> r)
{
    for (auto& x : r) x.wall_time_s = 0;
    return r;
}

bool same_records(const SweepRecord& a, const SweepRecord& b)
{
    auto eq = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
    if (a.per_position_ber.size() != b.per_position_ber.size()) return false;
    for (std::size_t i = 0; i < a.per_position_ber.size(); ++i)
        if (!eq(a.per_position_ber[i], b.per_position_ber[i])) return false;
    return a.label == b.label && a.seed == b.seed && a.snr_db == b.snr_db && a.fiber_length_km == b.fiber_length_km
           && a.n_out == b.n_out && a.n_res == b.n_res && eq(a.ber, b.ber) && eq(a.ser, b.ser) && eq(a.rmps, b.rmps)
           && a.train_symbols == b.train_symbols && a.test_symbols == b.test_symbols && a.window == b.window
           && a.error == b.error && a.wall_time_s == b.wall_time_s;
}

} // namespace

// ---------------------------------------------------------------------------
// Config

TEST(Config, EmptyFileNamesRequiredField)
{
    try {
        parse_config("");
        FAIL() << "expected validation_error";
    } catch (const validation_error& e) {
        EXPECT_NE(std::string(e.what()).find("link.fiber_length_km"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_config("  \n// just a comment\n{}"), validation_error);
}

TEST(Config, MinimalFileAppliesDefaults)
{
    const auto cfg = parse_config(R"({"link": {"fiber_length_km": [0, 10, 30, 50]}})");
    EXPECT_EQ(cfg.fiber_length_km, (std::vector<double>{0, 10, 30, 50}));
    EXPECT_EQ(cfg.snr_db, default_snr_grid());
    EXPECT_EQ(cfg.snr_db.size(), 23u);
    EXPECT_EQ(cfg.snr_db.front(), 8.0);
    EXPECT_EQ(cfg.snr_db.back(), 30.0);
    EXPECT_EQ(cfg.n_out, std::vector<std::size_t>{1});
    EXPECT_EQ(cfg.total_symbols, 1u << 18);
    EXPECT_EQ(cfg.train_fraction, 0.15);
    EXPECT_EQ(cfg.esn.n_res, 30u);
    EXPECT_EQ(cfg.esn.spectral_radius, 1.2);
    EXPECT_EQ(cfg.link.rolloff, 0.1);
    EXPECT_EQ(cfg.link.num_slices, 4u);
}

TEST(Config, RoundTrip)
{
    auto cfg = parse_config(R"({
        // comment
        "label": "rt, \"quoted\"",
        "seeds": [3, 5, 18446744073709551615],
        "total_symbols": 65536,
        "link": {"fiber_length_km": 10, "snr_db": {"start": 10, "stop": 12, "step": 0.5}, "rolloff": 0.2},
        "esn": {"n_out": [1, 17], "ridge_lambda_grid": [1e-6, 1e-3], "leak": 0.5}
    })");
    EXPECT_EQ(cfg.snr_db, (std::vector<double>{10, 10.5, 11, 11.5, 12}));
    EXPECT_EQ(cfg.seeds.back(), 18446744073709551615ULL);
    const auto again = parse_config(serialize_config(cfg));
    EXPECT_TRUE(again == cfg);
    EXPECT_EQ(serialize_config(again), serialize_config(cfg));
}

TEST(Config, ParseErrorReportsLine)
{
    try {
        parse_config("{\n  \"link\": {\n    \"fiber_length_km\": [0,, 10]\n  }\n}");
        FAIL() << "expected config_parse_error";
    } catch (const config_parse_error& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(Config, UnknownKeysAreRejected)
{
    try {
        parse_config(R"({"link": {"fiber_length_km": 0, "fibre_length": 3}})");
        FAIL();
    } catch (const validation_error& e) {
        EXPECT_NE(std::string(e.what()).find("link.fibre_length"), std::string::npos);
    }
    EXPECT_THROW(parse_config(R"({"link": {"fiber_length_km": 0}, "extra": 1})"), validation_error);
}

TEST(Config, FieldValidation)
{
    auto expect_field = [](const std::string& text, const std::string& field) {
        try {
            parse_config(text);
            ADD_FAILURE() << "accepted: " << text;
        } catch (const validation_error& e) {
            EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
        }
    };
    expect_field(R"({"link": {"fiber_length_km": [10, 0]}})", "link.fiber_length_km");
    expect_field(R"({"link": {"fiber_length_km": 0, "snr_db": [10, 10]}})", "link.snr_db");
    expect_field(R"({"link": {"fiber_length_km": 0, "sps": "two"}})", "link.sps");
    expect_field(R"({"link": {"fiber_length_km": 0, "sps": 1}})", "link.sps");
    expect_field(R"({"link": {"fiber_length_km": 0}, "esn": {"n_out": 30}})", "esn.n_out");
    expect_field(R"({"link": {"fiber_length_km": 0}, "esn": {"leak": 1.5}})", "esn.leak");
    expect_field(R"({"link": {"fiber_length_km": 0}, "train_fraction": 1.0})", "train_fraction");
    expect_field(R"({"link": {"fiber_length_km": 0}, "seeds": [-1]})", "seeds");
    expect_field(R"({"link": {"fiber_length_km": -5}})", "link.fiber_length_km");
}

TEST(Config, ExampleFileLoads)
{
    const auto cfg = load_config(RCPAM_SOURCE_DIR "/configs/example.json");
    EXPECT_EQ(cfg.fiber_length_km.size(), 4u);
    EXPECT_EQ(cfg.n_out, (std::vector<std::size_t>{1, 17, 23}));
    EXPECT_THROW(load_config("/nonexistent/config.json"), validation_error);
}

// ---------------------------------------------------------------------------
// Experiments

TEST(Split, GapCoversWindowHalfWidth)
{
    esn::EsnConfig e;
    for (std::size_t n_out = 1; n_out <= 23; ++n_out) {
        e.n_out = n_out;
        const auto s = detail::split_steps(0.15, 1u << 16, e, (1u << 16) / n_out - 10);
        const std::size_t last_train_symbol = s.train_steps * n_out - 1;
        const std::size_t first_test_symbol = s.test_begin * n_out;
        EXPECT_GE(first_test_symbol - last_train_symbol - 1, e.k) << n_out;
        EXPECT_LE(s.train_steps * n_out, static_cast<std::size_t>(0.15 * 65536));
        EXPECT_GT(s.train_steps * n_out + n_out, static_cast<std::size_t>(0.15 * 65536));
    }
    e.n_out = 1;
    EXPECT_THROW(detail::split_steps(0.15, 600, e, 590), validation_error);
    EXPECT_THROW(detail::split_steps(0.9, 2000, e, 1800), validation_error);
}

TEST(Experiment, DeterministicRecord)
{
    auto cfg = small_config();
    const GridPoint pt{0.0, 20.0, 17};
    const auto a = run_experiment(cfg, pt, 7), b = run_experiment(cfg, pt, 7);
    ASSERT_TRUE(a.ok()) << a.error;
    EXPECT_TRUE(same_records(without_time({a})[0], without_time({b})[0]));
    EXPECT_EQ(a.window, 23u);
    EXPECT_EQ(a.n_res, 30u);
    EXPECT_NEAR(a.rmps, 1235.0 / 17.0, 1e-9);
    EXPECT_EQ(a.per_position_ber.size(), 17u);
    EXPECT_EQ(a.train_symbols, (614u / 17u) * 17u);
    EXPECT_GT(a.test_symbols, 3000u);
    EXPECT_EQ(a.test_symbols % 17, 0u);
    const auto c = run_experiment(cfg, pt, 8);
    EXPECT_NE(c.ber == a.ber && c.per_position_ber == a.per_position_ber, true);
}

TEST(Experiment, FailuresBecomeErrorRows)
{
    auto cfg = small_config();
    cfg.esn.washout = 5000;
    const auto r = run_experiment(cfg, {0.0, 20.0, 1}, 1);
    EXPECT_FALSE(r.ok());
    EXPECT_TRUE(std::isnan(r.ber));
    EXPECT_NEAR(r.rmps, 691.0, 1e-9);
}

// ---------------------------------------------------------------------------
// Sweeps

TEST(Sweep, CardinalityAndOrder)
{
    const auto cfg = small_config();
    const auto recs = run_sweep(cfg);
    ASSERT_EQ(recs.size(), 30u);
    std::size_t i = 0;
    for (double snr : cfg.snr_db)
        for (auto n : cfg.n_out)
            for (auto seed : cfg.seeds) {
                EXPECT_EQ(recs[i].snr_db, snr);
                EXPECT_EQ(recs[i].n_out, n);
                EXPECT_EQ(recs[i].seed, seed);
                EXPECT_TRUE(recs[i].ok()) << recs[i].error;
                ++i;
            }
}

TEST(Sweep, MatchesSinglePointRuns)
{
    auto cfg = small_config();
    cfg.snr_db = {16, 22};
    cfg.n_out = {1, 23};
    cfg.seeds = {4};
    const auto recs = run_sweep(cfg);
    for (const auto& r : recs) {
        const auto single = run_experiment(cfg, {r.fiber_length_km, r.snr_db, r.n_out}, r.seed);
        EXPECT_TRUE(same_records(without_time({r})[0], without_time({single})[0]));
    }
}

TEST(Sweep, ParallelismDoesNotChangeResults)
{
    auto cfg = small_config();
    cfg.fiber_length_km = {0.0, 10.0};
    cfg.snr_db = {16, 20};
    cfg.seeds = {1, 2, 3};
    SweepOptions one, eight;
    eight.parallel = 8;
    const auto a = without_time(run_sweep(cfg, one));
    const auto b = without_time(run_sweep(cfg, eight));
    EXPECT_EQ(records_to_csv(a), records_to_csv(b));
}

TEST(Sweep, ResumeSkipsCompletedPoints)
{
    const auto dir = temp_dir("resume");
    const auto log = (dir / "records.jsonl").string();
    auto cfg = small_config();
    cfg.snr_db = {16, 20};
    cfg.seeds = {1, 2};
    SweepOptions opt;
    opt.log_path = log;
    const auto full = run_sweep(cfg, opt);

    // keep only the first three log lines, as if the run had been interrupted
    std::vector<std::string> lines;
    {
        std::ifstream is(log);
        for (std::string l; std::getline(is, l);) lines.push_back(l);
    }
    ASSERT_EQ(lines.size(), full.size());
    {
        std::ofstream os(log, std::ios::trunc);
        for (int i = 0; i < 3; ++i) os << lines[static_cast<std::size_t>(i)] << '\n';
        os << lines[3].substr(0, lines[3].size() / 2); // torn write
    }
    const auto resumed = run_sweep(cfg, opt);
    ASSERT_EQ(resumed.size(), full.size());
    EXPECT_EQ(records_to_csv(without_time(resumed)), records_to_csv(without_time(full)));
    // reused records keep their logged wall time exactly
    std::size_t reused = 0;
    for (std::size_t i = 0; i < full.size(); ++i) reused += resumed[i].wall_time_s == full[i].wall_time_s;
    EXPECT_GE(reused, 3u);

    // a third run recomputes nothing
    const auto third = run_sweep(cfg, opt);
    for (std::size_t i = 0; i < full.size(); ++i) EXPECT_EQ(third[i].wall_time_s, resumed[i].wall_time_s);
}

TEST(Sweep, ErrorsDoNotAbort)
{
    auto cfg = small_config();
    cfg.esn.washout = 5000;
    cfg.snr_db = {20};
    const auto recs = run_sweep(cfg);
    ASSERT_EQ(recs.size(), 6u);
    for (const auto& r : recs) EXPECT_FALSE(r.ok());
}

// ---------------------------------------------------------------------------
// Result files

TEST(Results, EmptyCsvIsHeaderOnly)
{
    const auto csv = records_to_csv({});
    EXPECT_EQ(csv,
              "label,seed,snr_db,fiber_length_km,n_out,n_res,ber,ser,per_position_ber,rmps,train_symbols,test_symbols,"
              "wall_time_s,window,error\n");
    EXPECT_TRUE(records_from_csv(csv).empty());
}

TEST(Results, CsvRoundTrip)
{
    SweepRecord a;
    a.label = "a, \"b\"\nc";
    a.seed = 18446744073709551615ULL;
    a.snr_db = 12.5;
    a.fiber_length_km = 0.1;
    a.n_out = 3;
    a.n_res = 30;
    a.ber = 1.0 / 3.0;
    a.ser = 0.1;
    a.per_position_ber = {0.1, 1e-300, 0.3};
    a.rmps = 1235.0 / 17.0;
    a.train_symbols = 9;
    a.test_symbols = 99;
    a.wall_time_s = 0.123456789;
    a.window = 23;
    SweepRecord b = a;
    b.label = "plain";
    b.ber = std::nan("");
    b.ser = std::nan("");
    b.per_position_ber.clear();
    b.error = "solve_readout: singular, \"bad\"";
    const auto back = records_from_csv(records_to_csv({a, b}));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_TRUE(same_records(back[0], a));
    EXPECT_TRUE(same_records(back[1], b));
}

TEST(Results, CsvReaderHandlesRfc4180)
{
    const auto rows = detail::parse_csv("a,\"b,c\",\"d\"\"e\"\r\n,\"\",x\n");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"a", "b,c", "d\"e"}));
    EXPECT_EQ(rows[1], (std::vector<std::string>{"", "", "x"}));
    EXPECT_THROW(detail::parse_csv("\"open"), validation_error);
    EXPECT_THROW(records_from_csv("x,y\n"), validation_error);
}

TEST(Results, WriteResultsAndManifest)
{
    const auto dir = temp_dir("write");
    auto cfg = small_config();
    cfg.seeds = {11, 22, 33};
    SweepRecord r;
    r.label = "w";
    r.seed = 11;
    write_results({r}, cfg, dir.string());
    EXPECT_EQ(records_from_csv(slurp(dir / "results.csv")).size(), 1u);
    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(manifest["seeds"], nlohmann::json({11, 22, 33}));
    EXPECT_EQ(manifest["code_version"], code_version);
    EXPECT_TRUE(manifest.contains("started_at"));
    EXPECT_TRUE(manifest.contains("finished_at"));
    EXPECT_TRUE(parse_config(manifest["config"].dump()) == cfg);
}

// ---------------------------------------------------------------------------
// Plot data

namespace {

SweepRecord synthetic(double length, double snr, std::size_t n_out, double shift)
{
    esn::EsnConfig e;
    e.n_out = n_out;
    SweepRecord r;
    r.label = "syn";
    r.seed = 1;
    r.fiber_length_km = length;
    r.snr_db = snr;
    r.n_out = n_out;
    r.n_res = 30;
    r.window = 23;
    r.test_symbols = 500000;
    // ber = 10^(-(snr - shift)/2), quantized to whole bit errors
    const double errors = std::round(std::min(0.5, std::pow(10.0, -(snr - shift) / 2.0)) * 1e6);
    r.ber = errors / 1e6;
    r.ser = r.ber;
    r.per_position_ber.assign(n_out, r.ber);
    r.rmps = eval::complexity_rmps(e);
    return r;
}

} // namespace

TEST(PlotData, SeriesPenaltiesAndComplexity)
{
    std::vector<SweepRecord> recs;
    for (double len : {0.0, 10.0})
        for (std::size_t n : {1u, 17u, 23u})
            for (double snr = 2; snr <= 12; snr += 1) recs.push_back(synthetic(len, snr, n, len / 10.0 + (n == 23 ? 1.0 : 0.0)));
    const auto dir = temp_dir("plot");
    const auto summary = emit_plot_data(recs, {}, dir.string());
    EXPECT_EQ(summary.ber_series, 6u);
    EXPECT_TRUE(summary.notes.empty());

    const auto b = detail::parse_csv(slurp(dir / "fig2b_snr_penalty.csv"));
    ASSERT_EQ(b.size(), 7u);
    for (std::size_t i = 1; i < b.size(); ++i) {
        const double len = std::stod(b[i][4]);
        const auto n = std::stoul(b[i][3]);
        const double expect = len / 10.0 + (n == 23 ? 1.0 : 0.0);
        EXPECT_EQ(b[i][7], "ok");
        EXPECT_NEAR(std::stod(b[i][6]), expect, 0.02) << len << " " << n;
        if (len == 0.0 && n == 1) EXPECT_EQ(std::stod(b[i][6]), 0.0);
    }

    const auto c = detail::parse_csv(slurp(dir / "fig2c_rmps.csv"));
    ASSERT_EQ(c.size(), 4u);
    EXPECT_NEAR(std::stod(c[1][4]), 691.0, 1e-9);
    EXPECT_NEAR(std::stod(c[2][4]), 1235.0 / 17.0, 1e-9);
    EXPECT_NEAR(std::stod(c[3][4]), 1439.0 / 23.0, 1e-9);

    const auto a = detail::parse_csv(slurp(dir / "fig2a_ber_vs_snr.csv"));
    EXPECT_EQ(a.size(), 1u + 6u * 11u);
}

TEST(PlotData, UnbracketedSeriesIsNoted)
{
    std::vector<SweepRecord> recs;
    for (double snr = 2; snr <= 12; snr += 1) recs.push_back(synthetic(0.0, snr, 1, 0.0));
    for (double snr = 2; snr <= 12; snr += 1) recs.push_back(synthetic(50.0, snr, 1, 20.0));
    const auto dir = temp_dir("plot_nb");
    const auto summary = emit_plot_data(recs, {}, dir.string());
    ASSERT_EQ(summary.notes.size(), 1u);
    EXPECT_NE(summary.notes[0].find("not_bracketed"), std::string::npos);
    const auto b = detail::parse_csv(slurp(dir / "fig2b_snr_penalty.csv"));
    EXPECT_EQ(b[2][7], "not_bracketed");
}

TEST(PlotData, PooledSeedsAndFloor)
{
    std::vector<SweepRecord> recs;
    for (std::uint64_t seed : {1, 2, 3}) {
        auto r = synthetic(0.0, 20.0, 1, 0.0);
        r.seed = seed;
        r.ber = seed == 2 ? 4e-6 : 0.0;
        recs.push_back(r);
    }
    const auto agg = aggregate(recs);
    ASSERT_EQ(agg.size(), 1u);
    const auto& p = agg.begin()->second.front();
    EXPECT_EQ(p.n_bits, 3000000u);
    EXPECT_EQ(p.n_bit_errors, 4u);
    EXPECT_EQ(p.median_ber, 0.0);
    EXPECT_EQ(p.n_seeds, 3u);
}
