#pragma once

// Command-line front end: plan / simulate / analyze / scan / report.
// Exit codes: 0 success, 1 configuration error, 2 data error, 3 internal.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "ringqkd/analysis.hpp"
#include "ringqkd/config.hpp"
#include "ringqkd/sim.hpp"

namespace ringqkd {

namespace detail {

inline json metrics_to_json(const LinkMetrics& m) {
    const auto opt = [](double v) { return std::isnan(v) ? json() : json(v); };
    return {{"coincidence_rate", m.coincidence_rate},
            {"accidental_rate", m.accidental_rate},
            {"v_hv", m.v_hv},
            {"v_da", m.v_da},
            {"qber", m.qber},
            {"s", opt(m.s_param)},
            {"fidelity", opt(m.fidelity)},
            {"c_hv_rate", m.c_hv_rate},
            {"c_da_rate", m.c_da_rate},
            {"sifted", m.sifted_rate},
            {"secure", m.secure_rate},
            {"secure_raw", m.secure_rate_raw}};
}

inline void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open \"" + path + "\" for writing");
    out << body;
    if (!out) throw data_error("write error on \"" + path + "\"");
}

struct SchemeStats {
    int sources;
    int links;
    int degree;
    bool fully_connected;
};

inline SchemeStats scheme_stats(int n, Scheme scheme) {
    const int k = n / 2;
    const int full = n * (n - 2) / 2;
    if (scheme == Scheme::Complete) return {k * (k - 1) / 2, full, n - 2, true};
    const int links = k == 2 ? 4 : 2 * n;
    return {k, links, k == 2 ? 2 : 4, links == full};
}

}  // namespace detail

/// Topology artifacts plus the source-budget comparison between schemes.
inline void cmd_plan(const RunConfig& cfg, const std::string& out_dir,
                     std::ostream& log = std::cout) {
    const auto model = build_network_model(cfg);
    const auto& topo = model.topology;

    std::filesystem::create_directories(out_dir);
    detail::write_text_file(out_dir + "/topology.json", topology_to_json(topo).dump(2) + "\n");
    detail::write_text_file(out_dir + "/topology.dot", to_dot(topo));

    const int n = topo.n_users();
    log << "topology: " << to_string(topo.scheme) << ", " << n << " users, "
        << topo.n_sources() << " sources, " << topo.links.size() << " links\n";
    for (const auto& v : validate(topo)) log << "  " << v << "\n";

    log << "scheme comparison for N=" << n << " users:\n";
    log << "  scheme    sources  links  degree  fully_connected\n";
    for (const auto scheme : {Scheme::Cyclic, Scheme::Complete}) {
        const auto s = detail::scheme_stats(n, scheme);
        log << "  " << std::left << std::setw(10) << to_string(scheme) << std::right
            << std::setw(7) << s.sources << std::setw(7) << s.links << std::setw(8) << s.degree
            << std::setw(17) << (s.fully_connected ? "yes" : "no") << "\n";
    }
    const auto cyc = detail::scheme_stats(n, Scheme::Cyclic);
    const auto cmp = detail::scheme_stats(n, Scheme::Complete);
    if (!cyc.fully_connected)
        log << "note: cyclic wiring with " << cyc.sources << " sources links " << cyc.links
            << " of " << n * (n - 2) / 2 << " user pairs; full pairwise connectivity needs "
            << cmp.sources << " sources (one per splitter pair), not N/2\n";
    log << "wrote " << out_dir << "/topology.json, " << out_dir << "/topology.dot\n";
}

/// Run the event generator and persist tags plus a rerun manifest.
inline void cmd_simulate(const RunConfig& cfg, const std::string& out_dir, int threads = 1,
                         std::ostream& log = std::cout) {
    if (!cfg.seed)
        throw config_error("simulate: sim.seed is required (reruns must be bit-exact)");
    const auto model = build_network_model(cfg);

    SimConfig sim;
    sim.duration_s = cfg.duration_s;
    sim.seed = *cfg.seed;
    sim.window_ps = cfg.window_ps;
    sim.schedule = make_schedule(cfg, model.topology);
    sim.threads = threads;

    const auto tags = simulate(model, sim, cfg.config_hash());

    std::filesystem::create_directories(out_dir);
    const std::string tag_file = "tags." + cfg.output.tag_format;
    if (cfg.output.tag_format == "csv")
        write_tags_csv(tags, out_dir + "/" + tag_file);
    else
        write_tags_binary(tags, out_dir + "/" + tag_file);

    json manifest{{"config_hash", cfg.config_hash()},
                  {"seed", *cfg.seed},
                  {"duration_s", cfg.duration_s},
                  {"n_channels", tags.n_channels()},
                  {"tag_file", tag_file},
                  {"format", cfg.output.tag_format},
                  {"total_tags", tags.total_tags()}};
    manifest["channels"] = json::array();
    for (const auto& u : model.topology.users)
        for (int port = 0; port < 2; ++port)
            manifest["channels"].push_back({{"id", model.topology.channel(u.id, port)},
                                            {"user", u.name},
                                            {"port", port == 0 ? "T" : "R"}});
    detail::write_text_file(out_dir + "/manifest.json", manifest.dump(2) + "\n");
    log << "simulated " << tags.total_tags() << " tags over " << cfg.duration_s << " s into "
        << out_dir << "/" << tag_file << "\n";
}

/// Per-link metrics and network totals from a previous simulate run.
inline void cmd_analyze(const RunConfig& cfg, const std::string& out_dir,
                        std::int64_t window_override_ps = 0, int threads = 1,
                        std::ostream& log = std::cout) {
    const std::string manifest_path = out_dir + "/manifest.json";
    std::ifstream mf(manifest_path);
    if (!mf) throw data_error("cannot open \"" + manifest_path + "\" (run simulate first)");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::parse_error& e) {
        throw data_error("manifest parse error: " + std::string(e.what()));
    }
    if (manifest.value("config_hash", "") != cfg.config_hash())
        throw data_error("analyze: tag files were produced by a different config (hash " +
                         manifest.value("config_hash", "?") + " vs " + cfg.config_hash() + ")");

    const auto model = build_network_model(cfg);
    const std::string tag_path = out_dir + "/" + manifest.value("tag_file", "tags.bin");
    const TagSetMeta meta{std::llround(cfg.duration_s * 1e12), cfg.seed.value_or(0),
                          cfg.config_hash()};
    const auto tags = manifest.value("format", "bin") == "csv"
                          ? read_tags_csv(tag_path, manifest.value("n_channels", 0), meta)
                          : read_tags_binary(tag_path, meta);

    const auto schedule = make_schedule(cfg, model.topology);
    const std::int64_t window = window_override_ps > 0 ? window_override_ps : cfg.window_ps;

    std::filesystem::create_directories(out_dir);

    if (schedule.mode == ScheduleMode::Chsh) {
        const auto& link = model.topology.link_by_name(cfg.schedule.link);
        const double s = estimate_chsh(tags, schedule, model.topology, link, window);
        detail::write_text_file(
            out_dir + "/chsh.json",
            json{{"link", cfg.schedule.link}, {"s", s}, {"window_ps", window}}.dump(2) + "\n");
        log << "link " << cfg.schedule.link << ": S = " << s << "\n";
        return;
    }
    if (schedule.mode == ScheduleMode::Tomography) {
        const auto& link = model.topology.link_by_name(cfg.schedule.link);
        const auto res = run_tomography(tags, schedule, model.topology, link, window);
        json rho = json::array();
        for (int i = 0; i < 4; ++i) {
            json row = json::array();
            for (int j = 0; j < 4; ++j)
                row.push_back({res.state.rho()(i, j).real(), res.state.rho()(i, j).imag()});
            rho.push_back(row);
        }
        detail::write_text_file(out_dir + "/tomography.json",
                                json{{"link", cfg.schedule.link},
                                     {"fidelity", res.fidelity},
                                     {"bell", to_string(link.bell)},
                                     {"rho", rho}}
                                        .dump(2) +
                                    "\n");
        log << "link " << cfg.schedule.link << ": fidelity to " << to_string(link.bell)
            << " = " << res.fidelity << "\n";
        return;
    }

    const auto& links = model.topology.links;
    std::vector<LinkMetrics> metrics(links.size());
    const auto work = [&](std::size_t i) {
        metrics[i] = estimate_link_metrics(tags, schedule, model.topology, links[i], window,
                                           1.1, cfg.sifted_convention);
    };
    if (threads > 1) {
        std::vector<std::future<void>> jobs;
        for (std::size_t i = 0; i < links.size(); ++i)
            jobs.push_back(std::async(std::launch::async, work, i));
        for (auto& j : jobs) j.get();
    } else {
        for (std::size_t i = 0; i < links.size(); ++i) work(i);
    }

    std::map<UserPair, LinkMetrics> by_pair;
    for (std::size_t i = 0; i < links.size(); ++i)
        by_pair[{links[i].user_a, links[i].user_b}] = metrics[i];
    const auto rep = network_report(model.topology, by_pair);

    json out{{"config_hash", cfg.config_hash()},
             {"duration_s", cfg.duration_s},
             {"window_ps", window},
             {"totals", {{"sifted_per_s", rep.sifted_total}, {"secure_per_s", rep.secure_total}}}};
    out["links"] = json::array();
    for (const auto& l : rep.links) {
        json lj = detail::metrics_to_json(l.metrics);
        lj["name"] = l.name;
        lj["bell"] = to_string(l.bell);
        out["links"].push_back(lj);
    }
    detail::write_text_file(out_dir + "/report.json", out.dump(2) + "\n");

    std::ostringstream csv;
    write_links_csv(rep, csv);
    detail::write_text_file(out_dir + "/links.csv", csv.str());

    log << "analyzed " << rep.links.size() << " links: sifted " << rep.sifted_total
        << " /s, secure " << rep.secure_total << " /s\n";
    log << "wrote " << out_dir << "/report.json, " << out_dir << "/links.csv\n";
}

/// Source performance vs pump power for one temperature profile.
inline void cmd_scan(const TempProfile& profile, const std::vector<double>& powers,
                     int k_sources, const std::string& out_file,
                     std::ostream& log = std::cout) {
    const auto rows = scan_power(profile, powers, k_sources);
    std::ostringstream csv;
    csv << "power_mw,coincidence_per_s,s\n";
    csv.precision(10);
    for (const auto& r : rows)
        csv << r.power_mw << ',' << r.coincidence_rate << ',' << r.s_param << '\n';
    if (out_file.empty() || out_file == "-") {
        log << csv.str();
    } else {
        detail::write_text_file(out_file, csv.str());
        log << "wrote " << rows.size() << " rows to " << out_file << "\n";
    }
}

/// Pretty-print a previously written report.json.
inline void cmd_report(const std::string& report_path, std::ostream& log = std::cout) {
    std::ifstream in(report_path);
    if (!in) throw data_error("cannot open \"" + report_path + "\"");
    json rep;
    try {
        in >> rep;
    } catch (const json::parse_error& e) {
        throw data_error("report parse error: " + std::string(e.what()));
    }
    log << "link  bell  coinc/s     acc/s    V_HV   V_DA   QBER   sifted/s   secure/s\n";
    for (const auto& l : rep.at("links")) {
        log << std::left << std::setw(6) << l.at("name").get<std::string>() << std::setw(6)
            << l.at("bell").get<std::string>() << std::right << std::fixed
            << std::setprecision(0) << std::setw(8) << l.at("coincidence_rate").get<double>()
            << std::setw(10) << l.at("accidental_rate").get<double>() << std::setprecision(4)
            << std::setw(9) << l.at("v_hv").get<double>() << std::setw(7)
            << l.at("v_da").get<double>() << std::setw(7) << l.at("qber").get<double>()
            << std::setprecision(0) << std::setw(11) << l.at("sifted").get<double>()
            << std::setw(11) << l.at("secure").get<double>() << "\n";
    }
    log << "totals: sifted " << rep.at("totals").at("sifted_per_s").get<double>()
        << " /s, secure " << rep.at("totals").at("secure_per_s").get<double>() << " /s\n";
}

/// Entry point shared by the binary and the tests.
inline int cli_main(int argc, const char* const* argv, std::ostream& log = std::cout,
                    std::ostream& err = std::cerr) {
    CLI::App app{"planner, simulator and analyzer for multiplexed entanglement QKD networks"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", profile_name = "T39.7", scan_out, report_in;
    std::uint64_t seed_override = 0;
    bool seed_set = false;
    int threads = 1, scan_k = 1;
    std::int64_t window_ps = 0;
    std::vector<double> powers;
    std::string tag_format;

    auto* plan = app.add_subcommand("plan", "derive and write the network topology");
    plan->add_option("--config", config_path, "run configuration JSON")->required();
    plan->add_option("--out", out_dir, "output directory");

    auto* sim = app.add_subcommand("simulate", "generate time tags for the configured network");
    sim->add_option("--config", config_path, "run configuration JSON")->required();
    sim->add_option("--out", out_dir, "output directory");
    sim->add_option("--seed", seed_override, "override sim.seed")
        ->each([&](const std::string&) { seed_set = true; });
    sim->add_option("--threads", threads, "parallel source streams");
    sim->add_option("--format", tag_format, "tag file format")
        ->check(CLI::IsMember({"csv", "bin"}));

    auto* ana = app.add_subcommand("analyze", "compute link metrics from simulated tags");
    ana->add_option("--config", config_path, "run configuration JSON")->required();
    ana->add_option("--out", out_dir, "directory holding tags; receives reports");
    ana->add_option("--window-ps", window_ps, "coincidence window override (full width, ps)");
    ana->add_option("--threads", threads, "parallel link analysis");

    auto* scan = app.add_subcommand("scan", "pump-power scan of a source profile");
    scan->add_option("--profile", profile_name, "built-in profile name (T39.7 | T37.7)");
    scan->add_option("--powers", powers, "pump powers in mW")->required()->delimiter(',');
    scan->add_option("--k", scan_k, "number of diametric sources sharing the ring");
    scan->add_option("--out", scan_out, "output CSV path (default stdout)");

    auto* rep = app.add_subcommand("report", "pretty-print a report.json");
    rep->add_option("--in", report_in, "path to report.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            log << app.help();
            return 0;
        }
        err << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (app.got_subcommand(plan)) {
            cmd_plan(load_config(config_path), out_dir, log);
        } else if (app.got_subcommand(sim)) {
            auto cfg = load_config(config_path);
            if (seed_set) cfg.seed = seed_override;
            if (!tag_format.empty()) cfg.output.tag_format = tag_format;
            cmd_simulate(cfg, out_dir, threads, log);
        } else if (app.got_subcommand(ana)) {
            cmd_analyze(load_config(config_path), out_dir, window_ps, threads, log);
        } else if (app.got_subcommand(scan)) {
            cmd_scan(profile_by_name(profile_name), powers, scan_k, scan_out, log);
        } else if (app.got_subcommand(rep)) {
            cmd_report(report_in, log);
        }
    } catch (const config_error& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::domain_error& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const data_error& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

}  // namespace ringqkd
