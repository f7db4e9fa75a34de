// Command-line front end: run a scenario, compare strategies on one, or print
// the size and cost arithmetic.

#include "dassim/arithmetic.hpp"
#include "dassim/scenario_io.hpp"
#include "dassim/simulation.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using namespace dassim;

namespace {

struct Options {
    std::string scenario_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    bool plot = false;
    std::vector<std::string> strategies{"centralized", "gossip", "dht"};
};

Scenario load(const Options& o) {
    auto s = load_scenario(o.scenario_path);
    if (o.seed) s.seed = *o.seed;
    s.validate();
    return s;
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

// Two panels: total bytes per slot as grouped bars, p99 latency per slot as
// lines. One colour per strategy.
std::string render_svg(const std::string& title, const std::vector<CsvRecord>& rows) {
    static const char* palette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2"};
    std::vector<std::string> names;
    std::uint64_t max_slot = 0;
    double max_mb = 0, max_p99 = 0;
    for (const auto& r : rows) {
        if (std::find(names.begin(), names.end(), r.strategy) == names.end()) names.push_back(r.strategy);
        max_slot = std::max(max_slot, r.slot);
        max_mb = std::max(max_mb, static_cast<double>(r.bytes_cell + r.bytes_signaling + r.bytes_header) / kMB);
        if (!std::isnan(r.p99_ms)) max_p99 = std::max(max_p99, r.p99_ms);
    }
    if (max_mb <= 0) max_mb = 1;
    if (max_p99 <= 0) max_p99 = 1;

    const double W = 720, H = 260, left = 70, right = 20, top = 40, bottom = 40;
    const double pw = W - left - right, ph = H - top - bottom;
    const auto slots = static_cast<double>(max_slot + 1);
    const double group = pw / slots, bar = group * 0.8 / static_cast<double>(names.size());

    std::ostringstream os;
    os << std::fixed << std::setprecision(1);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << 2 * H + 30
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<text x=\"" << left << "\" y=\"18\" font-size=\"14\">" << svg_escape(title) << "</text>\n";
    for (std::size_t i = 0; i < names.size(); ++i)
        os << "<rect x=\"" << left + 150 * static_cast<double>(i) << "\" y=\"" << 2 * H + 10
           << "\" width=\"10\" height=\"10\" fill=\"" << palette[i % 5] << "\"/><text x=\""
           << left + 150 * static_cast<double>(i) + 14 << "\" y=\"" << 2 * H + 19 << "\">" << svg_escape(names[i])
           << "</text>\n";

    auto axes = [&](double y0, const char* label, double max) {
        os << "<line x1=\"" << left << "\" y1=\"" << y0 + ph << "\" x2=\"" << left + pw << "\" y2=\"" << y0 + ph
           << "\" stroke=\"black\"/>\n<line x1=\"" << left << "\" y1=\"" << y0 << "\" x2=\"" << left << "\" y2=\""
           << y0 + ph << "\" stroke=\"black\"/>\n";
        os << "<text x=\"4\" y=\"" << y0 + 10 << "\">" << label << "</text>\n";
        os << "<text x=\"" << left - 4 << "\" y=\"" << y0 + 4 << "\" text-anchor=\"end\">" << max << "</text>\n";
        os << "<text x=\"" << left + pw / 2 << "\" y=\"" << y0 + ph + 28 << "\" text-anchor=\"middle\">slot</text>\n";
    };

    axes(top, "total MB", max_mb);
    for (const auto& r : rows) {
        const auto i = static_cast<double>(std::find(names.begin(), names.end(), r.strategy) - names.begin());
        const double mb = static_cast<double>(r.bytes_cell + r.bytes_signaling + r.bytes_header) / kMB;
        const double h = ph * mb / max_mb;
        const double x = left + group * static_cast<double>(r.slot) + group * 0.1 + bar * i;
        os << "<rect x=\"" << x << "\" y=\"" << top + ph - h << "\" width=\"" << bar << "\" height=\"" << h
           << "\" fill=\"" << palette[static_cast<std::size_t>(i) % 5] << "\"/>\n";
    }

    const double y1 = H + top;
    axes(y1, "p99 ms", max_p99);
    for (std::size_t i = 0; i < names.size(); ++i) {
        os << "<polyline fill=\"none\" stroke=\"" << palette[i % 5] << "\" stroke-width=\"2\" points=\"";
        for (const auto& r : rows) {
            if (r.strategy != names[i] || std::isnan(r.p99_ms)) continue;
            os << left + group * (static_cast<double>(r.slot) + 0.5) << ',' << y1 + ph - ph * r.p99_ms / max_p99 << ' ';
        }
        os << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

void emit(const Options& o, const Scenario& s, const std::string& stem, const std::vector<SlotReport>& reports) {
    fs::path csv_path;
    if (!o.out_dir.empty()) {
        fs::create_directories(o.out_dir);
        csv_path = fs::path(o.out_dir) / (stem + ".csv");
    } else if (!s.output.empty()) {
        csv_path = s.output;
        if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
    }
    if (csv_path.empty()) {
        if (o.plot) std::cerr << "note: --plot needs a CSV destination (--out or output in the scenario)\n";
        return;
    }
    {
        std::ofstream out(csv_path, std::ios::binary);
        if (!out) throw Error("cannot write " + csv_path.string());
        write_csv(out, reports);
    }
    std::cout << "csv: " << csv_path.string() << '\n';
    if (o.plot) {
        std::ifstream in(csv_path);
        const auto rows = read_csv(in);
        auto svg_path = csv_path;
        svg_path.replace_extension(".svg");
        std::ofstream(svg_path, std::ios::binary) << render_svg(stem, rows);
        std::cout << "plot: " << svg_path.string() << '\n';
    }
}

int arithmetic_only(const Scenario& s) {
    ArithmeticInputs in;
    in.geometry = s.geometry;
    in.validators = s.validators;
    in.regulars = s.regulars;
    in.regular_samples = s.regular_samples;
    in.cost = s.cost;
    const auto rows = arithmetic_table(in);
    std::cout << format_arithmetic(rows);
    return arithmetic_ok(rows) ? 0 : 1;
}

int cmd_run(const Options& o) {
    const auto s = load(o);
    std::cout << "scenario " << s.name << ", seed " << s.seed << ", strategy " << to_string(s.strategy.kind) << ", "
              << s.validators << " validators, " << s.regulars << " regulars, " << s.slots << " slots\n";
    if (s.slots == 0) {
        const int rc = arithmetic_only(s);
        emit(o, s, s.name, {});
        return rc;
    }
    const auto result = run_scenario(s);
    std::cout << format_summary(result.reports);
    for (const auto& r : result.reports)
        if (r.withheld_cells || r.target_gets_ok || r.target_gets_failed)
            std::cout << "slot " << r.slot << ": withheld " << r.withheld_cells << ", target gets ok "
                      << r.target_gets_ok << ", failed " << r.target_gets_failed << '\n';
    std::cout << "trace " << hex(result.trace_hash) << '\n';
    emit(o, s, s.name, result.reports);
    return 0;
}

int cmd_compare(const Options& o) {
    const auto s = load(o);
    std::vector<StrategyKind> kinds;
    for (const auto& name : o.strategies) kinds.push_back(parse_strategy_kind(name));
    if (kinds.empty()) throw ConfigError("--strategies: at least one strategy is required");
    std::cout << "scenario " << s.name << ", seed " << s.seed << ", " << s.validators << " validators, "
              << s.regulars << " regulars, " << s.slots << " slots\n";

    const auto results = compare_strategies(s, kinds);
    std::vector<SlotReport> merged;
    for (std::uint32_t slot = 0; slot < s.slots; ++slot)
        for (const auto& r : results) merged.push_back(r.reports.at(slot));
    std::cout << format_summary(merged);
    for (const auto& r : results) {
        std::uint64_t ok = 0, failed = 0;
        for (const auto& rep : r.reports) {
            ok += rep.target_gets_ok;
            failed += rep.target_gets_failed;
        }
        std::cout << to_string(r.strategy) << ": trace " << hex(r.trace_hash);
        if (ok || failed) std::cout << ", target gets ok " << ok << ", failed " << failed;
        std::cout << '\n';
    }
    emit(o, s, s.name + "-compare", merged);
    return 0;
}

int cmd_check() {
    const auto rows = arithmetic_table();
    std::cout << "mainnet geometry, 500,000 validators, 1,200 regular nodes\n" << format_arithmetic(rows);
    const bool ok = arithmetic_ok(rows);
    std::cout << (ok ? "all checks within tolerance\n" : "arithmetic check FAILED\n");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete-event simulator for data availability sampling"};
    app.require_subcommand(1);
    Options o;

    auto* run = app.add_subcommand("run", "Run a scenario file");
    run->add_option("scenario", o.scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);

    auto* compare = app.add_subcommand("compare", "Run a scenario once per strategy and merge the results");
    compare->add_option("scenario", o.scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    compare->add_option("--strategies", o.strategies, "Comma-separated strategies")
        ->delimiter(',')
        ->capture_default_str();

    for (auto* sub : {run, compare}) {
        sub->add_option("--seed", o.seed, "Override the scenario seed");
        sub->add_option("--out", o.out_dir, "Directory for CSV output");
        sub->add_flag("--plot", o.plot, "Also render an SVG chart next to the CSV");
    }
    auto* check = app.add_subcommand("check", "Print the size and cost arithmetic table");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(o);
        if (*compare) return cmd_compare(o);
        if (*check) return cmd_check();
    } catch (const ConfigError& e) {
        std::cerr << "invalid scenario: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
