#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "dosefind/io.hpp"
#include "dosefind/prior.hpp"
#include "dosefind/service.hpp"

using namespace dosefind;
namespace fs = std::filesystem;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitRuntime = 3;

// Usage and input errors share exit code 2 with validation failures.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw UsageError(path + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty() || out_path == "-")
        std::cout << text;
    else
        write_text(out_path, text);
}

void print_validation(const ValidationError& e) {
    std::cerr << "error: validation failed\n";
    for (const auto& f : e.errors()) std::cerr << "  " << f.field << ": " << f.message << '\n';
}

int cmd_validate(const std::string& file) {
    const Design d = design_from_json(read_json(file));
    make_rule(d);
    std::cout << design_to_json(d).dump(2) << '\n';
    return 0;
}

int cmd_prior(const std::string& file) {
    const Design d = design_from_json(read_json(file));
    const ValidatedDesign& v = d.validated;
    const double sigma2 = crm_sigma2(d);
    const auto induced = moment_match(v.prior.skeleton, sigma2);
    std::printf("# sigma2=%.6f prior_mtd=%d\n", sigma2, v.prior_mtd);
    std::printf("dose,skeleton,mean,variance,a,b,pess\n");
    for (int j = 0; j < v.settings.num_doses; ++j) {
        const InducedBeta& b = induced[static_cast<std::size_t>(j)];
        std::printf("%d,%.4f,%.6f,%.6f,%.4f,%.4f,%.4f\n", j + 1, v.prior.skeleton[j], b.mean, b.variance, b.a,
                    b.b, b.pess());
    }
    return 0;
}

int cmd_table(const std::string& file, const std::string& format, const std::string& out) {
    const Design d = design_from_json(read_json(file));
    if (format == "csv")
        emit(out, decision_table_csv(d));
    else
        emit(out, decision_table_json(d).dump(2) + "\n");
    return 0;
}

struct SimulateArgs {
    std::string plan;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> workers;
    std::optional<int> n_trials;
    bool trials = false;
    bool quiet = false;
};

int cmd_simulate(const SimulateArgs& a) {
    SimulationPlan plan = plan_from_json(read_json(a.plan));
    plan.seed = *a.seed;
    if (a.workers) plan.workers = *a.workers;
    if (a.n_trials) plan.n_trials = *a.n_trials;
    plan.keep_trials = a.trials;
    validate_plan(plan);

    SimulationHooks hooks;
    int last = -1;
    if (!a.quiet)
        hooks.progress = [&](double f) {
            const int pct = static_cast<int>(f * 100.0);
            if (pct != last) {
                last = pct;
                std::fprintf(stderr, "\rsimulating %3d%%", pct);
                if (pct == 100) std::fputc('\n', stderr);
            }
        };
    const SimulationResult r = run_simulation(plan, hooks);

    if (a.out.empty()) {
        std::cout << oc_summary_csv(r);
        return 0;
    }
    const fs::path dir = a.out;
    fs::create_directories(dir);
    write_text(dir / "plan.json", plan_to_json(plan).dump(2) + "\n");
    write_text(dir / "oc_summary.csv", oc_summary_csv(r));
    write_text(dir / "aggregate.csv", aggregate_csv(r));
    write_text(dir / "aggregate.json", aggregate_json(r).dump(2) + "\n");
    write_text(dir / "result.json", result_to_json(r).dump(2) + "\n");
    if (a.trials) {
        std::ofstream t(dir / "trials.jsonl", std::ios::binary | std::ios::trunc);
        write_trials_jsonl(t, r);
    }
    if (!a.quiet) std::fprintf(stderr, "wrote %s\n", dir.c_str());
    return 0;
}

struct ConductArgs {
    std::string state_file;
    std::optional<int> dose;
    std::optional<int> n;
    std::optional<int> dlt;
    bool select = false;
    std::string out;
};

// The state file holds {"design": {...}, "state": {...}}; a missing state
// starts a new trial at the design's start dose.
int cmd_conduct(const ConductArgs& a) {
    json doc = read_json(a.state_file);
    if (!doc.is_object() || !doc.contains("design")) throw ValidationError("design", "state file needs a design");
    const Design d = design_from_json(doc.at("design"));
    const TrialSettings& s = d.validated.settings;
    TrialState state = doc.contains("state") && !doc.at("state").is_null() ? trial_state_from_json(doc.at("state"), s)
                                                                           : TrialState::start(s);
    const auto rule = make_rule(d);

    const bool recording = a.dose || a.n || a.dlt;
    if (recording) {
        if (!a.dose || !a.n || !a.dlt) throw UsageError("--dose, --n and --dlt go together");
        if (*a.n != s.cohort_size)
            throw ValidationError("n", "must equal the cohort size " + std::to_string(s.cohort_size));
        if (state.status(s) != TrialStatus::Active)
            throw IllegalTransition("trial is " + to_string(state.status(s)));
        if (*a.dose != state.current_dose)
            throw IllegalTransition("cohort must be treated at the recommended dose " +
                                    std::to_string(state.current_dose));
        state = apply_cohort(state, *a.dlt, s, *rule, d.options.elimination);
        doc["state"] = trial_state_to_json(state, s);
        write_text(a.out.empty() ? fs::path(a.state_file) : fs::path(a.out), doc.dump(2) + "\n");
    }

    json report = {{"status", to_string(state.status(s))}, {"version", state.history.size()}};
    if (!state.history.empty()) {
        const CohortRecord& rec = state.history.back();
        report["decision"] = to_string(rec.decision);
        report["recommended_dose"] = rec.next_dose;
    }
    report["next_dose"] = state.status(s) == TrialStatus::Active ? json(state.current_dose) : json(nullptr);
    if (a.select) {
        if (state.status(s) == TrialStatus::Active && !recording)
            std::cerr << "note: trial still active; selection uses the data so far\n";
        report["selection"] = to_json(rule->select(state, s.target));
    }
    std::cout << report.dump(2) << '\n';
    return 0;
}

struct ServeArgs {
    std::string bind;
    std::string data_dir;
    std::optional<int> workers;
    std::string static_dir;
};

int cmd_serve(const ServeArgs& a) {
    ServiceConfig config = service_config_from_env();
    if (!a.bind.empty()) {
        const auto colon = a.bind.rfind(':');
        if (colon == std::string::npos) throw UsageError("--bind expects host:port");
        config.host = a.bind.substr(0, colon);
        config.port = std::stoi(a.bind.substr(colon + 1));
    }
    if (!a.data_dir.empty()) config.data_dir = a.data_dir;
    if (a.workers) config.workers = *a.workers;
    if (!a.static_dir.empty()) config.static_dir = a.static_dir;
    Service service(config);
    std::fprintf(stderr, "dosefind listening on %s:%d (data in %s)\n", config.host.c_str(), config.port,
                 config.data_dir.c_str());
    if (!service.listen()) {
        std::fprintf(stderr, "error: cannot bind %s:%d\n", config.host.c_str(), config.port);
        return kExitRuntime;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dose-finding designs: decision tables, simulation, trial conduct and a JSON service"};
    app.require_subcommand(1);
    app.set_version_flag("--version", DOSEFIND_VERSION);

    std::string design_file;
    auto* validate = app.add_subcommand("validate", "Check a design file and print it with resolved fields");
    validate->add_option("design", design_file, "Design JSON file")->required();

    auto* prior = app.add_subcommand("prior", "Print the induced beta prior per dose");
    prior->add_option("design", design_file, "Design JSON file")->required();

    std::string format = "csv", out;
    auto* table = app.add_subcommand("table", "Export the decision table of a BOIN or keyboard design");
    table->add_option("design", design_file, "Design JSON file")->required();
    table->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    table->add_option("-o,--out", out, "Output file (default stdout)");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Run a simulation plan");
    simulate->add_option("plan", sim.plan, "Plan JSON file")->required();
    simulate->add_option("--seed", sim.seed, "Master seed")->required();
    simulate->add_option("--out", sim.out, "Output directory (default: summary CSV on stdout)");
    simulate->add_option("--workers", sim.workers, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
    simulate->add_option("--n-trials", sim.n_trials, "Trials per design and scenario")->check(CLI::PositiveNumber);
    simulate->add_flag("--trials", sim.trials, "Also write trials.jsonl with every simulated trial");
    simulate->add_flag("-q,--quiet", sim.quiet, "No progress on stderr");

    ConductArgs con;
    auto* conduct = app.add_subcommand("conduct", "Record a cohort or select the MTD for a trial state file");
    conduct->add_option("state", con.state_file, "JSON file {design, state}")->required();
    conduct->add_option("--dose", con.dose, "Dose the cohort received");
    conduct->add_option("--n", con.n, "Cohort size");
    conduct->add_option("--dlt", con.dlt, "Number of DLTs in the cohort");
    conduct->add_flag("--select-mtd", con.select, "Report the MTD selection");
    conduct->add_option("--out", con.out, "Write the updated file here instead of in place");

    ServeArgs srv;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--bind", srv.bind, "host:port (default from DOSEFIND_BIND or 127.0.0.1:8080)");
    serve->add_option("--data-dir", srv.data_dir, "Data directory");
    serve->add_option("--workers", srv.workers, "Simulation threads per job");
    serve->add_option("--static-dir", srv.static_dir, "Directory served at /");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInvalid;
    }

    try {
        if (*validate) return cmd_validate(design_file);
        if (*prior) return cmd_prior(design_file);
        if (*table) return cmd_table(design_file, format, out);
        if (*simulate) return cmd_simulate(sim);
        if (*conduct) return cmd_conduct(con);
        if (*serve) return cmd_serve(srv);
    } catch (const ValidationError& e) {
        print_validation(e);
        return kExitInvalid;
    } catch (const IllegalTransition& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
