#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sys/wait.h>

#include "dosefind/io.hpp"

using namespace dosefind;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
};

// Runs the CLI with stderr discarded and returns its exit code and stdout.
Run cli(const std::string& args) {
    const std::string cmd = std::string(DOSEFIND_CLI) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    std::array<char, 4096> buf{};
    std::size_t got;
    while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), got);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

struct Workdir {
    fs::path path;
    Workdir() {
        path = fs::temp_directory_path() / ("dosefind-cli-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~Workdir() { fs::remove_all(path); }
    std::string write(const std::string& name, const json& j) const {
        std::ofstream(path / name) << j.dump(2);
        return (path / name).string();
    }
    std::string read(const std::string& name) const {
        std::ifstream in(path / name);
        return {std::istreambuf_iterator<char>(in), {}};
    }
};

json design_json(const std::string& kind = "boin", double pess = 3.0) {
    return {{"design", kind},
            {"num_doses", 5},
            {"target", 0.3},
            {"max_n", 30},
            {"cohort_size", 3},
            {"skeleton", {0.10, 0.19, 0.30, 0.42, 0.54}},
            {"pess", {pess, pess, pess, pess, pess}}};
}

}  // namespace

TEST_CASE("cli: version and help") {
    const Run v = cli("--version");
    CHECK(v.code == 0);
    CHECK(v.out == std::string(DOSEFIND_VERSION) + "\n");
    CHECK(cli("--help").code == 0);
    for (const char* sub : {"validate", "prior", "table", "simulate", "conduct", "serve"}) {
        const Run h = cli(std::string(sub) + " --help");
        CAPTURE(sub);
        CHECK(h.code == 0);
        CHECK(h.out.find("Usage") != std::string::npos);
    }
    CHECK(cli("bogus").code == 2);
}

TEST_CASE("cli: tables match the library export") {
    Workdir w;
    for (const char* kind : {"boin", "keyboard"})
        for (double pess : {0.0, 3.0}) {
            const json d = design_json(kind, pess);
            const std::string file = w.write("design.json", d);
            const Run r = cli("table " + file + " --format csv");
            CAPTURE(kind);
            CHECK(r.code == 0);
            CHECK(r.out == decision_table_csv(design_from_json(d)));
            CHECK(cli("table " + file + " --format csv -o " + (w.path / "t.csv").string()).code == 0);
            CHECK(w.read("t.csv") == r.out);
        }
    const Run j = cli("table " + w.write("d.json", design_json()) + " --format json");
    CHECK(json::parse(j.out) == decision_table_json(design_from_json(design_json())));
    CHECK(cli("table " + w.write("crm.json", design_json("crm")) + " --format csv").code == 2);
}

TEST_CASE("cli: validate and prior") {
    Workdir w;
    const Run ok = cli("validate " + w.write("d.json", design_json()));
    CHECK(ok.code == 0);
    CHECK(json::parse(ok.out)["resolved"]["prior_mtd"] == 3);
    json bad = design_json();
    bad["skeleton"] = {0.1, 0.3, 0.2, 0.4, 0.5};
    CHECK(cli("validate " + w.write("bad.json", bad)).code == 2);
    CHECK(cli("validate " + (w.path / "missing.json").string()).code == 2);
    std::ofstream(w.path / "junk.json") << "{";
    CHECK(cli("validate " + (w.path / "junk.json").string()).code == 2);

    const Run p = cli("prior " + w.write("crm.json", design_json("crm")));
    CHECK(p.code == 0);
    CHECK(p.out.rfind("# sigma2=", 0) == 0);
    CHECK(p.out.find("dose,skeleton,mean,variance,a,b,pess") != std::string::npos);
}

TEST_CASE("cli: simulate is reproducible") {
    Workdir w;
    const std::string plan = w.write("plan.json", {{"designs", {"BOIN", "iBOIN"}}, {"scenarios", {"S2", "S7"}},
                                                   {"n_trials", 200}});
    const Run a = cli("simulate " + plan + " --seed 11 -q");
    const Run b = cli("simulate " + plan + " --seed 11 -q --workers 3");
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out.rfind("design,scenario,mtd", 0) == 0);
    CHECK(cli("simulate " + plan + " --seed 12 -q").out != a.out);
    CHECK(cli("simulate " + plan).code == 2);

    const fs::path out = w.path / "run";
    CHECK(cli("simulate " + plan + " --seed 11 -q --trials --out " + out.string()).code == 0);
    for (const char* f : {"plan.json", "oc_summary.csv", "aggregate.csv", "aggregate.json", "result.json",
                          "trials.jsonl"})
        CHECK(fs::exists(out / f));
    CHECK(w.read("run/oc_summary.csv") == a.out);
    CHECK(cli("simulate " + w.write("bad.json", {{"designs", {"nope"}}, {"scenarios", {"S1"}}}) + " --seed 1")
              .code == 2);
}

TEST_CASE("cli: conduct walks a trial") {
    Workdir w;
    const std::string file = w.write("trial.json", {{"design", design_json()}});
    const Run first = cli("conduct " + file + " --dose 1 --n 3 --dlt 0");
    CHECK(first.code == 0);
    const json r = json::parse(first.out);
    CHECK(r["decision"] == "Escalate");
    CHECK(r["next_dose"] == 2);
    CHECK(r["version"] == 1);

    CHECK(cli("conduct " + file + " --dose 1 --n 3 --dlt 0").code == 2);  // not the current dose
    CHECK(cli("conduct " + file + " --dose 2 --n 2 --dlt 0").code == 2);  // wrong cohort size
    CHECK(cli("conduct " + file + " --dose 2 --n 3").code == 2);

    int dose = 2;
    for (int c = 1; c < 10; ++c) {
        const Run step = cli("conduct " + file + " --dose " + std::to_string(dose) + " --n 3 --dlt 1");
        REQUIRE(step.code == 0);
        const json s = json::parse(step.out);
        if (s["next_dose"].is_null()) break;
        dose = s["next_dose"];
    }
    const Run sel = cli("conduct " + file + " --select-mtd");
    CHECK(sel.code == 0);
    const json doc = json::parse(w.read("trial.json"));
    const Design d = design_from_json(doc["design"]);
    const TrialState st = trial_state_from_json(doc["state"], d.validated.settings);
    CHECK(st.status(d.validated.settings) == TrialStatus::Complete);
    CHECK(json::parse(sel.out)["selection"] == to_json(make_rule(d)->select(st, 0.3)));
    CHECK(cli("conduct " + file + " --dose " + std::to_string(st.current_dose) + " --n 3 --dlt 0").code == 2);
}
