#include <doctest.h>

#include <chrono>
#include <fstream>
#include <random>
#include <thread>

#include "dosefind/service.hpp"
#include "oracles.hpp"

#include <httplib.h>

using namespace dosefind;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("dosefind-test-" + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

json example_payload() {
    return {{"design", "boin"}, {"num_doses", 5},  {"target", 0.3},   {"max_n", 30},
            {"cohort_size", 3}, {"start_dose", 1}, {"skeleton", {0.10, 0.19, 0.30, 0.42, 0.54}},
            {"pess", {3, 3, 3, 3, 3}}};
}

ServiceConfig config_for(const TempDir& dir) {
    ServiceConfig c;
    c.data_dir = dir.path;
    c.workers = 1;
    return c;
}

HttpResponse call(Service& s, const std::string& method, const std::string& path, const json& body = nullptr,
                  std::map<std::string, std::string> query = {}) {
    return s.handle({method, path, body.is_null() ? "" : body.dump(), std::move(query)});
}

json body_of(const HttpResponse& r) { return json::parse(r.body); }

std::string create_design(Service& s, const json& payload = example_payload()) {
    const HttpResponse r = call(s, "POST", "/designs", payload);
    REQUIRE(r.status == 201);
    return body_of(r)["id"];
}

std::string create_trial(Service& s, const std::string& design_id) {
    const HttpResponse r = call(s, "POST", "/trials", {{"design_id", design_id}});
    REQUIRE(r.status == 201);
    return body_of(r)["id"];
}

HttpResponse cohort(Service& s, const std::string& trial, int dose, int dlt, std::optional<int> version = {}) {
    json b = {{"dose", dose}, {"n", 3}, {"n_dlt", dlt}};
    if (version) b["version"] = *version;
    return call(s, "POST", "/trials/" + trial + "/cohorts", b);
}

}  // namespace

TEST_CASE("design records expose their decision table") {
    TempDir dir;
    Service s(config_for(dir));
    const std::string id = create_design(s);
    CHECK(fs::exists(dir.path / "designs" / (id + ".json")));

    const HttpResponse csv = call(s, "GET", "/designs/" + id + "/decision-table", nullptr, {{"format", "csv"}});
    CHECK(csv.status == 200);
    CHECK(csv.content_type == "text/csv");
    CHECK(csv.headers.at("Content-Disposition").find("attachment") != std::string::npos);
    std::istringstream in(csv.body);
    std::string line;
    std::getline(in, line);
    for (int j = 0; j < 5; ++j) {
        std::string expect_e = std::to_string(j + 1) + ",escalate", expect_d = std::to_string(j + 1) + ",deescalate";
        for (int c = 0; c < 10; ++c) {
            expect_e += "," + std::to_string(oracle::kExampleEscalate[j][c]);
            expect_d += "," + std::to_string(oracle::kExampleDeescalate[j][c]);
        }
        std::getline(in, line);
        CHECK(line == expect_e);
        std::getline(in, line);
        CHECK(line == expect_d);
        std::getline(in, line);  // eliminate
    }
    const HttpResponse js = call(s, "GET", "/designs/" + id + "/decision-table");
    CHECK(js.status == 200);
    CHECK(body_of(js)["doses"][0]["escalate"][0] == 1);
    CHECK(call(s, "GET", "/designs/" + id).body == call(s, "GET", "/designs/" + id).body);

    // Duplicate submissions are separate records.
    CHECK(create_design(s) != id);
    CHECK(body_of(call(s, "GET", "/designs")).size() == 2);
}

TEST_CASE("invalid designs are rejected without a record") {
    TempDir dir;
    Service s(config_for(dir));
    json bad = example_payload();
    bad["skeleton"] = {0.1, 0.3, 0.2, 0.4, 0.5};
    bad["target"] = 2;
    const HttpResponse r = call(s, "POST", "/designs", bad);
    CHECK(r.status == 422);
    const json b = body_of(r);
    CHECK(b["fields"].size() >= 1);
    CHECK(b["fields"][0].contains("message"));
    CHECK(fs::is_empty(dir.path / "designs"));
    CHECK(s.handle({"POST", "/designs", "{not json", {}}).status == 400);
    CHECK(call(s, "GET", "/designs/nope").status == 404);
    CHECK(call(s, "GET", "/nowhere").status == 404);
    CHECK(call(s, "DELETE", "/designs").status == 405);

    json crm = example_payload();
    crm["design"] = "crm";
    const std::string id = create_design(s, crm);
    CHECK(call(s, "GET", "/designs/" + id + "/decision-table").status == 409);
}

TEST_CASE("conducting a trial") {
    TempDir dir;
    Service s(config_for(dir));
    const std::string design = create_design(s);
    const std::string trial = create_trial(s, design);

    CHECK(body_of(cohort(s, trial, 1, 0))["next_dose"] == 2);
    CHECK(body_of(cohort(s, trial, 2, 0))["next_dose"] == 3);
    const HttpResponse r = cohort(s, trial, 3, 0);
    REQUIRE(r.status == 200);
    const json b = body_of(r);
    CHECK(b["decision"] == "Escalate");
    CHECK(b["next_dose"] == 4);
    CHECK(b["message"] == "Escalate to dose 4");
    CHECK(b["version"] == 3);
    CHECK(b["state"]["doses"][2]["n"] == 3);

    CHECK(cohort(s, trial, 3, 0).status == 409);           // wrong dose
    CHECK(cohort(s, trial, 4, 0, 2).status == 409);        // stale version
    CHECK(cohort(s, trial, 4, 4).status == 422);           // too many DLTs
    CHECK(call(s, "POST", "/trials/" + trial + "/cohorts", {{"dose", 4}, {"n", 2}, {"n_dlt", 0}}).status == 422);
    CHECK(call(s, "POST", "/trials/" + trial + "/cohorts", {{"dose", 4}}).status == 422);
    CHECK(call(s, "POST", "/trials/" + trial + "/select-mtd").status == 409);
    CHECK(call(s, "POST", "/trials", {{"design_id", "missing"}}).status == 404);

    for (int i = 0; i < 7; ++i) {
        const json st = body_of(call(s, "GET", "/trials/" + trial));
        REQUIRE(st["status"] == "active");
        REQUIRE(cohort(s, trial, st["next_dose"], 1).status == 200);
    }
    const json done = body_of(call(s, "GET", "/trials/" + trial));
    CHECK(done["status"] == "complete");
    CHECK(done["state"]["total_enrolled"] == 30);
    CHECK(cohort(s, trial, done["state"]["current_dose"], 0).status == 409);
    const HttpResponse sel = call(s, "POST", "/trials/" + trial + "/select-mtd");
    CHECK(sel.status == 200);
    CHECK(body_of(sel)["selected_dose"].is_number_integer());
    CHECK(body_of(sel)["method"] == "prior-isotonic");
}

TEST_CASE("three DLTs at the lowest dose terminate the trial") {
    TempDir dir;
    Service s(config_for(dir));
    const std::string trial = create_trial(s, create_design(s));
    const json b = body_of(cohort(s, trial, 1, 3));
    CHECK(b["decision"] == "TerminateTrial");
    CHECK(b["status"] == "terminated");
    CHECK(b["next_dose"].is_null());
    CHECK(b["message"] == "Trial terminated: lowest dose eliminated");
    CHECK(cohort(s, trial, 1, 0).status == 409);
    const json sel = body_of(call(s, "POST", "/trials/" + trial + "/select-mtd"));
    CHECK(sel["selected_dose"].is_null());
}

TEST_CASE("trial logs replay after a restart and survive a torn write") {
    TempDir dir;
    std::string design, trial;
    json before;
    {
        Service s(config_for(dir));
        design = create_design(s);
        trial = create_trial(s, design);
        cohort(s, trial, 1, 0);
        cohort(s, trial, 2, 1);
        before = body_of(call(s, "GET", "/trials/" + trial));
    }
    const fs::path log = dir.path / "trials" / (trial + ".jsonl");
    const auto clean_size = fs::file_size(log);
    {
        std::ofstream out(log, std::ios::app);
        out << R"({"type":"cohort","version":3,"dose":2,"n":3,"n_)";
    }
    {
        Service s(config_for(dir));
        const json after = body_of(call(s, "GET", "/trials/" + trial));
        CHECK(after["state"] == before["state"]);
        CHECK(after["version"] == 2);
        CHECK(fs::file_size(log) == clean_size);
        CHECK(cohort(s, trial, before["next_dose"], 0).status == 200);
    }
    {
        Service s(config_for(dir));
        CHECK(body_of(call(s, "GET", "/trials/" + trial))["version"] == 3);
    }
}

TEST_CASE("designs whose tables no longer match are not loaded") {
    TempDir dir;
    std::string id;
    {
        Service s(config_for(dir));
        id = create_design(s);
    }
    const fs::path file = dir.path / "designs" / (id + ".json");
    json record = json::parse(std::ifstream(file));
    record["table_digest"] = "0000000000000000";
    std::ofstream(file) << record.dump();
    Service s(config_for(dir));
    CHECK(call(s, "GET", "/designs/" + id).status == 404);
}

TEST_CASE("concurrent posts on one snapshot: exactly one wins") {
    TempDir dir;
    Service s(config_for(dir));
    const std::string trial = create_trial(s, create_design(s));
    for (int round = 0; round < 5; ++round) {
        const json st = body_of(call(s, "GET", "/trials/" + trial));
        const int version = st["version"], dose = st["next_dose"];
        std::atomic<int> ok{0}, conflict{0};
        std::vector<std::thread> threads;
        for (int t = 0; t < 4; ++t)
            threads.emplace_back([&] {
                const int code = cohort(s, trial, dose, 0, version).status;
                if (code == 200) ++ok;
                if (code == 409) ++conflict;
            });
        for (auto& t : threads) t.join();
        CHECK(ok == 1);
        CHECK(conflict == 3);
    }
}

TEST_CASE("simulation jobs") {
    TempDir dir;
    Service s(config_for(dir));
    const std::string design = create_design(s);

    const HttpResponse r = call(s, "POST", "/designs/" + design + "/simulations",
                                {{"scenarios", {"S5", {{"label", "flat"}, {"true_p", {0.05, 0.1, 0.3, 0.5, 0.6}}}}},
                                 {"n_trials", 200},
                                 {"seed", 3},
                                 {"compare_noninformative", true}});
    REQUIRE(r.status == 202);
    const std::string job = body_of(r)["id"];
    const json polled = body_of(call(s, "GET", "/simulations/" + job));
    CHECK(polled["fraction_done"] >= 0.0);
    CHECK(polled["fraction_done"] <= 1.0);
    s.wait_for_job(job);
    const json done = body_of(call(s, "GET", "/simulations/" + job));
    CHECK(done["state"] == "completed");
    CHECK(done["result"]["oc"].size() == 4);
    CHECK(done["result"]["oc"][0].contains("risk_poor_allocation"));
    const HttpResponse csv = call(s, "GET", "/simulations/" + job, nullptr, {{"format", "csv"}});
    CHECK(csv.status == 200);
    CHECK(csv.body.rfind("design,scenario,mtd", 0) == 0);
    CHECK(call(s, "GET", "/simulations/" + job, nullptr, {{"format", "aggregate-csv"}}).status == 200);
    CHECK(fs::exists(dir.path / "simulations" / job / "oc_summary.csv"));
    CHECK(call(s, "POST", "/simulations/" + job + "/cancel").status == 409);

    CHECK(call(s, "POST", "/designs/nope/simulations", {{"scenarios", {"S1"}}}).status == 404);
    CHECK(call(s, "POST", "/designs/" + design + "/simulations", json::object()).status == 400);
    CHECK(call(s, "POST", "/designs/" + design + "/simulations", {{"scenarios", {"S1"}}, {"n_trials", 0}}).status ==
          400);

    Service reloaded(config_for(dir));
    CHECK(body_of(call(reloaded, "GET", "/simulations/" + job))["state"] == "completed");
}

TEST_CASE("a canceled job reports canceled") {
    TempDir dir;
    Service s(config_for(dir));
    const std::string design = create_design(s);
    const json plan = {{"scenarios", {"S1", "S2", "S3", "S4", "S5"}}, {"n_trials", 200000}, {"seed", 1}};
    const std::string first = body_of(call(s, "POST", "/designs/" + design + "/simulations", plan))["id"];
    const std::string second = body_of(call(s, "POST", "/designs/" + design + "/simulations", plan))["id"];
    // The second job is still queued behind the first.
    CHECK(body_of(call(s, "POST", "/simulations/" + second + "/cancel"))["state"] == "canceled");
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    CHECK(body_of(call(s, "POST", "/simulations/" + first + "/cancel"))["state"] == "canceled");
    CHECK(body_of(call(s, "GET", "/simulations/" + first))["state"] == "canceled");
}

TEST_CASE("the service answers over HTTP") {
    TempDir dir;
    ServiceConfig c = config_for(dir);
    c.port = 20000 + static_cast<int>(std::random_device{}() % 20000);
    Service s(c);
    std::thread server([&] { s.listen(); });
    httplib::Client client(c.host, c.port);
    std::shared_ptr<httplib::Result> res;
    for (int i = 0; i < 50; ++i) {
        auto r = client.Post("/designs", example_payload().dump(), "application/json");
        if (r) {
            CHECK(r->status == 201);
            const std::string id = json::parse(r->body)["id"];
            auto t = client.Get("/designs/" + id + "/decision-table?format=csv");
            REQUIRE(t);
            CHECK(t->status == 200);
            CHECK(t->get_header_value("Content-Type").find("text/csv") != std::string::npos);
            CHECK(t->get_header_value("Content-Disposition").find(id) != std::string::npos);
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    s.stop();
    server.join();
}

TEST_CASE("environment overrides") {
    setenv("DOSEFIND_BIND", "0.0.0.0:9123", 1);
    setenv("DOSEFIND_WORKERS", "3", 1);
    const ServiceConfig c = service_config_from_env();
    CHECK(c.host == "0.0.0.0");
    CHECK(c.port == 9123);
    CHECK(c.workers == 3);
    unsetenv("DOSEFIND_BIND");
    unsetenv("DOSEFIND_WORKERS");
}
