#include "dosefind/service.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include <httplib.h>

namespace dosefind {

namespace fs = std::filesystem;

namespace {

std::string now_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

HttpResponse json_response(int status, const json& body) {
    HttpResponse r;
    r.status = status;
    r.body = body.dump(2);
    return r;
}

HttpResponse error_response(int status, const std::string& message) {
    return json_response(status, {{"error", message}});
}

HttpResponse validation_response(int status, const ValidationError& e) {
    json fields = json::array();
    for (const auto& f : e.errors()) fields.push_back({{"field", f.field}, {"message", f.message}});
    return json_response(status, {{"error", "validation failed"}, {"fields", fields}});
}

HttpResponse csv_response(std::string body, const std::string& filename) {
    HttpResponse r;
    r.body = std::move(body);
    r.content_type = "text/csv";
    r.headers["Content-Disposition"] = "attachment; filename=\"" + filename + "\"";
    return r;
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '/'))
        if (!part.empty()) parts.push_back(part);
    return parts;
}

void write_atomic(const fs::path& file, const std::string& text) {
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        out.flush();
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
    }
    fs::rename(tmp, file);
}

// One line per call, flushed to disk before returning.
void append_line(const fs::path& file, const std::string& line) {
    const int fd = ::open(file.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw std::runtime_error("cannot open " + file.string());
    const std::string text = line + "\n";
    std::size_t done = 0;
    while (done < text.size()) {
        const ssize_t w = ::write(fd, text.data() + done, text.size() - done);
        if (w < 0) {
            ::close(fd);
            throw std::runtime_error("cannot append to " + file.string());
        }
        done += static_cast<std::size_t>(w);
    }
    ::fsync(fd);
    ::close(fd);
}

std::string read_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string decision_message(const CohortRecord& r) {
    switch (r.decision) {
        case Decision::Escalate: return "Escalate to dose " + std::to_string(r.next_dose);
        case Decision::Stay: return "Stay at dose " + std::to_string(r.next_dose);
        case Decision::DeEscalate: return "De-escalate to dose " + std::to_string(r.next_dose);
        case Decision::EliminateAndDeEscalate:
            return "Dose " + std::to_string(r.dose) + " and above eliminated; de-escalate to dose " +
                   std::to_string(r.next_dose);
        case Decision::TerminateTrial: return "Trial terminated: lowest dose eliminated";
    }
    return "";
}

const char* job_state_name(int s) {
    static const char* names[] = {"queued", "running", "completed", "failed", "canceled"};
    return names[s];
}

}  // namespace

ServiceConfig service_config_from_env(ServiceConfig base) {
    if (const char* bind = std::getenv("DOSEFIND_BIND")) {
        const std::string b = bind;
        const auto colon = b.rfind(':');
        if (colon == std::string::npos) {
            base.host = b;
        } else {
            if (colon > 0) base.host = b.substr(0, colon);
            base.port = std::stoi(b.substr(colon + 1));
        }
    }
    if (const char* dir = std::getenv("DOSEFIND_DATA_DIR")) base.data_dir = dir;
    if (const char* w = std::getenv("DOSEFIND_WORKERS")) base.workers = std::max(0, std::atoi(w));
    if (const char* s = std::getenv("DOSEFIND_STATIC_DIR")) base.static_dir = s;
    return base;
}

Service::Service(ServiceConfig config) : config_(std::move(config)) {
    std::random_device rd;
    id_state_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^
                static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count());
    for (const char* sub : {"designs", "trials", "simulations"}) fs::create_directories(config_.data_dir / sub);
    load();
    worker_ = std::thread([this] { worker_loop(); });
}

Service::~Service() {
    stop();
    {
        std::lock_guard lock(queue_mutex_);
        shutting_down_ = true;
        for (auto& job : queue_) job->state = JobState::Canceled;
        queue_.clear();
    }
    {
        std::lock_guard lock(catalog_mutex_);
        for (auto& [id, job] : jobs_) job->cancel = true;
    }
    queue_cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

std::string Service::new_id(const char* prefix) {
    std::lock_guard lock(id_mutex_);
    id_state_ = splitmix64(id_state_);
    char buf[24];
    std::snprintf(buf, sizeof buf, "%012llx", static_cast<unsigned long long>(id_state_ >> 16));
    return std::string(prefix) + buf;
}

void Service::load() {
    for (const auto& entry : fs::directory_iterator(config_.data_dir / "designs"))
        if (entry.path().extension() == ".json") load_design(entry.path());
    for (const auto& entry : fs::directory_iterator(config_.data_dir / "trials"))
        if (entry.path().extension() == ".jsonl") load_trial(entry.path());
    for (const auto& entry : fs::directory_iterator(config_.data_dir / "simulations"))
        if (entry.is_directory()) load_job(entry.path());
}

void Service::load_design(const fs::path& file) {
    try {
        const json record = json::parse(read_file(file));
        auto entry = std::make_shared<DesignEntry>();
        entry->id = record.at("id").get<std::string>();
        entry->created_at = record.value("created_at", "");
        entry->design = design_from_json(record.at("design"));
        entry->digest = table_digest(entry->design);
        if (entry->digest != record.value("table_digest", "")) {
            std::cerr << "dosefind: design " << entry->id << " skipped: regenerated tables do not match the stored digest\n";
            return;
        }
        designs_[entry->id] = std::move(entry);
    } catch (const std::exception& e) {
        std::cerr << "dosefind: cannot load " << file << ": " << e.what() << '\n';
    }
}

void Service::load_trial(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::string line;
    std::uintmax_t good_bytes = 0;
    std::shared_ptr<TrialEntry> trial;
    std::shared_ptr<const DoseRule> rule;
    const Design* design = nullptr;
    try {
        while (std::getline(in, line)) {
            const bool complete_line = !in.eof();
            json event;
            try {
                event = json::parse(line);
            } catch (const json::parse_error&) {
                if (in.peek() == EOF) break;  // torn final write
                throw;
            }
            if (!complete_line) break;
            const std::string type = event.at("type").get<std::string>();
            if (type == "created") {
                trial = std::make_shared<TrialEntry>();
                trial->id = event.at("trial_id").get<std::string>();
                trial->design_id = event.at("design_id").get<std::string>();
                trial->created_at = event.value("created_at", "");
                auto d = designs_.find(trial->design_id);
                if (d == designs_.end()) throw std::runtime_error("unknown design " + trial->design_id);
                design = &d->second->design;
                rule = rule_for(trial->design_id, *design);
                trial->state = TrialState::start(design->validated.settings);
            } else if (type == "cohort" && trial) {
                if (event.at("dose").get<int>() != trial->state.current_dose)
                    throw std::runtime_error("cohort dose does not match the replayed state");
                trial->state = apply_cohort(trial->state, event.at("n_dlt").get<int>(), design->validated.settings,
                                            *rule, design->options.elimination);
                const CohortRecord& rec = trial->state.history.back();
                if (to_string(rec.decision) != event.value("decision", to_string(rec.decision)) ||
                    rec.next_dose != event.value("next_dose", rec.next_dose))
                    throw std::runtime_error("replayed decision differs from the logged one");
            }
            good_bytes += line.size() + 1;
        }
        if (!trial) throw std::runtime_error("no creation event");
        if (good_bytes < fs::file_size(file)) fs::resize_file(file, good_bytes);
        trials_[trial->id] = std::move(trial);
    } catch (const std::exception& e) {
        std::cerr << "dosefind: cannot load trial log " << file << ": " << e.what() << '\n';
    }
}

void Service::load_job(const fs::path& dir) {
    const fs::path result_file = dir / "result.json";
    if (!fs::exists(result_file)) return;
    try {
        auto job = std::make_shared<Job>();
        job->id = dir.filename().string();
        json result = json::parse(read_file(result_file));
        job->design_id = result.value("design_id", "");
        job->result = std::move(result);
        job->oc_csv = read_file(dir / "oc_summary.csv");
        job->aggregate_csv = read_file(dir / "aggregate.csv");
        job->fraction = 1.0;
        job->state = JobState::Completed;
        jobs_[job->id] = std::move(job);
    } catch (const std::exception& e) {
        std::cerr << "dosefind: cannot load simulation " << dir << ": " << e.what() << '\n';
    }
}

std::shared_ptr<const DoseRule> Service::rule_for(const std::string& design_id, const Design& design) {
    auto it = rules_.find(design_id);
    if (it != rules_.end()) return it->second;
    auto rule = make_rule(design);
    rules_[design_id] = rule;
    return rule;
}

std::shared_ptr<const Service::DesignEntry> Service::find_design(const std::string& id) const {
    std::lock_guard lock(catalog_mutex_);
    auto it = designs_.find(id);
    return it == designs_.end() ? nullptr : it->second;
}

std::shared_ptr<Service::TrialEntry> Service::find_trial(const std::string& id) const {
    std::lock_guard lock(catalog_mutex_);
    auto it = trials_.find(id);
    return it == trials_.end() ? nullptr : it->second;
}

std::shared_ptr<Service::Job> Service::find_job(const std::string& id) const {
    std::lock_guard lock(catalog_mutex_);
    auto it = jobs_.find(id);
    return it == jobs_.end() ? nullptr : it->second;
}

HttpResponse Service::handle(const HttpRequest& req) {
    const auto p = split_path(req.path);
    const std::string& m = req.method;
    try {
        if (p.size() == 1 && p[0] == "designs") {
            if (m == "POST") return create_design(req);
            if (m == "GET") {
                json list = json::array();
                std::lock_guard lock(catalog_mutex_);
                for (const auto& [id, d] : designs_)
                    list.push_back({{"id", id}, {"created_at", d->created_at}, {"design", to_string(d->design.kind)}});
                return json_response(200, list);
            }
        } else if (p.size() == 2 && p[0] == "designs") {
            if (m == "GET") return get_design(p[1]);
        } else if (p.size() == 3 && p[0] == "designs" && p[2] == "decision-table") {
            if (m == "GET") return get_decision_table(p[1], req);
        } else if (p.size() == 3 && p[0] == "designs" && p[2] == "simulations") {
            if (m == "POST") return create_simulation(p[1], req);
        } else if (p.size() == 2 && p[0] == "simulations") {
            if (m == "GET") return get_simulation(p[1], req);
        } else if (p.size() == 3 && p[0] == "simulations" && p[2] == "cancel") {
            if (m == "POST") return cancel_simulation(p[1]);
        } else if (p.size() == 1 && p[0] == "trials") {
            if (m == "POST") return create_trial(req);
        } else if (p.size() == 2 && p[0] == "trials") {
            if (m == "GET") return get_trial(p[1]);
        } else if (p.size() == 3 && p[0] == "trials" && p[2] == "cohorts") {
            if (m == "POST") return post_cohort(p[1], req);
        } else if (p.size() == 3 && p[0] == "trials" && p[2] == "select-mtd") {
            if (m == "POST") return select_trial_mtd(p[1]);
        } else {
            return error_response(404, "no such endpoint");
        }
        return error_response(405, "method not allowed");
    } catch (const json::exception& e) {
        return error_response(400, std::string("malformed JSON: ") + e.what());
    } catch (const ValidationError& e) {
        return validation_response(422, e);
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
}

json Service::design_view(const DesignEntry& d) const {
    json view = {{"id", d.id}, {"created_at", d.created_at}, {"design", design_to_json(d.design)},
                 {"table_digest", d.digest}};
    view["warnings"] = json::array();
    if (d.design.kind == DesignKind::Boin)
        view["warnings"] = decision_table(d.design.validated, d.design.options.elimination).warnings;
    return view;
}

HttpResponse Service::create_design(const HttpRequest& req) {
    const json payload = json::parse(req.body);
    Design design = design_from_json(payload);
    auto entry = std::make_shared<DesignEntry>();
    entry->id = new_id("d");
    entry->created_at = now_utc();
    entry->design = std::move(design);
    entry->digest = table_digest(entry->design);
    const json record = {{"id", entry->id},
                         {"created_at", entry->created_at},
                         {"design", design_to_json(entry->design)},
                         {"table_digest", entry->digest}};
    write_atomic(config_.data_dir / "designs" / (entry->id + ".json"), record.dump(2));
    {
        std::lock_guard lock(catalog_mutex_);
        designs_[entry->id] = entry;
        rule_for(entry->id, entry->design);
    }
    return json_response(201, design_view(*entry));
}

HttpResponse Service::get_design(const std::string& id) {
    auto d = find_design(id);
    if (!d) return error_response(404, "unknown design " + id);
    return json_response(200, design_view(*d));
}

HttpResponse Service::get_decision_table(const std::string& id, const HttpRequest& req) {
    auto d = find_design(id);
    if (!d) return error_response(404, "unknown design " + id);
    if (d->design.kind == DesignKind::Crm)
        return error_response(409, "CRM decisions come from the model; there is no decision table");
    const auto fmt = req.query.count("format") ? req.query.at("format") : std::string("json");
    if (fmt == "csv") return csv_response(decision_table_csv(d->design), "decision_table_" + id + ".csv");
    if (fmt != "json") return error_response(400, "format must be json or csv");
    return json_response(200, decision_table_json(d->design));
}

HttpResponse Service::create_simulation(const std::string& design_id, const HttpRequest& req) {
    auto d = find_design(design_id);
    if (!d) return error_response(404, "unknown design " + design_id);
    const json body = req.body.empty() ? json::object() : json::parse(req.body);
    if (!body.is_object()) return error_response(400, "plan overrides must be a JSON object");

    const Design& design = d->design;
    const ValidatedDesign& v = design.validated;
    SimulationPlan plan;
    plan.settings = v.settings;
    plan.pess = v.prior.pess;
    DesignConfig config;
    config.label = "design";
    config.kind = design.kind;
    config.informative = true;
    config.robustify = v.prior.robustify;
    config.mixture_weight = v.prior.mixture_weight;
    config.options = design.options;
    plan.designs.push_back(config);
    if (body.value("compare_noninformative", false)) {
        DesignConfig non = config;
        non.label = "noninformative";
        non.informative = false;
        non.robustify = false;
        non.mixture_weight.reset();
        plan.designs.push_back(non);
    }
    try {
        if (!body.contains("scenarios") || !body.at("scenarios").is_array() || body.at("scenarios").empty())
            throw ValidationError("scenarios", "give at least one scenario {label, true_p}");
        const json& sc = body.at("scenarios");
        for (std::size_t i = 0; i < sc.size(); ++i) {
            StudyScenario s;
            if (sc[i].is_string()) {
                bool found = false;
                for (const auto& ref : reference_scenarios())
                    if (ref.scenario.label == sc[i].get<std::string>()) {
                        s.scenario = make_scenario(ref.scenario.true_p, v.settings.target, ref.scenario.label);
                        found = true;
                    }
                if (!found) throw ValidationError("scenarios[" + std::to_string(i) + "]", "unknown reference scenario");
            } else {
                const json& row = sc[i];
                if (!row.is_object() || !row.contains("true_p") || !row.at("true_p").is_array())
                    throw ValidationError("scenarios[" + std::to_string(i) + "]", "needs a true_p array");
                const auto values = row.at("true_p").get<std::vector<double>>();
                const Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
                s.scenario = make_scenario(p, v.settings.target, row.value("label", "S" + std::to_string(i + 1)));
            }
            s.skeleton = v.prior.skeleton;
            plan.scenarios.push_back(std::move(s));
        }
        plan.n_trials = body.value("n_trials", 2000);
        plan.seed = body.value("seed", std::uint64_t{1});
        plan.workers = config_.workers;
        validate_plan(plan);
    } catch (const ValidationError& e) {
        return validation_response(400, e);
    }

    auto job = std::make_shared<Job>();
    job->id = new_id("s");
    job->design_id = design_id;
    job->plan = std::move(plan);
    {
        std::lock_guard lock(queue_mutex_);
        if (queue_.size() >= config_.max_queued_jobs) return error_response(503, "simulation queue is full");
        {
            std::lock_guard cat(catalog_mutex_);
            jobs_[job->id] = job;
        }
        queue_.push_back(job);
    }
    queue_cv_.notify_one();
    return json_response(202, job_view(*job));
}

void Service::worker_loop() {
    for (;;) {
        std::shared_ptr<Job> job;
        {
            std::unique_lock lock(queue_mutex_);
            queue_cv_.wait(lock, [&] { return shutting_down_ || !queue_.empty(); });
            if (shutting_down_) return;
            job = queue_.front();
            queue_.pop_front();
            job->state = JobState::Running;
        }
        try {
            SimulationHooks hooks;
            hooks.progress = [&](double f) { job->fraction = f; };
            hooks.cancel = &job->cancel;
            const SimulationResult r = run_simulation(job->plan, hooks);
            json result = result_to_json(r);
            result["design_id"] = job->design_id;
            const fs::path dir = config_.data_dir / "simulations" / job->id;
            fs::create_directories(dir);
            std::lock_guard lock(job->mutex);
            job->oc_csv = oc_summary_csv(r);
            job->aggregate_csv = aggregate_csv(r);
            write_atomic(dir / "plan.json", plan_to_json(job->plan).dump(2));
            write_atomic(dir / "oc_summary.csv", job->oc_csv);
            write_atomic(dir / "aggregate.csv", job->aggregate_csv);
            write_atomic(dir / "result.json", result.dump(2));
            job->result = std::move(result);
            job->fraction = 1.0;
            job->state = JobState::Completed;
        } catch (const SimulationCanceled&) {
            job->state = JobState::Canceled;
        } catch (const std::exception& e) {
            std::lock_guard lock(job->mutex);
            job->error = e.what();
            job->state = JobState::Failed;
        }
        {
            std::lock_guard lock(queue_mutex_);
        }
        done_cv_.notify_all();
    }
}

void Service::wait_for_job(const std::string& job_id) {
    auto job = find_job(job_id);
    if (!job) return;
    std::unique_lock lock(queue_mutex_);
    done_cv_.wait(lock, [&] {
        const JobState s = job->state;
        return s == JobState::Completed || s == JobState::Failed || s == JobState::Canceled;
    });
}

json Service::job_view(Job& job) const {
    const JobState s = job.state;
    json view = {{"id", job.id},
                 {"design_id", job.design_id},
                 {"state", job_state_name(static_cast<int>(s))},
                 {"fraction_done", s == JobState::Completed ? 1.0 : job.fraction.load()}};
    std::lock_guard lock(job.mutex);
    if (s == JobState::Failed) view["error"] = job.error;
    if (s == JobState::Completed && job.result) view["result"] = *job.result;
    return view;
}

HttpResponse Service::get_simulation(const std::string& job_id, const HttpRequest& req) {
    auto job = find_job(job_id);
    if (!job) return error_response(404, "unknown simulation " + job_id);
    if (req.query.count("format")) {
        const std::string& fmt = req.query.at("format");
        if (fmt == "json") return get_simulation(job_id, {});
        if (job->state != JobState::Completed) return error_response(409, "simulation has not completed");
        std::lock_guard lock(job->mutex);
        if (fmt == "csv") return csv_response(job->oc_csv, "oc_summary_" + job_id + ".csv");
        if (fmt == "aggregate-csv") return csv_response(job->aggregate_csv, "aggregate_" + job_id + ".csv");
        return error_response(400, "format must be json, csv or aggregate-csv");
    }
    return json_response(200, job_view(*job));
}

HttpResponse Service::cancel_simulation(const std::string& job_id) {
    auto job = find_job(job_id);
    if (!job) return error_response(404, "unknown simulation " + job_id);
    {
        std::lock_guard lock(queue_mutex_);
        const JobState s = job->state;
        if (s == JobState::Completed || s == JobState::Failed)
            return error_response(409, "simulation already finished");
        job->cancel = true;
        for (auto it = queue_.begin(); it != queue_.end(); ++it)
            if (*it == job) {
                queue_.erase(it);
                job->state = JobState::Canceled;
                break;
            }
    }
    done_cv_.notify_all();
    if (job->state == JobState::Running) wait_for_job(job_id);
    return json_response(200, job_view(*job));
}

json Service::trial_view(const TrialEntry& t, const Design& design) const {
    const TrialSettings& s = design.validated.settings;
    const TrialStatus status = t.state.status(s);
    json view = {{"id", t.id},
                 {"design_id", t.design_id},
                 {"created_at", t.created_at},
                 {"version", t.state.history.size()},
                 {"status", to_string(status)},
                 {"next_dose", status == TrialStatus::Active ? json(t.state.current_dose) : json(nullptr)},
                 {"state", trial_state_to_json(t.state, s)}};
    if (!t.state.history.empty()) view["message"] = decision_message(t.state.history.back());
    return view;
}

HttpResponse Service::create_trial(const HttpRequest& req) {
    const json body = json::parse(req.body);
    if (!body.is_object() || !body.contains("design_id") || !body.at("design_id").is_string())
        throw ValidationError("design_id", "is required");
    const std::string design_id = body.at("design_id").get<std::string>();
    auto d = find_design(design_id);
    if (!d) return error_response(404, "unknown design " + design_id);
    auto trial = std::make_shared<TrialEntry>();
    trial->id = new_id("t");
    trial->design_id = design_id;
    trial->created_at = now_utc();
    trial->state = TrialState::start(d->design.validated.settings);
    append_line(config_.data_dir / "trials" / (trial->id + ".jsonl"),
                json{{"type", "created"},
                     {"trial_id", trial->id},
                     {"design_id", design_id},
                     {"design_digest", d->digest},
                     {"created_at", trial->created_at}}
                    .dump());
    {
        std::lock_guard lock(catalog_mutex_);
        trials_[trial->id] = trial;
    }
    return json_response(201, trial_view(*trial, d->design));
}

HttpResponse Service::get_trial(const std::string& id) {
    auto t = find_trial(id);
    if (!t) return error_response(404, "unknown trial " + id);
    auto d = find_design(t->design_id);
    std::lock_guard lock(t->mutex);
    return json_response(200, trial_view(*t, d->design));
}

HttpResponse Service::post_cohort(const std::string& id, const HttpRequest& req) {
    auto t = find_trial(id);
    if (!t) return error_response(404, "unknown trial " + id);
    auto d = find_design(t->design_id);
    const Design& design = d->design;
    const TrialSettings& s = design.validated.settings;

    const json body = json::parse(req.body);
    std::vector<FieldError> errors;
    auto int_field = [&](const char* key) -> std::optional<int> {
        if (!body.is_object() || !body.contains(key)) {
            errors.push_back({key, "is required"});
            return std::nullopt;
        }
        if (!body.at(key).is_number_integer()) {
            errors.push_back({key, "must be an integer"});
            return std::nullopt;
        }
        return body.at(key).get<int>();
    };
    const auto dose = int_field("dose");
    const auto n = int_field("n");
    const auto n_dlt = int_field("n_dlt");
    if (n && *n != s.cohort_size) errors.push_back({"n", "must equal the cohort size " + std::to_string(s.cohort_size)});
    if (n_dlt && (*n_dlt < 0 || *n_dlt > (n ? *n : s.cohort_size)))
        errors.push_back({"n_dlt", "must lie between 0 and n"});
    if (!errors.empty()) return validation_response(422, ValidationError(std::move(errors)));

    std::unique_lock lock(t->mutex, std::try_to_lock);
    if (!lock.owns_lock()) return error_response(409, "another cohort is being recorded for this trial");
    const TrialStatus status = t->state.status(s);
    if (status != TrialStatus::Active) return error_response(409, "trial is " + to_string(status));
    if (body.contains("version") &&
        (!body.at("version").is_number_integer() ||
         body.at("version").get<std::size_t>() != t->state.history.size()))
        return error_response(409, "trial has changed (version " + std::to_string(t->state.history.size()) + ")");
    if (*dose != t->state.current_dose)
        return error_response(409, "cohort must be treated at the recommended dose " +
                                       std::to_string(t->state.current_dose));

    std::shared_ptr<const DoseRule> rule;
    {
        std::lock_guard cat(catalog_mutex_);
        rule = rule_for(t->design_id, design);
    }
    TrialState next = apply_cohort(t->state, *n_dlt, s, *rule, design.options.elimination);
    const CohortRecord& rec = next.history.back();
    append_line(config_.data_dir / "trials" / (id + ".jsonl"),
                json{{"type", "cohort"},
                     {"version", next.history.size()},
                     {"dose", rec.dose},
                     {"n", rec.n},
                     {"n_dlt", rec.n_dlt},
                     {"decision", to_string(rec.decision)},
                     {"next_dose", rec.next_dose},
                     {"at", now_utc()}}
                    .dump());
    t->state = std::move(next);
    json view = trial_view(*t, design);
    view["decision"] = to_string(rec.decision);
    view["next_dose"] = t->state.status(s) == TrialStatus::Active ? json(rec.next_dose) : json(nullptr);
    view["recommended_dose"] = rec.next_dose;
    return json_response(200, view);
}

HttpResponse Service::select_trial_mtd(const std::string& id) {
    auto t = find_trial(id);
    if (!t) return error_response(404, "unknown trial " + id);
    auto d = find_design(t->design_id);
    const Design& design = d->design;
    std::lock_guard lock(t->mutex);
    const TrialStatus status = t->state.status(design.validated.settings);
    if (status == TrialStatus::Active) return error_response(409, "trial is still active");
    std::shared_ptr<const DoseRule> rule;
    {
        std::lock_guard cat(catalog_mutex_);
        rule = rule_for(t->design_id, design);
    }
    json out = to_json(rule->select(t->state, design.validated.settings.target));
    out["method"] = to_string(selection_method(design));
    out["status"] = to_string(status);
    return json_response(200, out);
}

void Service::mount(httplib::Server& server) {
    if (!config_.static_dir.empty()) server.set_mount_point("/", config_.static_dir);
    auto forward = [this](const httplib::Request& in, httplib::Response& out) {
        HttpRequest req{in.method, in.path, in.body, {}};
        for (const auto& [k, v] : in.params) req.query[k] = v;
        const HttpResponse r = handle(req);
        out.status = r.status;
        for (const auto& [k, v] : r.headers) out.set_header(k, v);
        out.set_content(r.body, r.content_type);
    };
    server.Get(R"(/.*)", forward);
    server.Post(R"(/.*)", forward);
}

bool Service::listen() {
    server_ = std::make_unique<httplib::Server>();
    mount(*server_);
    return server_->listen(config_.host, config_.port);
}

void Service::stop() {
    if (server_) server_->stop();
}

}  // namespace dosefind
