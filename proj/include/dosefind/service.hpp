#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "dosefind/io.hpp"

namespace httplib {
class Server;
}

namespace dosefind {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path data_dir = "dosefind-data";
    int workers = 0;          // simulation threads per job; 0: hardware concurrency
    std::size_t max_queued_jobs = 8;
    std::string static_dir;   // served at / when set
};

/// Reads DOSEFIND_BIND (host:port), DOSEFIND_DATA_DIR, DOSEFIND_WORKERS and
/// DOSEFIND_STATIC_DIR over the given defaults.
ServiceConfig service_config_from_env(ServiceConfig base = {});

struct HttpRequest {
    std::string method;
    std::string path;
    std::string body;
    std::map<std::string, std::string> query;
};

struct HttpResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
    std::map<std::string, std::string> headers;
};

/// Design catalog, trial event logs and simulation jobs behind a small JSON
/// API. `handle` is the whole API as a function; `listen` puts it on a socket.
///
/// Layout under data_dir: designs/<id>.json, trials/<id>.jsonl (one created
/// event, then one line per cohort) and simulations/<job>/ for results.
class Service {
   public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    HttpResponse handle(const HttpRequest& request);

    /// Registers every route on `server`; static files too when configured.
    void mount(httplib::Server& server);
    /// Blocks serving on config.host:config.port until stop().
    bool listen();
    void stop();

    /// Blocks until the job leaves the queue and finishes; for tests.
    void wait_for_job(const std::string& job_id);

    const ServiceConfig& config() const { return config_; }

   private:
    struct DesignEntry {
        std::string id;
        std::string created_at;
        Design design;
        std::string digest;
    };
    struct TrialEntry {
        std::string id;
        std::string design_id;
        std::string created_at;
        TrialState state;
        std::mutex mutex;
    };
    enum class JobState { Queued, Running, Completed, Failed, Canceled };
    struct Job {
        std::string id;
        std::string design_id;
        SimulationPlan plan;
        std::atomic<JobState> state{JobState::Queued};
        std::atomic<double> fraction{0.0};
        std::atomic<bool> cancel{false};
        std::mutex mutex;  // guards the fields below
        std::string error;
        std::optional<json> result;
        std::string oc_csv;
        std::string aggregate_csv;
    };

    void load();
    void load_design(const std::filesystem::path& file);
    void load_trial(const std::filesystem::path& file);
    void load_job(const std::filesystem::path& dir);
    void worker_loop();

    HttpResponse create_design(const HttpRequest& req);
    HttpResponse get_design(const std::string& id);
    HttpResponse get_decision_table(const std::string& id, const HttpRequest& req);
    HttpResponse create_simulation(const std::string& design_id, const HttpRequest& req);
    HttpResponse get_simulation(const std::string& job_id, const HttpRequest& req);
    HttpResponse cancel_simulation(const std::string& job_id);
    HttpResponse create_trial(const HttpRequest& req);
    HttpResponse post_cohort(const std::string& id, const HttpRequest& req);
    HttpResponse get_trial(const std::string& id);
    HttpResponse select_trial_mtd(const std::string& id);

    std::shared_ptr<const DesignEntry> find_design(const std::string& id) const;
    std::shared_ptr<TrialEntry> find_trial(const std::string& id) const;
    std::shared_ptr<Job> find_job(const std::string& id) const;
    json design_view(const DesignEntry& d) const;
    json trial_view(const TrialEntry& t, const Design& design) const;
    json job_view(Job& job) const;
    std::string new_id(const char* prefix);
    std::shared_ptr<const DoseRule> rule_for(const std::string& design_id, const Design& design);

    ServiceConfig config_;
    mutable std::mutex catalog_mutex_;
    std::map<std::string, std::shared_ptr<const DesignEntry>> designs_;
    std::map<std::string, std::shared_ptr<const DoseRule>> rules_;
    std::map<std::string, std::shared_ptr<TrialEntry>> trials_;
    std::map<std::string, std::shared_ptr<Job>> jobs_;

    std::mutex queue_mutex_;
    std::condition_variable queue_cv_;
    std::condition_variable done_cv_;
    std::deque<std::shared_ptr<Job>> queue_;
    bool shutting_down_ = false;
    std::thread worker_;

    std::mutex id_mutex_;
    std::uint64_t id_state_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace dosefind
