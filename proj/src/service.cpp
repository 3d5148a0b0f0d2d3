#include "pmd/service.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <httplib.h>

#include "pmd/zip.hpp"

namespace pmd {

using nlohmann::json;

namespace {

std::string iso8601_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
        fail(ErrorCode::IoError, "cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& p, const std::string& data) {
    const auto tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            fail(ErrorCode::IoError, "cannot write " + tmp);
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
    }
    std::filesystem::rename(tmp, p);
}

} // namespace

std::string to_string(JobState s) {
    switch (s) {
    case JobState::Queued:
        return "queued";
    case JobState::Running:
        return "running";
    case JobState::Done:
        return "done";
    case JobState::Failed:
        return "failed";
    }
    return "unknown";
}

namespace {

JobState state_from_string(const std::string& s) {
    if (s == "queued")
        return JobState::Queued;
    if (s == "running")
        return JobState::Running;
    if (s == "done")
        return JobState::Done;
    if (s == "failed")
        return JobState::Failed;
    fail(ErrorCode::FormatError, "unknown job state " + s);
}

} // namespace

json JobRecord::to_json() const {
    json j{{"id", id},
           {"state", pmd::to_string(state)},
           {"submitted_at", submitted_at},
           {"mode", mode},
           {"config", config.to_json()},
           {"artifacts", artifacts}};
    if (!finished_at.empty())
        j["finished_at"] = finished_at;
    if (!error.empty())
        j["error"] = error;
    return j;
}

JobRecord JobRecord::from_json(const json& j) {
    JobRecord r;
    r.id = j.at("id").get<std::string>();
    r.state = state_from_string(j.at("state").get<std::string>());
    r.submitted_at = j.value("submitted_at", "");
    r.finished_at = j.value("finished_at", "");
    r.mode = j.value("mode", "single-view");
    r.config = PipelineConfig::from_json(j.value("config", json::object()));
    r.error = j.value("error", "");
    r.artifacts = j.value("artifacts", std::vector<std::string>{});
    return r;
}

std::string job_content_id(const std::string& zip_bytes, const std::string& mode,
                           const PipelineConfig& config) {
    json cfg = config.to_json();
    cfg.erase("debug_intermediates"); // result identity only
    std::uint64_t h = fnv1a(zip_bytes);
    h = fnv1a(mode, h);
    h = fnv1a(cfg.dump(), h);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct JobService::Impl {
    ServiceConfig cfg;
    mutable std::mutex mutex;
    std::condition_variable cv;
    std::deque<std::string> queue;
    bool stopping = false;
    std::vector<std::thread> workers;
    httplib::Server server;
    std::thread server_thread;

    explicit Impl(ServiceConfig c) : cfg(std::move(c)) {
        std::filesystem::create_directories(jobs_dir());
        recover();
        for (int i = 0; i < cfg.workers; ++i)
            workers.emplace_back([this] { worker_loop(); });
    }

    std::filesystem::path jobs_dir() const { return cfg.store_dir / "jobs"; }
    std::filesystem::path job_dir(const std::string& id) const { return jobs_dir() / id; }

    void persist(const JobRecord& r) {
        write_file_atomic(job_dir(r.id) / "job.json", r.to_json().dump(2));
    }

    std::optional<JobRecord> load(const std::string& id) const {
        const auto p = job_dir(id) / "job.json";
        if (!std::filesystem::exists(p))
            return std::nullopt;
        return JobRecord::from_json(json::parse(read_file(p)));
    }

    // Re-queue anything that was interrupted. Content-addressed ids make this
    // idempotent: a job is never duplicated, only resumed.
    void recover() {
        if (!std::filesystem::exists(jobs_dir()))
            return;
        std::vector<std::string> pending;
        for (const auto& entry : std::filesystem::directory_iterator(jobs_dir())) {
            if (!entry.is_directory())
                continue;
            const auto rec = load(entry.path().filename().string());
            if (!rec)
                continue;
            if (rec->state == JobState::Queued || rec->state == JobState::Running)
                pending.push_back(rec->id);
        }
        std::sort(pending.begin(), pending.end());
        for (const auto& id : pending) {
            auto rec = load(id);
            rec->state = JobState::Queued;
            persist(*rec);
            queue.push_back(id);
        }
    }

    void worker_loop() {
        for (;;) {
            std::string id;
            {
                std::unique_lock<std::mutex> lock(mutex);
                cv.wait(lock, [this] { return stopping || !queue.empty(); });
                if (stopping)
                    return;
                id = queue.front();
                queue.pop_front();
            }
            execute(id);
        }
    }

    void execute(const std::string& id) {
        auto rec = load(id);
        if (!rec)
            return;
        {
            std::lock_guard<std::mutex> lock(mutex);
            rec->state = JobState::Running;
            persist(*rec);
        }
        try {
            const auto bundle_dir = job_dir(id) / "bundle";
            const auto out_dir = job_dir(id) / "out";
            const auto bundles = load_bundle(bundle_dir / "manifest.json");

            PipelineConfig cfg_run = rec->config;
            if (rec->mode == "multi-view") {
                const MultiViewResult result = run_multi_view(bundles, cfg_run);
                encode_outputs(result, out_dir, cfg_run);
            } else {
                const SingleViewResult result = run_single_view(bundles.front(), cfg_run);
                encode_outputs(result, out_dir, cfg_run);
            }
            std::lock_guard<std::mutex> lock(mutex);
            rec->state = JobState::Done;
            rec->finished_at = iso8601_now();
            rec->artifacts = artifact_names(cfg_run, rec->mode == "multi-view");
            persist(*rec);
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lock(mutex);
            rec->state = JobState::Failed;
            rec->finished_at = iso8601_now();
            rec->error = e.what();
            persist(*rec);
        }
    }

    void shutdown() {
        {
            std::lock_guard<std::mutex> lock(mutex);
            stopping = true;
        }
        cv.notify_all();
        for (auto& w : workers)
            if (w.joinable())
                w.join();
        workers.clear();
        if (server.is_running())
            server.stop();
        if (server_thread.joinable())
            server_thread.join();
    }
};

JobService::JobService(ServiceConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}

JobService::~JobService() { stop(); }

void JobService::stop() {
    if (impl_)
        impl_->shutdown();
}

std::string JobService::submit(const std::string& zip_bytes, const std::string& mode,
                               const PipelineConfig& config,
                               const std::vector<std::string>& explicit_flags) {
    if (mode != "single-view" && mode != "multi-view")
        fail(ErrorCode::InvalidArgument, "unknown mode " + mode);
    const std::string id = job_content_id(zip_bytes, mode, config);

    {
        std::lock_guard<std::mutex> lock(impl_->mutex);
        if (auto existing = impl_->load(id))
            return id; // duplicate submission: same content, same job
    }

    // Validate before creating the job: a rejected archive must leave no
    // trace. Unpack to a temporary directory first.
    const auto staging = impl_->job_dir(id).string() + ".staging";
    std::filesystem::remove_all(staging);
    PipelineConfig effective = config;
    try {
        zip_extract_to_dir(zip_bytes, std::filesystem::path(staging) / "bundle");
        const auto manifest_path = std::filesystem::path(staging) / "bundle" / "manifest.json";
        if (!std::filesystem::exists(manifest_path))
            fail(ErrorCode::FormatError, "archive has no manifest.json at its root");
        const Manifest m = Manifest::load(manifest_path);
        m.validate(std::filesystem::path(staging) / "bundle");
        apply_manifest_defaults(effective, m, explicit_flags);
        if (mode == "multi-view") {
            if (m.views.size() < 2)
                fail(ErrorCode::FormatError, "multi-view requires at least 2 views");
            for (size_t i = 0; i < m.views.size(); ++i)
                if (m.views[i].white.empty())
                    fail(ErrorCode::FormatError,
                         "multi-view requires a white image (missing in view " +
                             std::to_string(i + 1) + ")");
        }
    } catch (...) {
        std::filesystem::remove_all(staging);
        throw;
    }

    JobRecord rec;
    rec.id = id;
    rec.state = JobState::Queued;
    rec.submitted_at = iso8601_now();
    rec.mode = mode;
    rec.config = effective;
    {
        std::lock_guard<std::mutex> lock(impl_->mutex);
        if (auto existing = impl_->load(id)) {
            std::filesystem::remove_all(staging);
            return id;
        }
        std::filesystem::rename(staging, impl_->job_dir(id));
        impl_->persist(rec);
        impl_->queue.push_back(id);
    }
    impl_->cv.notify_one();
    return id;
}

std::optional<JobRecord> JobService::poll(const std::string& id) const {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    return impl_->load(id);
}

std::string JobService::fetch_artifact(const std::string& id, const std::string& name) const {
    std::optional<JobRecord> rec;
    {
        std::lock_guard<std::mutex> lock(impl_->mutex);
        rec = impl_->load(id);
    }
    if (!rec)
        fail(ErrorCode::NotFound, "unknown job " + id);
    if (rec->state != JobState::Done)
        fail(ErrorCode::Conflict, "job " + id + " is " + pmd::to_string(rec->state));
    if (std::find(rec->artifacts.begin(), rec->artifacts.end(), name) == rec->artifacts.end())
        fail(ErrorCode::NotFound, "unknown artifact " + name);
    return read_file(impl_->job_dir(id) / "out" / name);
}

bool JobService::run_one() {
    std::string id;
    {
        std::lock_guard<std::mutex> lock(impl_->mutex);
        if (impl_->queue.empty())
            return false;
        id = impl_->queue.front();
        impl_->queue.pop_front();
    }
    impl_->execute(id);
    return true;
}

size_t JobService::job_count() const {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    size_t n = 0;
    if (std::filesystem::exists(impl_->jobs_dir()))
        for (const auto& entry : std::filesystem::directory_iterator(impl_->jobs_dir()))
            n += entry.is_directory();
    return n;
}

int JobService::start() {
    httplib::Server& s = impl_->server;

    s.Get("/v1/healthz", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("ok", "text/plain");
    });

    s.Post("/v1/jobs", [this](const httplib::Request& req, httplib::Response& res) {
        PipelineConfig config;
        std::string mode = req.get_param_value("mode").empty() ? "single-view"
                                                               : req.get_param_value("mode");
        try {
            if (req.has_param("scale")) {
                const auto v = req.get_param_value("scale");
                if (v == "geometric")
                    config.scale = ScaleMode::Geometric;
                else if (v == "none")
                    config.scale = ScaleMode::None;
                else
                    fail(ErrorCode::InvalidArgument, "unknown scale " + v);
            }
            if (req.has_param("hp-sigma"))
                config.hp_sigma = std::stod(req.get_param_value("hp-sigma"));
            if (req.has_param("mod-threshold"))
                config.mod_threshold = std::stod(req.get_param_value("mod-threshold"));
            if (req.has_param("seed")) {
                config.seed = std::stoull(req.get_param_value("seed"));
                config.ransac.seed = config.seed;
            }
            if (req.has_param("formats")) {
                config.formats.clear();
                std::string list = req.get_param_value("formats");
                size_t pos = 0;
                while (pos <= list.size()) {
                    size_t next = list.find(',', pos);
                    if (next == std::string::npos)
                        next = list.size();
                    if (next > pos)
                        config.formats.push_back(list.substr(pos, next - pos));
                    pos = next + 1;
                }
            }
            std::vector<std::string> explicit_flags;
            for (const char* name : {"hp-sigma", "mod-threshold", "seed"})
                if (req.has_param(name))
                    explicit_flags.push_back(name);
            const std::string id = submit(req.body, mode, config, explicit_flags);
            res.status = 202;
            res.set_content(json{{"id", id}}.dump(), "application/json");
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(json{{"error", e.what()}}.dump(), "application/json");
        }
    });

    s.Get(R"(/v1/jobs/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto rec = poll(req.matches[1]);
        if (!rec) {
            res.status = 404;
            res.set_content(json{{"error", "unknown job"}}.dump(), "application/json");
            return;
        }
        res.set_content(rec->to_json().dump(), "application/json");
    });

    s.Get(R"(/v1/jobs/([0-9a-f]+)/artifacts/([A-Za-z0-9._\-]+))",
          [this](const httplib::Request& req, httplib::Response& res) {
              try {
                  const std::string bytes = fetch_artifact(req.matches[1], req.matches[2]);
                  res.set_content(bytes, "application/octet-stream");
              } catch (const Error& e) {
                  res.status = e.code() == ErrorCode::Conflict ? 409 : 404;
                  res.set_content(json{{"error", e.what()}}.dump(), "application/json");
              }
          });

    if (impl_->cfg.port == 0) {
        port_ = s.bind_to_any_port(impl_->cfg.host);
        if (port_ <= 0)
            fail(ErrorCode::IoError, "failed to bind service socket");
    } else {
        if (!s.bind_to_port(impl_->cfg.host, impl_->cfg.port))
            fail(ErrorCode::IoError,
                 "failed to bind port " + std::to_string(impl_->cfg.port));
        port_ = impl_->cfg.port;
    }
    impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    s.wait_until_ready();
    return port_;
}

} // namespace pmd
