#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pmd/pipeline.hpp"

namespace pmd {

enum class JobState { Queued, Running, Done, Failed };

std::string to_string(JobState s);

struct JobRecord {
    std::string id;
    JobState state = JobState::Queued;
    std::string submitted_at;
    std::string finished_at;
    std::string mode = "single-view"; // or "multi-view"
    PipelineConfig config;
    std::string error;
    std::vector<std::string> artifacts;

    nlohmann::json to_json() const;
    static JobRecord from_json(const nlohmann::json& j);
};

struct ServiceConfig {
    std::filesystem::path store_dir;
    std::string host = "127.0.0.1";
    int port = 0;    // 0 selects an ephemeral port
    int workers = 1; // 0 disables background execution (jobs run via run_one)
};

/// Disk-backed job store with a bounded worker pool and an HTTP front end:
///   POST /v1/jobs                      zip archive upload -> 202 {id}
///   GET  /v1/jobs/{id}                 job record
///   GET  /v1/jobs/{id}/artifacts/{n}   result bytes (409 until done)
///   GET  /v1/healthz
/// Jobs are keyed by a content hash of (archive bytes, config): resubmitting
/// the same work returns the prior job. Queued or running jobs found on disk
/// at startup are re-queued.
class JobService {
public:
    explicit JobService(ServiceConfig cfg);
    ~JobService();

    JobService(const JobService&) = delete;
    JobService& operator=(const JobService&) = delete;

    /// Binds and serves on a background thread. Returns the bound port.
    int start();
    void stop();
    int port() const { return port_; }

    /// Submits an archive; returns the job id (existing id on duplicates).
    /// Manifest processing defaults fill parameters not pinned by the
    /// request (`explicit_flags`), mirroring the command-line precedence.
    /// Throws FormatError / IoError on invalid archives or manifests.
    std::string submit(const std::string& zip_bytes, const std::string& mode,
                       const PipelineConfig& config,
                       const std::vector<std::string>& explicit_flags = {});

    std::optional<JobRecord> poll(const std::string& id) const;

    /// Artifact bytes for a completed job. NotFound for unknown ids or
    /// artifact names, Conflict while the job is not done.
    std::string fetch_artifact(const std::string& id, const std::string& name) const;

    /// Executes one queued job synchronously; returns false when idle.
    bool run_one();

    size_t job_count() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

/// Content hash used for job identity (FNV-1a over archive bytes + config).
std::string job_content_id(const std::string& zip_bytes, const std::string& mode,
                           const PipelineConfig& config);

} // namespace pmd
