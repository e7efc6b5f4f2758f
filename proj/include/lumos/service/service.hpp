#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "lumos/pipeline/checkpoint.hpp"
#include "lumos/pipeline/sample.hpp"

namespace httplib {
class Server;
}

namespace lumos::service {

struct ServiceOptions {
  /// Jobs allowed to wait behind the running one; more are refused with 409.
  std::size_t queue_depth = 4;
  /// Larger inputs are center-cropped to this side.
  std::size_t max_side = 512;
  std::size_t max_k = 8;
  /// Finished jobs kept for /attention; the oldest is dropped beyond this.
  std::size_t max_jobs = 64;
};

/// Request error carrying an HTTP status.
class HttpError : public std::runtime_error {
 public:
  HttpError(int status, const std::string& message) : std::runtime_error(message), status(status) {}
  int status;
};

/// Runs queued closures one at a time on a worker thread.
class JobQueue {
 public:
  explicit JobQueue(std::size_t depth);
  ~JobQueue();
  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  /// Runs `job` on the worker and waits for it. Throws HttpError(409) when
  /// `depth` jobs are already waiting; rethrows whatever `job` throws.
  void run(std::function<void()> job);

  std::size_t waiting() const;
  bool busy() const;
  std::size_t depth() const { return depth_; }

 private:
  struct Task {
    std::function<void()> fn;
    std::exception_ptr error;
    bool done = false;
  };
  void loop();

  std::size_t depth_;
  mutable std::mutex mu_;
  std::condition_variable wake_, finished_;
  std::deque<std::shared_ptr<Task>> tasks_;
  bool running_ = false;
  bool stop_ = false;
  std::thread worker_;
};

/// JSON-over-HTTP front end to one loaded model. The bundle is only read.
class Service {
 public:
  Service(pipeline::LoadedCheckpoint checkpoint, std::unique_ptr<instruct::Describer> describer,
          ServiceOptions options = {});

  /// Registers the endpoints on `server`.
  void mount(httplib::Server& server);

  // Handlers, callable without a socket. Bodies are parsed JSON; errors are
  // thrown as HttpError.
  nlohmann::json enhance(const nlohmann::json& body);
  nlohmann::json instructions(const nlohmann::json& body);
  nlohmann::json attention(const std::string& job_id, const std::string& iteration) const;
  nlohmann::json health() const;

  const pipeline::ModelBundle& bundle() const { return *bundle_; }
  const std::string& checkpoint_hash() const { return hash_; }

 private:
  struct Prepared {
    Image image;
    std::vector<std::string> warnings;
  };
  Prepared decode_input(const nlohmann::json& body) const;
  std::string store(pipeline::EnhancementJob job);

  std::unique_ptr<pipeline::ModelBundle> bundle_;
  std::string hash_;
  std::unique_ptr<instruct::Describer> describer_;
  ServiceOptions options_;
  JobQueue queue_;

  mutable std::mutex jobs_mu_;
  std::map<std::string, std::shared_ptr<const pipeline::EnhancementJob>> jobs_;
  std::deque<std::string> job_order_;
  std::uint64_t next_job_ = 1;
};

/// No-reference statistics of an output against its low-light input.
nlohmann::json psnr_proxy_stats(const Image& input, const Image& output);

/// Token maps of one layer tiled left to right, each scaled to its maximum,
/// as an 8-bit grey PNG [height, width * tokens].
std::string render_heatmap(const pipeline::AttentionMap& map);

}  // namespace lumos::service
