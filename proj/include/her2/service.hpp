#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "her2/evalcore.hpp"
#include "her2/image.hpp"
#include "her2/ingest.hpp"
#include "her2/score.hpp"
#include "her2/slide.hpp"
#include "json.hpp"

// Man-vs-Machine HTTP service: pre-generated tile pyramids, an append-only
// NDJSON score log, and evaluation of rater entries against withheld GT.
namespace her2::service {

using Json = nlohmann::ordered_json;

// Tile pyramids -----------------------------------------------------------------

inline constexpr int kTileSize = 256;

struct LevelInfo {
  int width = 0;
  int height = 0;
  int columns = 0;
  int rows = 0;
  friend bool operator==(const LevelInfo&, const LevelInfo&) = default;
};

// Level 0 is full resolution; level z+1 halves level z (rounding up) and the
// last level is the first whose sides both fit in one tile.
struct CaseManifest {
  std::string case_id;
  std::vector<std::string> stains;
  int tile_size = kTileSize;
  std::vector<LevelInfo> levels;
  friend bool operator==(const CaseManifest&, const CaseManifest&) = default;
};

std::vector<LevelInfo> pyramid_levels(int width, int height, int tile_size = kTileSize);

Json to_json(const CaseManifest& m);
CaseManifest manifest_from_json(const Json& j);

// The slide's tiles side by side, top-aligned, padded white.
RgbImage slide_mosaic(const Slide& slide);

// Writes <case_out>/<stain>/<z>/<x>_<y>.png and merges the stain into
// <case_out>/manifest.json. Re-running with the same input is byte-identical.
CaseManifest write_pyramid(const RgbImage& image, const std::filesystem::path& case_out, const std::string& case_id,
                           const std::string& stain = "ihc", int tile_size = kTileSize);

// Every case_* directory of a dataset into <tile_root>/<case_id>.
std::vector<CaseManifest> write_dataset_pyramids(const std::filesystem::path& dataset,
                                                 const std::filesystem::path& tile_root, int jobs = 1);

// Manifests of every <root>/<id>/manifest.json, in case-id order.
// Error(io) when the root is missing.
std::vector<CaseManifest> scan_tile_root(const std::filesystem::path& root);

// Score events --------------------------------------------------------------------

struct ScoreEvent {
  std::string rater;
  std::string case_id;
  Her2Score score = Her2Score::zero;
  std::optional<double> pcms;
  std::optional<double> confidence;
  std::int64_t timestamp = 0;  // UTC milliseconds
  friend bool operator==(const ScoreEvent&, const ScoreEvent&) = default;
};

// Rater names end up as file names on export.
// Error(range) naming "rater" for empty, over-long or path-like names.
void validate_rater(const std::string& rater);

// One log line. Kinds: score, register, close.
struct LogRecord {
  enum class Kind { score, reg, close } kind = Kind::score;
  ScoreEvent event;  // rater and timestamp are set for every kind
};

Json to_json(const ScoreEvent& e);
Json to_json(const LogRecord& r);
LogRecord record_from_json(const Json& j);

using Clock = std::function<std::int64_t()>;
std::int64_t utc_millis();

// Append-only NDJSON log. Opening replays the file; a torn final line left by
// a crash is cut off. Appends are serialized and written with one write(2)
// on an O_APPEND descriptor. Timestamps never decrease within a store.
class EventStore {
 public:
  explicit EventStore(std::filesystem::path path, Clock clock = utc_millis);
  ~EventStore();
  EventStore(const EventStore&) = delete;
  EventStore& operator=(const EventStore&) = delete;

  LogRecord append(LogRecord record);  // timestamp assigned here
  std::vector<LogRecord> snapshot() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  Clock clock_;
  int fd_ = -1;
  mutable std::mutex mu_;
  std::vector<LogRecord> records_;
  std::int64_t last_ = 0;
};

std::vector<LogRecord> read_log(const std::filesystem::path& path);

// Latest event per case for one rater (log order breaks timestamp ties).
std::vector<Prediction> latest_predictions(const std::vector<LogRecord>& log, const std::string& rater);
std::set<std::string> known_raters(const std::vector<LogRecord>& log);
bool session_closed(const std::vector<LogRecord>& log);

// One submission per rater in name order, rows in case-id order.
std::vector<ingest::SubmissionFile> export_submissions(const std::vector<LogRecord>& log);
// Writes <dir>/<rater>.csv for each; returns the paths.
std::vector<std::filesystem::path> write_submissions(const std::filesystem::path& dir,
                                                     const std::vector<ingest::SubmissionFile>& subs);

// Service ---------------------------------------------------------------------------

struct Config {
  std::filesystem::path tile_root;
  std::filesystem::path gt_path;
  std::filesystem::path store_path;
  std::optional<std::filesystem::path> machine_dir;  // submission CSVs of the machine methods
  eval::Options eval;
  Clock clock = utc_millis;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

class Service {
 public:
  // Loads manifests, GT and machine submissions and replays the store.
  // Error(io) when the tile root or GT is missing.
  explicit Service(Config config);

  const std::vector<CaseManifest>& cases() const noexcept { return cases_; }
  const CaseManifest* find_case(const std::string& id) const;
  // Tile-root cases that also have ground truth.
  const std::set<std::string>& scope() const noexcept { return scope_; }

  // Error(identifier) for an unknown case or out-of-range tile.
  std::string tile_bytes(const std::string& case_id, const std::string& stain, int z, int x, int y) const;

  // Body fields: rater, score, pcms, confidence (case_id optional, must match).
  // Error(range) naming the field; Error(identifier) for an unknown case.
  ScoreEvent post_score(const std::string& case_id, const Json& body);
  void register_rater(const std::string& rater);
  void close_session();
  bool closed() const;

  // Error(identifier) for a rater that never registered or scored.
  eval::SubmissionResult rater_result(const std::string& rater) const;
  const std::vector<eval::SubmissionResult>& machine_results() const noexcept { return machines_; }

  Json result_json(const std::string& rater) const;
  Json leaderboard_json() const;

  // Transport-independent routing; the HTTP server forwards every request here.
  Response handle(const std::string& method, const std::string& path, const std::string& body);

  EventStore& store() noexcept { return *store_; }

 private:
  Config config_;
  std::vector<CaseManifest> cases_;
  std::map<std::string, std::size_t> case_index_;
  ingest::GroundTruthFile gt_;
  std::set<std::string> scope_;
  std::vector<eval::SubmissionResult> machines_;
  std::unique_ptr<EventStore> store_;
};

Json to_json(const eval::SubmissionResult& r);

// cpp-httplib front end. bind() returns the bound port (port 0 picks one);
// listen() blocks until stop() is called from another thread.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  int bind(const std::string& host, int port);
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace her2::service
