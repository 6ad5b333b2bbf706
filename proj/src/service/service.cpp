#include "her2/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstring>
#include <fstream>
#include <map>

#include "her2/error.hpp"
#include "her2/parallel.hpp"
#include "her2/text.hpp"

namespace her2::service {

namespace fs = std::filesystem;

namespace {

int ceil_half(int v) { return (v + 1) / 2; }
int ceil_div(int a, int b) { return (a + b - 1) / b; }

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << body;
  if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

bool valid_component(const std::string& s) {
  if (s.empty() || s == "." || s == "..") return false;
  return s.find_first_of("/\\") == std::string::npos;
}

// Raised by request parsing; carries the offending body field.
class FieldError : public Error {
 public:
  FieldError(std::string field, const std::string& message) : Error(ErrorKind::range, message), field(std::move(field)) {}
  std::string field;
};

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json points_json(const std::optional<Points>& p) { return p ? Json(p->value()) : Json(nullptr); }

}  // namespace

// Pyramids ----------------------------------------------------------------------

std::vector<LevelInfo> pyramid_levels(int width, int height, int tile_size) {
  if (width <= 0 || height <= 0 || tile_size <= 0) throw Error(ErrorKind::size, "empty pyramid base");
  std::vector<LevelInfo> levels;
  int w = width, h = height;
  while (true) {
    levels.push_back({w, h, ceil_div(w, tile_size), ceil_div(h, tile_size)});
    if (w <= tile_size && h <= tile_size) break;
    w = ceil_half(w);
    h = ceil_half(h);
  }
  return levels;
}

Json to_json(const CaseManifest& m) {
  Json levels = Json::array();
  for (std::size_t z = 0; z < m.levels.size(); ++z) {
    const auto& l = m.levels[z];
    levels.push_back({{"level", z}, {"width", l.width}, {"height", l.height}, {"columns", l.columns}, {"rows", l.rows}});
  }
  return {{"case_id", m.case_id}, {"stains", m.stains}, {"tile_size", m.tile_size}, {"levels", levels}};
}

CaseManifest manifest_from_json(const Json& j) {
  try {
    CaseManifest m;
    m.case_id = j.at("case_id").get<std::string>();
    m.stains = j.at("stains").get<std::vector<std::string>>();
    m.tile_size = j.at("tile_size").get<int>();
    for (const auto& l : j.at("levels")) {
      m.levels.push_back({l.at("width").get<int>(), l.at("height").get<int>(), l.at("columns").get<int>(),
                          l.at("rows").get<int>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("malformed manifest: ") + e.what());
  }
}

RgbImage slide_mosaic(const Slide& slide) {
  if (slide.tiles.empty()) throw Error(ErrorKind::coverage, "slide " + slide.case_id + " has no tiles");
  int w = 0, h = 0;
  for (const auto& t : slide.tiles) {
    w += t.width;
    h = std::max(h, t.height);
  }
  RgbImage out(w, h);
  int x0 = 0;
  for (const auto& t : slide.tiles) {
    for (int y = 0; y < t.height; ++y) {
      std::memcpy(&out.data[(static_cast<std::size_t>(y) * w + x0) * 3], &t.data[static_cast<std::size_t>(y) * t.width * 3],
                  static_cast<std::size_t>(t.width) * 3);
    }
    x0 += t.width;
  }
  return out;
}

CaseManifest write_pyramid(const RgbImage& image, const fs::path& case_out, const std::string& case_id,
                           const std::string& stain, int tile_size) {
  if (!valid_component(case_id)) throw Error(ErrorKind::identifier, "invalid case id: " + case_id);
  if (!valid_component(stain)) throw Error(ErrorKind::identifier, "invalid stain: " + stain);
  CaseManifest m;
  m.case_id = case_id;
  m.tile_size = tile_size;
  m.levels = pyramid_levels(image.width, image.height, tile_size);

  const fs::path manifest_path = case_out / "manifest.json";
  if (fs::exists(manifest_path)) {
    const auto old = manifest_from_json(Json::parse(ingest::read_file(manifest_path)));
    if (old.case_id != case_id || old.tile_size != tile_size || old.levels != m.levels) {
      throw Error(ErrorKind::shape, "existing manifest disagrees for case " + case_id);
    }
    m.stains = old.stains;
  }
  if (std::find(m.stains.begin(), m.stains.end(), stain) == m.stains.end()) m.stains.push_back(stain);
  std::sort(m.stains.begin(), m.stains.end());

  RgbImage level = image;
  for (std::size_t z = 0; z < m.levels.size(); ++z) {
    const auto& info = m.levels[z];
    if (z > 0) level = resize(level, info.width, info.height);
    const fs::path dir = case_out / stain / std::to_string(z);
    fs::create_directories(dir);
    for (int ty = 0; ty < info.rows; ++ty) {
      for (int tx = 0; tx < info.columns; ++tx) {
        const int x = tx * tile_size, y = ty * tile_size;
        const auto tile = crop(level, x, y, std::min(tile_size, info.width - x), std::min(tile_size, info.height - y));
        write_png(dir / (std::to_string(tx) + "_" + std::to_string(ty) + ".png"), tile);
      }
    }
  }
  write_text(manifest_path, to_json(m).dump(2) + "\n");
  return m;
}

std::vector<CaseManifest> write_dataset_pyramids(const fs::path& dataset, const fs::path& tile_root, int jobs) {
  const auto dirs = list_case_dirs(dataset);
  std::vector<CaseManifest> out(dirs.size());
  fs::create_directories(tile_root);
  parallel_for(static_cast<int>(dirs.size()), jobs, [&](int i) {
    const auto slide = load_slide(dirs[i], 1.0);
    out[i] = write_pyramid(slide_mosaic(slide), tile_root / slide.case_id, slide.case_id);
  });
  return out;
}

std::vector<CaseManifest> scan_tile_root(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorKind::io, "tile root missing: " + root.string());
  std::vector<CaseManifest> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    const fs::path mp = entry.path() / "manifest.json";
    if (!entry.is_directory() || !fs::exists(mp)) continue;
    Json j;
    try {
      j = Json::parse(ingest::read_file(mp));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::format, mp.string() + ": " + e.what());
    }
    auto m = manifest_from_json(j);
    if (m.case_id != entry.path().filename().string()) {
      throw Error(ErrorKind::integrity, mp.string() + ": case id does not match directory");
    }
    out.push_back(std::move(m));
  }
  std::sort(out.begin(), out.end(),
            [](const CaseManifest& a, const CaseManifest& b) { return text::natural_less(a.case_id, b.case_id); });
  return out;
}

// Events --------------------------------------------------------------------------

void validate_rater(const std::string& rater) {
  if (rater.empty() || rater.size() > 64) throw Error(ErrorKind::range, "rater must be 1 to 64 characters");
  if (rater.front() == '.' || rater.front() == ' ' || rater.back() == ' ') {
    throw Error(ErrorKind::range, "rater must not start with '.' or carry outer spaces");
  }
  for (unsigned char c : rater) {
    if (c < 0x20 || c == 0x7f || c == '/' || c == '\\' || c == ',' || c == '"') {
      throw Error(ErrorKind::range, "rater contains a forbidden character");
    }
  }
}

Json to_json(const ScoreEvent& e) {
  return {{"rater", e.rater},
          {"case_id", e.case_id},
          {"score", index_of(e.score)},
          {"pcms", optional_number(e.pcms)},
          {"confidence", optional_number(e.confidence)},
          {"timestamp", e.timestamp}};
}

Json to_json(const LogRecord& r) {
  switch (r.kind) {
    case LogRecord::Kind::score: {
      Json j = {{"type", "score"}};
      const Json fields = to_json(r.event);
      for (const auto& [k, v] : fields.items()) j[k] = v;
      return j;
    }
    case LogRecord::Kind::reg:
      return {{"type", "register"}, {"rater", r.event.rater}, {"timestamp", r.event.timestamp}};
    case LogRecord::Kind::close:
      return {{"type", "close"}, {"timestamp", r.event.timestamp}};
  }
  return {};
}

LogRecord record_from_json(const Json& j) {
  try {
    LogRecord r;
    const auto type = j.at("type").get<std::string>();
    r.event.timestamp = j.at("timestamp").get<std::int64_t>();
    if (type == "close") {
      r.kind = LogRecord::Kind::close;
      return r;
    }
    r.event.rater = j.at("rater").get<std::string>();
    if (type == "register") {
      r.kind = LogRecord::Kind::reg;
      return r;
    }
    if (type != "score") throw Error(ErrorKind::format, "unknown record type " + type);
    r.event.case_id = j.at("case_id").get<std::string>();
    r.event.score = score_from_index(j.at("score").get<int>());
    if (!j.at("pcms").is_null()) r.event.pcms = j.at("pcms").get<double>();
    if (!j.at("confidence").is_null()) r.event.confidence = j.at("confidence").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("malformed log record: ") + e.what());
  }
}

std::int64_t utc_millis() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

namespace {

std::vector<LogRecord> parse_log(const std::string& content, const std::string& source) {
  std::vector<LogRecord> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string::npos) end = content.size();
    ++line_no;
    const auto line = text::trim(std::string_view(content).substr(pos, end - pos));
    pos = end + 1;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::format, source + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorKind::format, source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<LogRecord> read_log(const fs::path& path) {
  auto content = ingest::read_file(path);
  if (const auto nl = content.rfind('\n'); nl == std::string::npos) {
    content.clear();
  } else {
    content.resize(nl + 1);
  }
  return parse_log(content, path.string());
}

EventStore::EventStore(fs::path path, Clock clock) : path_(std::move(path)), clock_(std::move(clock)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorKind::io, "cannot open store " + path_.string() + ": " + std::strerror(errno));
  auto content = ingest::read_file(path_);
  // Drop a torn trailing line so later appends start on a fresh line.
  const auto nl = content.rfind('\n');
  const std::size_t keep = nl == std::string::npos ? 0 : nl + 1;
  if (keep != content.size()) {
    if (::ftruncate(fd_, static_cast<off_t>(keep)) != 0) {
      throw Error(ErrorKind::io, "cannot truncate torn store " + path_.string());
    }
    content.resize(keep);
  }
  records_ = parse_log(content, path_.string());
  for (const auto& r : records_) last_ = std::max(last_, r.event.timestamp);
}

EventStore::~EventStore() {
  if (fd_ >= 0) ::close(fd_);
}

LogRecord EventStore::append(LogRecord record) {
  std::lock_guard lock(mu_);
  record.event.timestamp = std::max(clock_(), last_);
  const std::string line = to_json(record).dump() + "\n";
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorKind::io, "append failed: " + std::string(std::strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
  ::fdatasync(fd_);
  last_ = record.event.timestamp;
  records_.push_back(record);
  return record;
}

std::vector<LogRecord> EventStore::snapshot() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::vector<Prediction> latest_predictions(const std::vector<LogRecord>& log, const std::string& rater) {
  std::map<std::string, const ScoreEvent*> latest;
  for (const auto& r : log) {
    if (r.kind != LogRecord::Kind::score || r.event.rater != rater) continue;
    auto& slot = latest[r.event.case_id];
    if (!slot || r.event.timestamp >= slot->timestamp) slot = &r.event;
  }
  std::vector<Prediction> out;
  for (const auto& [id, e] : latest) out.push_back({id, e->score, e->confidence, e->pcms});
  std::sort(out.begin(), out.end(),
            [](const Prediction& a, const Prediction& b) { return text::natural_less(a.case_id, b.case_id); });
  return out;
}

std::set<std::string> known_raters(const std::vector<LogRecord>& log) {
  std::set<std::string> out;
  for (const auto& r : log) {
    if (r.kind != LogRecord::Kind::close) out.insert(r.event.rater);
  }
  return out;
}

bool session_closed(const std::vector<LogRecord>& log) {
  return std::any_of(log.begin(), log.end(), [](const LogRecord& r) { return r.kind == LogRecord::Kind::close; });
}

std::vector<ingest::SubmissionFile> export_submissions(const std::vector<LogRecord>& log) {
  std::vector<ingest::SubmissionFile> out;
  for (const auto& rater : known_raters(log)) out.push_back({rater, latest_predictions(log, rater), {}});
  return out;
}

std::vector<fs::path> write_submissions(const fs::path& dir, const std::vector<ingest::SubmissionFile>& subs) {
  fs::create_directories(dir);
  std::vector<fs::path> out;
  for (const auto& s : subs) {
    validate_rater(s.team);
    out.push_back(dir / (s.team + ".csv"));
    write_text(out.back(), ingest::render_submission(s));
  }
  return out;
}

// Service -------------------------------------------------------------------------

Json to_json(const eval::SubmissionResult& r) {
  Json per_case = Json::array();
  for (const auto& c : r.per_case) {
    per_case.push_back({{"case_id", c.case_id},
                        {"gt_score", to_label(c.gt_score)},
                        {"predicted", to_label(c.predicted)},
                        {"agreement", c.agreement.value()},
                        {"bonus", points_json(c.bonus)},
                        {"weighted_confidence", optional_number(c.weighted_confidence)},
                        {"combined", optional_number(c.combined)}});
  }
  const auto& t = r.totals;
  return {{"team", r.team},
          {"evaluated_case_count", r.evaluated_case_count},
          {"skipped_cases", r.skipped_cases},
          {"totals",
           {{"points", t.points.value()},
            {"bonus", points_json(t.bonus)},
            {"points_plus_bonus", points_json(t.points_plus_bonus)},
            {"weighted_confidence", optional_number(t.weighted_confidence)},
            {"combined", optional_number(t.combined)}}},
          {"per_case", per_case}};
}

Service::Service(Config config) : config_(std::move(config)) {
  cases_ = scan_tile_root(config_.tile_root);
  for (std::size_t i = 0; i < cases_.size(); ++i) case_index_[cases_[i].case_id] = i;
  gt_ = ingest::read_ground_truth(config_.gt_path);
  for (const auto& g : gt_.rows) {
    if (case_index_.count(g.case_id)) scope_.insert(g.case_id);
  }
  if (config_.machine_dir) {
    for (const auto& sub : ingest::read_submission_dir(*config_.machine_dir)) {
      machines_.push_back(eval::evaluate_submission(gt_.rows, sub.team, sub.rows, config_.eval, &scope_));
    }
  }
  store_ = std::make_unique<EventStore>(config_.store_path, config_.clock);
}

const CaseManifest* Service::find_case(const std::string& id) const {
  const auto it = case_index_.find(id);
  return it == case_index_.end() ? nullptr : &cases_[it->second];
}

std::string Service::tile_bytes(const std::string& case_id, const std::string& stain, int z, int x, int y) const {
  const auto* m = find_case(case_id);
  if (!m) throw Error(ErrorKind::identifier, "unknown case " + case_id);
  if (std::find(m->stains.begin(), m->stains.end(), stain) == m->stains.end()) {
    throw Error(ErrorKind::identifier, "unknown stain " + stain);
  }
  if (z < 0 || z >= static_cast<int>(m->levels.size())) throw Error(ErrorKind::identifier, "no such level");
  const auto& l = m->levels[z];
  if (x < 0 || y < 0 || x >= l.columns || y >= l.rows) throw Error(ErrorKind::identifier, "no such tile");
  const fs::path p = config_.tile_root / case_id / stain / std::to_string(z) /
                     (std::to_string(x) + "_" + std::to_string(y) + ".png");
  try {
    return ingest::read_file(p);
  } catch (const Error&) {
    throw Error(ErrorKind::integrity, "advertised tile missing: " + p.string());
  }
}

ScoreEvent Service::post_score(const std::string& case_id, const Json& body) {
  if (!body.is_object()) throw FieldError{"body", "body must be a JSON object"};
  ScoreEvent e;
  if (!body.contains("rater") || !body["rater"].is_string()) throw FieldError{"rater", "rater must be a string"};
  e.rater = body["rater"].get<std::string>();
  try {
    validate_rater(e.rater);
  } catch (const Error& err) {
    throw FieldError{"rater", err.what()};
  }
  if (body.contains("case_id") && body["case_id"] != case_id) {
    throw FieldError{"case_id", "case_id does not match the URL"};
  }
  if (!find_case(case_id)) throw Error(ErrorKind::identifier, "unknown case " + case_id);
  e.case_id = case_id;

  const Json s = body.value("score", Json());
  std::optional<Her2Score> score;
  if (s.is_number_integer() && s.get<long long>() >= 0 && s.get<long long>() <= 3) {
    score = score_from_index(s.get<int>());
  } else if (s.is_string()) {
    score = parse_score(s.get<std::string>());
  }
  if (!score) throw FieldError{"score", "score must be one of 0, 1+, 2+, 3+"};
  e.score = *score;

  auto number = [&](const char* field, auto validate) -> std::optional<double> {
    const Json v = body.value(field, Json());
    if (v.is_null()) return std::nullopt;
    if (!v.is_number()) throw FieldError{field, std::string(field) + " must be a number"};
    const double d = v.get<double>();
    try {
      validate(d);
    } catch (const Error& err) {
      throw FieldError{field, err.what()};
    }
    return d;
  };
  e.pcms = number("pcms", validate_pcms);
  e.confidence = number("confidence", validate_confidence);

  LogRecord r;
  r.event = e;
  return store_->append(r).event;
}

void Service::register_rater(const std::string& rater) {
  try {
    validate_rater(rater);
  } catch (const Error& err) {
    throw FieldError{"rater", err.what()};
  }
  LogRecord r;
  r.kind = LogRecord::Kind::reg;
  r.event.rater = rater;
  store_->append(r);
}

void Service::close_session() {
  if (closed()) return;
  LogRecord r;
  r.kind = LogRecord::Kind::close;
  store_->append(r);
}

bool Service::closed() const { return session_closed(store_->snapshot()); }

eval::SubmissionResult Service::rater_result(const std::string& rater) const {
  const auto log = store_->snapshot();
  if (!known_raters(log).count(rater)) throw Error(ErrorKind::identifier, "unknown rater " + rater);
  const auto preds = latest_predictions(log, rater);
  return eval::evaluate_submission(gt_.rows, rater, preds, config_.eval, &scope_);
}

Json Service::result_json(const std::string& rater) const {
  Json machines = Json::array();
  for (const auto& m : machines_) machines.push_back(to_json(m));
  return {{"rater", rater}, {"result", to_json(rater_result(rater))}, {"machines", machines}};
}

Json Service::leaderboard_json() const {
  std::vector<eval::SubmissionResult> all;
  std::set<std::string> machine_names;
  for (const auto& m : machines_) {
    all.push_back(m);
    machine_names.insert(m.team);
  }
  for (const auto& r : known_raters(store_->snapshot())) {
    if (!machine_names.count(r)) all.push_back(rater_result(r));
  }
  Json boards = Json::object();
  for (auto c : {eval::Criterion::points, eval::Criterion::points_plus_bonus, eval::Criterion::weighted_confidence,
                 eval::Criterion::combined}) {
    Json rows = Json::array();
    if (!all.empty()) {
      for (const auto& e : eval::rank(all, c)) {
        rows.push_back({{"rank", e.rank},
                        {"team", e.team},
                        {"kind", machine_names.count(e.team) ? "machine" : "rater"},
                        {"value", optional_number(e.value)},
                        {"note", e.tiebreak_note}});
      }
    }
    boards[std::string(eval::to_string(c))] = rows;
  }
  return {{"cases", scope_.size()}, {"leaderboards", boards}};
}

namespace {

Response json_response(int status, const Json& body) { return {status, "application/json", body.dump(), {}}; }

Response error_response(int status, const std::string& message, const std::string& field = {}) {
  Json body = {{"error", message}};
  if (!field.empty()) body["field"] = field;
  return json_response(status, body);
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  const std::string p = path.substr(0, path.find('?'));
  while (pos <= p.size()) {
    const auto end = std::min(p.find('/', pos), p.size());
    if (end > pos) out.push_back(p.substr(pos, end - pos));
    pos = end + 1;
  }
  return out;
}

std::optional<int> parse_coord(std::string_view s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

int status_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::identifier:
      return 404;
    case ErrorKind::range:
    case ErrorKind::format:
      return 400;
    default:
      return 500;
  }
}

}  // namespace

Response Service::handle(const std::string& method, const std::string& path, const std::string& body) {
  const auto seg = split_path(path);
  const bool get = method == "GET" || method == "HEAD";
  const bool post = method == "POST";
  auto withheld = [] { return error_response(403, "ground truth withheld until the session is closed"); };
  try {
    if (seg.size() < 2 || seg[0] != "api") return error_response(404, "not found");
    if (seg[1] == "cases") {
      if (seg.size() == 2) {
        if (!get) return error_response(405, "method not allowed");
        Json arr = Json::array();
        for (const auto& m : cases_) arr.push_back(to_json(m));
        return json_response(200, arr);
      }
      const auto* m = find_case(seg[2]);
      if (seg.size() == 3) {
        if (!get) return error_response(405, "method not allowed");
        if (!m) return error_response(404, "unknown case " + seg[2]);
        return json_response(200, to_json(*m));
      }
      if (seg.size() == 4 && seg[3] == "score") {
        if (!post) return error_response(405, "method not allowed");
        Json j;
        try {
          j = Json::parse(body);
        } catch (const nlohmann::json::exception&) {
          return error_response(400, "body is not valid JSON", "body");
        }
        return json_response(200, {{"ok", true}, {"event", to_json(post_score(seg[2], j))}});
      }
      if (seg.size() == 8 && seg[4] == "tiles" && seg[7].size() > 4 &&
          seg[7].compare(seg[7].size() - 4, 4, ".png") == 0) {
        if (!get) return error_response(405, "method not allowed");
        const auto z = parse_coord(seg[5]), x = parse_coord(seg[6]),
                   y = parse_coord(std::string_view(seg[7]).substr(0, seg[7].size() - 4));
        if (!z || !x || !y) return error_response(404, "no such tile");
        Response r{200, "image/png", tile_bytes(seg[2], seg[3], *z, *x, *y), {}};
        r.headers["Cache-Control"] = "public, max-age=31536000, immutable";
        r.headers["ETag"] = "\"" + text::hex64(text::fnv1a64(r.body)) + "\"";
        return r;
      }
      return error_response(404, "not found");
    }
    if (seg[1] == "raters" && seg.size() >= 3) {
      if (seg.size() == 3) {
        if (!post) return error_response(405, "method not allowed");
        register_rater(seg[2]);
        return json_response(200, {{"ok", true}, {"rater", seg[2]}});
      }
      if (seg.size() == 4 && seg[3] == "result") {
        if (!get) return error_response(405, "method not allowed");
        if (!known_raters(store_->snapshot()).count(seg[2])) return error_response(404, "unknown rater " + seg[2]);
        if (!closed()) return withheld();
        return json_response(200, result_json(seg[2]));
      }
      return error_response(404, "not found");
    }
    if (seg[1] == "leaderboard" && seg.size() == 2) {
      if (!get) return error_response(405, "method not allowed");
      if (!closed()) return withheld();
      return json_response(200, leaderboard_json());
    }
    if (seg[1] == "session") {
      if (seg.size() == 2) {
        if (!get) return error_response(405, "method not allowed");
        return json_response(200, {{"closed", closed()}, {"cases", cases_.size()}, {"scored_cases", scope_.size()}});
      }
      if (seg.size() == 3 && seg[2] == "close") {
        if (!post) return error_response(405, "method not allowed");
        close_session();
        return json_response(200, {{"closed", true}});
      }
    }
    return error_response(404, "not found");
  } catch (const FieldError& e) {
    return error_response(400, e.what(), e.field);
  } catch (const Error& e) {
    return error_response(status_for(e.kind()), e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

}  // namespace her2::service
