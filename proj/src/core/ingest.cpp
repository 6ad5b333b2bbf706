#include "her2/ingest.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include "her2/error.hpp"
#include "her2/text.hpp"

#ifndef HER2KIT_FIXTURE_DIR
#define HER2KIT_FIXTURE_DIR "fixtures"
#endif

namespace her2::ingest {

namespace fs = std::filesystem;

namespace {

std::string slurp(std::istream& in) {
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string_view strip_bom(std::string_view s) {
  if (s.size() >= 3 && static_cast<unsigned char>(s[0]) == 0xEF &&
      static_cast<unsigned char>(s[1]) == 0xBB && static_cast<unsigned char>(s[2]) == 0xBF) {
    s.remove_prefix(3);
  }
  return s;
}

struct Records {
  std::vector<std::string> header;
  // (line number, fields)
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
};

Records split_records(std::string_view text, std::string_view source) {
  const auto lines = text::read_lines(strip_bom(text));
  Records out;
  bool have_header = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (text::trim(lines[i]).empty()) continue;
    auto fields = text::split_csv_record(lines[i]);
    if (!fields) {
      throw FormatError(ErrorKind::format, std::string(source), line_no, "record",
                        "unterminated quoted field");
    }
    if (!have_header) {
      out.header = std::move(*fields);
      for (auto& h : out.header) h = std::string(text::trim(h));
      have_header = true;
    } else {
      out.rows.emplace_back(line_no, std::move(*fields));
    }
  }
  if (!have_header) {
    throw FormatError(ErrorKind::format, std::string(source), 1, "header", "missing header row");
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    out += v[i];
  }
  return out;
}

Her2Score parse_score_field(std::string_view token, std::string_view source, std::size_t line) {
  const auto s = parse_score(token);
  if (!s) {
    throw FormatError(ErrorKind::format, std::string(source), line, "score",
                      "unknown score " + std::string(text::trim(token)));
  }
  return *s;
}

std::optional<double> parse_pcms_field(std::string_view token, std::string_view source,
                                       std::size_t line) {
  token = text::trim(token);
  if (token.empty()) return std::nullopt;
  if (token.back() == '%') token.remove_suffix(1);
  const auto v = text::parse_double(token);
  if (!v) {
    throw FormatError(ErrorKind::format, std::string(source), line, "pcms",
                      "not a number: " + std::string(token));
  }
  if (*v < 0.0 || *v > 100.0) {
    throw FormatError(ErrorKind::range, std::string(source), line, "pcms",
                      "outside [0,100]: " + std::string(token));
  }
  return v;
}

std::string format_optional(const std::optional<double>& v) {
  return v ? text::format_double(*v) : std::string();
}

}  // namespace

GroundTruthFile parse_ground_truth_text(std::string_view content, std::string_view source) {
  const Records rec = split_records(content, source);
  if (join(rec.header) != kGroundTruthHeader) {
    throw FormatError(ErrorKind::format, std::string(source), 1, "header",
                      "expected '" + std::string(kGroundTruthHeader) + "', got '" + join(rec.header) +
                          "'");
  }
  GroundTruthFile file;
  std::unordered_set<std::string> seen;
  for (const auto& [line, f] : rec.rows) {
    if (f.size() != 4) {
      throw FormatError(ErrorKind::format, std::string(source), line, "record",
                        "expected 4 fields, got " + std::to_string(f.size()));
    }
    GroundTruthRecord r;
    r.case_id = std::string(text::trim(f[0]));
    if (r.case_id.empty()) {
      throw FormatError(ErrorKind::format, std::string(source), line, "case_id", "empty case id");
    }
    if (!seen.insert(r.case_id).second) {
      throw FormatError(ErrorKind::format, std::string(source), line, "case_id",
                        "duplicate case " + r.case_id);
    }
    r.score = parse_score_field(f[1], source, line);
    const auto fish = parse_fish(f[2]);
    if (!fish) {
      throw FormatError(ErrorKind::format, std::string(source), line, "fish",
                        "unknown FISH status " + std::string(text::trim(f[2])));
    }
    r.fish = *fish;
    r.pcms = parse_pcms_field(f[3], source, line);
    if (r.fish != FishStatus::not_performed && r.score != Her2Score::two) {
      file.warnings.push_back(std::string(source) + ":" + std::to_string(line) +
                              ": FISH result recorded for a non-2+ case " + r.case_id);
    }
    file.rows.push_back(std::move(r));
  }
  if (file.rows.empty()) {
    throw FormatError(ErrorKind::format, std::string(source), 2, "record", "no data rows");
  }
  return file;
}

GroundTruthFile parse_ground_truth(std::istream& in, std::string_view source) {
  return parse_ground_truth_text(slurp(in), source);
}

SubmissionFile parse_submission_text(std::string_view content, std::string team,
                                     std::string_view source) {
  const Records rec = split_records(content, source);
  const std::string header = join(rec.header);
  const bool has_flag = header == std::string(kSubmissionHeader) + ",flag";
  if (header != kSubmissionHeader && !has_flag) {
    throw FormatError(ErrorKind::format, std::string(source), 1, "header",
                      "expected '" + std::string(kSubmissionHeader) + "', got '" + header + "'");
  }
  const std::size_t width = has_flag ? 5 : 4;
  SubmissionFile file;
  file.team = std::move(team);
  std::unordered_set<std::string> seen;
  for (const auto& [line, f] : rec.rows) {
    if (f.size() != width) {
      throw FormatError(ErrorKind::format, std::string(source), line, "record",
                        "expected " + std::to_string(width) + " fields, got " +
                            std::to_string(f.size()));
    }
    const std::string case_id(text::trim(f[0]));
    if (case_id.empty()) {
      throw FormatError(ErrorKind::format, std::string(source), line, "case_id", "empty case id");
    }
    if (!seen.insert(case_id).second) {
      throw FormatError(ErrorKind::format, std::string(source), line, "case_id",
                        "duplicate case " + case_id);
    }
    if (has_flag && !text::trim(f[4]).empty()) {
      file.flagged.push_back({case_id, std::string(text::trim(f[4]))});
      continue;
    }
    Prediction p;
    p.case_id = case_id;
    p.score = parse_score_field(f[1], source, line);
    const std::string_view conf = text::trim(f[2]);
    if (!conf.empty()) {
      const auto c = text::parse_double(conf);
      if (!c) {
        throw FormatError(ErrorKind::format, std::string(source), line, "confidence",
                          "not a number: " + std::string(conf));
      }
      if (*c < 0.0 || *c > 1.0) {
        throw FormatError(ErrorKind::range, std::string(source), line, "confidence",
                          "outside [0,1]: " + std::string(conf));
      }
      p.confidence = c;
    }
    p.pcms = parse_pcms_field(f[3], source, line);
    file.rows.push_back(std::move(p));
  }
  return file;
}

SubmissionFile parse_submission(std::istream& in, std::string team, std::string_view source) {
  return parse_submission_text(slurp(in), std::move(team), source);
}

std::string render_ground_truth(const GroundTruthFile& file) {
  std::string out(kGroundTruthHeader);
  out.push_back('\n');
  for (const auto& r : file.rows) {
    out += text::csv_escape(r.case_id) + "," + std::string(to_digit(r.score)) + "," +
           std::string(to_string(r.fish)) + "," + format_optional(r.pcms) + "\n";
  }
  return out;
}

std::string render_submission(const SubmissionFile& file) {
  const bool has_flag = !file.flagged.empty();
  std::string out(kSubmissionHeader);
  out += has_flag ? ",flag\n" : "\n";
  for (const auto& p : file.rows) {
    out += text::csv_escape(p.case_id) + "," + std::string(to_digit(p.score)) + "," +
           format_optional(p.confidence) + "," + format_optional(p.pcms);
    out += has_flag ? ",\n" : "\n";
  }
  for (const auto& f : file.flagged) {
    out += text::csv_escape(f.case_id) + ",,,," + text::csv_escape(f.flag) + "\n";
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return slurp(in);
}

GroundTruthFile read_ground_truth(const fs::path& path) {
  return parse_ground_truth_text(read_file(path), path.string());
}

SubmissionFile read_submission(const fs::path& path, std::string team) {
  return parse_submission_text(read_file(path), std::move(team), path.string());
}

std::vector<SubmissionFile> read_submission_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::io, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SubmissionFile> out;
  for (const auto& f : files) out.push_back(read_submission(f, f.stem().string()));
  return out;
}

fs::path fixture_dir() {
  if (const char* env = std::getenv("HER2KIT_FIXTURES"); env && *env) return fs::path(env);
  return fs::path(HER2KIT_FIXTURE_DIR);
}

Fixtures load_fixtures(const fs::path& dir) {
  const fs::path manifest_path = dir / "MANIFEST.csv";
  if (!fs::exists(manifest_path)) {
    throw Error(ErrorKind::integrity, "fixture manifest missing: " + manifest_path.string());
  }
  const Records manifest = split_records(read_file(manifest_path), manifest_path.string());
  if (join(manifest.header) != "file,kind,team,rows,fnv1a64") {
    throw Error(ErrorKind::integrity, "unexpected fixture manifest header");
  }

  Fixtures fx;
  bool have_training = false, have_mvm = false, have_cases = false, have_table = false;
  for (const auto& [line, f] : manifest.rows) {
    if (f.size() != 5) throw Error(ErrorKind::integrity, "malformed manifest line " + std::to_string(line));
    const fs::path file = dir / f[0];
    if (!fs::exists(file)) throw Error(ErrorKind::integrity, "fixture missing: " + file.string());
    const std::string content = read_file(file);
    if (text::hex64(text::fnv1a64(content)) != f[4]) {
      throw Error(ErrorKind::integrity, "checksum mismatch for fixture " + f[0]);
    }
    const auto expected_rows = text::parse_int(f[3]);
    std::size_t rows = 0;
    const std::string& kind = f[1];
    if (kind == "training_gt") {
      fx.training_gt = parse_ground_truth_text(content, file.string());
      rows = fx.training_gt.rows.size();
      have_training = true;
    } else if (kind == "mvm_gt") {
      fx.mvm_gt = parse_ground_truth_text(content, file.string());
      rows = fx.mvm_gt.rows.size();
      have_mvm = true;
    } else if (kind == "submission") {
      fx.mvm_submissions.push_back(parse_submission_text(content, f[2], file.string()));
      rows = fx.mvm_submissions.back().rows.size();
    } else if (kind == "event_cases") {
      const Records r = split_records(content, file.string());
      for (const auto& row : r.rows) fx.mvm_event_cases.insert(std::string(text::trim(row.second.at(0))));
      rows = r.rows.size();
      have_cases = true;
    } else if (kind == "pooled_table") {
      fx.pooled_table_csv = content;
      rows = split_records(content, file.string()).rows.size();
      have_table = true;
    } else {
      throw Error(ErrorKind::integrity, "unknown fixture kind '" + kind + "'");
    }
    if (!expected_rows || static_cast<std::size_t>(*expected_rows) != rows) {
      throw Error(ErrorKind::integrity, "row count mismatch for fixture " + f[0]);
    }
  }
  if (!have_training || !have_mvm || !have_cases || !have_table) {
    throw Error(ErrorKind::integrity, "fixture bundle incomplete");
  }
  return fx;
}

}  // namespace her2::ingest
