#include "her2/cli.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "her2/charcurve.hpp"
#include "her2/error.hpp"
#include "her2/ingest.hpp"
#include "her2/parallel.hpp"
#include "her2/patchpipe.hpp"
#include "her2/pcms_morph.hpp"
#include "her2/service.hpp"
#include "her2/slide.hpp"
#include "her2/synthgen.hpp"
#include "her2/text.hpp"

namespace her2::cli {

namespace fs = std::filesystem;

namespace {

constexpr eval::Criterion kCriteria[] = {eval::Criterion::points, eval::Criterion::points_plus_bonus,
                                         eval::Criterion::weighted_confidence, eval::Criterion::combined};

std::string real_or_na(const std::optional<double>& v) { return v ? text::format_double(*v) : "NA"; }
std::string points_or_na(const std::optional<Points>& p) { return p ? format_points(*p) : "NA"; }

void write_text(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << body;
  if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

// One case id per line under a "case_id" header.
std::set<std::string> read_case_list(const fs::path& path) {
  const auto lines = text::read_lines(ingest::read_file(path));
  if (lines.empty() || text::trim(lines[0]) != "case_id") {
    throw FormatError(ErrorKind::format, path.string(), 1, "case_id", "expected header 'case_id'");
  }
  std::set<std::string> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto id = text::trim(lines[i]);
    if (!id.empty()) out.insert(std::string(id));
  }
  return out;
}

eval::Options eval_options(const std::string& mode, bool combined_bonus) {
  eval::Options o;
  o.mode = mode == "literal" ? eval::ConfidenceMode::literal : eval::ConfidenceMode::corrected;
  o.bonus_inclusive = combined_bonus;
  return o;
}

struct EvalInputs {
  ingest::GroundTruthFile gt;
  std::vector<ingest::SubmissionFile> subs;
  std::optional<std::set<std::string>> scope;
};

EvalInputs load_eval_inputs(bool fixtures, const std::string& gt, const std::string& subs, const std::string& cases) {
  EvalInputs in;
  if (fixtures) {
    auto fx = ingest::load_fixtures();
    in.gt = std::move(fx.mvm_gt);
    in.subs = std::move(fx.mvm_submissions);
    in.scope = std::move(fx.mvm_event_cases);
  }
  if (!gt.empty()) in.gt = ingest::read_ground_truth(gt);
  if (!subs.empty()) in.subs = ingest::read_submission_dir(subs);
  if (!cases.empty()) in.scope = read_case_list(cases);
  if (in.gt.rows.empty()) throw Error(ErrorKind::empty_collection, "no ground truth given (use --gt or --fixtures)");
  if (in.subs.empty()) throw Error(ErrorKind::empty_collection, "no submissions found");
  return in;
}

std::vector<eval::SubmissionResult> evaluate_all(const EvalInputs& in, const eval::Options& opts) {
  std::vector<eval::SubmissionResult> out;
  for (const auto& s : in.subs) {
    out.push_back(eval::evaluate_submission(in.gt.rows, s.team, s.rows, opts, in.scope ? &*in.scope : nullptr));
  }
  return out;
}

void report_warnings(const EvalInputs& in, const std::vector<eval::SubmissionResult>& results, std::ostream& err) {
  for (const auto& w : in.gt.warnings) err << "warning: " << w << "\n";
  for (const auto& r : results) {
    if (!r.skipped_cases.empty()) {
      err << "warning: " << r.team << " has no prediction for " << r.skipped_cases.size() << " case(s)\n";
    }
  }
}

// Dataset helpers ---------------------------------------------------------------

std::map<std::string, Her2Score> label_map(const fs::path& dataset) {
  const fs::path gt_path = dataset / "gt.csv";
  std::map<std::string, Her2Score> out;
  for (const auto& r : ingest::read_ground_truth(gt_path).rows) out[r.case_id] = r.score;
  return out;
}

// Deterministic Fisher-Yates driven by the toolkit RNG.
template <class T>
void shuffle(std::vector<T>& v, synth::Rng& rng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) std::swap(v[i], v[rng.integer(0, i)]);
}

// Per class: shuffle, then the first quarter (rounded) is held out.
std::vector<bool> stratified_holdout(const std::vector<int>& labels, std::uint64_t seed) {
  std::vector<bool> held(labels.size(), false);
  synth::Rng rng(synth::mix_seed(seed, 0x5e11));
  for (int k = 0; k < 4; ++k) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == k) idx.push_back(i);
    }
    shuffle(idx, rng);
    const std::size_t n = (idx.size() + 2) / 4;
    for (std::size_t i = 0; i < n; ++i) held[idx[i]] = true;
  }
  return held;
}

struct PatchSet {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  std::vector<int> group;  // split unit: case index, or the patch itself
};

void add_features(PatchSet& set, const patchpipe::FeatureVector& f, int label, int group) {
  set.x.emplace_back(f.begin(), f.end());
  set.y.push_back(label);
  set.group.push_back(group);
}

// A synthetic dataset (gt.csv + case_*) or class folders 0/1/2/3 (also
// "1+" style) of patch images.
PatchSet collect_patches(const fs::path& input, const patchpipe::ScoreOptions& opts, int jobs, std::ostream& err) {
  PatchSet set;
  if (!fs::is_directory(input)) throw Error(ErrorKind::io, "not a directory: " + input.string());
  if (fs::exists(input / "gt.csv")) {
    const auto labels = label_map(input);
    const auto dirs = list_case_dirs(input);
    std::vector<std::vector<patchpipe::FeatureVector>> feats(dirs.size());
    std::vector<int> label(dirs.size());
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      const auto id = case_id_from_dir(dirs[i]);
      const auto it = labels.find(id);
      if (it == labels.end()) throw Error(ErrorKind::identifier, "case " + id + " missing from gt.csv");
      label[i] = index_of(it->second);
    }
    auto per_case = opts;
    per_case.jobs = 1;
    parallel_for(static_cast<int>(dirs.size()), jobs,
                 [&](int i) { feats[i] = patchpipe::tissue_patch_features(load_slide(dirs[i]), per_case); });
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      for (const auto& f : feats[i]) add_features(set, f, label[i], static_cast<int>(i));
    }
    err << "collected " << set.x.size() << " tissue patches from " << dirs.size() << " cases\n";
    return set;
  }
  std::vector<std::pair<fs::path, int>> files;
  for (const auto& entry : fs::directory_iterator(input)) {
    if (!entry.is_directory()) continue;
    const auto score = parse_score(entry.path().filename().string());
    if (!score) continue;
    for (const auto& f : fs::directory_iterator(entry.path())) {
      if (f.is_regular_file() && is_image_file(f.path())) files.emplace_back(f.path(), index_of(*score));
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorKind::empty_collection, "no labeled patches under " + input.string());
  std::vector<patchpipe::FeatureVector> feats(files.size());
  parallel_for(static_cast<int>(files.size()), jobs,
               [&](int i) { feats[i] = patchpipe::extract_features(read_image(files[i].first), opts.features); });
  for (std::size_t i = 0; i < files.size(); ++i) add_features(set, feats[i], files[i].second, static_cast<int>(i));
  err << "collected " << set.x.size() << " labeled patches\n";
  return set;
}

// Subcommands --------------------------------------------------------------------

struct EvaluateArgs {
  std::string gt, submissions, cases, out, mode = "corrected";
  bool fixtures = false, combined_bonus = false;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  const auto in = load_eval_inputs(a.fixtures, a.gt, a.submissions, a.cases);
  const auto results = evaluate_all(in, eval_options(a.mode, a.combined_bonus));
  report_warnings(in, results, err);
  if (!a.out.empty()) {
    const fs::path dir(a.out);
    for (auto c : kCriteria) write_text(dir / leaderboard_file(c), leaderboard_csv(results, c));
    write_text(dir / kPerCaseFile, per_case_csv(results));
    write_text(dir / kTotalsFile, totals_csv(results));
  }
  out << leaderboard_csv(results, eval::Criterion::points);
  return kExitOk;
}

struct MvmArgs {
  std::string gt, submissions, cases, out;
  bool fixtures = false;
};

int cmd_mvm(const MvmArgs& a, std::ostream& out, std::ostream& err) {
  const auto in = load_eval_inputs(a.fixtures, a.gt, a.submissions, a.cases);
  const auto results = evaluate_all(in, {});
  report_warnings(in, results, err);
  std::vector<eval::RaterColumn> cols;
  for (const auto& s : in.subs) cols.push_back({s.team, s.rows});
  const auto table = eval::pooled_agreement_table(in.gt.rows, cols).to_csv();

  std::string summary = "rank,team,points,bonus,points_plus_bonus,note\n";
  for (const auto& e : eval::rank(results, eval::Criterion::points)) {
    const auto& r = *std::find_if(results.begin(), results.end(),
                                  [&](const eval::SubmissionResult& s) { return s.team == e.team; });
    summary += std::to_string(e.rank) + "," + text::csv_escape(e.team) + "," + format_points(r.totals.points) + "," +
               points_or_na(r.totals.bonus) + "," + points_or_na(r.totals.points_plus_bonus) + "," +
               text::csv_escape(e.tiebreak_note) + "\n";
  }
  if (!a.out.empty()) {
    write_text(fs::path(a.out) / "pooled_table.csv", table);
    write_text(fs::path(a.out) / "summary.csv", summary);
  }
  out << table << "\n" << summary;
  return kExitOk;
}

struct ScoreArgs {
  std::string input, method = "charcurve", model, rule = "visilab", pcms, prior_gt, out, team;
  int jobs = default_jobs();
};

int cmd_score(const ScoreArgs& a, std::ostream& out, std::ostream& err) {
  const bool patch = a.method == "patchpipe";
  std::string pcms_mode = a.pcms.empty() ? (patch ? "eq2" : "native") : a.pcms;
  if (patch && pcms_mode != "eq2" && pcms_mode != "morphological" && pcms_mode != "prior") {
    throw Error(ErrorKind::format, "--pcms for patchpipe must be eq2, morphological or prior");
  }
  if (!patch && pcms_mode == "eq2") throw Error(ErrorKind::format, "--pcms eq2 needs --method patchpipe");
  if (pcms_mode == "prior" && a.prior_gt.empty()) throw Error(ErrorKind::format, "--pcms prior needs --prior-gt");
  if (patch && a.model.empty()) throw Error(ErrorKind::io, "--model is required for patchpipe");

  std::optional<patchpipe::SammeModel> samme;
  charcurve::CentroidModel centroids = charcurve::default_centroid_model();
  if (patch) {
    samme = patchpipe::read_samme_model(a.model);
  } else if (!a.model.empty()) {
    centroids = charcurve::read_centroid_model(a.model);
  }
  std::optional<ingest::GroundTruthFile> prior;
  if (pcms_mode == "prior") prior = ingest::read_ground_truth(a.prior_gt);

  patchpipe::ScoreOptions sopts;
  sopts.rule = *patchpipe::parse_rule(a.rule);
  sopts.pcms = pcms_mode == "morphological" ? patchpipe::PcmsMode::morphological : patchpipe::PcmsMode::eq2;
  sopts.jobs = 1;

  const auto dirs = list_case_dirs(a.input);
  if (dirs.empty()) throw Error(ErrorKind::empty_collection, "no case_* directories under " + a.input);
  struct Outcome {
    std::optional<Prediction> prediction;
    std::string flag;
  };
  std::vector<Outcome> results(dirs.size());
  parallel_for(static_cast<int>(dirs.size()), a.jobs, [&](int i) {
    const auto slide = load_slide(dirs[i]);
    try {
      Prediction p = patch ? patchpipe::score_slide_patchpipe(slide, *samme, sopts)
                           : charcurve::score_slide_charcurve(slide, centroids);
      if (!patch && pcms_mode == "morphological") {
        std::vector<pcms::TumorMask> tumors;
        std::vector<pcms::MembraneExtent> membranes;
        for (const auto& t : slide.tiles) {
          auto m = pcms::analyse_tile(t);
          tumors.push_back(std::move(m.tumor));
          membranes.push_back(std::move(m.membrane));
        }
        p.pcms = pcms::pcms_morphological(tumors, membranes).pcms;
      }
      if (prior) p.pcms = pcms::pcms_class_prior(*prior, p.score);
      results[i].prediction = p;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::coverage) throw;
      results[i].flag = std::string("coverage: ") + e.what();
    }
  });

  ingest::SubmissionFile sub;
  sub.team = a.team.empty() ? a.method : a.team;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    if (results[i].prediction) {
      sub.rows.push_back(*results[i].prediction);
    } else {
      sub.flagged.push_back({case_id_from_dir(dirs[i]), results[i].flag});
      err << "warning: case " << case_id_from_dir(dirs[i]) << " flagged (" << results[i].flag << ")\n";
    }
  }
  const auto csv = ingest::render_submission(sub);
  if (a.out.empty()) {
    out << csv;
  } else {
    write_text(a.out, csv);
    out << "scored " << sub.rows.size() << " case(s), flagged " << sub.flagged.size() << "\n";
  }
  return kExitOk;
}

struct TrainArgs {
  std::string input, out;
  int rounds = 100, depth = 2, jobs = default_jobs();
  std::uint64_t seed = 1;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const patchpipe::ScoreOptions sopts;
  const auto set = collect_patches(a.input, sopts, a.jobs, err);

  // Split by group so that patches of one case never straddle the split.
  const int groups = set.group.empty() ? 0 : *std::max_element(set.group.begin(), set.group.end()) + 1;
  std::vector<int> group_label(groups, -1);
  for (std::size_t i = 0; i < set.y.size(); ++i) group_label[set.group[i]] = set.y[i];
  const auto held_group = stratified_holdout(group_label, a.seed);

  std::vector<std::vector<double>> tx, vx;
  std::vector<int> ty, vy;
  for (std::size_t i = 0; i < set.x.size(); ++i) {
    if (held_group[set.group[i]]) {
      vx.push_back(set.x[i]);
      vy.push_back(set.y[i]);
    } else {
      tx.push_back(set.x[i]);
      ty.push_back(set.y[i]);
    }
  }
  patchpipe::TrainOptions topts;
  topts.rounds = a.rounds;
  topts.depth = a.depth;
  const auto model = patchpipe::train_samme(tx, ty, 4, topts);
  patchpipe::write_samme_model(a.out, model);
  const auto text = patchpipe::render_samme_model(model);

  out << "trained on " << tx.size() << " patches, " << model.rounds.size() << " rounds kept\n";
  if (vx.empty()) {
    out << "held-out accuracy: n/a (no held-out patches)\n";
  } else {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < vx.size(); ++i) correct += patchpipe::predict_samme(model, vx[i]).category == vy[i];
    out << "held-out accuracy: " << text::format_fixed(static_cast<double>(correct) / vx.size(), 4) << " ("
        << correct << "/" << vx.size() << " patches)\n";
  }
  out << "model checksum: " << text::hex64(text::fnv1a64(text)) << "\n";
  return kExitOk;
}

struct SynthArgs {
  std::string out;
  int cases = 0, per_class = 0, jobs = default_jobs(), tiles = 2, tile_size = 512, cells = 120;
  std::uint64_t seed = 1;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream&) {
  if ((a.cases > 0) == (a.per_class > 0)) throw Error(ErrorKind::format, "give exactly one of --cases or --per-class");
  synth::DatasetInfo info;
  info.seed = a.seed;
  info.case_count = a.cases > 0 ? a.cases : 4 * a.per_class;
  info.options.tile_count = a.tiles;
  info.options.tile_size = a.tile_size;
  info.options.cell_count = a.cells;
  try {
    synth::write_dataset(a.out, info, a.jobs);
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorKind::io, e.what());
  }
  out << "wrote " << info.case_count << " cases to " << a.out << "\n";
  out << "dataset checksum: " << text::hex64(tree_checksum(a.out)) << "\n";
  return kExitOk;
}

struct PyramidArgs {
  std::string input, out;
  int jobs = default_jobs();
};

int cmd_pyramid(const PyramidArgs& a, std::ostream& out, std::ostream&) {
  const auto manifests = service::write_dataset_pyramids(a.input, a.out, a.jobs);
  out << "wrote pyramids for " << manifests.size() << " case(s) to " << a.out << "\n";
  return kExitOk;
}

struct ServeArgs {
  std::string host = "127.0.0.1", tiles, gt, store, machines, mode = "corrected";
  int port = 8080;
  bool combined_bonus = false;
};

int cmd_serve(const ServeArgs& a, std::ostream& out, std::ostream&) {
  service::Config c;
  c.tile_root = a.tiles;
  c.gt_path = a.gt;
  c.store_path = a.store;
  if (!a.machines.empty()) c.machine_dir = fs::path(a.machines);
  c.eval = eval_options(a.mode, a.combined_bonus);
  service::Service svc(c);
  service::HttpServer server(svc);
  const int port = server.bind(a.host, a.port);
  out << "serving " << svc.cases().size() << " case(s) on http://" << a.host << ":" << port << "\n" << std::flush;
  server.listen();
  return kExitOk;
}

struct ExportArgs {
  std::string store, out;
};

int cmd_export(const ExportArgs& a, std::ostream& out, std::ostream&) {
  if (!fs::exists(a.store)) throw Error(ErrorKind::io, "no event log at " + a.store);
  const auto subs = service::export_submissions(service::read_log(a.store));
  const auto paths = service::write_submissions(a.out, subs);
  out << "exported " << paths.size() << " rater submission(s) to " << a.out << "\n";
  return kExitOk;
}

// Reads a value from the environment when the flag was not given.
void env_default(CLI::Option* opt, std::string& target, const char* var) {
  if (const char* v = std::getenv(var); v && *v && opt->count() == 0) target = v;
}

}  // namespace

std::string leaderboard_file(eval::Criterion c) { return "leaderboard_" + std::string(eval::to_string(c)) + ".csv"; }

std::string leaderboard_csv(std::span<const eval::SubmissionResult> results, eval::Criterion c) {
  std::string out = "rank,team,value,note\n";
  if (results.empty()) return out;
  for (const auto& e : eval::rank(results, c)) {
    out += std::to_string(e.rank) + "," + text::csv_escape(e.team) + "," + eval::format_value(c, e.value) + "," +
           text::csv_escape(e.tiebreak_note) + "\n";
  }
  return out;
}

std::string per_case_csv(std::span<const eval::SubmissionResult> results) {
  std::string out = "team,case_id,gt_score,predicted,agreement,bonus,weighted_confidence,combined\n";
  for (const auto& r : results) {
    for (const auto& c : r.per_case) {
      out += text::csv_escape(r.team) + "," + text::csv_escape(c.case_id) + "," + std::string(to_digit(c.gt_score)) +
             "," + std::string(to_digit(c.predicted)) + "," + format_points(c.agreement) + "," +
             points_or_na(c.bonus) + "," + real_or_na(c.weighted_confidence) + "," + real_or_na(c.combined) + "\n";
    }
  }
  return out;
}

std::string totals_csv(std::span<const eval::SubmissionResult> results) {
  std::string out = "team,evaluated_cases,skipped_cases,points,bonus,points_plus_bonus,weighted_confidence,combined\n";
  for (const auto& r : results) {
    const auto& t = r.totals;
    out += text::csv_escape(r.team) + "," + std::to_string(r.evaluated_case_count) + "," +
           std::to_string(r.skipped_cases.size()) + "," + format_points(t.points) + "," + points_or_na(t.bonus) + "," +
           points_or_na(t.points_plus_bonus) + "," + real_or_na(t.weighted_confidence) + "," + real_or_na(t.combined) +
           "\n";
  }
  return out;
}

std::uint64_t tree_checksum(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = text::fnv1a64(std::string_view{});
  for (const auto& f : files) {
    h = text::fnv1a64(f.generic_string() + '\0', h);
    h = text::fnv1a64(ingest::read_file(dir / f), h);
  }
  return h;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"HER2 IHC scoring toolkit", args.empty() ? "her2kit" : args[0]};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  const auto modes = CLI::IsMember({"corrected", "literal"});

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score submissions against ground truth and write leaderboards");
  evaluate->add_option("--gt", ev.gt, "Ground-truth CSV")->check(CLI::ExistingFile);
  evaluate->add_option("--submissions", ev.submissions, "Directory of submission CSVs")->check(CLI::ExistingDirectory);
  evaluate->add_option("--cases", ev.cases, "Restrict to the case ids listed in this CSV")->check(CLI::ExistingFile);
  evaluate->add_option("--out", ev.out, "Directory for leaderboard and per-case CSVs");
  evaluate->add_option("--eq1-mode", ev.mode, "Weighted-confidence form")->check(modes);
  evaluate->add_flag("--combined-bonus", ev.combined_bonus, "Combined points include the bonus");
  evaluate->add_flag("--fixtures", ev.fixtures, "Use the bundled event fixtures");

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "Score every case_* directory of an image set");
  score->add_option("input", sc.input, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  score->add_option("--method", sc.method)->check(CLI::IsMember({"charcurve", "patchpipe"}));
  score->add_option("--model", sc.model, "SAMME model (patchpipe) or centroid file (charcurve)")
      ->check(CLI::ExistingFile);
  score->add_option("--rule", sc.rule, "Patch aggregation rule")->check(CLI::IsMember({"indus", "mucs", "visilab"}));
  score->add_option("--pcms", sc.pcms, "PCMS estimate")
      ->check(CLI::IsMember({"native", "eq2", "morphological", "prior"}));
  score->add_option("--prior-gt", sc.prior_gt, "Training GT for --pcms prior")->check(CLI::ExistingFile);
  score->add_option("--out", sc.out, "Submission CSV (stdout when omitted)");
  score->add_option("--team", sc.team, "Team name recorded in messages");
  score->add_option("--jobs", sc.jobs, "Worker count")->check(CLI::PositiveNumber);

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train the patch classifier");
  train->add_option("input", tr.input, "Synthetic dataset or class folders of patches")
      ->required()
      ->check(CLI::ExistingDirectory);
  train->add_option("--out", tr.out, "Model file")->required();
  train->add_option("--rounds", tr.rounds)->check(CLI::PositiveNumber);
  train->add_option("--depth", tr.depth)->check(CLI::PositiveNumber);
  train->add_option("--seed", tr.seed);
  train->add_option("--jobs", tr.jobs)->check(CLI::PositiveNumber);

  SynthArgs sy;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a balanced synthetic dataset");
  synth_cmd->add_option("--cases", sy.cases)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--per-class", sy.per_class)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", sy.seed);
  synth_cmd->add_option("--out", sy.out)->required();
  synth_cmd->add_option("--jobs", sy.jobs)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--tiles", sy.tiles, "Tiles per case")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--tile-size", sy.tile_size)->check(CLI::Range(64, 4096));
  synth_cmd->add_option("--cells", sy.cells, "Cells per tile")->check(CLI::PositiveNumber);

  MvmArgs mv;
  auto* mvm = app.add_subcommand("mvm", "Pooled case-by-rater table and summary ranking");
  mvm->add_option("--gt", mv.gt)->check(CLI::ExistingFile);
  mvm->add_option("--submissions", mv.submissions)->check(CLI::ExistingDirectory);
  mvm->add_option("--cases", mv.cases)->check(CLI::ExistingFile);
  mvm->add_option("--out", mv.out);
  mvm->add_flag("--fixtures", mv.fixtures);

  PyramidArgs py;
  auto* pyramid = app.add_subcommand("pyramid", "Pre-generate viewer tile pyramids for a dataset");
  pyramid->add_option("input", py.input)->required()->check(CLI::ExistingDirectory);
  pyramid->add_option("--out", py.out, "Tile root")->required();
  pyramid->add_option("--jobs", py.jobs)->check(CLI::PositiveNumber);

  ServeArgs sv;
  std::string port_text;
  auto* serve = app.add_subcommand("serve", "Run the scoring service");
  serve->add_option("--host", sv.host);
  auto* port_opt = serve->add_option("--port", port_text, "Port (env HER2KIT_PORT)");
  auto* tiles_opt = serve->add_option("--tiles", sv.tiles, "Tile root (env HER2KIT_TILES)");
  auto* gt_opt = serve->add_option("--gt", sv.gt, "Ground truth (env HER2KIT_GT)");
  auto* store_opt = serve->add_option("--store", sv.store, "Event log (env HER2KIT_STORE)");
  serve->add_option("--machines", sv.machines, "Machine submission CSVs")->check(CLI::ExistingDirectory);
  serve->add_option("--eq1-mode", sv.mode)->check(modes);
  serve->add_flag("--combined-bonus", sv.combined_bonus);

  ExportArgs ex;
  auto* export_cmd = app.add_subcommand("export", "Write one submission CSV per rater from an event log");
  export_cmd->add_option("--store", ex.store)->required();
  export_cmd->add_option("--out", ex.out)->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("her2kit");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*evaluate) return cmd_evaluate(ev, out, err);
    if (*score) return cmd_score(sc, out, err);
    if (*train) return cmd_train(tr, out, err);
    if (*synth_cmd) return cmd_synth(sy, out, err);
    if (*mvm) return cmd_mvm(mv, out, err);
    if (*pyramid) return cmd_pyramid(py, out, err);
    if (*export_cmd) return cmd_export(ex, out, err);
    if (*serve) {
      env_default(port_opt, port_text, "HER2KIT_PORT");
      env_default(tiles_opt, sv.tiles, "HER2KIT_TILES");
      env_default(gt_opt, sv.gt, "HER2KIT_GT");
      env_default(store_opt, sv.store, "HER2KIT_STORE");
      if (!port_text.empty()) {
        const auto p = text::parse_int(port_text);
        if (!p || *p < 0 || *p > 65535) throw Error(ErrorKind::range, "port must lie in [0,65535]");
        sv.port = static_cast<int>(*p);
      }
      if (sv.tiles.empty() || sv.gt.empty() || sv.store.empty()) {
        throw Error(ErrorKind::format, "serve needs --tiles, --gt and --store (or their environment variables)");
      }
      return cmd_serve(sv, out, err);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace her2::cli
