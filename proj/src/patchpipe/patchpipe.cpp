#include "her2/patchpipe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "her2/error.hpp"
#include "her2/ingest.hpp"
#include "her2/parallel.hpp"
#include "her2/pcms_morph.hpp"
#include "her2/text.hpp"

namespace her2::patchpipe {

// Tiling -------------------------------------------------------------------

PatchGrid tile_image(int width, int height, int patch_size, int stride) {
  if (patch_size < 1 || stride < 1) throw Error(ErrorKind::range, "patch size and stride must be positive");
  if (width < patch_size || height < patch_size) {
    throw Error(ErrorKind::size, "image " + std::to_string(width) + "x" + std::to_string(height) +
                                     " is smaller than one " + std::to_string(patch_size) + " px patch");
  }
  PatchGrid g;
  g.patch_size = patch_size;
  g.stride = stride;
  for (int y = 0; y + patch_size <= height; y += stride) {
    for (int x = 0; x + patch_size <= width; x += stride) g.origins.emplace_back(x, y);
  }
  return g;
}

PatchGrid tile_image(const RgbImage& image, int patch_size, int stride) {
  return tile_image(image.width, image.height, patch_size, stride);
}

// Background rejection -------------------------------------------------------

double ones_fraction(const RgbImage& patch, const BackgroundFilter& f) {
  const auto bin = img::adaptive_threshold(to_gray(patch), f.window, f.offset);
  return static_cast<double>(bin.count()) / static_cast<double>(patch.pixel_count());
}

bool is_background_mucs(const RgbImage& patch, const BackgroundFilter& f) {
  return ones_fraction(patch, f) >= f.ones_ratio;
}

// Local-maximum sampling -----------------------------------------------------

LocalMaxima sample_patches_localmax(const Field& dab, int k, int patch_size, int filter) {
  if (k < 0 || patch_size < 1 || filter < 1) throw Error(ErrorKind::range, "localmax: bad k, patch or filter size");
  const int w = dab.width, h = dab.height;
  const int W = w + 1;
  std::vector<double> sat(static_cast<std::size_t>(W) * (h + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    double row = 0;
    for (int x = 0; x < w; ++x) {
      row += dab.at(x, y);
      sat[static_cast<std::size_t>(y + 1) * W + x + 1] = sat[static_cast<std::size_t>(y) * W + x + 1] + row;
    }
  }
  const int r = filter / 2;
  std::vector<double> mean(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r), y1 = std::min(h, y - r + filter);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - r), x1 = std::min(w, x - r + filter);
      const double s = sat[static_cast<std::size_t>(y1) * W + x1] - sat[static_cast<std::size_t>(y0) * W + x1] -
                       sat[static_cast<std::size_t>(y1) * W + x0] + sat[static_cast<std::size_t>(y0) * W + x0];
      mean[static_cast<std::size_t>(y) * w + x] = s / ((y1 - y0) * (x1 - x0));
    }
  }
  struct Peak {
    double v;
    int x, y;
  };
  std::vector<Peak> peaks;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = mean[static_cast<std::size_t>(y) * w + x];
      if (!(v > 0)) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dx && !dy) continue;
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          const double u = mean[static_cast<std::size_t>(yy) * w + xx];
          // On plateaus only the first pixel in raster order survives.
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (u > v || (earlier && u == v)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) peaks.push_back({v, x, y});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.v > b.v; });
  LocalMaxima out;
  const long long r2 = static_cast<long long>(patch_size) * patch_size;
  for (const auto& p : peaks) {
    if (static_cast<int>(out.centers.size()) >= k) break;
    const bool clear = std::all_of(out.centers.begin(), out.centers.end(), [&](const auto& c) {
      const long long dx = c.first - p.x, dy = c.second - p.y;
      return dx * dx + dy * dy >= r2;
    });
    if (!clear) continue;
    out.centers.emplace_back(p.x, p.y);
    out.origins.emplace_back(std::clamp(p.x - patch_size / 2, 0, std::max(0, w - patch_size)),
                             std::clamp(p.y - patch_size / 2, 0, std::max(0, h - patch_size)));
  }
  out.short_of_k = static_cast<int>(out.centers.size()) < k;
  return out;
}

LocalMaxima sample_patches_localmax(const RgbImage& image, int k, int patch_size, int filter,
                                    const img::StainModel& model) {
  const auto c = img::deconvolve(img::rgb_to_od(image), model);
  return sample_patches_localmax(c.dab, k, patch_size, filter);
}

// Features -------------------------------------------------------------------

const std::array<std::string_view, kFeatureCount>& feature_names() {
  static const std::array<std::string_view, kFeatureCount> names{
      "h_mean",         "h_var",          "h_skew",          "h_kurt",          "h_entropy",
      "dab_mean",       "dab_var",        "dab_skew",        "dab_kurt",        "dab_entropy",
      "h_contrast",     "h_energy",       "h_homogeneity",   "h_correlation",   "dab_contrast",
      "dab_energy",     "dab_homogeneity", "dab_correlation", "fractal_dim",     "dab_frac_low",
      "dab_frac_high"};
  return names;
}

std::uint64_t feature_checksum() {
  std::string joined;
  for (auto n : feature_names()) {
    joined += n;
    joined += ',';
  }
  return text::fnv1a64(joined);
}

namespace {

GrayImage quantise(const Field& f, double range) {
  GrayImage g(f.width, f.height);
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    const double t = std::clamp(static_cast<double>(f.data[i]) / range, 0.0, 1.0);
    g.data[i] = static_cast<std::uint8_t>(std::lround(t * 255.0));
  }
  return g;
}

}  // namespace

FeatureVector extract_features(const RgbImage& patch, const FeatureOptions& opts) {
  const auto c = img::deconvolve(img::rgb_to_od(patch), opts.stains);
  FeatureVector v{};
  std::size_t k = 0;
  for (const Field* f : {&c.hematoxylin, &c.dab}) {
    std::vector<double> values(f->data.begin(), f->data.end());
    const auto s = img::histogram_stats(values, 0.0, opts.concentration_range);
    for (double x : {s.mean, s.variance, s.skewness, s.kurtosis, s.entropy}) v[k++] = x;
  }
  for (const Field* f : {&c.hematoxylin, &c.dab}) {
    const auto g = img::glcm_features(quantise(*f, opts.concentration_range));
    for (double x : {g.contrast, g.energy, g.homogeneity, g.correlation}) v[k++] = x;
  }
  v[k++] = img::fractal_dimension_dbc(to_gray(patch));
  v[k++] = charcurve::stained_fraction(patch, opts.hue, opts.sat_low);
  v[k++] = charcurve::stained_fraction(patch, opts.hue, opts.sat_high);
  return v;
}

// Trees ----------------------------------------------------------------------

int DecisionTree::predict(std::span<const double> x) const {
  int i = 0;
  while (nodes[i].feature >= 0) {
    i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  }
  return nodes[i].leaf;
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int classes, int depth)
      : x_(x), y_(y), k_(classes), depth_(depth), features_(static_cast<int>(x.front().size())) {
    order_.resize(features_);
    for (int f = 0; f < features_; ++f) {
      auto& o = order_[f];
      o.resize(x.size());
      std::iota(o.begin(), o.end(), 0);
      std::stable_sort(o.begin(), o.end(), [&](int a, int b) { return x_[a][f] < x_[b][f]; });
    }
  }

  DecisionTree build(const std::vector<double>& w) {
    w_ = &w;
    tree_ = {};
    std::vector<char> member(x_.size(), 1);
    grow(member, 0);
    return tree_;
  }

 private:
  static double impurity(const std::vector<double>& c, double total) {
    if (total <= 0) return 0;
    double sq = 0;
    for (double v : c) sq += v * v;
    return total - sq / total;
  }

  int grow(const std::vector<char>& member, int depth) {
    const auto& w = *w_;
    std::vector<double> cls(k_, 0.0);
    double total = 0;
    for (std::size_t i = 0; i < member.size(); ++i) {
      if (member[i]) {
        cls[y_[i]] += w[i];
        total += w[i];
      }
    }
    int majority = 0;
    for (int c = 1; c < k_; ++c) {
      if (cls[c] > cls[majority]) majority = c;
    }
    const int index = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back({-1, 0.0, -1, -1, majority});
    const int present = static_cast<int>(std::count_if(cls.begin(), cls.end(), [](double v) { return v > 0; }));
    if (depth >= depth_ || present < 2) return index;

    const double parent = impurity(cls, total);
    double best = parent;
    int best_f = -1;
    double best_t = 0;
    std::vector<double> left(k_), right(k_);
    for (int f = 0; f < features_; ++f) {
      std::fill(left.begin(), left.end(), 0.0);
      right = cls;
      double wl = 0;
      const auto& o = order_[f];
      int prev = -1;
      for (int i : o) {
        if (!member[i]) continue;
        if (prev >= 0 && x_[i][f] > x_[prev][f]) {
          const double g = impurity(left, wl) + impurity(right, total - wl);
          if (g < best - 1e-12 * total) {
            best = g;
            best_f = f;
            const double a = x_[prev][f], b = x_[i][f];
            double t = a + (b - a) / 2;
            if (!(t >= a && t < b)) t = a;
            best_t = t;
          }
        }
        left[y_[i]] += w[i];
        right[y_[i]] -= w[i];
        wl += w[i];
        prev = i;
      }
    }
    if (best_f < 0) return index;

    std::vector<char> lm(member.size(), 0), rm(member.size(), 0);
    for (std::size_t i = 0; i < member.size(); ++i) {
      if (!member[i]) continue;
      (x_[i][best_f] <= best_t ? lm : rm)[i] = 1;
    }
    tree_.nodes[index].feature = best_f;
    tree_.nodes[index].threshold = best_t;
    const int l = grow(lm, depth + 1);
    const int r = grow(rm, depth + 1);
    tree_.nodes[index].left = l;
    tree_.nodes[index].right = r;
    return index;
  }

  const std::vector<std::vector<double>>& x_;
  const std::vector<int>& y_;
  int k_;
  int depth_;
  int features_;
  std::vector<std::vector<int>> order_;
  const std::vector<double>* w_ = nullptr;
  DecisionTree tree_;
};

std::uint64_t positional_checksum(int n) {
  std::string joined;
  for (int i = 0; i < n; ++i) joined += "f" + std::to_string(i) + ",";
  return text::fnv1a64(joined);
}

}  // namespace

SammeModel train_samme(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int classes,
                       const TrainOptions& opts) {
  if (x.empty()) throw Error(ErrorKind::training, "no training samples");
  if (x.size() != y.size()) throw Error(ErrorKind::shape, "feature rows and labels differ in length");
  if (classes < 2) throw Error(ErrorKind::training, "need at least two categories");
  if (opts.rounds < 1 || opts.depth < 1) throw Error(ErrorKind::range, "rounds and depth must be at least 1");
  const std::size_t d = x.front().size();
  if (d == 0) throw Error(ErrorKind::shape, "empty feature vectors");
  for (const auto& row : x) {
    if (row.size() != d) throw Error(ErrorKind::shape, "ragged feature rows");
    for (double v : row) {
      if (!std::isfinite(v)) throw Error(ErrorKind::range, "non-finite feature value");
    }
  }
  std::vector<int> seen(classes, 0);
  for (int label : y) {
    if (label < 0 || label >= classes) throw Error(ErrorKind::range, "label out of range: " + std::to_string(label));
    seen[label] = 1;
  }
  if (std::accumulate(seen.begin(), seen.end(), 0) < 2) {
    throw Error(ErrorKind::training, "training data holds a single category");
  }

  SammeModel m;
  m.classes = classes;
  m.feature_count = static_cast<int>(d);
  m.feature_checksum = opts.feature_checksum
                           ? opts.feature_checksum
                           : (d == kFeatureCount ? feature_checksum() : positional_checksum(static_cast<int>(d)));

  const std::size_t n = x.size();
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  TreeBuilder builder(x, y, classes, opts.depth);
  const double chance = static_cast<double>(classes - 1) / classes;
  std::vector<char> miss(n);
  for (int t = 0; t < opts.rounds; ++t) {
    auto tree = builder.build(w);
    double err = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      miss[i] = tree.predict(x[i]) != y[i];
      total += w[i];
      if (miss[i]) err += w[i];
    }
    err /= total;
    if (err >= chance) break;
    if (err <= 0) {
      m.rounds.push_back({kPerfectRoundAlpha, std::move(tree)});
      break;
    }
    const double alpha = std::log((1 - err) / err) + std::log(classes - 1.0);
    m.rounds.push_back({alpha, std::move(tree)});
    const double boost = std::exp(alpha);
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (miss[i]) w[i] *= boost;
      sum += w[i];
    }
    for (auto& v : w) v /= sum;
  }
  if (m.rounds.empty()) throw Error(ErrorKind::training, "no round beat chance on the training data");
  return m;
}

std::vector<double> vote_mass(const SammeModel& m, std::span<const double> x) {
  if (static_cast<int>(x.size()) != m.feature_count) {
    throw Error(ErrorKind::shape, "feature vector has " + std::to_string(x.size()) + " values, model expects " +
                                      std::to_string(m.feature_count));
  }
  std::vector<double> votes(m.classes, 0.0);
  for (const auto& r : m.rounds) votes[r.tree.predict(x)] += r.alpha;
  return votes;
}

PatchCall predict_samme(const SammeModel& m, std::span<const double> x) {
  const auto votes = vote_mass(m, x);
  int best = 0;
  double total = 0;
  for (int k = 0; k < m.classes; ++k) {
    total += votes[k];
    if (votes[k] > votes[best]) best = k;
  }
  return {best, total > 0 ? votes[best] / total : 0.0};
}

double training_error(const SammeModel& m, const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                      int rounds) {
  SammeModel sub = m;
  if (rounds >= 0 && rounds < static_cast<int>(sub.rounds.size())) sub.rounds.resize(rounds);
  if (x.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < x.size(); ++i) wrong += predict_samme(sub, x[i]).category != y[i];
  return static_cast<double>(wrong) / static_cast<double>(x.size());
}

// Model file -------------------------------------------------------------------

std::string render_samme_model(const SammeModel& m) {
  std::ostringstream out;
  out << "her2kit-samme 1\n";
  out << "classes " << m.classes << "\n";
  out << "features " << m.feature_count << " " << text::hex64(m.feature_checksum) << "\n";
  out << "rounds " << m.rounds.size() << "\n";
  for (const auto& r : m.rounds) {
    out << "round " << text::format_double(r.alpha) << " " << r.tree.nodes.size() << "\n";
    for (const auto& n : r.tree.nodes) {
      out << "node " << n.feature << " " << text::format_double(n.threshold) << " " << n.left << " " << n.right
          << " " << n.leaf << "\n";
    }
  }
  return out.str();
}

namespace {

class ModelReader {
 public:
  ModelReader(std::string_view text, std::string_view source) : lines_(text::read_lines(text)), source_(source) {}

  std::vector<std::string> next(std::string_view keyword, std::size_t fields) {
    while (line_ < lines_.size() && text::trim(lines_[line_]).empty()) ++line_;
    if (line_ >= lines_.size()) fail(std::string("unexpected end of file, expected '") + std::string(keyword) + "'");
    std::istringstream in(lines_[line_++]);
    std::vector<std::string> tok;
    for (std::string t; in >> t;) tok.push_back(t);
    if (tok.empty() || tok[0] != keyword) fail("expected '" + std::string(keyword) + "'");
    if (tok.size() != fields + 1) fail("'" + std::string(keyword) + "' takes " + std::to_string(fields) + " values");
    return tok;
  }

  long long integer(const std::string& tok) {
    const auto v = text::parse_int(tok);
    if (!v) fail("not an integer: " + tok);
    return *v;
  }
  double real(const std::string& tok) {
    const auto v = text::parse_double(tok);
    if (!v) fail("not a number: " + tok);
    return *v;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(ErrorKind::format, std::string(source_), line_, "", what);
  }

 private:
  std::vector<std::string> lines_;
  std::string_view source_;
  std::size_t line_ = 0;
};

}  // namespace

SammeModel parse_samme_model(std::string_view content, std::uint64_t expected_checksum, std::string_view source) {
  ModelReader rd(content, source);
  const auto head = rd.next("her2kit-samme", 1);
  if (head[1] != "1") rd.fail("unsupported model version " + head[1]);
  SammeModel m;
  m.classes = static_cast<int>(rd.integer(rd.next("classes", 1)[1]));
  if (m.classes < 2) rd.fail("classes must be at least 2");
  const auto feat = rd.next("features", 2);
  m.feature_count = static_cast<int>(rd.integer(feat[1]));
  if (m.feature_count < 1) rd.fail("feature count must be positive");
  try {
    m.feature_checksum = std::stoull(feat[2], nullptr, 16);
  } catch (const std::exception&) {
    rd.fail("bad checksum " + feat[2]);
  }
  const auto rounds = rd.integer(rd.next("rounds", 1)[1]);
  if (rounds < 1) rd.fail("model has no rounds");
  for (long long r = 0; r < rounds; ++r) {
    const auto rt = rd.next("round", 2);
    SammeRound round;
    round.alpha = rd.real(rt[1]);
    if (!(round.alpha > 0)) rd.fail("round weight must be positive");
    const auto count = rd.integer(rt[2]);
    if (count < 1) rd.fail("tree has no nodes");
    for (long long i = 0; i < count; ++i) {
      const auto nt = rd.next("node", 5);
      TreeNode n;
      n.feature = static_cast<int>(rd.integer(nt[1]));
      n.threshold = rd.real(nt[2]);
      n.left = static_cast<int>(rd.integer(nt[3]));
      n.right = static_cast<int>(rd.integer(nt[4]));
      n.leaf = static_cast<int>(rd.integer(nt[5]));
      if (n.feature >= m.feature_count || n.feature < -1) rd.fail("feature index out of range");
      if (n.leaf < 0 || n.leaf >= m.classes) rd.fail("leaf class out of range");
      // Children must point forward so prediction always terminates.
      if (n.feature >= 0 && (n.left <= i || n.right <= i || n.left >= count || n.right >= count)) {
        rd.fail("bad child index");
      }
      round.tree.nodes.push_back(n);
    }
    m.rounds.push_back(std::move(round));
  }
  if (expected_checksum != 0 && m.feature_checksum != expected_checksum) {
    throw Error(ErrorKind::integrity, std::string(source) + ": feature checksum " + text::hex64(m.feature_checksum) +
                                          " does not match this build's " + text::hex64(expected_checksum));
  }
  return m;
}

SammeModel read_samme_model(const std::filesystem::path& path, std::uint64_t expected_checksum) {
  return parse_samme_model(ingest::read_file(path), expected_checksum, path.string());
}

void write_samme_model(const std::filesystem::path& path, const SammeModel& m) {
  std::ofstream out(path, std::ios::binary);
  out << render_samme_model(m);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
}

// Tally and aggregation ------------------------------------------------------

PatchTally tally(std::span<const int> categories) {
  PatchTally t;
  for (int c : categories) {
    if (c == kBackground) {
      ++t.background;
    } else if (c >= 0 && c <= 3) {
      ++t.n[c];
    } else {
      throw Error(ErrorKind::range, "patch category out of range: " + std::to_string(c));
    }
  }
  return t;
}

namespace {

std::int64_t checked_total(const PatchTally& t) {
  const auto n = t.total();
  if (n <= 0) throw Error(ErrorKind::empty_tally, "no non-background patches");
  return n;
}

}  // namespace

// Shares are compared by integer cross-multiplication so the published
// boundaries (0.08, 0.4, 0.14, 0.10, 0.01) are exact.
Her2Score aggregate_indus(const PatchTally& t) {
  const auto N = checked_total(t);
  if (100 * t.n[3] > 8 * N) return Her2Score::three;
  if (10 * t.n[2] > 4 * N) return Her2Score::two;
  if (100 * t.n[1] > 14 * N) return Her2Score::one;
  return Her2Score::zero;
}

Her2Score aggregate_mucs(const PatchTally& t) {
  const auto N = checked_total(t);
  if (10 * t.n[3] >= N) return Her2Score::three;
  if (10 * t.n[2] >= N || (100 * t.n[3] > N && 10 * t.n[3] < N)) return Her2Score::two;
  if (10 * t.n[1] >= N) return Her2Score::one;
  return Her2Score::zero;
}

Her2Score aggregate_visilab(const PatchTally& t) {
  const auto N = checked_total(t);
  for (int k = 3; k >= 1; --k) {
    if (10 * t.n[k] >= N) return score_from_index(k);
  }
  return Her2Score::zero;
}

double pcms_eq2(const PatchTally& t) {
  const auto N = checked_total(t);
  return 100.0 * static_cast<double>(t.n[2] + t.n[3]) / static_cast<double>(N);
}

double slide_confidence(std::span<const double> confidences) {
  if (confidences.empty()) throw Error(ErrorKind::empty_tally, "no patch confidences");
  std::vector<double> v(confidences.begin(), confidences.end());
  std::sort(v.begin(), v.end());
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Her2Score aggregate(const PatchTally& t, Rule rule) {
  switch (rule) {
    case Rule::indus: return aggregate_indus(t);
    case Rule::mucs: return aggregate_mucs(t);
    case Rule::visilab: return aggregate_visilab(t);
  }
  return aggregate_visilab(t);
}

std::string_view to_string(Rule r) noexcept {
  switch (r) {
    case Rule::indus: return "indus";
    case Rule::mucs: return "mucs";
    case Rule::visilab: return "visilab";
  }
  return "visilab";
}

std::optional<Rule> parse_rule(std::string_view s) noexcept {
  for (auto r : {Rule::indus, Rule::mucs, Rule::visilab}) {
    if (s == to_string(r)) return r;
  }
  return std::nullopt;
}

std::string_view to_string(PcmsMode m) noexcept {
  return m == PcmsMode::eq2 ? "eq2" : "morphological";
}

std::optional<PcmsMode> parse_pcms_mode(std::string_view s) noexcept {
  if (s == "eq2") return PcmsMode::eq2;
  if (s == "morphological") return PcmsMode::morphological;
  return std::nullopt;
}

// Slide scoring ----------------------------------------------------------------

namespace {

std::vector<PatchRecord> grid_patches(const Slide& slide, const ScoreOptions& opts) {
  std::vector<PatchRecord> out;
  for (std::size_t t = 0; t < slide.tiles.size(); ++t) {
    const auto& im = slide.tiles[t];
    if (im.width < opts.patch_size || im.height < opts.patch_size) continue;
    for (const auto& [x, y] : tile_image(im, opts.patch_size, opts.stride).origins) {
      out.push_back({static_cast<int>(t), x, y, kBackground, 0.0});
    }
  }
  if (out.empty()) {
    throw Error(ErrorKind::size, "slide '" + slide.case_id + "' has no tile of at least one patch");
  }
  return out;
}

}  // namespace

std::vector<FeatureVector> tissue_patch_features(const Slide& slide, const ScoreOptions& opts) {
  const auto patches = grid_patches(slide, opts);
  std::vector<std::optional<FeatureVector>> slots(patches.size());
  parallel_for(static_cast<int>(patches.size()), opts.jobs, [&](int i) {
    const auto& p = patches[i];
    const auto im = crop(slide.tiles[p.tile], p.x, p.y, opts.patch_size, opts.patch_size);
    if (!is_background_mucs(im, opts.background)) slots[i] = extract_features(im, opts.features);
  });
  std::vector<FeatureVector> out;
  for (auto& s : slots) {
    if (s) out.push_back(*s);
  }
  return out;
}

SlideAnalysis analyse_slide(const Slide& slide, const SammeModel& model, const ScoreOptions& opts) {
  SlideAnalysis a;
  a.patches = grid_patches(slide, opts);
  parallel_for(static_cast<int>(a.patches.size()), opts.jobs, [&](int i) {
    auto& p = a.patches[i];
    const auto im = crop(slide.tiles[p.tile], p.x, p.y, opts.patch_size, opts.patch_size);
    if (is_background_mucs(im, opts.background)) return;
    const auto f = extract_features(im, opts.features);
    const auto call = predict_samme(model, f);
    p.category = call.category;
    p.confidence = call.confidence;
  });
  std::vector<int> cats;
  std::vector<double> conf;
  for (const auto& p : a.patches) {
    cats.push_back(p.category);
    if (p.category != kBackground) conf.push_back(p.confidence);
  }
  a.tally = tally(cats);
  if (a.tally.total() == 0) {
    throw Error(ErrorKind::coverage, "slide '" + slide.case_id + "': every patch is background");
  }
  a.prediction.case_id = slide.case_id;
  a.prediction.score = aggregate(a.tally, opts.rule);
  a.prediction.confidence = slide_confidence(conf);
  if (opts.pcms == PcmsMode::eq2) {
    a.prediction.pcms = pcms_eq2(a.tally);
  } else {
    std::vector<pcms::TumorMask> tumors(slide.tiles.size());
    std::vector<pcms::MembraneExtent> membranes(slide.tiles.size());
    parallel_for(static_cast<int>(slide.tiles.size()), opts.jobs, [&](int t) {
      auto m = pcms::analyse_tile(slide.tiles[t], opts.features.stains);
      tumors[t] = std::move(m.tumor);
      membranes[t] = std::move(m.membrane);
    });
    a.prediction.pcms = pcms::pcms_morphological(tumors, membranes).pcms;
  }
  return a;
}

Prediction score_slide_patchpipe(const Slide& slide, const SammeModel& model, const ScoreOptions& opts) {
  return analyse_slide(slide, model, opts).prediction;
}

}  // namespace her2::patchpipe
