#include "fcqc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "fcqc/errors.hpp"
#include "fcqc/io.hpp"

namespace fcqc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_nonempty(std::span<const double> u, std::span<const double> c) {
  if (u.empty() || c.empty()) throw Error(Errc::EmptyInput, "both score lists must be nonempty");
}

std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t count_below(const std::vector<double>& sorted, double t) {
  return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
}

std::string escape_xml(std::string_view text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::vector<DetPoint> det_curve(std::span<const double> uncompressed, std::span<const double> compressed) {
  require_nonempty(uncompressed, compressed);
  const auto u = sorted_copy(uncompressed);
  const auto c = sorted_copy(compressed);
  std::vector<double> thresholds;
  thresholds.reserve(u.size() + c.size() + 2);
  thresholds.push_back(-kInf);
  std::merge(u.begin(), u.end(), c.begin(), c.end(), std::back_inserter(thresholds));
  thresholds.push_back(kInf);
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double nu = static_cast<double>(u.size());
  const double nc = static_cast<double>(c.size());
  std::vector<DetPoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    const double fp = static_cast<double>(count_below(u, t));
    const double missed = static_cast<double>(c.size() - count_below(c, t));
    out.push_back({t, fp / nu, missed / nc});
  }
  return out;
}

EerResult eer(std::span<const double> uncompressed, std::span<const double> compressed) {
  const auto curve = det_curve(uncompressed, compressed);
  const DetPoint* best = &curve.front();
  for (const auto& p : curve) {
    if (std::abs(p.fpr - p.fnr) < std::abs(best->fpr - best->fnr)) best = &p;
  }
  return {(best->fpr + best->fnr) / 2.0, best->threshold, best->fpr, best->fnr};
}

double f1_at(double threshold, std::span<const double> uncompressed, std::span<const double> compressed) {
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (double c : compressed) tp += c < threshold;
  for (double u : uncompressed) fp += u < threshold;
  const std::size_t fn = compressed.size() - tp;
  const std::size_t denom = 2 * tp + fp + fn;
  if (denom == 0) throw Error(Errc::UndefinedF1, "F1 undefined without positives or predictions");
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(Errc::DegenerateInput, "spearman needs equally long inputs");
  if (x.size() < 2) throw Error(Errc::DegenerateInput, "spearman needs at least two pairs");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw Error(Errc::DegenerateInput, "spearman inputs must be finite");
    }
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(Errc::DegenerateInput, "spearman input is constant");
  return sxy / std::sqrt(sxx * syy);
}

double fnmr_threshold(std::span<const double> mated, double target_fnmr) {
  if (mated.empty()) throw Error(Errc::EmptyInput, "no mated similarities");
  if (!(target_fnmr > 0.0 && target_fnmr < 1.0)) {
    throw Error(Errc::InvalidArgument, "target FNMR must be in (0, 1)");
  }
  const auto sorted = sorted_copy(mated);
  const auto k = static_cast<std::size_t>(std::floor(target_fnmr * static_cast<double>(sorted.size()) + 1e-9));
  return sorted[std::min(k, sorted.size() - 1)];
}

std::vector<EdcPoint> edc_curve(const QualityMap& qualities, std::span<const ComparisonRecord> comparisons,
                                double threshold, std::span<const double> discard_grid) {
  if (comparisons.empty()) throw Error(Errc::EmptyComparisons, "no comparisons");
  struct Entry {
    int quality;
    const ComparisonRecord* rec;
  };
  std::vector<Entry> entries;
  entries.reserve(comparisons.size());
  const auto lookup = [&](const std::string& id) {
    const auto it = qualities.find(id);
    if (it == qualities.end()) throw Error(Errc::UnknownSampleId, "no quality for sample '" + id + "'");
    return it->second;
  };
  for (const auto& c : comparisons) {
    if (!c.mated) throw Error(Errc::InvalidArgument, "EDC takes mated comparisons only");
    if (c.probe_id == c.reference_id) {
      throw Error(Errc::InvalidArgument, "comparison of '" + c.probe_id + "' with itself");
    }
    entries.push_back({std::min(lookup(c.probe_id), lookup(c.reference_id)), &c});
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.quality != b.quality) return a.quality < b.quality;
    if (a.rec->probe_id != b.rec->probe_id) return a.rec->probe_id < b.rec->probe_id;
    return a.rec->reference_id < b.rec->reference_id;
  });

  // failures_from[k] = failing comparisons among entries[k..N).
  const std::size_t n = entries.size();
  std::vector<std::size_t> failures_from(n + 1, 0);
  for (std::size_t k = n; k-- > 0;) {
    failures_from[k] = failures_from[k + 1] + (entries[k].rec->similarity < threshold ? 1 : 0);
  }

  std::vector<double> grid(discard_grid.begin(), discard_grid.end());
  std::sort(grid.begin(), grid.end());
  std::vector<EdcPoint> out;
  out.reserve(grid.size());
  for (double d : grid) {
    if (!(d >= 0.0 && d <= 1.0)) throw Error(Errc::InvalidArgument, "discard fractions must be in [0, 1]");
    const auto discarded = std::min(n, static_cast<std::size_t>(std::floor(d * static_cast<double>(n) + 1e-9)));
    const std::size_t remaining = n - discarded;
    const double fnmr =
        remaining == 0 ? 0.0 : static_cast<double>(failures_from[discarded]) / static_cast<double>(remaining);
    out.push_back({d, fnmr, discarded, remaining});
  }
  return out;
}

std::vector<double> default_discard_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 30; ++i) grid.push_back(i / 100.0);
  return grid;
}

std::vector<double> parse_discard_grid(std::string_view text) {
  std::vector<double> grid;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    grid.push_back(parse_double(text.substr(start, end - start)));
    if (!(grid.back() >= 0.0 && grid.back() <= 1.0)) {
      throw Error(Errc::InvalidArgument, "discard fraction outside [0, 1]: " + std::string(text.substr(start, end - start)));
    }
    start = end + 1;
  }
  return grid;
}

std::vector<ComparisonRecord> read_comparisons(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  const std::size_t probe = table.column("probe_id");
  const std::size_t reference = table.column("reference_id");
  const std::size_t similarity = table.column("similarity");
  const auto mated = table.find_column("mated");
  std::vector<ComparisonRecord> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    out.push_back({row[probe], row[reference], parse_double(row[similarity]),
                   mated ? parse_bool(row[*mated]) : true});
  }
  return out;
}

void write_comparisons(const std::filesystem::path& path, std::span<const ComparisonRecord> rows) {
  CsvTable table;
  table.header = {"probe_id", "reference_id", "similarity", "mated"};
  for (const auto& r : rows) {
    table.rows.push_back({r.probe_id, r.reference_id, format_double(r.similarity), r.mated ? "1" : "0"});
  }
  write_csv(path, table);
}

void write_det_csv(const std::filesystem::path& path, std::span<const DetPoint> points) {
  CsvTable table;
  table.header = {"threshold", "fpr", "fnr"};
  for (const auto& p : points) {
    table.rows.push_back({format_double(p.threshold), format_double(p.fpr), format_double(p.fnr)});
  }
  write_csv(path, table);
}

void write_edc_csv(const std::filesystem::path& path, std::span<const EdcPoint> points) {
  CsvTable table;
  table.header = {"discard_fraction", "fnmr"};
  for (const auto& p : points) table.rows.push_back({format_double(p.discard_fraction), format_double(p.fnmr)});
  write_csv(path, table);
}

std::string render_svg(const PlotSpec& spec, std::span<const PlotSeries> series) {
  constexpr double kWidth = 640, kHeight = 480;
  constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 60;
  constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  const double xs = spec.x_max > spec.x_min ? pw / (spec.x_max - spec.x_min) : 1.0;
  const double ys = spec.y_max > spec.y_min ? ph / (spec.y_max - spec.y_min) : 1.0;
  const auto px = [&](double x) { return kLeft + (std::clamp(x, spec.x_min, spec.x_max) - spec.x_min) * xs; };
  const auto py = [&](double y) {
    return kTop + ph - (std::clamp(y, spec.y_min, spec.y_max) - spec.y_min) * ys;
  };

  std::ostringstream svg;
  svg.precision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << escape_xml(spec.title) << "</text>\n";
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = spec.x_min + (spec.x_max - spec.x_min) * i / 5.0;
    const double fy = spec.y_min + (spec.y_max - spec.y_min) * i / 5.0;
    svg << "<line x1=\"" << px(fx) << "\" y1=\"" << kTop << "\" x2=\"" << px(fx) << "\" y2=\"" << kTop + ph
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << py(fy) << "\" x2=\"" << kLeft + pw << "\" y2=\"" << py(fy)
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << px(fx) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">" << fx
        << "</text>\n";
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(fy) + 4 << "\" text-anchor=\"end\">" << fy
        << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 16 << "\" text-anchor=\"middle\">"
      << escape_xml(spec.x_label) << "</text>\n";
  svg << "<text transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape_xml(spec.y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[s].points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      svg << px(x) << ',' << py(y) << ' ';
    }
    svg << "\"/>\n";
    const double ly = kTop + 10 + 20.0 * static_cast<double>(s);
    svg << "<line x1=\"" << kLeft + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 36 << "\" y2=\""
        << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kLeft + pw + 42 << "\" y=\"" << ly + 4 << "\">" << escape_xml(series[s].label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace fcqc
