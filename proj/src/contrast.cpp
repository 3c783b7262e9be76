#include "traitgeo/contrast.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "traitgeo/error.hpp"
#include "traitgeo/io.hpp"

namespace traitgeo {

namespace {

std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string cell_label(std::span<const std::string> names, std::size_t t, std::size_t m) {
  return fmt::format("({} -> {})", names[t], names[m]);
}

}  // namespace

// ---------------------------------------------------------------------------
// records

std::vector<JudgeScoreRecord> parse_score_records(std::string_view csv,
                                                  std::span<const std::string> trait_names) {
  const auto lines = nonempty_lines(csv);
  if (lines.empty() || lines.front() != kRecordsHeader) {
    throw Error(ErrorKind::ParseError, "records CSV must start with header: " + std::string(kRecordsHeader));
  }
  std::vector<JudgeScoreRecord> out;
  out.reserve(lines.size() - 1);
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const auto f = split_csv_line(lines[ln]);
    auto fail = [&](const std::string& what) {
      return Error(ErrorKind::ParseError, fmt::format("records line {}: {}", ln + 1, what));
    };
    if (f.size() != 8) throw fail(fmt::format("expected 8 fields, got {}", f.size()));
    JudgeScoreRecord r;
    r.condition = f[0];
    r.model_tag = f[1];
    auto target = find_trait(trait_names, f[2]);
    auto measured = find_trait(trait_names, f[4]);
    auto pol = parse_polarity(f[3]);
    auto score = parse_double(f[5]);
    if (!target) throw fail("unknown target trait '" + f[2] + "'");
    if (!measured) throw fail("unknown measured trait '" + f[4] + "'");
    if (!pol) throw fail("unknown polarity '" + f[3] + "'");
    if (!score) throw fail("score '" + f[5] + "' is not a number");
    r.target_trait = *target;
    r.measured_trait = *measured;
    r.polarity = *pol;
    r.score = *score;
    if (!f[6].empty()) {
      auto flu = parse_double(f[6]);
      if (!flu) throw fail("fluency '" + f[6] + "' is not a number");
      r.fluency = *flu;
    }
    r.generation_id = f[7];
    out.push_back(std::move(r));
  }
  return out;
}

std::string score_records_csv(std::span<const JudgeScoreRecord> records,
                              std::span<const std::string> trait_names) {
  std::string out(kRecordsHeader);
  out += '\n';
  for (const auto& r : records) {
    out += fmt::format("{},{},{},{},{},{:.17g},{},{}\n", csv_escape(r.condition),
                       csv_escape(r.model_tag), csv_escape(trait_names[r.target_trait]),
                       polarity_name(r.polarity), csv_escape(trait_names[r.measured_trait]), r.score,
                       r.fluency ? fmt::format("{:.17g}", *r.fluency) : std::string(),
                       csv_escape(r.generation_id));
  }
  return out;
}

// ---------------------------------------------------------------------------
// ContrastMatrix

ContrastMatrix::ContrastMatrix(std::vector<std::string> trait_names, std::vector<double> values,
                               std::vector<std::size_t> positive_counts,
                               std::vector<std::size_t> negative_counts,
                               std::vector<double> positive_variance,
                               std::vector<double> negative_variance)
    : names_(std::move(trait_names)),
      values_(std::move(values)),
      pos_n_(std::move(positive_counts)),
      neg_n_(std::move(negative_counts)),
      pos_var_(std::move(positive_variance)),
      neg_var_(std::move(negative_variance)) {
  const std::size_t cells = names_.size() * names_.size();
  if (names_.empty() || values_.size() != cells || pos_n_.size() != cells ||
      neg_n_.size() != cells || pos_var_.size() != cells || neg_var_.size() != cells) {
    throw Error(ErrorKind::ShapeMismatch, "contrast matrix arrays must all hold C*C entries");
  }
  for (std::size_t k = 0; k < cells; ++k) {
    if (!std::isfinite(values_[k]) || values_[k] < -4.0 || values_[k] > 4.0) {
      throw Error(ErrorKind::ScaleViolation,
                  fmt::format("contrast {} = {} is outside [-4, 4]",
                              cell_label(names_, k / names_.size(), k % names_.size()), values_[k]));
    }
    if (pos_n_[k] == 0 || neg_n_[k] == 0) {
      throw Error(ErrorKind::MissingCell, "contrast cell " +
                                              cell_label(names_, k / names_.size(), k % names_.size()) +
                                              " has no samples");
    }
  }
}

ContrastMatrix ContrastMatrix::from_values(std::vector<std::string> trait_names,
                                           std::vector<double> values) {
  const std::size_t cells = trait_names.size() * trait_names.size();
  return ContrastMatrix(std::move(trait_names), std::move(values), std::vector<std::size_t>(cells, 1),
                        std::vector<std::size_t>(cells, 1), std::vector<double>(cells, 0.0),
                        std::vector<double>(cells, 0.0));
}

ContrastMatrix ContrastMatrix::negated() const {
  std::vector<double> v(values_.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = -values_[k];
  return ContrastMatrix(names_, std::move(v), neg_n_, pos_n_, neg_var_, pos_var_);
}

ContrastMatrix contrast_matrix(std::span<const JudgeScoreRecord> records, std::string_view condition,
                               std::string_view model_tag, std::span<const std::string> trait_names) {
  const std::size_t c = trait_names.size();
  const std::size_t cells = c * c;
  // Welford accumulators per cell and polarity.
  struct Acc {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    void add(double x) {
      ++n;
      const double delta = x - mean;
      mean += delta / static_cast<double>(n);
      m2 += delta * (x - mean);
    }
    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  };
  std::vector<Acc> pos(cells), neg(cells);

  for (const auto& r : records) {
    if (r.condition != condition || r.model_tag != model_tag) continue;
    if (r.target_trait >= c || r.measured_trait >= c) {
      throw Error(ErrorKind::ShapeMismatch, "record trait index out of range");
    }
    if (!(r.score >= 1.0 && r.score <= 5.0)) {
      throw Error(ErrorKind::ScaleViolation,
                  fmt::format("score {} for generation '{}' is outside [1, 5]", r.score, r.generation_id));
    }
    const std::size_t k = r.target_trait * c + r.measured_trait;
    if (r.polarity == Polarity::Positive) pos[k].add(r.score);
    if (r.polarity == Polarity::Negative) neg[k].add(r.score);
  }

  std::vector<double> values(cells);
  std::vector<std::size_t> pn(cells), nn(cells);
  std::vector<double> pv(cells), nv(cells);
  for (std::size_t k = 0; k < cells; ++k) {
    if (pos[k].n == 0 || neg[k].n == 0) {
      throw Error(ErrorKind::MissingCell,
                  fmt::format("cell {} for condition '{}' model '{}' has no {} records",
                              cell_label(trait_names, k / c, k % c), condition, model_tag,
                              pos[k].n == 0 ? "positive" : "negative"));
    }
    values[k] = pos[k].mean - neg[k].mean;
    pn[k] = pos[k].n;
    nn[k] = neg[k].n;
    pv[k] = pos[k].variance();
    nv[k] = neg[k].variance();
  }
  return ContrastMatrix({trait_names.begin(), trait_names.end()}, std::move(values), std::move(pn),
                        std::move(nn), std::move(pv), std::move(nv));
}

// ---------------------------------------------------------------------------
// T / B_max

TraitContrastSummary extract_T_Bmax(const ContrastMatrix& matrix) {
  const std::size_t c = matrix.traits();
  if (c < 2) throw Error(ErrorKind::TooFewTraits, "T/B_max needs at least two traits");
  TraitContrastSummary s{matrix.trait_names(), {}};
  for (std::size_t t = 0; t < c; ++t) {
    TraitContrast row{t, matrix(t, t), 0.0, t};
    double best = -1.0;
    for (std::size_t m = 0; m < c; ++m) {
      if (m == t) continue;
      const double mag = std::abs(matrix(t, m));
      if (mag >= best) {  // >= hands ties to the later trait
        best = mag;
        row.B_max = matrix(t, m);
        row.blame = m;
      }
    }
    s.rows.push_back(row);
  }
  return s;
}

double round_for_report(double x) { return std::round(x * 10.0) / 10.0; }

// ---------------------------------------------------------------------------
// fluency

std::vector<FluencyCell> fluency_profile(std::span<const JudgeScoreRecord> records,
                                         std::string_view condition) {
  using Key = std::tuple<std::string, std::size_t, int>;
  std::map<Key, std::pair<double, std::size_t>> sums;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& r : records) {
    if (!condition.empty() && r.condition != condition) continue;
    if (!r.fluency) continue;
    if (!r.generation_id.empty() && !seen.emplace(r.condition, r.model_tag, r.generation_id).second) {
      continue;
    }
    if (!(*r.fluency >= 1.0 && *r.fluency <= 5.0)) {
      throw Error(ErrorKind::ScaleViolation,
                  fmt::format("fluency {} for generation '{}' is outside [1, 5]", *r.fluency,
                              r.generation_id));
    }
    auto& [sum, n] = sums[{r.condition, r.target_trait, static_cast<int>(r.polarity)}];
    sum += *r.fluency;
    ++n;
  }
  if (sums.empty()) {
    throw Error(ErrorKind::NoFluencyData,
                condition.empty() ? std::string("no record carries a fluency value")
                                  : "no fluency values for condition '" + std::string(condition) + "'");
  }
  std::vector<FluencyCell> out;
  for (const auto& [key, acc] : sums) {
    out.push_back({std::get<0>(key), std::get<1>(key), static_cast<Polarity>(std::get<2>(key)),
                   acc.first / static_cast<double>(acc.second), acc.second});
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV emission

std::string contrast_csv(const ContrastMatrix& m) {
  std::string out = "target";
  for (const auto& n : m.trait_names()) out += "," + csv_escape(n);
  out += '\n';
  for (std::size_t t = 0; t < m.traits(); ++t) {
    out += csv_escape(m.trait_names()[t]);
    for (std::size_t j = 0; j < m.traits(); ++j) out += fmt::format(",{:.2f}", m(t, j) + 0.0);
    out += '\n';
  }
  return out;
}

ContrastMatrix parse_contrast_csv(std::string_view csv) {
  const auto lines = nonempty_lines(csv);
  if (lines.empty()) throw Error(ErrorKind::ParseError, "empty contrast CSV");
  auto header = split_csv_line(lines[0]);
  if (header.size() < 2 || header[0] != "target") {
    throw Error(ErrorKind::ParseError, "contrast CSV header must be 'target,<trait>...'");
  }
  std::vector<std::string> names(header.begin() + 1, header.end());
  const std::size_t c = names.size();
  if (lines.size() != c + 1) {
    throw Error(ErrorKind::ParseError, fmt::format("expected {} matrix rows, got {}", c, lines.size() - 1));
  }
  std::vector<double> values(c * c);
  for (std::size_t t = 0; t < c; ++t) {
    auto f = split_csv_line(lines[t + 1]);
    if (f.size() != c + 1 || f[0] != names[t]) {
      throw Error(ErrorKind::ParseError, fmt::format("row {} must be '{},<{} values>'", t + 1, names[t], c));
    }
    for (std::size_t j = 0; j < c; ++j) {
      auto v = parse_double(f[j + 1]);
      if (!v) throw Error(ErrorKind::ParseError, "non-numeric contrast entry '" + f[j + 1] + "'");
      values[t * c + j] = *v;
    }
  }
  return ContrastMatrix::from_values(std::move(names), std::move(values));
}

std::string contrast_variance_csv(const ContrastMatrix& m) {
  std::string out = "target,measured,n_positive,var_positive,n_negative,var_negative\n";
  for (std::size_t t = 0; t < m.traits(); ++t) {
    for (std::size_t j = 0; j < m.traits(); ++j) {
      out += fmt::format("{},{},{},{:.6g},{},{:.6g}\n", csv_escape(m.trait_names()[t]),
                         csv_escape(m.trait_names()[j]), m.positive_count(t, j),
                         m.positive_variance(t, j), m.negative_count(t, j), m.negative_variance(t, j));
    }
  }
  return out;
}

std::optional<ReportFormat> parse_report_format(std::string_view text) {
  if (text == "csv") return ReportFormat::Csv;
  if (text == "table1") return ReportFormat::Table1;
  return std::nullopt;
}

std::string summary_csv(const TraitContrastSummary& s, ReportFormat format) {
  std::string out = "target,T,B_max,blame\n";
  for (const auto& r : s.rows) {
    const std::string& target = s.trait_names[r.target];
    const std::string& blame = s.trait_names[r.blame];
    if (format == ReportFormat::Table1) {
      // + 0.0 folds -0.0 into 0.0 so a rounded zero never prints as "-0.0".
      out += fmt::format("{},{:.1f},{:.1f},({})\n", csv_escape(target), round_for_report(r.T) + 0.0,
                         round_for_report(r.B_max) + 0.0, trait_abbreviation(blame));
    } else {
      out += fmt::format("{},{:.2f},{:.2f},{}\n", csv_escape(target), r.T + 0.0, r.B_max + 0.0,
                         csv_escape(blame));
    }
  }
  return out;
}

std::string fluency_csv(std::span<const FluencyCell> cells, std::span<const std::string> trait_names) {
  std::string out = "condition,target,polarity,mean_fluency,count\n";
  for (const auto& c : cells) {
    out += fmt::format("{},{},{},{:.4g},{}\n", csv_escape(c.condition), csv_escape(trait_names[c.target]),
                       polarity_name(c.polarity), c.mean, c.count);
  }
  return out;
}

}  // namespace traitgeo
