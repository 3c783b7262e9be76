#pragma once

// High-Low contrast arithmetic over judge scores: C x C matrices (row =
// steered trait, column = measured trait), the per-row target strength T and
// the largest cross-trait bleed B_max, and fluency profiles.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "traitgeo/traits.hpp"

namespace traitgeo {

struct JudgeScoreRecord {
  std::string condition;
  std::string model_tag;
  std::size_t target_trait = 0;
  Polarity polarity = Polarity::Base;
  std::size_t measured_trait = 0;
  double score = 0.0;
  std::optional<double> fluency;
  std::string generation_id;
};

inline constexpr std::string_view kRecordsHeader =
    "condition,model_tag,target_trait,polarity,measured_trait,score,fluency,generation_id";

/// Parse the records CSV. Traits may be given by name, three-letter tag or index
/// into `trait_names`. Throws ParseError with the offending line number.
std::vector<JudgeScoreRecord> parse_score_records(std::string_view csv,
                                                  std::span<const std::string> trait_names);
std::string score_records_csv(std::span<const JudgeScoreRecord> records,
                              std::span<const std::string> trait_names);

class ContrastMatrix {
 public:
  /// Build directly from values (row-major C x C); counts are set to 1.
  /// Throws ScaleViolation when an entry leaves [-4, 4].
  static ContrastMatrix from_values(std::vector<std::string> trait_names, std::vector<double> values);

  ContrastMatrix(std::vector<std::string> trait_names, std::vector<double> values,
                 std::vector<std::size_t> positive_counts, std::vector<std::size_t> negative_counts,
                 std::vector<double> positive_variance, std::vector<double> negative_variance);

  std::size_t traits() const noexcept { return names_.size(); }
  const std::vector<std::string>& trait_names() const noexcept { return names_; }
  double operator()(std::size_t target, std::size_t measured) const {
    return values_[target * traits() + measured];
  }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t positive_count(std::size_t t, std::size_t m) const { return pos_n_[t * traits() + m]; }
  std::size_t negative_count(std::size_t t, std::size_t m) const { return neg_n_[t * traits() + m]; }
  double positive_variance(std::size_t t, std::size_t m) const { return pos_var_[t * traits() + m]; }
  double negative_variance(std::size_t t, std::size_t m) const { return neg_var_[t * traits() + m]; }

  ContrastMatrix negated() const;

 private:
  std::vector<std::string> names_;
  std::vector<double> values_;
  std::vector<std::size_t> pos_n_, neg_n_;
  std::vector<double> pos_var_, neg_var_;
};

/// mean(positive) - mean(negative) per (target, measured) cell over the records
/// matching `condition` and `model_tag`. Base records are ignored.
/// Throws MissingCell (a cell lacks one polarity) or ScaleViolation (score outside [1,5]).
ContrastMatrix contrast_matrix(std::span<const JudgeScoreRecord> records, std::string_view condition,
                               std::string_view model_tag, std::span<const std::string> trait_names);

struct TraitContrast {
  std::size_t target = 0;
  double T = 0.0;
  double B_max = 0.0;
  std::size_t blame = 0;
};

struct TraitContrastSummary {
  std::vector<std::string> trait_names;
  std::vector<TraitContrast> rows;
};

/// T = diagonal; B_max = signed off-diagonal entry of largest magnitude, ties
/// going to the larger trait index. Throws TooFewTraits for C < 2.
TraitContrastSummary extract_T_Bmax(const ContrastMatrix& matrix);

/// Round half away from zero to one decimal.
double round_for_report(double x);

struct FluencyCell {
  std::string condition;
  std::size_t target = 0;
  Polarity polarity = Polarity::Base;
  double mean = 0.0;
  std::size_t count = 0;
};

/// Mean fluency per (condition, target, polarity). Records sharing a
/// generation_id are counted once. An empty `condition` keeps every condition.
/// Throws NoFluencyData when no matching record carries fluency.
std::vector<FluencyCell> fluency_profile(std::span<const JudgeScoreRecord> records,
                                         std::string_view condition);

std::string contrast_csv(const ContrastMatrix& m);
ContrastMatrix parse_contrast_csv(std::string_view csv);
/// Per-cell variances of the positive and negative samples.
std::string contrast_variance_csv(const ContrastMatrix& m);

enum class ReportFormat { Csv, Table1 };
std::optional<ReportFormat> parse_report_format(std::string_view text);

/// `target,T,B_max,blame`. Csv keeps two decimals and full trait names; Table1
/// rounds to one decimal and tags the blamed trait like "(Neu)".
std::string summary_csv(const TraitContrastSummary& s, ReportFormat format = ReportFormat::Csv);
std::string fluency_csv(std::span<const FluencyCell> cells, std::span<const std::string> trait_names);

}  // namespace traitgeo
