#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace traitgeo {

/// A labelled stack of per-trait steering directions, C rows by D columns,
/// stored row-major in 64-bit reals. Immutable once constructed.
///
/// Construction validates the shape (C >= 1, D >= 1, C <= D, values.size() == C*D)
/// and that every entry is finite. `normalized()` is derived: it is true when every
/// row norm lies within 1e-9 of 1.
class DirectionSet {
 public:
  DirectionSet(std::vector<std::string> trait_names, std::size_t dim, std::vector<double> values,
               nlohmann::json source_meta = nlohmann::json::object());

  std::size_t traits() const noexcept { return names_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& trait_names() const noexcept { return names_; }
  const nlohmann::json& source_meta() const noexcept { return meta_; }
  bool normalized() const noexcept { return normalized_; }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  std::span<const double> values() const noexcept { return values_; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * dim_ + j]; }

  double row_norm(std::size_t i) const;

 private:
  std::vector<std::string> names_;
  std::size_t dim_;
  std::vector<double> values_;
  nlohmann::json meta_;
  bool normalized_;
};

enum class DirectionFormat { Json, Raw };

std::optional<DirectionFormat> parse_direction_format(std::string_view text);

DirectionSet load_direction_set(const std::filesystem::path& path, DirectionFormat format);
void save_direction_set(const DirectionSet& set, const std::filesystem::path& path,
                        DirectionFormat format);

DirectionSet direction_set_from_json(const nlohmann::json& doc);
nlohmann::json direction_set_to_json(const DirectionSet& set);

/// Scale each row to unit Euclidean norm. Throws ZeroVector when a row norm is
/// below 1e-12.
DirectionSet normalize_rows(const DirectionSet& set);

/// Rows reordered so that output row k is input row perm[k].
DirectionSet permute_rows(const DirectionSet& set, std::span<const std::size_t> perm);

}  // namespace traitgeo
