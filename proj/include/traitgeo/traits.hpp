#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace traitgeo {

/// OCEAN order used by every matrix and report.
inline constexpr std::array<std::string_view, 5> kCanonicalTraits{
    "Openness", "Conscientiousness", "Extraversion", "Agreeableness", "Neuroticism"};

std::vector<std::string> canonical_trait_names();

/// Three-letter tag used in Table-1 style reports ("Opn", "Con", ...).
std::string trait_abbreviation(std::string_view name);

/// Resolve a trait given as a full name, a three-letter tag, a unique name
/// prefix (all case-insensitive) or a decimal index into `names`.
std::optional<std::size_t> find_trait(std::span<const std::string> names, std::string_view key);

enum class Polarity { Base, Positive, Negative };

std::string_view polarity_name(Polarity p);
std::optional<Polarity> parse_polarity(std::string_view text);

}  // namespace traitgeo
