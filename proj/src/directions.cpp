#include "traitgeo/directions.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>

#include "traitgeo/error.hpp"
#include "traitgeo/io.hpp"
#include "traitgeo/kernels.hpp"
#include "traitgeo/traits.hpp"

namespace traitgeo {

// ---------------------------------------------------------------------------
// trait names

std::vector<std::string> canonical_trait_names() {
  return {kCanonicalTraits.begin(), kCanonicalTraits.end()};
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string trait_abbreviation(std::string_view name) {
  if (lower(name) == "openness") return "Opn";
  std::string out(name.substr(0, 3));
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::optional<std::size_t> find_trait(std::span<const std::string> names, std::string_view key) {
  const std::string k = lower(key);
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (lower(names[i]) == k || lower(trait_abbreviation(names[i])) == k) return i;
  }
  if (!key.empty() && std::all_of(key.begin(), key.end(),
                                  [](unsigned char c) { return std::isdigit(c) != 0; })) {
    const std::size_t idx = std::strtoull(std::string(key).c_str(), nullptr, 10);
    if (idx < names.size()) return idx;
    return std::nullopt;
  }
  // A unique prefix such as "N" or "extra" also names a trait.
  std::optional<std::size_t> hit;
  for (std::size_t i = 0; i < names.size() && !k.empty(); ++i) {
    if (lower(names[i]).starts_with(k)) {
      if (hit) return std::nullopt;
      hit = i;
    }
  }
  return hit;
}

std::string_view polarity_name(Polarity p) {
  switch (p) {
    case Polarity::Base: return "base";
    case Polarity::Positive: return "positive";
    case Polarity::Negative: return "negative";
  }
  return "base";
}

std::optional<Polarity> parse_polarity(std::string_view text) {
  const std::string t = lower(text);
  if (t == "base") return Polarity::Base;
  if (t == "positive" || t == "high" || t == "pos") return Polarity::Positive;
  if (t == "negative" || t == "low" || t == "neg") return Polarity::Negative;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// DirectionSet

DirectionSet::DirectionSet(std::vector<std::string> trait_names, std::size_t dim,
                           std::vector<double> values, nlohmann::json source_meta)
    : names_(std::move(trait_names)),
      dim_(dim),
      values_(std::move(values)),
      meta_(std::move(source_meta)),
      normalized_(false) {
  const std::size_t c = names_.size();
  if (c == 0 || dim_ == 0) {
    throw Error(ErrorKind::DimensionMismatch, "direction set needs at least one trait and one dim");
  }
  if (c > dim_) {
    throw Error(ErrorKind::DimensionMismatch, std::to_string(c) + " traits exceed dim " +
                                                  std::to_string(dim_));
  }
  if (values_.size() != c * dim_) {
    throw Error(ErrorKind::DimensionMismatch,
                "expected " + std::to_string(c * dim_) + " values, got " +
                    std::to_string(values_.size()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw Error(ErrorKind::NonFinite, "trait '" + names_[i / dim_] + "' entry " +
                                            std::to_string(i % dim_) + " is not finite");
    }
  }
  normalized_ = true;
  for (std::size_t i = 0; i < c; ++i) {
    if (std::abs(row_norm(i) - 1.0) > 1e-9) {
      normalized_ = false;
      break;
    }
  }
}

double DirectionSet::row_norm(std::size_t i) const { return std::sqrt(kernels::squared_norm(row(i))); }

DirectionSet normalize_rows(const DirectionSet& set) {
  std::vector<double> values(set.values().begin(), set.values().end());
  for (std::size_t i = 0; i < set.traits(); ++i) {
    const double n = set.row_norm(i);
    if (n < 1e-12) {
      throw Error(ErrorKind::ZeroVector, "trait '" + set.trait_names()[i] + "' has zero norm");
    }
    kernels::scale(1.0 / n, std::span<double>(values.data() + i * set.dim(), set.dim()));
  }
  return DirectionSet(set.trait_names(), set.dim(), std::move(values), set.source_meta());
}

DirectionSet permute_rows(const DirectionSet& set, std::span<const std::size_t> perm) {
  if (perm.size() != set.traits()) {
    throw Error(ErrorKind::ShapeMismatch, "permutation length differs from trait count");
  }
  std::vector<std::string> names;
  std::vector<double> values;
  values.reserve(set.values().size());
  for (std::size_t k : perm) {
    names.push_back(set.trait_names().at(k));
    auto r = set.row(k);
    values.insert(values.end(), r.begin(), r.end());
  }
  return DirectionSet(std::move(names), set.dim(), std::move(values), set.source_meta());
}

// ---------------------------------------------------------------------------
// JSON format

namespace {

double json_number(const nlohmann::json& v, const std::string& trait) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    // Accepts the spellings other writers use for non-finite values.
    const std::string s = lower(v.get<std::string>());
    if (s == "nan" || s == "-nan") return std::nan("");
    if (s == "inf" || s == "infinity" || s == "+inf" || s == "+infinity") return HUGE_VAL;
    if (s == "-inf" || s == "-infinity") return -HUGE_VAL;
  }
  throw Error(ErrorKind::ParseError, "trait '" + trait + "' has a non-numeric entry");
}

}  // namespace

DirectionSet direction_set_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("dim") || !doc.contains("traits") ||
      !doc["dim"].is_number_integer() || !doc["traits"].is_array()) {
    throw Error(ErrorKind::ParseError, "expected an object with integer 'dim' and array 'traits'");
  }
  const auto dim_signed = doc["dim"].get<long long>();
  if (dim_signed <= 0) throw Error(ErrorKind::DimensionMismatch, "dim must be positive");
  const auto dim = static_cast<std::size_t>(dim_signed);

  std::vector<std::string> names;
  std::vector<double> values;
  for (const auto& t : doc["traits"]) {
    if (!t.is_object() || !t.contains("name") || !t["name"].is_string() || !t.contains("vector") ||
        !t["vector"].is_array()) {
      throw Error(ErrorKind::ParseError, "each trait needs a string 'name' and array 'vector'");
    }
    const std::string name = t["name"].get<std::string>();
    const auto& vec = t["vector"];
    if (vec.size() != dim) {
      throw Error(ErrorKind::DimensionMismatch, "trait '" + name + "' has " +
                                                    std::to_string(vec.size()) + " entries, dim is " +
                                                    std::to_string(dim));
    }
    for (const auto& v : vec) values.push_back(json_number(v, name));
    names.push_back(name);
  }
  nlohmann::json meta = doc.contains("meta") ? doc["meta"] : nlohmann::json::object();
  return DirectionSet(std::move(names), dim, std::move(values), std::move(meta));
}

nlohmann::json direction_set_to_json(const DirectionSet& set) {
  nlohmann::json traits = nlohmann::json::array();
  for (std::size_t i = 0; i < set.traits(); ++i) {
    auto r = set.row(i);
    traits.push_back({{"name", set.trait_names()[i]}, {"vector", std::vector<double>(r.begin(), r.end())}});
  }
  return {{"dim", set.dim()}, {"traits", std::move(traits)}, {"meta", set.source_meta()}};
}

// ---------------------------------------------------------------------------
// raw format: "TGV1", u32 C, u32 D, 4 zero bytes, C*D little-endian f32

namespace {

constexpr std::size_t kRawHeader = 16;

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + k])) << (8 * k);
  }
  return v;
}

std::filesystem::path names_sidecar(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p += ".names.json";
  return p;
}

DirectionSet load_raw(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < kRawHeader || bytes.compare(0, 4, "TGV1") != 0) {
    throw Error(ErrorKind::ParseError, path.string() + ": missing TGV1 header");
  }
  const std::size_t c = get_u32(bytes, 4);
  const std::size_t d = get_u32(bytes, 8);
  if (get_u32(bytes, 12) != 0) {
    throw Error(ErrorKind::ParseError, path.string() + ": reserved header bytes are not zero");
  }
  if (bytes.size() != kRawHeader + 4 * c * d) {
    throw Error(ErrorKind::DimensionMismatch,
                path.string() + ": payload size does not match " + std::to_string(c) + "x" +
                    std::to_string(d));
  }
  std::vector<double> values(c * d);
  for (std::size_t i = 0; i < c * d; ++i) {
    values[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, kRawHeader + 4 * i)));
  }

  nlohmann::json names_doc;
  try {
    names_doc = nlohmann::json::parse(read_file(names_sidecar(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, names_sidecar(path).string() + ": " + e.what());
  }
  if (!names_doc.is_array() || names_doc.size() != c) {
    throw Error(ErrorKind::ParseError,
                names_sidecar(path).string() + ": expected a list of " + std::to_string(c) + " names");
  }
  std::vector<std::string> names;
  for (const auto& n : names_doc) {
    if (!n.is_string()) throw Error(ErrorKind::ParseError, "trait names must be strings");
    names.push_back(n.get<std::string>());
  }
  return DirectionSet(std::move(names), d, std::move(values));
}

void save_raw(const DirectionSet& set, const std::filesystem::path& path) {
  std::string out;
  out.reserve(kRawHeader + 4 * set.values().size());
  out.append("TGV1");
  put_u32(out, static_cast<std::uint32_t>(set.traits()));
  put_u32(out, static_cast<std::uint32_t>(set.dim()));
  put_u32(out, 0);
  for (double v : set.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  write_file_atomic(path, out);
  write_file_atomic(names_sidecar(path), nlohmann::json(set.trait_names()).dump() + "\n");
}

}  // namespace

std::optional<DirectionFormat> parse_direction_format(std::string_view text) {
  if (text == "json") return DirectionFormat::Json;
  if (text == "raw") return DirectionFormat::Raw;
  return std::nullopt;
}

DirectionSet load_direction_set(const std::filesystem::path& path, DirectionFormat format) {
  if (format == DirectionFormat::Raw) return load_raw(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return direction_set_from_json(doc);
}

void save_direction_set(const DirectionSet& set, const std::filesystem::path& path,
                        DirectionFormat format) {
  if (format == DirectionFormat::Raw) {
    save_raw(set, path);
    return;
  }
  write_file_atomic(path, direction_set_to_json(set).dump(2) + "\n");
}

}  // namespace traitgeo
