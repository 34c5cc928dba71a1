#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "g2l/rng.hpp"

namespace g2l {

using Dilation = std::int64_t;

// Ordered per-stage, per-layer dilation rates. The flat layer order (stage by
// stage) is the chromosome used by the search operators. Treated as immutable
// once built; all search operators return fresh copies.
struct DilationStructure {
  std::vector<std::vector<Dilation>> stages;

  std::size_t layer_count() const;
  std::vector<std::size_t> shape() const;
  bool same_shape(const DilationStructure& other) const;

  Dilation flat(std::size_t index) const;
  Dilation& flat(std::size_t index);
  std::vector<Dilation> flatten() const;

  // Throws ConfigError if any rate < 1 or the structure is empty.
  void validate() const;

  bool operator==(const DilationStructure&) const = default;
};

DilationStructure structure_from_flat(const std::vector<Dilation>& flat,
                                      const std::vector<std::size_t>& shape);

// Sparse exponential dilation set {k^0, ..., k^T}.
struct GlobalSearchSpace {
  std::int64_t base = 2;   // k
  int max_exponent = 0;    // T
  std::vector<Dilation> dilations;
};

// Throws ConfigError for k < 2, T < 0, or k^T overflowing int64.
GlobalSearchSpace build_global_space(std::int64_t k, int T);

// Every layer drawn uniformly from the space. Shape must be non-empty with
// all stage lengths >= 1.
DilationStructure random_structure(const GlobalSearchSpace& space,
                                   const std::vector<std::size_t>& shape, Rng& rng);

// Text grammar: stages joined by '|', dilations within a stage by ','.
// Example: "1,2|4". ASCII, no whitespace.
std::string encode_structure(const DilationStructure& s);

// Throws ParseError naming the offending token and character position.
DilationStructure decode_structure(std::string_view text);

std::uint64_t structure_hash(const DilationStructure& s);

}  // namespace g2l
