#include "g2l/structure.hpp"

#include <limits>

#include "g2l/errors.hpp"

namespace g2l {

std::size_t DilationStructure::layer_count() const {
  std::size_t n = 0;
  for (const auto& st : stages) n += st.size();
  return n;
}

std::vector<std::size_t> DilationStructure::shape() const {
  std::vector<std::size_t> out;
  out.reserve(stages.size());
  for (const auto& st : stages) out.push_back(st.size());
  return out;
}

bool DilationStructure::same_shape(const DilationStructure& other) const {
  return shape() == other.shape();
}

Dilation DilationStructure::flat(std::size_t index) const {
  for (const auto& st : stages) {
    if (index < st.size()) return st[index];
    index -= st.size();
  }
  throw ConfigError("structure: flat index out of range");
}

Dilation& DilationStructure::flat(std::size_t index) {
  for (auto& st : stages) {
    if (index < st.size()) return st[index];
    index -= st.size();
  }
  throw ConfigError("structure: flat index out of range");
}

std::vector<Dilation> DilationStructure::flatten() const {
  std::vector<Dilation> out;
  out.reserve(layer_count());
  for (const auto& st : stages)
    for (Dilation d : st) out.push_back(d);
  return out;
}

void DilationStructure::validate() const {
  if (stages.empty()) throw ConfigError("structure: no stages");
  for (const auto& st : stages) {
    if (st.empty()) throw ConfigError("structure: empty stage");
    for (Dilation d : st) {
      if (d < 1) throw ConfigError("structure: dilation must be >= 1, got " + std::to_string(d));
    }
  }
}

DilationStructure structure_from_flat(const std::vector<Dilation>& flat,
                                      const std::vector<std::size_t>& shape) {
  std::size_t total = 0;
  for (std::size_t n : shape) total += n;
  if (total != flat.size()) throw ShapeError("structure_from_flat: shape does not match value count");
  DilationStructure s;
  std::size_t pos = 0;
  for (std::size_t n : shape) {
    s.stages.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                          flat.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
  }
  return s;
}

GlobalSearchSpace build_global_space(std::int64_t k, int T) {
  if (k < 2) throw ConfigError("global space: sparsity base k must be >= 2, got " + std::to_string(k));
  if (T < 0) throw ConfigError("global space: max exponent T must be >= 0, got " + std::to_string(T));
  GlobalSearchSpace space;
  space.base = k;
  space.max_exponent = T;
  space.dilations.reserve(static_cast<std::size_t>(T) + 1);
  Dilation value = 1;
  space.dilations.push_back(value);
  for (int i = 1; i <= T; ++i) {
    if (value > std::numeric_limits<Dilation>::max() / k) {
      throw ConfigError("global space: k^T overflows the representable integer range (k=" +
                        std::to_string(k) + ", T=" + std::to_string(T) + ")");
    }
    value *= k;
    space.dilations.push_back(value);
  }
  return space;
}

DilationStructure random_structure(const GlobalSearchSpace& space,
                                   const std::vector<std::size_t>& shape, Rng& rng) {
  if (shape.empty()) throw ConfigError("random_structure: shape must be non-empty");
  for (std::size_t n : shape) {
    if (n == 0) throw ConfigError("random_structure: every stage must have >= 1 layer");
  }
  if (space.dilations.empty()) throw ConfigError("random_structure: empty search space");
  DilationStructure s;
  s.stages.reserve(shape.size());
  const auto hi = static_cast<std::int64_t>(space.dilations.size()) - 1;
  for (std::size_t n : shape) {
    std::vector<Dilation> st(n);
    for (auto& d : st) d = space.dilations[static_cast<std::size_t>(rng.uniform_int(0, hi))];
    s.stages.push_back(std::move(st));
  }
  return s;
}

std::string encode_structure(const DilationStructure& s) {
  s.validate();
  std::string out;
  for (std::size_t i = 0; i < s.stages.size(); ++i) {
    if (i) out += '|';
    const auto& st = s.stages[i];
    for (std::size_t j = 0; j < st.size(); ++j) {
      if (j) out += ',';
      out += std::to_string(st[j]);
    }
  }
  return out;
}

namespace {

[[noreturn]] void parse_fail(std::string_view token, std::size_t pos, const std::string& why) {
  throw ParseError("structure text: " + why + " at position " + std::to_string(pos) +
                   " (token '" + std::string(token) + "')");
}

}  // namespace

DilationStructure decode_structure(std::string_view text) {
  DilationStructure s;
  s.stages.emplace_back();
  std::size_t token_start = 0;

  auto finish_token = [&](std::size_t end) {
    std::string_view token = text.substr(token_start, end - token_start);
    if (token.empty()) parse_fail(token, token_start, "empty dilation");
    Dilation value = 0;
    for (std::size_t i = 0; i < token.size(); ++i) {
      const char ch = token[i];
      if (ch < '0' || ch > '9') parse_fail(token, token_start, "invalid character");
      if (value > (std::numeric_limits<Dilation>::max() - (ch - '0')) / 10) {
        parse_fail(token, token_start, "dilation overflows integer range");
      }
      value = value * 10 + (ch - '0');
    }
    if (value < 1) parse_fail(token, token_start, "dilation must be >= 1");
    s.stages.back().push_back(value);
  };

  for (std::size_t i = 0; i <= text.size(); ++i) {
    const bool at_end = i == text.size();
    const char ch = at_end ? '\0' : text[i];
    if (at_end || ch == ',' || ch == '|') {
      finish_token(i);
      if (ch == '|') s.stages.emplace_back();
      token_start = i + 1;
    }
  }
  return s;
}

std::uint64_t structure_hash(const DilationStructure& s) {
  return fnv1a64(encode_structure(s));
}

}  // namespace g2l
