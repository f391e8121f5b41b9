//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
// Character-level SMILES codec: corpus-derived vocabulary, fixed-length
// index encoding with flanking pads, light well-formedness validation, and
// the hydrophilic/hydrophobic character table used as interpretability
// ground truth.
#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "smipred/common.hpp"
#include "smipred/nn/tensor.hpp"

namespace smipred {

// Encoding layout: 10 left pads, a 250-slot content zone (left-aligned),
// 10 right pads.
inline constexpr std::size_t kMaxSmilesLength = 250;
inline constexpr std::size_t kFlankPad = 10;
inline constexpr std::size_t kEncodedLength = kMaxSmilesLength + 2 * kFlankPad;
inline constexpr std::int32_t kPadIndex = 0;

class Vocabulary {
 public:
  Vocabulary() = default;

  // Characters get dense indices 1..n in lexicographic (byte) order; index 0
  // is reserved for the pad. Deterministic for a given character set.
  static Vocabulary build(const std::vector<std::string>& corpus) {
    if (corpus.empty()) raise("Vocabulary::build: empty corpus");
    std::set<char> chars;
    for (const auto& s : corpus) {
      if (s.empty()) raise("Vocabulary::build: empty string in corpus");
      chars.insert(s.begin(), s.end());
    }
    Vocabulary v;
    std::int32_t next = 1;
    for (char c : chars) {
      v.char_to_index_[c] = next;
      v.index_to_char_.push_back(c);
      ++next;
    }
    return v;
  }

  // Distinct characters + 1 (pad).
  std::size_t size() const { return index_to_char_.size() + 1; }

  bool contains(char c) const { return char_to_index_.count(c) != 0; }

  std::int32_t index_of(char c) const {
    auto it = char_to_index_.find(c);
    if (it == char_to_index_.end())
      raise("Vocabulary: unknown character '", std::string(1, c), "'");
    return it->second;
  }

  char char_at(std::int32_t index) const {
    if (index <= 0 || static_cast<std::size_t>(index) > index_to_char_.size())
      raise("Vocabulary: index ", index, " out of range");
    return index_to_char_[static_cast<std::size_t>(index - 1)];
  }

  bool operator==(const Vocabulary& o) const {
    return index_to_char_ == o.index_to_char_;
  }

  // Plain-text persistence: one "index<TAB>character" line per entry sorted
  // by index, line 0 being the pad sentinel.
  std::string to_text() const {
    std::string out = "0\t<PAD>\n";
    for (std::size_t i = 0; i < index_to_char_.size(); ++i)
      out += std::to_string(i + 1) + "\t" + std::string(1, index_to_char_[i]) + "\n";
    return out;
  }

  static Vocabulary from_text(std::string_view text) {
    Vocabulary v;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
      std::size_t eol = text.find('\n', pos);
      if (eol == std::string_view::npos) eol = text.size();
      std::string_view line = text.substr(pos, eol - pos);
      pos = eol + 1;
      if (line.empty()) continue;
      const std::size_t tab = line.find('\t');
      if (tab == std::string_view::npos)
        raise<IoError>("vocabulary line ", line_no, ": missing tab");
      const long idx = std::stol(std::string(line.substr(0, tab)));
      std::string_view payload = line.substr(tab + 1);
      if (line_no == 0) {
        if (idx != 0 || payload != "<PAD>")
          raise<IoError>("vocabulary line 0 must be '0\\t<PAD>'");
      } else {
        if (idx != static_cast<long>(line_no))
          raise<IoError>("vocabulary indices must be dense, got ", idx,
                         " at line ", line_no);
        if (payload.size() != 1)
          raise<IoError>("vocabulary line ", line_no, ": one character expected");
        v.index_to_char_.push_back(payload[0]);
        v.char_to_index_[payload[0]] = static_cast<std::int32_t>(idx);
      }
      ++line_no;
    }
    if (line_no == 0) raise<IoError>("empty vocabulary file");
    return v;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise<IoError>("cannot write vocabulary file ", path);
    out << to_text();
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise<IoError>("cannot read vocabulary file ", path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return from_text(text);
  }

  // Hash of the canonical text form; embedded in model containers so a
  // checkpoint can detect encoding drift.
  std::string hash() const { return hex64(fnv1a64(to_text())); }

 private:
  std::map<char, std::int32_t> char_to_index_;
  std::vector<char> index_to_char_;
};

struct EncodedSmiles {
  std::vector<std::int32_t> indices;  // length kEncodedLength
  std::string source;
  std::size_t content_begin = kFlankPad;
  std::size_t content_end = kFlankPad;  // one past the last non-pad slot

  std::size_t content_length() const { return content_end - content_begin; }
};

inline EncodedSmiles encode(const std::string& smiles, const Vocabulary& vocab) {
  if (smiles.empty()) raise("encode: empty SMILES string");
  if (smiles.size() > kMaxSmilesLength)
    raise("encode: SMILES longer than ", kMaxSmilesLength, " characters (",
          smiles.size(), ")");
  EncodedSmiles enc;
  enc.indices.assign(kEncodedLength, kPadIndex);
  enc.source = smiles;
  enc.content_begin = kFlankPad;
  enc.content_end = kFlankPad + smiles.size();
  for (std::size_t i = 0; i < smiles.size(); ++i)
    enc.indices[kFlankPad + i] = vocab.index_of(smiles[i]);
  return enc;
}

// Inverse map + pad stripping; exact round trip for every valid encoding.
inline std::string decode(const EncodedSmiles& enc, const Vocabulary& vocab) {
  std::string out;
  out.reserve(enc.content_length());
  for (std::size_t i = enc.content_begin; i < enc.content_end; ++i)
    out += vocab.char_at(enc.indices[i]);
  return out;
}

struct ValidityReport {
  bool valid = true;
  std::vector<std::string> reasons;

  void fail(std::string reason) {
    valid = false;
    reasons.push_back(std::move(reason));
  }
};

// Cheap structural checks that guard ingestion. This is not a SMILES parser:
// stereochemistry, valence and aromaticity are out of scope. Ring-closure
// digits are counted outside square brackets (digits inside brackets are
// isotopes or charges) and '%nn' two-digit closures are handled as pairs.
inline ValidityReport validate_smiles(std::string_view smiles) {
  ValidityReport rep;
  if (smiles.empty()) {
    rep.fail("empty string");
    return rep;
  }
  for (char c : smiles) {
    if (c < 0x21 || c > 0x7e) {
      rep.fail(str_cat("non-printable or non-ASCII byte 0x",
                       hex64(static_cast<unsigned char>(c)).substr(14)));
      break;
    }
  }
  int round_depth = 0;
  bool round_ok = true;
  int square_depth = 0;
  bool square_ok = true;
  int ring_counts[10] = {0};
  std::map<int, int> percent_counts;
  for (std::size_t i = 0; i < smiles.size(); ++i) {
    const char c = smiles[i];
    if (c == '(') {
      ++round_depth;
    } else if (c == ')') {
      if (--round_depth < 0) round_ok = false;
    } else if (c == '[') {
      ++square_depth;
    } else if (c == ']') {
      if (--square_depth < 0) square_ok = false;
    } else if (square_depth == 0 && c == '%') {
      if (i + 2 < smiles.size() && std::isdigit(smiles[i + 1]) &&
          std::isdigit(smiles[i + 2])) {
        percent_counts[(smiles[i + 1] - '0') * 10 + (smiles[i + 2] - '0')]++;
        i += 2;
      } else {
        rep.fail("'%' not followed by two digits");
      }
    } else if (square_depth == 0 && std::isdigit(c)) {
      ring_counts[c - '0']++;
    }
  }
  if (!round_ok || round_depth != 0) rep.fail("unbalanced round brackets");
  if (!square_ok || square_depth != 0) rep.fail("unbalanced square brackets");
  for (int d = 0; d < 10; ++d)
    if (ring_counts[d] % 2 != 0)
      rep.fail(str_cat("ring digit '", d, "' appears ", ring_counts[d], " times"));
  for (const auto& [num, count] : percent_counts)
    if (count % 2 != 0)
      rep.fail(str_cat("ring closure %", num, " appears ", count, " times"));
  return rep;
}

enum class HydroClass { Hydrophilic, Hydrophobic, Neutral };

inline const char* to_string(HydroClass h) {
  switch (h) {
    case HydroClass::Hydrophilic: return "hydrophilic";
    case HydroClass::Hydrophobic: return "hydrophobic";
    default: return "neutral";
  }
}

// Per-character solubility ground truth: O/o/N/n pull solubility up,
// carbons and halogens push it down. The Cl and Br digrams are labelled
// as their halogen on both characters.
inline std::vector<HydroClass> classify_chars(std::string_view smiles) {
  std::vector<HydroClass> out(smiles.size(), HydroClass::Neutral);
  for (std::size_t i = 0; i < smiles.size(); ++i) {
    const char c = smiles[i];
    if (c == 'C' && i + 1 < smiles.size() && smiles[i + 1] == 'l') {
      out[i] = out[i + 1] = HydroClass::Hydrophobic;  // chlorine
      ++i;
      continue;
    }
    if (c == 'B' && i + 1 < smiles.size() && smiles[i + 1] == 'r') {
      out[i] = out[i + 1] = HydroClass::Hydrophobic;  // bromine
      ++i;
      continue;
    }
    switch (c) {
      case 'O': case 'o': case 'N': case 'n':
        out[i] = HydroClass::Hydrophilic;
        break;
      case 'C': case 'c': case 'F': case 'I':
        out[i] = HydroClass::Hydrophobic;
        break;
      default:
        break;
    }
  }
  return out;
}

// Stacks encodings into a [batch x 270] index grid for the nn layers.
struct EncodedBatch {
  IndexMatrix indices;
  std::vector<std::size_t> content_begin;
  std::vector<std::size_t> content_end;
  std::string vocab_hash;

  std::size_t size() const { return indices.rows; }
};

inline EncodedBatch make_batch(const std::vector<EncodedSmiles>& rows,
                               const Vocabulary& vocab) {
  EncodedBatch b;
  b.indices = IndexMatrix(rows.size(), kEncodedLength);
  b.vocab_hash = vocab.hash();
  b.content_begin.resize(rows.size());
  b.content_end.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    b.content_begin[r] = rows[r].content_begin;
    b.content_end[r] = rows[r].content_end;
    for (std::size_t c = 0; c < kEncodedLength; ++c)
      b.indices.at(r, c) = rows[r].indices[c];
  }
  return b;
}

}  // namespace smipred
