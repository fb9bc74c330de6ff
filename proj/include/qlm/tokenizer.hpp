#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace qlm {

/// Byte-level BPE vocabulary. Id layout: 0 <unk>, 1 <s> (BOS), 2 </s> (EOS),
/// 3..258 the 256 single-byte fallback tokens, then merged pieces. Scores
/// rank merges (higher merges first).
///
/// File format (little-endian): i32 token count, then per token f32 score,
/// i32 byte length, raw bytes.
class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kFirstByte = 3;
  static constexpr int kFirstPiece = kFirstByte + 256;

  /// `pieces` and `scores` are the merged pieces following the byte tokens.
  Vocabulary(std::vector<std::string> pieces, std::vector<float> scores);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// A deterministic vocabulary of `size` tokens built from common English
  /// fragments, for synthetic models.
  static Vocabulary synthetic(int size);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  float score(int id) const { return scores_.at(static_cast<std::size_t>(id)); }
  int byte_token(std::uint8_t b) const { return kFirstByte + b; }
  bool is_byte_token(int id) const { return id >= kFirstByte && id < kFirstPiece; }

  /// Greedy highest-score pair merging over per-codepoint (or per-byte)
  /// initial tokens; bytes without a piece fall back to byte tokens.
  std::vector<int> encode(std::string_view text, bool bos = false) const;

  /// Concatenation of token bytes; BOS/EOS/UNK decode to nothing.
  std::string decode(const std::vector<int>& ids) const;
  std::string decode_token(int id) const;

 private:
  Vocabulary() = default;
  void build_index();
  int lookup(std::string_view piece) const;

  std::vector<std::string> tokens_;
  std::vector<float> scores_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace qlm
