#include "qlm/tokenizer.hpp"

#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_set>

#include "qlm/error.hpp"

namespace qlm {

Vocabulary::Vocabulary(std::vector<std::string> pieces, std::vector<float> scores) {
  if (pieces.size() != scores.size()) throw Error(Errc::invalid_input, "pieces and scores differ in length");
  tokens_ = {"<unk>", "<s>", "</s>"};
  scores_ = {0.0f, 0.0f, 0.0f};
  for (int b = 0; b < 256; ++b) {
    tokens_.emplace_back(1, static_cast<char>(b));
    scores_.push_back(0.0f);
  }
  tokens_.insert(tokens_.end(), pieces.begin(), pieces.end());
  scores_.insert(scores_.end(), scores.begin(), scores.end());
  build_index();
}

void Vocabulary::build_index() {
  index_.clear();
  for (int id = kFirstPiece; id < size(); ++id) index_.emplace(tokens_[static_cast<std::size_t>(id)], id);
}

int Vocabulary::lookup(std::string_view piece) const {
  const auto it = index_.find(std::string(piece));
  return it == index_.end() ? -1 : it->second;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open tokenizer " + path.string());
  auto read = [&](void* dst, std::size_t n, const char* what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
      throw Error(Errc::io, std::string("tokenizer truncated reading ") + what);
    }
  };
  std::int32_t count = 0;
  read(&count, 4, "count");
  if (count < kFirstPiece) throw Error(Errc::format, "tokenizer needs at least 259 tokens");
  Vocabulary v;
  v.tokens_.reserve(static_cast<std::size_t>(count));
  for (std::int32_t i = 0; i < count; ++i) {
    float score = 0;
    std::int32_t len = 0;
    read(&score, 4, "score");
    read(&len, 4, "length");
    if (len < 0 || len > (1 << 20)) throw Error(Errc::format, "bad token length");
    std::string bytes(static_cast<std::size_t>(len), '\0');
    read(bytes.data(), bytes.size(), "token bytes");
    v.tokens_.push_back(std::move(bytes));
    v.scores_.push_back(score);
  }
  for (int b = 0; b < 256; ++b) {
    const std::string& t = v.tokens_[static_cast<std::size_t>(kFirstByte + b)];
    if (t.size() != 1 || static_cast<std::uint8_t>(t[0]) != b) {
      throw Error(Errc::format, "byte token " + std::to_string(b) + " is not the raw byte");
    }
  }
  v.build_index();
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  const auto count = static_cast<std::int32_t>(tokens_.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto len = static_cast<std::int32_t>(tokens_[i].size());
    out.write(reinterpret_cast<const char*>(&scores_[i]), 4);
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(tokens_[i].data(), len);
  }
  if (!out) throw Error(Errc::io, "write failed on " + path.string());
}

Vocabulary Vocabulary::synthetic(int size) {
  if (size < kFirstPiece) throw Error(Errc::argument, "vocabulary needs at least 259 tokens");
  static const char* const kCommon[] = {
      "th", "he", "in", "er", "an", "re", "on", "at", "en", "nd", "ti", "es", "or", "te", "of", "ed", "is", "it",
      "al", "ar", "st", "to", "nt", "ng", "se", "ha", "as", "ou", "io", "le", "ve", "co", "me", "de", "hi", "ri",
      "ro", "ic", "ne", "ea", "ra", "ce", " t", " a", " s", " o", " w", " i", " c", " b", " f", " p", " m", " h",
      "the", " the", "and", " and", "ing", "ion", " of", " to", " in", "ent", "tion", " is", " for", "er ", "ed ",
      " be", " it", " on", " that", " with", " as", " was", " he", " by", "es ", "ly", " re", " we", " are"};
  const int budget = size - kFirstPiece;
  std::vector<std::string> pieces;
  std::unordered_set<std::string> seen;
  auto add = [&](std::string p) {
    if (static_cast<int>(pieces.size()) < budget && seen.insert(p).second) pieces.push_back(std::move(p));
  };
  for (char c = ' '; c <= '~'; ++c) add(std::string(1, c));
  for (const char* p : kCommon) add(p);
  for (char a = 'a'; a <= 'z'; ++a) {
    for (char b = 'a'; b <= 'z'; ++b) add(std::string{a, b});
  }
  for (int i = 0; static_cast<int>(pieces.size()) < budget; ++i) add("<extra_" + std::to_string(i) + ">");
  std::vector<float> scores(pieces.size());
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    // Single characters never merge; longer pieces rank by list order.
    scores[i] = pieces[i].size() == 1 ? 0.0f : -static_cast<float>(i);
  }
  return Vocabulary(std::move(pieces), std::move(scores));
}

namespace {

// Length of the UTF-8 sequence starting at text[i], or 1 if malformed.
std::size_t utf8_length(std::string_view text, std::size_t i) {
  const auto lead = static_cast<std::uint8_t>(text[i]);
  std::size_t len = 1;
  if ((lead & 0xE0) == 0xC0) {
    len = 2;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4;
  }
  if (i + len > text.size()) return 1;
  for (std::size_t k = 1; k < len; ++k) {
    if ((static_cast<std::uint8_t>(text[i + k]) & 0xC0) != 0x80) return 1;
  }
  return len;
}

}  // namespace

std::vector<int> Vocabulary::encode(std::string_view text, bool bos) const {
  std::vector<int> ids;
  if (bos) ids.push_back(kBos);
  std::vector<int> work;
  for (std::size_t i = 0; i < text.size();) {
    const std::size_t len = utf8_length(text, i);
    const int id = lookup(text.substr(i, len));
    if (id >= 0) {
      work.push_back(id);
    } else {
      for (std::size_t k = 0; k < len; ++k) work.push_back(byte_token(static_cast<std::uint8_t>(text[i + k])));
    }
    i += len;
  }

  std::string pair;
  for (;;) {
    float best_score = -std::numeric_limits<float>::infinity();
    int best_id = -1;
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < work.size(); ++i) {
      pair = token(work[i]);
      pair += token(work[i + 1]);
      const int id = lookup(pair);
      if (id >= 0 && score(id) > best_score) {
        best_score = score(id);
        best_id = id;
        best_at = i;
      }
    }
    if (best_id < 0) break;
    work[best_at] = best_id;
    work.erase(work.begin() + static_cast<std::ptrdiff_t>(best_at) + 1);
  }
  ids.insert(ids.end(), work.begin(), work.end());
  return ids;
}

std::string Vocabulary::decode_token(int id) const {
  if (id < 0 || id >= size()) throw Error(Errc::invalid_token, "token id " + std::to_string(id));
  if (id < kFirstByte) return {};
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) out += decode_token(id);
  return out;
}

}  // namespace qlm
