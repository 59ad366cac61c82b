// src/tokenizer.cpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "l2prof/tokenizer.hpp"

#include <cctype>

#include "l2prof/common.hpp"

namespace l2prof {

SubwordTokenizer::SubwordTokenizer(int vocab_size, int max_piece)
    : vocab_size_(vocab_size), max_piece_(max_piece) {
  if (vocab_size <= kFirstRegular)
    throw InvalidArgument("SubwordTokenizer: vocab_size too small");
  if (max_piece < 1)
    throw InvalidArgument("SubwordTokenizer: max_piece must be >= 1");
}

std::vector<std::string> SubwordTokenizer::pieces(std::string_view text) const {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&]() {
    if (word.empty()) return;
    for (std::size_t pos = 0; pos < word.size(); pos += max_piece_) {
      std::string piece = word.substr(pos, max_piece_);
      out.push_back(pos == 0 ? piece : "##" + piece);
    }
    word.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      word.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

TokenId SubwordTokenizer::piece_id(std::string_view piece) const {
  const std::uint64_t h = fnv1a(piece);
  return kFirstRegular +
         static_cast<TokenId>(h % static_cast<std::uint64_t>(vocab_size_ -
                                                             kFirstRegular));
}

std::vector<TokenId> SubwordTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids{kCls};
  for (const auto& p : pieces(text)) ids.push_back(piece_id(p));
  ids.push_back(kSep);
  return ids;
}

std::vector<TokenId> truncate_tokens(const std::vector<TokenId>& tokens,
                                     std::size_t max_tokens) {
  if (max_tokens < 1) throw InvalidArgument("truncate_tokens: max_tokens < 1");
  if (tokens.size() <= max_tokens) return tokens;
  const bool wrapped = !tokens.empty() &&
                       tokens.front() == SubwordTokenizer::kCls &&
                       tokens.back() == SubwordTokenizer::kSep;
  std::vector<TokenId> out(tokens.begin(), tokens.begin() + max_tokens);
  if (wrapped && max_tokens >= 2) out.back() = SubwordTokenizer::kSep;
  return out;
}

}  // namespace l2prof
