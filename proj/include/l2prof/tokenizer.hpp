// l2prof/tokenizer.hpp

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

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace l2prof {

using TokenId = int;

/// Uncased subword tokenizer with a hashed vocabulary.
///
/// Text is lower-cased and split on whitespace; punctuation characters
/// become their own pieces; words longer than `max_piece` bytes are cut
/// into continuation pieces marked with a "##" prefix. Piece ids come from
/// a 64-bit hash folded into [first_regular_id, vocab_size).
class SubwordTokenizer {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kCls = 1;
  static constexpr TokenId kSep = 2;
  static constexpr TokenId kFirstRegular = 3;

  explicit SubwordTokenizer(int vocab_size = 30522, int max_piece = 6);

  /// Subword pieces without special tokens.
  std::vector<std::string> pieces(std::string_view text) const;

  /// Ids wrapped as [CLS] pieces... [SEP].
  std::vector<TokenId> encode(std::string_view text) const;

  TokenId piece_id(std::string_view piece) const;

  /// Number of subword pieces (the essay token_count).
  std::size_t count(std::string_view text) const {
    return pieces(text).size();
  }

  int vocab_size() const { return vocab_size_; }

 private:
  int vocab_size_;
  int max_piece_;
};

/// Keeps the leading [CLS], cuts to `max_tokens` in total and re-appends
/// [SEP] when the cut removed it. A sequence that already fits is returned
/// unchanged.
std::vector<TokenId> truncate_tokens(const std::vector<TokenId>& tokens,
                                     std::size_t max_tokens);

/// The token-length grid swept in the essay experiments.
inline const std::vector<std::size_t>& token_length_grid() {
  static const std::vector<std::size_t> grid = {10, 20, 30, 40, 50,
                                                60, 70, 80, 90};
  return grid;
}

}  // namespace l2prof
