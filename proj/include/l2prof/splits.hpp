// l2prof/splits.hpp

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

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "l2prof/corpus.hpp"

namespace l2prof {

using IdSet = std::set<std::string>;

enum class Granularity { speaker, item };

struct SplitAssignment {
  IdSet train, val, test;
  std::uint64_t seed = 0;
  nlohmann::json policy;  // protocol name and parameters
  /// Units of the id sets.
  Granularity granularity = Granularity::speaker;
  std::vector<std::string> diagnostics;

  nlohmann::json to_json() const;
  static SplitAssignment from_json(const nlohmann::json& j);
  /// FNV-1a over the canonical JSON.
  std::string hash() const;
};

void save_split(const SplitAssignment& s, const std::string& path);
SplitAssignment load_split(const std::string& path);

/// Cross-validation pool member.
struct StratumMember {
  std::string id;
  std::string stratum;  // e.g. "female|NES"
};

struct Fold {
  IdSet train, val;
};

struct FoldSet {
  std::vector<Fold> folds;
  IdSet held_out_test;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

/// Stratum key of a speaker: "<gender>|<level>".
std::string gender_level_stratum(const Speaker& s);

/// Within each stratum (sorted by key) members are shuffled by seed and
/// dealt round-robin; the fold cursor carries over between strata so fold
/// sizes differ by at most one.
FoldSet stratified_kfold(const std::vector<StratumMember>& pool, int k, std::uint64_t seed);

/// Convenience: strata = (gender, level) over manifest speakers not in
/// `exclude`.
FoldSet stratified_kfold(const Manifest& m, int k, std::uint64_t seed,
                         const IdSet& exclude = {});

/// One speaker per (gender x level) cell of the manifest's scheme.
IdSet fixed_test_holdout(const Manifest& m, std::uint64_t seed);

/// Hamilton apportionment of `total` over `weights`: floor quotas, then
/// the remaining units go to the largest fractional remainders (ties to
/// the lower index).
std::vector<std::size_t> largest_remainder(const std::vector<double>& weights,
                                           std::size_t total);

struct SubsetSizes {
  std::size_t train = 2000, val = 200, test = 200;
};

/// Essay subset stratified by raw level with per-stratum allocation
/// proportional to the full corpus. With speaker granularity a learner
/// contributes to one partition only. Id sets hold essay ids.
SplitAssignment stratified_subset(const Manifest& m, SubsetSizes sizes, std::uint64_t seed,
                                  Granularity granularity = Granularity::speaker);

struct DurationEntry {
  std::string id;
  double duration_s = 0.0;
};

inline constexpr std::size_t kDurationSearchBudget = 10000;

/// `budget` seeded random k-subsets (as index lists into `pool`).
std::vector<std::vector<std::size_t>> draw_candidate_subsets(std::size_t pool_size,
                                                             std::size_t k, std::size_t budget,
                                                             std::uint64_t seed);

struct SubsetChoice {
  std::vector<std::size_t> members;  // indices into the pool
  double total_s = 0.0;
  std::size_t candidate = 0;
};

/// Candidate minimizing |sum - target|; ties to the lower candidate index.
SubsetChoice best_duration_subset(const std::vector<DurationEntry>& pool, std::size_t k,
                                  double target_s, std::size_t budget, std::uint64_t seed);

struct DurationMatchOptions {
  std::size_t per_level_count = 12;
  std::string reference_level = "L5";
  double fraction = 0.10;
  std::size_t budget = kDurationSearchBudget;
};

/// Speaker-disjoint train/val/test where, per level, val and test hold
/// `per_level_count` speakers whose summed duration is closest to
/// fraction x total duration of the reference level.
SplitAssignment duration_matched_partition(const Manifest& m, const DurationMatchOptions& opts,
                                           std::uint64_t seed);

struct LeakageViolation {
  std::string speaker;
  std::vector<std::string> partitions;
};

struct LeakageReport {
  std::vector<LeakageViolation> violations;
  bool clean() const { return violations.empty(); }
  std::string to_string() const;
};

/// Speakers (or learners) present in more than one partition. Ids are
/// resolved through the manifest when they name items.
LeakageReport audit_leakage(const SplitAssignment& split, const Manifest& m);

}  // namespace l2prof
