// src/splits.cpp

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

#include "l2prof/splits.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "l2prof/common.hpp"

namespace l2prof {

using nlohmann::json;

namespace {

const char* to_cstr(Granularity g) { return g == Granularity::speaker ? "speaker" : "item"; }

}  // namespace

json SplitAssignment::to_json() const {
  return {{"seed", seed},
          {"policy", policy},
          {"granularity", to_cstr(granularity)},
          {"train", train},
          {"val", val},
          {"test", test},
          {"diagnostics", diagnostics}};
}

SplitAssignment SplitAssignment::from_json(const json& j) {
  SplitAssignment s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.policy = j.value("policy", json::object());
    s.granularity = j.value("granularity", std::string("speaker")) == "item"
                        ? Granularity::item
                        : Granularity::speaker;
    s.train = j.at("train").get<IdSet>();
    s.val = j.at("val").get<IdSet>();
    s.test = j.at("test").get<IdSet>();
    if (j.contains("diagnostics"))
      s.diagnostics = j["diagnostics"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("split file: ") + e.what());
  }
  return s;
}

std::string SplitAssignment::hash() const { return hex64(fnv1a(to_json().dump())); }

void save_split(const SplitAssignment& s, const std::string& path) {
  write_file(path, s.to_json().dump(2) + "\n");
}

SplitAssignment load_split(const std::string& path) {
  try {
    return SplitAssignment::from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

json FoldSet::to_json() const {
  json folds_j = json::array();
  for (const auto& f : folds) folds_j.push_back({{"train", f.train}, {"val", f.val}});
  return {{"seed", seed}, {"folds", folds_j}, {"held_out_test", held_out_test}};
}

std::string gender_level_stratum(const Speaker& s) {
  return to_string(s.gender) + "|" + s.level.value_or("?");
}

FoldSet stratified_kfold(const std::vector<StratumMember>& pool, int k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("stratified_kfold: k must be >= 2");
  if (pool.size() < static_cast<std::size_t>(k))
    throw InvalidArgument("stratified_kfold: " + std::to_string(pool.size()) +
                          " speakers for " + std::to_string(k) + " folds");
  std::map<std::string, std::vector<std::string>> strata;
  IdSet all;
  for (const auto& m : pool) {
    if (!all.insert(m.id).second)
      throw InvalidArgument("stratified_kfold: duplicate id '" + m.id + "'");
    strata[m.stratum].push_back(m.id);
  }
  FoldSet fs;
  fs.seed = seed;
  fs.folds.resize(static_cast<std::size_t>(k));
  std::size_t cursor = 0;
  for (auto& [key, ids] : strata) {
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, fnv1a(key)));
    rng.shuffle(ids);
    for (const auto& id : ids) fs.folds[cursor++ % fs.folds.size()].val.insert(id);
  }
  for (auto& f : fs.folds)
    std::set_difference(all.begin(), all.end(), f.val.begin(), f.val.end(),
                        std::inserter(f.train, f.train.end()));
  return fs;
}

FoldSet stratified_kfold(const Manifest& m, int k, std::uint64_t seed, const IdSet& exclude) {
  std::vector<StratumMember> pool;
  for (const auto& s : m.speakers)
    if (!exclude.count(s.id)) pool.push_back({s.id, gender_level_stratum(s)});
  FoldSet fs = stratified_kfold(pool, k, seed);
  fs.held_out_test = exclude;
  return fs;
}

IdSet fixed_test_holdout(const Manifest& m, std::uint64_t seed) {
  IdSet test;
  std::uint64_t cell = 0;
  for (const auto& level : m.scheme.labels) {
    for (Gender g : {Gender::female, Gender::male}) {
      std::vector<std::string> cands;
      for (const auto& s : m.speakers)
        if (s.gender == g && s.level == level) cands.push_back(s.id);
      if (cands.empty())
        throw InvalidArgument("fixed_test_holdout: empty cell (" + level + ", " +
                              to_string(g) + ")");
      std::sort(cands.begin(), cands.end());
      Rng rng(derive_seed(seed, cell++));
      test.insert(cands[rng.bounded(cands.size())]);
    }
  }
  return test;
}

std::vector<std::size_t> largest_remainder(const std::vector<double>& weights,
                                           std::size_t total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(weights.size(), 0);
  if (weights.empty() || total == 0) return out;
  if (!(sum > 0)) throw InvalidArgument("largest_remainder: weights sum to zero");
  std::vector<double> rem(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0) throw InvalidArgument("largest_remainder: negative weight");
    // fmod is exact, so equal remainders tie exactly for integer weights.
    const double num = static_cast<double>(total) * weights[i];
    rem[i] = std::fmod(num, sum);
    out[i] = static_cast<std::size_t>(std::llround((num - rem[i]) / sum));
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++out[order[i % order.size()]];
  return out;
}

SplitAssignment stratified_subset(const Manifest& m, SubsetSizes sizes, std::uint64_t seed,
                                  Granularity granularity) {
  constexpr int kStrata = 16;
  std::vector<std::vector<const Essay*>> strata(kStrata);
  for (const auto& item : m.items) {
    const auto* e = std::get_if<Essay>(&item);
    if (!e) continue;
    if (e->raw_level < 1 || e->raw_level > kStrata)
      throw InvalidArgument("stratified_subset: essay '" + e->id + "' raw level out of range");
    strata[static_cast<std::size_t>(e->raw_level - 1)].push_back(e);
  }
  std::vector<double> weights(kStrata);
  for (int s = 0; s < kStrata; ++s) weights[static_cast<std::size_t>(s)] = strata[static_cast<std::size_t>(s)].size();
  const std::array<std::size_t, 3> totals{sizes.train, sizes.val, sizes.test};
  std::array<std::vector<std::size_t>, 3> quota;
  for (int p = 0; p < 3; ++p) quota[p] = largest_remainder(weights, totals[p]);

  for (std::size_t s = 0; s < kStrata; ++s) {
    const std::size_t need = quota[0][s] + quota[1][s] + quota[2][s];
    if (need > strata[s].size())
      throw InvalidArgument("stratified_subset: level " + std::to_string(s + 1) + " needs " +
                            std::to_string(need) + " essays, " +
                            std::to_string(strata[s].size()) + " available");
  }

  SplitAssignment out;
  out.seed = seed;
  out.granularity = granularity;
  out.policy = {{"protocol", "stratified_subset"},
                {"sizes", {sizes.train, sizes.val, sizes.test}},
                {"strata", "raw_level_1_16"},
                {"rounding", "largest_remainder"},
                {"disjoint_unit", to_cstr(granularity)}};
  std::array<IdSet*, 3> parts{&out.train, &out.val, &out.test};
  std::unordered_map<std::string, int> lock;  // learner -> partition
  for (std::size_t s = 0; s < kStrata; ++s) {
    auto essays = strata[s];
    std::sort(essays.begin(), essays.end(),
              [](const Essay* a, const Essay* b) { return a->id < b->id; });
    Rng rng(derive_seed(seed, s));
    rng.shuffle(essays);
    std::array<std::size_t, 3> need{quota[0][s], quota[1][s], quota[2][s]};
    auto take = [&](const Essay* e, int p) {
      parts[static_cast<std::size_t>(p)]->insert(e->id);
      --need[static_cast<std::size_t>(p)];
    };
    auto neediest = [&] {
      int best = -1;
      for (int p = 0; p < 3; ++p)
        if (need[static_cast<std::size_t>(p)] > 0 &&
            (best < 0 || need[static_cast<std::size_t>(p)] > need[static_cast<std::size_t>(best)]))
          best = p;
      return best;
    };
    if (granularity == Granularity::item) {
      for (const Essay* e : essays) {
        const int p = neediest();
        if (p < 0) break;
        take(e, p);
      }
    } else {
      // Learners already placed by an earlier level keep their partition;
      // the rest go as whole groups, in shuffled order, to the partition
      // with the most outstanding essays.
      std::vector<std::string> order;
      std::unordered_map<std::string, std::vector<const Essay*>> groups;
      for (const Essay* e : essays) {
        auto& g = groups[e->learner_id];
        if (g.empty()) order.push_back(e->learner_id);
        g.push_back(e);
      }
      std::stable_partition(order.begin(), order.end(),
                            [&](const std::string& l) { return lock.count(l) > 0; });
      for (const auto& learner : order) {
        int p;
        if (auto it = lock.find(learner); it != lock.end()) {
          p = it->second;
        } else {
          p = neediest();
          if (p < 0) break;
          lock[learner] = p;
        }
        for (const Essay* e : groups[learner]) {
          if (need[static_cast<std::size_t>(p)] == 0) break;
          take(e, p);
        }
      }
    }
    if (need[0] + need[1] + need[2] != 0)
      throw InvalidArgument("stratified_subset: level " + std::to_string(s + 1) +
                            " cannot fill its quota with learner-disjoint essays");
  }
  return out;
}

std::vector<std::vector<std::size_t>> draw_candidate_subsets(std::size_t pool_size, std::size_t k,
                                                             std::size_t budget,
                                                             std::uint64_t seed) {
  if (k > pool_size) throw InvalidArgument("draw_candidate_subsets: k exceeds pool size");
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(budget);
  std::vector<std::size_t> idx(pool_size);
  for (std::size_t c = 0; c < budget; ++c) {
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.bounded(pool_size - i);
      std::swap(idx[i], idx[j]);
    }
    std::vector<std::size_t> pick(idx.begin(), idx.begin() + static_cast<long>(k));
    std::sort(pick.begin(), pick.end());
    out.push_back(std::move(pick));
  }
  return out;
}

SubsetChoice best_duration_subset(const std::vector<DurationEntry>& pool, std::size_t k,
                                  double target_s, std::size_t budget, std::uint64_t seed) {
  if (budget == 0) throw InvalidArgument("best_duration_subset: zero budget");
  const auto cands = draw_candidate_subsets(pool.size(), k, budget, seed);
  SubsetChoice best;
  double best_dev = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cands.size(); ++c) {
    double sum = 0;
    for (auto i : cands[c]) sum += pool[i].duration_s;
    const double dev = std::abs(sum - target_s);
    if (dev < best_dev) {
      best_dev = dev;
      best = {cands[c], sum, c};
    }
  }
  return best;
}

SplitAssignment duration_matched_partition(const Manifest& m, const DurationMatchOptions& opts,
                                           std::uint64_t seed) {
  if (opts.per_level_count == 0) throw InvalidArgument("duration_matched_partition: zero count");
  std::map<std::string, double> dur;
  for (const auto& item : m.items)
    if (const auto* r = std::get_if<Recording>(&item)) dur[r->speaker_id] += r->duration_s;

  if (!m.scheme.contains(opts.reference_level))
    throw InvalidArgument("duration_matched_partition: reference level '" +
                          opts.reference_level + "' not in scheme");
  double ref_total = 0;
  for (const auto& s : m.speakers)
    if (s.level == opts.reference_level) ref_total += dur[s.id];
  const double target = opts.fraction * ref_total;

  SplitAssignment out;
  out.seed = seed;
  out.policy = {{"protocol", "duration_matched"},
                {"per_level_count", opts.per_level_count},
                {"reference_level", opts.reference_level},
                {"fraction", opts.fraction},
                {"budget", opts.budget},
                {"target_s", target},
                {"interpretation", "per-level count and per-level target"}};
  json chosen = json::object();
  for (std::size_t li = 0; li < m.scheme.labels.size(); ++li) {
    const auto& level = m.scheme.labels[li];
    std::vector<DurationEntry> pool;
    for (const auto& s : m.speakers)
      if (s.level == level) pool.push_back({s.id, dur[s.id]});
    std::sort(pool.begin(), pool.end(),
              [](const DurationEntry& a, const DurationEntry& b) { return a.id < b.id; });
    if (pool.size() < 2 * opts.per_level_count)
      throw InvalidArgument("duration_matched_partition: level " + level + " has " +
                            std::to_string(pool.size()) + " speakers, needs " +
                            std::to_string(2 * opts.per_level_count));
    for (int set = 0; set < 2; ++set) {
      const auto pick = best_duration_subset(pool, opts.per_level_count, target, opts.budget,
                                             derive_seed(seed, 2 * li + static_cast<std::size_t>(set)));
      IdSet& dst = set == 0 ? out.val : out.test;
      std::vector<bool> taken(pool.size(), false);
      for (auto i : pick.members) {
        dst.insert(pool[i].id);
        taken[i] = true;
      }
      chosen[level][set == 0 ? "val_s" : "test_s"] = pick.total_s;
      if (pick.total_s > 2 * target)
        out.diagnostics.push_back("level " + level + ": no " + (set == 0 ? "val" : "test") +
                                  " subset within 2x target (best " +
                                  std::to_string(pick.total_s) + " s)");
      std::vector<DurationEntry> rest;
      for (std::size_t i = 0; i < pool.size(); ++i)
        if (!taken[i]) rest.push_back(pool[i]);
      pool = std::move(rest);
    }
    for (const auto& e : pool) out.train.insert(e.id);
  }
  out.policy["chosen_totals_s"] = chosen;
  return out;
}

std::string LeakageReport::to_string() const {
  std::ostringstream os;
  for (const auto& v : violations) {
    os << "speaker " << v.speaker << " appears in";
    for (const auto& p : v.partitions) os << " " << p;
    os << "\n";
  }
  return os.str();
}

LeakageReport audit_leakage(const SplitAssignment& split, const Manifest& m) {
  std::unordered_map<std::string, std::string> owner;
  if (split.granularity == Granularity::speaker)
    for (const auto& item : m.items) owner[item_id(item)] = item_speaker(item);
  auto resolve = [&](const std::string& id) {
    auto it = owner.find(id);
    return it == owner.end() ? id : it->second;
  };
  std::map<std::string, std::set<std::string>> seen;
  for (const auto& [name, ids] : {std::pair<const char*, const IdSet*>{"train", &split.train},
                                  {"val", &split.val},
                                  {"test", &split.test}})
    for (const auto& id : *ids) seen[resolve(id)].insert(name);
  LeakageReport r;
  for (const auto& [spk, parts] : seen)
    if (parts.size() > 1) r.violations.push_back({spk, {parts.begin(), parts.end()}});
  return r;
}

}  // namespace l2prof
