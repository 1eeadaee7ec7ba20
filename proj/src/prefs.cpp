#include "preflab/prefs.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "preflab/error.hpp"
#include "preflab/rng.hpp"

namespace preflab {

std::string to_string(Split s) { return s == Split::train ? "train" : "val"; }

std::string to_string(SelectionScheme s) {
  return s == SelectionScheme::delta_pair ? "delta_pair" : "all_pairs";
}

SelectionScheme parse_selection(const std::string& name) {
  if (name == "delta_pair" || name == "delta") return SelectionScheme::delta_pair;
  if (name == "all_pairs" || name == "all") return SelectionScheme::all_pairs;
  throw InvalidInput("unknown selection scheme '" + name + "'");
}

std::size_t PreferenceDataset::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [s](const auto& p) { return p.split == s; }));
}

Ranking rank(std::span<const Trajectory> trajs) {
  if (trajs.empty()) throw InvalidInput("rank: no trajectories");
  std::vector<std::size_t> idx(trajs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (trajs[a].ret != trajs[b].ret) return trajs[a].ret < trajs[b].ret;
    return trajs[a].id < trajs[b].id;
  });
  Ranking r;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& t = trajs[idx[k]];
    if (r.rank_of.contains(t.id)) throw InvalidInput("rank: duplicate trajectory id");
    r.ids.push_back(t.id);
    r.returns.push_back(t.ret);
    r.rank_of[t.id] = static_cast<int>(k);
  }
  return r;
}

namespace {

bool valid_ranks(const Ranking& ranked, std::size_t a, std::size_t b, int delta) {
  const auto gap = a > b ? a - b : b - a;
  return gap >= static_cast<std::size_t>(std::max(delta, 1)) &&
         ranked.returns[a] != ranked.returns[b];
}

PreferencePair ordered_pair(const Ranking& ranked, std::size_t a, std::size_t b) {
  if (a > b) std::swap(a, b);
  return {ranked.ids[a], ranked.ids[b], Split::train};
}

}  // namespace

std::size_t count_valid_pairs(const Ranking& ranked, int delta_pair) {
  // Ranks are sorted by return, so for a fixed lower rank a every b >= a + gap
  // qualifies except those tied with a.
  const std::size_t n = ranked.size();
  const std::size_t gap = static_cast<std::size_t>(std::max(delta_pair, 1));
  std::size_t total = 0;
  for (std::size_t a = 0; a + gap < n; ++a) {
    auto first_above = std::upper_bound(ranked.returns.begin() + static_cast<long>(a + gap),
                                        ranked.returns.end(), ranked.returns[a]);
    total += static_cast<std::size_t>(ranked.returns.end() - first_above);
  }
  return total;
}

PreferenceDataset delta_pair_sample(const Ranking& ranked, int delta_pair, int n_pairs,
                                    std::uint64_t seed) {
  if (n_pairs < 1) throw InvalidInput("delta_pair_sample: n_pairs must be >= 1");
  if (delta_pair < 0) throw InvalidInput("delta_pair_sample: delta_pair must be >= 0");
  const std::size_t n = ranked.size();
  if (n < 2 || !valid_ranks(ranked, 0, n - 1, delta_pair)) {
    throw ConfigError("delta_pair_sample: no valid pair for delta_pair=" +
                      std::to_string(delta_pair) + " over " + std::to_string(n) +
                      " trajectories");
  }
  PreferenceDataset ds;
  ds.scheme = SelectionScheme::delta_pair;
  ds.delta_pair = delta_pair;
  ds.seed = seed;
  ds.pairs.reserve(static_cast<std::size_t>(n_pairs));
  Rng rng(derive_seed(seed, {0xd1ULL}));
  const std::uint64_t max_draws = 100000ULL * static_cast<std::uint64_t>(n_pairs) + 1000000ULL;
  std::uint64_t draws = 0;
  while (ds.pairs.size() < static_cast<std::size_t>(n_pairs)) {
    if (++draws > max_draws) throw ConfigError("delta_pair_sample: acceptance rate too low");
    const std::size_t a = rng.below(n);
    const std::size_t b = rng.below(n);
    if (!valid_ranks(ranked, a, b, delta_pair)) continue;
    ds.pairs.push_back(ordered_pair(ranked, a, b));
  }
  return ds;
}

PreferenceDataset all_pairs_select(const Ranking& ranked, int m, std::uint64_t seed) {
  const std::size_t n = ranked.size();
  if (m < 2 || static_cast<std::size_t>(m) > n) {
    throw InvalidInput("all_pairs_select: m=" + std::to_string(m) + " outside [2, " +
                       std::to_string(n) + "]");
  }
  std::vector<std::size_t> picks;
  for (int k = 0; k < m; ++k) {
    picks.push_back(static_cast<std::size_t>(
        std::lround(static_cast<double>(k) * static_cast<double>(n - 1) / (m - 1))));
  }
  PreferenceDataset ds;
  ds.scheme = SelectionScheme::all_pairs;
  ds.m = m;
  ds.seed = seed;
  for (std::size_t a = 0; a < picks.size(); ++a) {
    for (std::size_t b = a + 1; b < picks.size(); ++b) {
      if (ranked.returns[picks[a]] == ranked.returns[picks[b]]) continue;  // ties carry no label
      ds.pairs.push_back(ordered_pair(ranked, picks[a], picks[b]));
    }
  }
  return ds;
}

void split(PreferenceDataset& dataset, double val_frac, std::uint64_t seed) {
  if (!(val_frac > 0.0 && val_frac < 1.0)) throw InvalidInput("split: val_frac must be in (0,1)");
  const std::size_t n = dataset.pairs.size();
  const auto n_val = static_cast<std::size_t>(std::lround(val_frac * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, {0x5b11ULL}));
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  for (auto& p : dataset.pairs) p.split = Split::train;
  for (std::size_t k = 0; k < n_val; ++k) dataset.pairs[idx[k]].split = Split::val;
}

void write_dataset(std::ostream& out, const PreferenceDataset& ds) {
  nlohmann::ordered_json header;
  header["scheme"] = to_string(ds.scheme);
  if (ds.scheme == SelectionScheme::delta_pair) {
    header["delta_pair"] = ds.delta_pair;
  } else {
    header["m"] = ds.m;
  }
  header["seed"] = ds.seed;
  header["n_pairs"] = ds.pairs.size();
  header["trajectory_hash"] = ds.trajectory_hash;
  out << header.dump() << '\n';
  for (const auto& p : ds.pairs) {
    out << "{\"i\":" << p.first << ",\"j\":" << p.second << ",\"split\":\"" << to_string(p.split)
        << "\"}\n";
  }
  if (!out) throw IoError("failed writing preference dataset");
}

PreferenceDataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("preference dataset: empty input");
  PreferenceDataset ds;
  try {
    const auto h = nlohmann::json::parse(line);
    ds.scheme = parse_selection(h.at("scheme").get<std::string>());
    if (ds.scheme == SelectionScheme::delta_pair) {
      ds.delta_pair = h.at("delta_pair").get<int>();
    } else {
      ds.m = h.at("m").get<int>();
    }
    ds.seed = h.at("seed").get<std::uint64_t>();
    ds.trajectory_hash = h.value("trajectory_hash", std::string{});
    const auto n = h.at("n_pairs").get<std::size_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      const auto s = j.at("split").get<std::string>();
      if (s != "train" && s != "val") throw InvalidInput("preference dataset: bad split '" + s + "'");
      ds.pairs.push_back({j.at("i").get<int>(), j.at("j").get<int>(),
                          s == "train" ? Split::train : Split::val});
    }
    if (ds.pairs.size() != n) throw InvalidInput("preference dataset: pair count mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("preference dataset: ") + e.what());
  }
  for (const auto& p : ds.pairs) {
    if (p.first == p.second) throw InvalidInput("preference dataset: self-pair");
  }
  return ds;
}

}  // namespace preflab
