#pragma once

// Pairwise preference datasets over ranked trajectories.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "preflab/datagen.hpp"

namespace preflab {

enum class Split { train, val };
std::string to_string(Split s);

// (first, second) are trajectory ids with first < second in preference.
struct PreferencePair {
  int first = 0;
  int second = 0;
  Split split = Split::train;
  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

enum class SelectionScheme { delta_pair, all_pairs };
std::string to_string(SelectionScheme s);
SelectionScheme parse_selection(const std::string& name);

struct PreferenceDataset {
  SelectionScheme scheme = SelectionScheme::delta_pair;
  int delta_pair = 0;  // delta_pair scheme
  int m = 0;           // all_pairs scheme
  std::uint64_t seed = 0;
  std::string trajectory_hash;  // provenance of the trajectory store, may be empty
  std::vector<PreferencePair> pairs;

  std::size_t count(Split s) const;
  friend bool operator==(const PreferenceDataset&, const PreferenceDataset&) = default;
};

// Trajectories in ascending ground-truth return; ties broken by id.
struct Ranking {
  std::vector<int> ids;        // ids[r] is the trajectory at rank r
  std::vector<double> returns; // returns[r]
  std::unordered_map<int, int> rank_of;

  std::size_t size() const noexcept { return ids.size(); }
};

Ranking rank(std::span<const Trajectory> trajs);

// A pair is valid iff the ranks differ by at least max(delta, 1) and the
// returns are not tied.
std::size_t count_valid_pairs(const Ranking& ranked, int delta_pair);

// Rejection sampling with replacement until n_pairs valid pairs are accepted.
PreferenceDataset delta_pair_sample(const Ranking& ranked, int delta_pair, int n_pairs,
                                    std::uint64_t seed);

// m evenly spaced ranks, round(k (N-1) / (m-1)), and every pair among them.
PreferenceDataset all_pairs_select(const Ranking& ranked, int m, std::uint64_t seed);

// Tags round(val_frac * n) uniformly chosen pairs as validation.
void split(PreferenceDataset& dataset, double val_frac, std::uint64_t seed);

inline constexpr int kDefaultDeltaPair = 60;
inline constexpr int kDefaultPairs = 2000;
inline constexpr double kDefaultValFraction = 0.1;

// Header line then one {"i","j","split"} object per pair.
void write_dataset(std::ostream& out, const PreferenceDataset& dataset);
PreferenceDataset read_dataset(std::istream& in);

}  // namespace preflab
