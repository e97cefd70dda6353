#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vila/dsp.hpp"

namespace vila::indicators {

struct SsimParams {
  double dynamic_range = 1.0;  // inputs are normalized to [0,1]
  double c1 = 0.01 * 0.01;     // (0.01 * L)^2
  double c2 = 0.03 * 0.03;     // (0.03 * L)^2

  static SsimParams for_range(double L) {
    return {L, (0.01 * L) * (0.01 * L), (0.03 * L) * (0.03 * L)};
  }
};

// Global-statistics SSIM over the whole grid (single window).
double similarity(const dsp::Spectrogram& x, const dsp::Spectrogram& y,
                  const SsimParams& p = {});

enum class Pairing { random, identity, exhaustive };

// Mean SSIM over cross-set pairs. `random` draws n_pairs seeded pairs,
// capped at |A|*|B|; `identity` pairs item i with item i.
double dataset_similarity(const std::vector<dsp::Spectrogram>& vib_set,
                          const std::vector<dsp::Spectrogram>& other_set,
                          const SsimParams& p, int n_pairs,
                          std::uint64_t seed,
                          Pairing pairing = Pairing::random);

using ReconFn = std::function<dsp::Spectrogram(const dsp::Spectrogram&)>;

// Full-grid reconstruction MSE of one pair.
double image_mse(const dsp::Spectrogram& original,
                 const dsp::Spectrogram& reconstruction);

// Mean full-grid MSE between each item and its reconstruction.
double diversity(const std::vector<dsp::Spectrogram>& dataset,
                 const ReconFn& recon_model);

struct ItemScore {
  std::string source_id;
  double similarity = 0.0;
  double diversity = 0.0;
};

enum class SortKey { similarity, diversity };

// Contiguous rank-based partition into k groups, low scores first; the
// earliest groups absorb the remainder; ties break on source_id.
std::vector<std::vector<ItemScore>> sort_into_groups(
    std::vector<ItemScore> items, SortKey key, int k = 3);

// Tertile by similarity, then tertile by diversity within each: 9 cells,
// ordered (sim low..high) x (div low..high).
std::vector<std::vector<ItemScore>> sort_nested(std::vector<ItemScore> items);

struct IndicatorReport {
  std::string dataset_id;
  std::vector<ItemScore> per_item;
  double similarity_mean = 0.0;
  double diversity_mean = 0.0;

  std::string to_json() const;
  std::string to_csv() const;
};

IndicatorReport make_report(const std::string& dataset_id,
                            std::vector<ItemScore> per_item);

}  // namespace vila::indicators
