#include "vila/indicators.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "vila/rng.hpp"

namespace vila::indicators {

double similarity(const dsp::Spectrogram& x, const dsp::Spectrogram& y,
                  const SsimParams& p) {
  if (x.values.rows() != y.values.rows() ||
      x.values.cols() != y.values.cols()) {
    throw std::invalid_argument("shape mismatch");
  }
  const auto n = static_cast<double>(x.values.size());
  const double mu_x = x.values.mean();
  const double mu_y = y.values.mean();
  const double var_x = (x.values.array() - mu_x).square().sum() / n;
  const double var_y = (y.values.array() - mu_y).square().sum() / n;
  const double cov =
      ((x.values.array() - mu_x) * (y.values.array() - mu_y)).sum() / n;
  return ((2.0 * mu_x * mu_y + p.c1) * (2.0 * cov + p.c2)) /
         ((mu_x * mu_x + mu_y * mu_y + p.c1) * (var_x + var_y + p.c2));
}

double dataset_similarity(const std::vector<dsp::Spectrogram>& vib_set,
                          const std::vector<dsp::Spectrogram>& other_set,
                          const SsimParams& p, int n_pairs,
                          std::uint64_t seed, Pairing pairing) {
  if (vib_set.empty() || other_set.empty()) {
    throw std::invalid_argument("empty set");
  }
  double acc = 0.0;
  std::size_t count = 0;
  switch (pairing) {
    case Pairing::identity: {
      if (vib_set.size() != other_set.size()) {
        throw std::invalid_argument("identity pairing needs equal sizes");
      }
      for (std::size_t i = 0; i < vib_set.size(); ++i) {
        acc += similarity(vib_set[i], other_set[i], p);
      }
      count = vib_set.size();
      break;
    }
    case Pairing::exhaustive: {
      for (const auto& a : vib_set) {
        for (const auto& b : other_set) acc += similarity(a, b, p);
      }
      count = vib_set.size() * other_set.size();
      break;
    }
    case Pairing::random: {
      const auto all = static_cast<std::uint64_t>(vib_set.size()) *
                       other_set.size();
      const auto draws = std::min<std::uint64_t>(
          all, static_cast<std::uint64_t>(std::max(1, n_pairs)));
      Rng rng(seed);
      for (std::uint64_t i = 0; i < draws; ++i) {
        const auto a = rng.bounded(vib_set.size());
        const auto b = rng.bounded(other_set.size());
        acc += similarity(vib_set[a], other_set[b], p);
      }
      count = draws;
      break;
    }
  }
  return acc / static_cast<double>(count);
}

double image_mse(const dsp::Spectrogram& original,
                 const dsp::Spectrogram& reconstruction) {
  if (original.values.rows() != reconstruction.values.rows() ||
      original.values.cols() != reconstruction.values.cols()) {
    throw std::invalid_argument("shape mismatch");
  }
  return (original.values - reconstruction.values).array().square().sum() /
         static_cast<double>(original.values.size());
}

double diversity(const std::vector<dsp::Spectrogram>& dataset,
                 const ReconFn& recon_model) {
  if (dataset.empty()) throw std::invalid_argument("empty set");
  double acc = 0.0;
  for (const auto& item : dataset) {
    acc += image_mse(item, recon_model(item));
  }
  return acc / static_cast<double>(dataset.size());
}

namespace {

void rank_sort(std::vector<ItemScore>& items, SortKey key) {
  std::sort(items.begin(), items.end(),
            [key](const ItemScore& a, const ItemScore& b) {
              const double ka =
                  key == SortKey::similarity ? a.similarity : a.diversity;
              const double kb =
                  key == SortKey::similarity ? b.similarity : b.diversity;
              if (ka != kb) return ka < kb;
              return a.source_id < b.source_id;
            });
}

}  // namespace

std::vector<std::vector<ItemScore>> sort_into_groups(
    std::vector<ItemScore> items, SortKey key, int k) {
  if (k <= 0 || k > static_cast<int>(items.size())) {
    throw std::invalid_argument("group count exceeds dataset size");
  }
  rank_sort(items, key);
  const int n = static_cast<int>(items.size());
  const int base = n / k;
  const int extra = n % k;  // earliest (low) groups take the remainder
  std::vector<std::vector<ItemScore>> groups(k);
  int pos = 0;
  for (int g = 0; g < k; ++g) {
    const int size = base + (g < extra ? 1 : 0);
    groups[g].assign(items.begin() + pos, items.begin() + pos + size);
    pos += size;
  }
  return groups;
}

std::vector<std::vector<ItemScore>> sort_nested(std::vector<ItemScore> items) {
  if (items.size() < 9) {
    throw std::invalid_argument("need at least 9 items for nested sorting");
  }
  auto by_sim = sort_into_groups(std::move(items), SortKey::similarity, 3);
  std::vector<std::vector<ItemScore>> cells;
  cells.reserve(9);
  for (auto& group : by_sim) {
    auto by_div = sort_into_groups(std::move(group), SortKey::diversity, 3);
    for (auto& cell : by_div) cells.push_back(std::move(cell));
  }
  return cells;
}

IndicatorReport make_report(const std::string& dataset_id,
                            std::vector<ItemScore> per_item) {
  IndicatorReport report;
  report.dataset_id = dataset_id;
  report.per_item = std::move(per_item);
  if (!report.per_item.empty()) {
    for (const auto& item : report.per_item) {
      report.similarity_mean += item.similarity;
      report.diversity_mean += item.diversity;
    }
    report.similarity_mean /= static_cast<double>(report.per_item.size());
    report.diversity_mean /= static_cast<double>(report.per_item.size());
  }
  return report;
}

std::string IndicatorReport::to_json() const {
  nlohmann::json j;
  j["dataset_id"] = dataset_id;
  j["n_items"] = per_item.size();
  j["similarity_mean"] = similarity_mean;
  j["diversity_mean"] = diversity_mean;
  for (const auto& item : per_item) {
    j["per_item"].push_back({{"source_id", item.source_id},
                             {"similarity", item.similarity},
                             {"diversity", item.diversity}});
  }
  return j.dump(2);
}

std::string IndicatorReport::to_csv() const {
  std::ostringstream ss;
  ss << "source_id,similarity,diversity\n";
  ss.precision(10);
  for (const auto& item : per_item) {
    ss << item.source_id << "," << item.similarity << "," << item.diversity
       << "\n";
  }
  return ss.str();
}

}  // namespace vila::indicators
