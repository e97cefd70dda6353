#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vila/finetune.hpp"

namespace vila::dataio {

enum class Modality { audio, vibration, image, video };

std::string modality_name(Modality m);
Modality modality_from_name(const std::string& name);

enum class Split { pretrain, train, eval };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct ManifestEntry {
  std::string path;
  Modality modality = Modality::audio;
  std::optional<int> sample_rate_hz;
  std::optional<finetune::BehaviorClass> label;
  std::optional<int> minute_index;
  std::optional<std::string> venue_id;
  Split split = Split::pretrain;

  bool operator==(const ManifestEntry&) const = default;
};

// Versioned "vila-manifest/1" JSON document.
struct Manifest {
  std::vector<ManifestEntry> entries;

  std::string to_json() const;
  static Manifest from_json(const std::string& text);
  void validate() const;  // unique paths, exactly one label where present
};

struct FrameStack {
  std::vector<Eigen::MatrixXd> frames;  // uniform H x W grayscale
  double fps = 0.0;

  int height() const { return frames.empty() ? 0 : static_cast<int>(frames[0].rows()); }
  int width() const { return frames.empty() ? 0 : static_cast<int>(frames[0].cols()); }
  void validate() const;
};

// Directory of PGM frames (sorted by filename) plus an `fps` sidecar file.
FrameStack load_frame_stack(const std::filesystem::path& dir);

// Row t of the output is column `column` of frame t: n_frames x H.
Eigen::MatrixXd strip_wise(const FrameStack& stack, int column);

// Cell (t, j) is frame t sampled at pixels[j]: n_frames x |pixels|.
Eigen::MatrixXd pixel_wise(const FrameStack& stack,
                           const std::vector<std::pair<int, int>>& pixels);

struct BehaviorEvent {
  int minute_index = 0;
  std::string sensor_id;
  finetune::BehaviorClass behavior = finetune::BehaviorClass::quiet;
};

// CSV with header minute_index,sensor_id,behavior.
std::vector<BehaviorEvent> read_events_csv(const std::filesystem::path& path);

// Highest-priority behavior among all events in that minute; quiet when
// the minute has none.
finetune::BehaviorClass priority_label(const std::vector<BehaviorEvent>& events,
                                       int minute);

}  // namespace vila::dataio
