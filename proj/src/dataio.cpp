#include "vila/dataio.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "vila/io.hpp"

namespace vila::dataio {

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::audio: return "audio";
    case Modality::vibration: return "vibration";
    case Modality::image: return "image";
    case Modality::video: return "video";
  }
  throw std::invalid_argument("bad modality");
}

Modality modality_from_name(const std::string& name) {
  if (name == "audio") return Modality::audio;
  if (name == "vibration") return Modality::vibration;
  if (name == "image") return Modality::image;
  if (name == "video") return Modality::video;
  throw std::invalid_argument("unknown modality: " + name);
}

std::string split_name(Split s) {
  switch (s) {
    case Split::pretrain: return "pretrain";
    case Split::train: return "train";
    case Split::eval: return "eval";
  }
  throw std::invalid_argument("bad split");
}

Split split_from_name(const std::string& name) {
  if (name == "pretrain") return Split::pretrain;
  if (name == "train") return Split::train;
  if (name == "eval") return Split::eval;
  throw std::invalid_argument("unknown split: " + name);
}

void Manifest::validate() const {
  std::set<std::string> paths;
  for (const auto& e : entries) {
    if (!paths.insert(e.path).second) {
      throw std::invalid_argument("duplicate manifest path: " + e.path);
    }
  }
}

std::string Manifest::to_json() const {
  nlohmann::json j;
  j["version"] = "vila-manifest/1";
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json je;
    je["path"] = e.path;
    je["modality"] = modality_name(e.modality);
    je["split"] = split_name(e.split);
    if (e.sample_rate_hz) je["sample_rate_hz"] = *e.sample_rate_hz;
    if (e.label) {
      je["label"] = finetune::class_names()[static_cast<int>(*e.label)];
    }
    if (e.minute_index) je["minute_index"] = *e.minute_index;
    if (e.venue_id) je["venue_id"] = *e.venue_id;
    j["entries"].push_back(je);
  }
  return j.dump(2);
}

Manifest Manifest::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.at("version").get<std::string>() != "vila-manifest/1") {
    throw std::runtime_error("unsupported manifest version");
  }
  Manifest m;
  for (const auto& je : j.at("entries")) {
    ManifestEntry e;
    e.path = je.at("path").get<std::string>();
    e.modality = modality_from_name(je.at("modality").get<std::string>());
    e.split = split_from_name(je.at("split").get<std::string>());
    if (je.contains("sample_rate_hz")) {
      e.sample_rate_hz = je["sample_rate_hz"].get<int>();
    }
    if (je.contains("label")) {
      e.label = finetune::class_from_name(je["label"].get<std::string>());
    }
    if (je.contains("minute_index")) {
      e.minute_index = je["minute_index"].get<int>();
    }
    if (je.contains("venue_id")) {
      e.venue_id = je["venue_id"].get<std::string>();
    }
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

void FrameStack::validate() const {
  if (frames.size() < 2) throw std::invalid_argument("need at least 2 frames");
  if (fps <= 0.0) throw std::invalid_argument("fps must be positive");
  for (const auto& f : frames) {
    if (f.rows() != frames[0].rows() || f.cols() != frames[0].cols()) {
      throw std::invalid_argument("non-uniform frame dimensions");
    }
  }
}

FrameStack load_frame_stack(const std::filesystem::path& dir) {
  FrameStack stack;
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".pgm") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) stack.frames.push_back(io::read_pgm(p));
  stack.fps = std::stod(io::read_text_file(dir / "fps"));
  stack.validate();
  return stack;
}

Eigen::MatrixXd strip_wise(const FrameStack& stack, int column) {
  stack.validate();
  if (column < 0 || column >= stack.width()) {
    throw std::invalid_argument("column out of range");
  }
  Eigen::MatrixXd out(stack.frames.size(), stack.height());
  for (std::size_t t = 0; t < stack.frames.size(); ++t) {
    out.row(static_cast<Eigen::Index>(t)) =
        stack.frames[t].col(column).transpose();
  }
  return out;
}

Eigen::MatrixXd pixel_wise(const FrameStack& stack,
                           const std::vector<std::pair<int, int>>& pixels) {
  stack.validate();
  if (pixels.empty()) throw std::invalid_argument("need at least one pixel");
  for (const auto& [r, c] : pixels) {
    if (r < 0 || r >= stack.height() || c < 0 || c >= stack.width()) {
      throw std::invalid_argument("pixel coordinate out of range");
    }
  }
  Eigen::MatrixXd out(stack.frames.size(), pixels.size());
  for (std::size_t t = 0; t < stack.frames.size(); ++t) {
    for (std::size_t j = 0; j < pixels.size(); ++j) {
      out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
          stack.frames[t](pixels[j].first, pixels[j].second);
    }
  }
  return out;
}

std::vector<BehaviorEvent> read_events_csv(const std::filesystem::path& path) {
  std::istringstream in(io::read_text_file(path));
  std::string line;
  if (!std::getline(in, line) ||
      line.rfind("minute_index,sensor_id,behavior", 0) != 0) {
    throw std::runtime_error("bad events CSV header: " + path.string());
  }
  std::vector<BehaviorEvent> events;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string minute, sensor, behavior;
    if (!std::getline(row, minute, ',') || !std::getline(row, sensor, ',') ||
        !std::getline(row, behavior)) {
      throw std::runtime_error("bad events CSV row: " + line);
    }
    BehaviorEvent e;
    e.minute_index = std::stoi(minute);
    if (e.minute_index < 0) throw std::runtime_error("negative minute index");
    e.sensor_id = sensor;
    e.behavior = finetune::class_from_name(behavior);
    events.push_back(std::move(e));
  }
  return events;
}

finetune::BehaviorClass priority_label(const std::vector<BehaviorEvent>& events,
                                       int minute) {
  int best = static_cast<int>(finetune::BehaviorClass::quiet);
  for (const auto& e : events) {
    if (e.minute_index == minute) {
      best = std::min(best, static_cast<int>(e.behavior));
    }
  }
  return static_cast<finetune::BehaviorClass>(best);
}

}  // namespace vila::dataio
