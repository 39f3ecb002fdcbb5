#include "rdn/formats.hpp"

#include <bit>
#include <fstream>
#include <functional>
#include <string>

#include "rdn/error.hpp"

namespace rdn {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_line(std::ofstream& out, const json& record) { out << record.dump() << '\n'; }

void write_header(std::ofstream& out, const json& header) {
  if (!header.is_null()) write_line(out, json{{"header", header}});
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

/// Calls fn(record, line_number) for each non-header record; returns the header if any.
json for_each_record(const std::filesystem::path& path,
                     const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json header;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(number) + ": ";
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where + "malformed JSON (" + e.what() + ")");
    }
    if (!record.is_object()) throw ValidationError(where + "record is not an object");
    if (record.contains("header")) {
      header = record["header"];
      continue;
    }
    try {
      fn(record, number);
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    } catch (const json::exception& e) {
      throw ValidationError(where + "bad field (" + e.what() + ")");
    }
  }
  if (in.bad()) throw IoError("failed reading " + path.string());
  return header;
}

const json& field(const json& record, const char* name) {
  auto it = record.find(name);
  if (it == record.end()) throw ValidationError(std::string("missing field \"") + name + "\"");
  return *it;
}

BoxGeometry box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ValidationError("box must be [x1, y1, x2, y2]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

std::int64_t frame_of(const json& record) {
  const auto frame = field(record, "frame").get<std::int64_t>();
  if (frame < 0) throw ValidationError("frame must be non-negative");
  return frame;
}

template <typename T>
void place(std::vector<std::vector<T>>& frames, std::int64_t frame, T value) {
  const auto idx = static_cast<std::size_t>(frame);
  if (frames.size() <= idx) frames.resize(idx + 1);
  frames[idx].push_back(std::move(value));
}

}  // namespace

json box_to_json(const BoxGeometry& box) {
  return json::array({box.x1(), box.y1(), box.x2(), box.y2()});
}

void write_proposals(const std::filesystem::path& path,
                     const std::vector<std::vector<Proposal>>& frames, const json& header,
                     const ProposalWriteOptions& options) {
  json full_header = header.is_null() ? json::object() : header;
  full_header["num_frames"] = frames.size();
  std::ofstream sidecar;
  if (options.sidecar) {
    full_header["feature_file"] = options.sidecar->filename().string();
    sidecar.open(*options.sidecar, std::ios::binary | std::ios::trunc);
    if (!sidecar) throw IoError("cannot write " + options.sidecar->string());
  }
  auto out = open_out(path);
  write_header(out, full_header);
  std::uint64_t offset = 0;
  for (const auto& frame : frames) {
    for (const auto& p : frame) {
      json record{{"frame", p.frame_index},
                  {"id", p.id},
                  {"box", box_to_json(p.box)},
                  {"objectness", p.objectness}};
      if (options.sidecar) {
        record["feature_offset"] = offset;
        record["feature_dim"] = p.feature.size();
        for (double v : p.feature) {
          const auto bits = std::bit_cast<std::uint64_t>(v);
          char bytes[8];
          for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
          sidecar.write(bytes, 8);
        }
        offset += 8 * p.feature.size();
      } else {
        record["feature"] = p.feature;
      }
      write_line(out, record);
    }
  }
  finish(out, path);
  if (options.sidecar) {
    sidecar.flush();
    if (!sidecar) throw IoError("failed writing " + options.sidecar->string());
  }
}

std::vector<std::vector<Proposal>> read_proposals(
    const std::filesystem::path& path, std::optional<std::size_t> expected_dim,
    const std::optional<std::filesystem::path>& sidecar) {
  std::vector<std::vector<Proposal>> frames;
  std::ifstream features;
  std::optional<std::size_t> dim = expected_dim;
  std::optional<std::filesystem::path> sidecar_path = sidecar;

  auto read_sidecar = [&](std::uint64_t offset, std::size_t n) {
    if (!features.is_open()) {
      if (!sidecar_path) throw ValidationError("record uses feature_offset but no side-car file is known");
      features.open(*sidecar_path, std::ios::binary);
      if (!features) throw IoError("cannot open " + sidecar_path->string());
    }
    features.clear();
    features.seekg(static_cast<std::streamoff>(offset));
    std::vector<double> out(n);
    for (double& v : out) {
      unsigned char bytes[8];
      features.read(reinterpret_cast<char*>(bytes), 8);
      if (!features) throw ValidationError("feature_offset beyond end of side-car file");
      std::uint64_t bits = 0;
      for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes[i];
      v = std::bit_cast<double>(bits);
    }
    return out;
  };

  std::size_t declared_frames = 0;
  bool header_seen = false;
  // Header is always the first record when present, so side-car resolution
  // below happens before any feature_offset record is parsed.
  std::ifstream probe(path);
  if (!probe) throw IoError("cannot open " + path.string());
  std::string first;
  while (std::getline(probe, first)) {
    if (first.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(first);
      if (j.is_object() && j.contains("header")) {
        header_seen = true;
        const json& h = j["header"];
        if (h.contains("num_frames")) declared_frames = h["num_frames"].get<std::size_t>();
        if (!sidecar_path && h.contains("feature_file")) {
          sidecar_path = path.parent_path() / h["feature_file"].get<std::string>();
        }
      }
    } catch (const json::exception&) {
      // Reported with line context by the main pass.
    }
    break;
  }
  (void)header_seen;

  for_each_record(path, [&](const json& r, std::size_t) {
    Proposal p;
    p.frame_index = frame_of(r);
    p.id = field(r, "id").get<ProposalId>();
    p.box = box_from_json(field(r, "box"));
    p.objectness = field(r, "objectness").get<double>();
    if (!(p.objectness >= 0.0 && p.objectness <= 1.0)) {
      throw ValidationError("objectness outside [0, 1]");
    }
    if (r.contains("feature")) {
      p.feature = r["feature"].get<std::vector<double>>();
    } else if (r.contains("feature_offset")) {
      p.feature = read_sidecar(r["feature_offset"].get<std::uint64_t>(),
                               field(r, "feature_dim").get<std::size_t>());
    } else {
      throw ValidationError("record has neither \"feature\" nor \"feature_offset\"");
    }
    if (!dim) dim = p.feature.size();
    if (p.feature.size() != *dim) {
      throw ValidationError("feature length " + std::to_string(p.feature.size()) +
                            ", expected " + std::to_string(*dim));
    }
    place(frames, p.frame_index, std::move(p));
  });
  if (frames.size() < declared_frames) frames.resize(declared_frames);
  return frames;
}

void write_detections(const std::filesystem::path& path,
                      const std::vector<std::vector<Detection>>& detections, const json& header) {
  auto out = open_out(path);
  json full_header = header.is_null() ? json::object() : header;
  full_header["num_frames"] = detections.size();
  write_header(out, full_header);
  for (const auto& frame : detections) {
    for (const auto& d : frame) {
      write_line(out, json{{"frame", d.frame_index},
                           {"class", d.class_id},
                           {"score", d.score},
                           {"box", box_to_json(d.box)},
                           {"source_proposal_id", d.source_proposal_id}});
    }
  }
  finish(out, path);
}

std::vector<std::vector<Detection>> read_detections(const std::filesystem::path& path) {
  std::vector<std::vector<Detection>> frames;
  const json header = for_each_record(path, [&](const json& r, std::size_t) {
    Detection d;
    d.frame_index = frame_of(r);
    d.class_id = field(r, "class").get<int>();
    d.score = field(r, "score").get<double>();
    d.box = box_from_json(field(r, "box"));
    d.source_proposal_id = field(r, "source_proposal_id").get<ProposalId>();
    place(frames, d.frame_index, std::move(d));
  });
  if (header.is_object() && header.contains("num_frames")) {
    const auto n = header["num_frames"].get<std::size_t>();
    if (frames.size() < n) frames.resize(n);
  }
  return frames;
}

void write_weights(const std::filesystem::path& path, const RelationWeightTable& table,
                   const json& header) {
  auto out = open_out(path);
  write_header(out, header);
  for (const auto& e : table.entries()) {
    write_line(out, json{{"frame", e.frame},
                         {"ref_id", e.ref_id},
                         {"support_id", e.support_id},
                         {"w_bar", e.w_bar}});
  }
  finish(out, path);
}

RelationWeightTable read_weights(const std::filesystem::path& path) {
  RelationWeightTable table;
  for_each_record(path, [&](const json& r, std::size_t) {
    table.set(frame_of(r), field(r, "ref_id").get<ProposalId>(),
              field(r, "support_id").get<ProposalId>(), field(r, "w_bar").get<double>());
  });
  return table;
}

void write_tubes(const std::filesystem::path& path, const std::vector<Tube>& tubes,
                 const json& header) {
  auto out = open_out(path);
  write_header(out, header);
  for (std::size_t k = 0; k < tubes.size(); ++k) {
    const Tube& t = tubes[k];
    json frames = json::array();
    json boxes = json::array();
    json after = json::array();
    for (const auto& d : t.detections) {
      frames.push_back(d.frame_index);
      boxes.push_back(box_to_json(d.box));
      after.push_back(d.score);
    }
    json before = t.rescored ? json(t.scores_before) : after;
    write_line(out, json{{"class", t.class_id},
                         {"tube_id", k},
                         {"frames", frames},
                         {"boxes", boxes},
                         {"scores_before", before},
                         {"scores_after", after},
                         {"path_score", t.path_score}});
  }
  finish(out, path);
}

void write_ground_truth(const std::filesystem::path& path,
                        const std::vector<GroundTruthTrack>& tracks, const json& header) {
  auto out = open_out(path);
  write_header(out, header);
  for (const auto& t : tracks) {
    json boxes = json::array();
    for (const auto& b : t.boxes) boxes.push_back(box_to_json(b));
    write_line(out, json{{"track_id", t.track_id},
                         {"class", t.class_id},
                         {"frames", t.frames},
                         {"boxes", boxes}});
  }
  finish(out, path);
}

std::vector<GroundTruthTrack> read_ground_truth(const std::filesystem::path& path) {
  std::vector<GroundTruthTrack> tracks;
  for_each_record(path, [&](const json& r, std::size_t) {
    GroundTruthTrack t;
    t.track_id = field(r, "track_id").get<int>();
    t.class_id = field(r, "class").get<int>();
    t.frames = field(r, "frames").get<std::vector<std::int64_t>>();
    for (const auto& b : field(r, "boxes")) t.boxes.push_back(box_from_json(b));
    if (t.frames.size() != t.boxes.size()) {
      throw ValidationError("track has " + std::to_string(t.frames.size()) + " frames but " +
                            std::to_string(t.boxes.size()) + " boxes");
    }
    tracks.push_back(std::move(t));
  });
  return tracks;
}

}  // namespace rdn
