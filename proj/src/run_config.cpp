#include "rdn/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "rdn/error.hpp"

namespace rdn {

using nlohmann::json;

namespace {

/// Reads fields of one JSON object, remembering which keys were consumed so
/// that typos surface as errors instead of silently falling back to defaults.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError("config: " + where_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config: " + name(key) + " has the wrong type");
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string name(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) {
        throw ValidationError("config: unknown key \"" + name(it.key().c_str()) + "\"");
      }
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

BoxGeometry parse_box(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) {
    throw ValidationError("config: " + where + " must be [x1, y1, x2, y2]");
  }
  try {
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  } catch (const json::exception&) {
    throw ValidationError("config: " + where + " must hold numbers");
  }
}

void read_pipeline(const json& j, PipelineConfig& p) {
  Section s(j, "pipeline");
  s.get("temporal_range", p.temporal_range);
  s.get("top_k", p.top_k);
  s.get("r_percent", p.r_percent);
  s.get("num_refs", p.num_refs);
  s.get("num_classes", p.num_classes);
  s.get("nms_threshold", p.nms_threshold);
  s.get("score_threshold", p.score_threshold);
  s.finish();
}

void read_model(const json& j, ModelConfig& m) {
  Section s(j, "model");
  std::string kind = to_string(m.kind);
  s.get("kind", kind);
  m.kind = parse_model_kind(kind);
  std::string file = m.params_file.string();
  s.get("params_file", file);
  m.params_file = file;
  s.get("d_model", m.dims.d_model);
  s.get("d_k", m.dims.d_k);
  s.get("d_rel", m.dims.d_rel);
  s.get("d_geo", m.dims.d_geo);
  s.get("heads", m.dims.heads);
  s.get("num_basic", m.num_basic);
  s.get("similarity_scale", m.similarity_scale);
  s.get("transform_noise", m.transform_noise);
  s.finish();
}

void read_scenario(const json& j, ScenarioSpec& spec) {
  Section s(j, "scenario");
  s.get("num_frames", spec.num_frames);
  s.get("num_classes", spec.num_classes);
  s.get("image_width", spec.image_width);
  s.get("image_height", spec.image_height);
  s.get("d_model", spec.d_model);
  s.get("sigma_ref", spec.sigma_ref);
  s.get("sigma_sup", spec.sigma_sup);
  s.get("jitter_per_object", spec.jitter_per_object);
  s.get("jitter_fraction", spec.jitter_fraction);
  s.get("distractors_per_frame", spec.distractors_per_frame);
  s.get("separation", spec.separation);
  if (const json* objects = s.sub("objects")) {
    if (!objects->is_array()) throw ValidationError("config: scenario.objects must be an array");
    spec.objects.clear();
    for (std::size_t k = 0; k < objects->size(); ++k) {
      const std::string where = "scenario.objects[" + std::to_string(k) + "]";
      Section o((*objects)[k], where);
      ObjectMotion motion;
      o.get("class", motion.class_id);
      const json* box = o.sub("box");
      if (!box) throw ValidationError("config: " + where + ".box is required");
      motion.start = parse_box(*box, where + ".box");
      std::vector<double> velocity{0.0, 0.0};
      o.get("velocity", velocity);
      if (velocity.size() != 2) throw ValidationError("config: " + where + ".velocity must be [vx, vy]");
      motion.vx = velocity[0];
      motion.vy = velocity[1];
      o.finish();
      spec.objects.push_back(motion);
    }
  }
  s.finish();
}

void read_linking(const json& j, LinkingConfig& l) {
  Section s(j, "linking");
  s.get("enabled", l.enabled);
  s.get("relation_free", l.relation_free);
  s.get("max_tubes", l.tubes.max_tubes);
  s.get("min_path_score", l.tubes.min_path_score);
  s.finish();
}

void read_paths(const json& j, PathsConfig& p) {
  Section s(j, "paths");
  s.get("proposals", p.proposals);
  s.get("ground_truth", p.ground_truth);
  s.get("detections", p.detections);
  s.get("weights", p.weights);
  s.get("tubes", p.tubes);
  s.get("rescored", p.rescored);
  s.get("params", p.params);
  s.get("eval", p.eval);
  s.finish();
}

void read_gradcheck(const json& j, GradcheckConfig& g) {
  Section s(j, "gradcheck");
  s.get("d_model", g.options.dims.d_model);
  s.get("d_k", g.options.dims.d_k);
  s.get("d_rel", g.options.dims.d_rel);
  s.get("d_geo", g.options.dims.d_geo);
  s.get("heads", g.options.dims.heads);
  s.get("num_refs", g.options.num_refs);
  s.get("pool_size", g.options.pool_size);
  s.get("step", g.options.step);
  s.get("num_seeds", g.num_seeds);
  s.get("tolerance", g.tolerance);
  s.finish();
}

json dims_json(const RelationDims& d) {
  return {{"d_model", d.d_model}, {"d_k", d.d_k}, {"d_rel", d.d_rel}, {"d_geo", d.d_geo},
          {"heads", d.heads}};
}

}  // namespace

std::string to_string(DistillMode mode) {
  return mode == DistillMode::full ? "full" : "basic_only";
}

DistillMode parse_mode(const std::string& text) {
  if (text == "full") return DistillMode::full;
  if (text == "basic_only") return DistillMode::basic_only;
  throw ValidationError("mode must be \"full\" or \"basic_only\", got \"" + text + "\"");
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::random: return "random";
    case ModelKind::oracle: return "oracle";
    case ModelKind::averaging: return "averaging";
    case ModelKind::file: return "file";
  }
  return "random";
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "random") return ModelKind::random;
  if (text == "oracle") return ModelKind::oracle;
  if (text == "averaging") return ModelKind::averaging;
  if (text == "file") return ModelKind::file;
  throw ValidationError("model.kind must be random, oracle, averaging or file, got \"" + text +
                        "\"");
}

void RunConfig::validate() const {
  pipeline.validate();
  model.dims.validate();
  if (model.num_basic < 1) throw ValidationError("config: model.num_basic must be at least 1");
  if (model.kind == ModelKind::file && model.params_file.empty()) {
    throw ValidationError("config: model.kind \"file\" requires model.params_file");
  }
  if (model.kind == ModelKind::oracle || model.kind == ModelKind::averaging) {
    if (model.dims.d_model != scenario.d_model) {
      throw ValidationError("config: model.d_model must equal scenario.d_model for the " +
                            to_string(model.kind) + " model");
    }
    if (pipeline.num_classes != scenario.num_classes) {
      throw ValidationError("config: pipeline.num_classes must equal scenario.num_classes for the " +
                            to_string(model.kind) + " model");
    }
  }
  if (!(model.similarity_scale > 0.0)) {
    throw ValidationError("config: model.similarity_scale must be positive");
  }
  if (!(iou_thresh > 0.0 && iou_thresh <= 1.0)) {
    throw ValidationError("config: iou_thresh must lie in (0, 1]");
  }
  gradcheck.options.dims.validate();
  if (gradcheck.num_seeds < 1) throw ValidationError("config: gradcheck.num_seeds must be at least 1");
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  Section s(j, "");
  std::string mode = to_string(c.pipeline.mode);
  s.get("mode", mode);
  c.pipeline.mode = parse_mode(mode);
  s.get("seed", c.seed);
  s.get("iou_thresh", c.iou_thresh);
  std::string out_dir = c.out_dir.string();
  s.get("out_dir", out_dir);
  c.out_dir = out_dir;
  if (const json* p = s.sub("pipeline")) read_pipeline(*p, c.pipeline);
  if (const json* m = s.sub("model")) read_model(*m, c.model);
  if (const json* sc = s.sub("scenario")) read_scenario(*sc, c.scenario);
  if (const json* l = s.sub("linking")) read_linking(*l, c.linking);
  if (const json* p = s.sub("paths")) read_paths(*p, c.paths);
  if (const json* g = s.sub("gradcheck")) read_gradcheck(*g, c.gradcheck);
  s.sub("sources");  // echoed provenance; accepted and ignored on reload
  s.finish();
  c.scenario.seed = c.seed;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  json j;
  try {
    j = json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed config (" + e.what() + ")");
  }
  try {
    RunConfig c = from_json(j);
    if (c.out_dir.is_relative() && j.contains("out_dir")) {
      c.out_dir = path.parent_path() / c.out_dir;
    }
    if (c.model.kind == ModelKind::file && c.model.params_file.is_relative()) {
      c.model.params_file = path.parent_path() / c.model.params_file;
    }
    return c;
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

json RunConfig::to_json() const {
  json objects = json::array();
  for (const auto& o : scenario.objects) {
    objects.push_back({{"class", o.class_id},
                       {"box", {o.start.x1(), o.start.y1(), o.start.x2(), o.start.y2()}},
                       {"velocity", {o.vx, o.vy}}});
  }
  json model_json = dims_json(model.dims);
  model_json["kind"] = to_string(model.kind);
  model_json["num_basic"] = model.num_basic;
  model_json["similarity_scale"] = model.similarity_scale;
  model_json["transform_noise"] = model.transform_noise;
  if (model.kind == ModelKind::file) model_json["params_file"] = model.params_file.filename().string();

  json grad_json = dims_json(gradcheck.options.dims);
  grad_json["num_refs"] = gradcheck.options.num_refs;
  grad_json["pool_size"] = gradcheck.options.pool_size;
  grad_json["step"] = gradcheck.options.step;
  grad_json["num_seeds"] = gradcheck.num_seeds;
  grad_json["tolerance"] = gradcheck.tolerance;

  return {
      {"mode", to_string(pipeline.mode)},
      {"seed", seed},
      {"iou_thresh", iou_thresh},
      {"pipeline",
       {{"temporal_range", pipeline.temporal_range},
        {"top_k", pipeline.top_k},
        {"r_percent", pipeline.r_percent},
        {"num_refs", pipeline.num_refs},
        {"num_classes", pipeline.num_classes},
        {"nms_threshold", pipeline.nms_threshold},
        {"score_threshold", pipeline.score_threshold}}},
      {"model", model_json},
      {"scenario",
       {{"num_frames", scenario.num_frames},
        {"num_classes", scenario.num_classes},
        {"image_width", scenario.image_width},
        {"image_height", scenario.image_height},
        {"d_model", scenario.d_model},
        {"sigma_ref", scenario.sigma_ref},
        {"sigma_sup", scenario.sigma_sup},
        {"jitter_per_object", scenario.jitter_per_object},
        {"jitter_fraction", scenario.jitter_fraction},
        {"distractors_per_frame", scenario.distractors_per_frame},
        {"separation", scenario.separation},
        {"objects", objects}}},
      {"linking",
       {{"enabled", linking.enabled},
        {"relation_free", linking.relation_free},
        {"max_tubes", linking.tubes.max_tubes},
        {"min_path_score", linking.tubes.min_path_score}}},
      {"paths",
       {{"proposals", paths.proposals},
        {"ground_truth", paths.ground_truth},
        {"detections", paths.detections},
        {"weights", paths.weights},
        {"tubes", paths.tubes},
        {"rescored", paths.rescored},
        {"params", paths.params},
        {"eval", paths.eval}}},
      {"gradcheck", grad_json},
      {"sources",
       {{"pipeline.temporal_range", "published configuration: temporal spanning range T = 18"},
        {"pipeline.top_k", "published configuration: top K = 75 proposals by objectness per support frame"},
        {"pipeline.r_percent", "published configuration: advanced stage keeps r = 20% of the supportive pool"},
        {"pipeline.num_refs", "published configuration: N = 300 proposals per reference frame"},
        {"model.heads", "published configuration: M = 16 relation heads"},
        {"model.d_rel", "published configuration: 64-d relation feature per head"},
        {"model.num_basic", "published configuration: N_b = 2 relation modules in the basic stage"},
        {"pipeline.nms_threshold", "common practice: NMS at IoU 0.5"},
        {"pipeline.score_threshold", "common practice: keep scores above 0.05"}}},
  };
}

}  // namespace rdn
