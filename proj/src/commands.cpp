#include "rdn/commands.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <tuple>

#include "rdn/error.hpp"
#include "rdn/formats.hpp"
#include "rdn/param_io.hpp"

namespace rdn {

using nlohmann::json;

namespace {

enum SeedStream : std::uint64_t { kBasicSeed = 1, kAdvancedSeed = 2, kHeadSeed = 3 };

json header(const RunConfig& config, const char* kind) {
  return {{"kind", kind}, {"config", config.to_json()}};
}

std::size_t count(const std::vector<std::vector<Detection>>& frames) {
  std::size_t n = 0;
  for (const auto& f : frames) n += f.size();
  return n;
}

}  // namespace

ModelParams build_model(const RunConfig& config) {
  const ModelConfig& m = config.model;
  const double r = config.pipeline.r_percent;
  ModelParams model;
  switch (m.kind) {
    case ModelKind::random:
      model.basic = init_basic_stage(derive_seed(config.seed, kBasicSeed), m.dims, m.num_basic,
                                     m.transform_noise);
      model.advanced = init_advanced_stage(derive_seed(config.seed, kAdvancedSeed), m.dims, r);
      model.head = init_head(derive_seed(config.seed, kHeadSeed), m.dims.d_model,
                             config.pipeline.num_classes);
      break;
    case ModelKind::oracle: {
      DistillParams d = zero_value_params(config.seed, m.dims, m.num_basic, r);
      model.basic = std::move(d.basic);
      model.advanced = std::move(d.advanced);
      model.head = oracle_head(config.scenario);
      break;
    }
    case ModelKind::averaging: {
      DistillParams d = averaging_attention_params(m.dims, m.num_basic, r, m.similarity_scale);
      model.basic = std::move(d.basic);
      model.advanced = std::move(d.advanced);
      model.head = oracle_head(config.scenario);
      break;
    }
    case ModelKind::file:
      model = load_model(m.params_file);
      model.advanced.r_percent = r;
      break;
  }
  if (model.head.num_classes != config.pipeline.num_classes) {
    throw ValidationError("model head has " + std::to_string(model.head.num_classes) +
                          " classes but pipeline.num_classes is " +
                          std::to_string(config.pipeline.num_classes));
  }
  model.validate();
  return model;
}

void cmd_synth(const RunConfig& config, std::ostream& log) {
  const Scenario scenario = generate_scenario(config.scenario);
  write_proposals(config.resolve(config.paths.proposals), scenario.frames,
                  header(config, "proposals"));
  write_ground_truth(config.resolve(config.paths.ground_truth), scenario.tracks,
                     header(config, "ground_truth"));
  std::size_t n = 0;
  for (const auto& f : scenario.frames) n += f.size();
  log << "synth: " << scenario.frames.size() << " frames, " << n << " proposals, "
      << scenario.tracks.size() << " tracks\n";
}

void cmd_infer(const RunConfig& config, std::ostream& log) {
  const ModelParams model = build_model(config);
  PipelineConfig pipeline = config.pipeline;
  const bool retain = config.linking.enabled && !config.linking.relation_free;
  pipeline.retain_weights = retain;

  const auto frames = read_proposals(config.resolve(config.paths.proposals), model.head.d_model);

  VideoResult result;
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  if (!frames.empty()) {
    auto last = start;
    result = run_video(frames, model, pipeline, [&](std::int64_t t, const FrameBuffer& buffer) {
      const auto now = Clock::now();
      const double ms = std::chrono::duration<double, std::milli>(now - last).count();
      last = now;
      log << "frame " << t << ": " << std::fixed << std::setprecision(3) << ms << " ms, buffer "
          << buffer.size() << "\n";
    });
  }
  const double total =
      std::chrono::duration<double, std::milli>(Clock::now() - start).count();

  write_detections(config.resolve(config.paths.detections), result.detections,
                   header(config, "detections"));
  if (retain) {
    write_weights(config.resolve(config.paths.weights), result.weights, header(config, "weights"));
  }
  save_model(config.resolve(config.paths.params), model);

  log << std::defaultfloat << "infer: mode " << to_string(pipeline.mode) << ", "
      << frames.size() << " frames, " << count(result.detections) << " detections, "
      << result.weights.size() << " retained weights, " << std::fixed << std::setprecision(3)
      << total << " ms total\n"
      << std::defaultfloat;
}

void cmd_link(const RunConfig& config, std::ostream& log) {
  const auto detections = read_detections(config.resolve(config.paths.detections));
  const std::size_t num_classes = config.pipeline.num_classes;
  for (const auto& frame : detections) {
    for (const auto& d : frame) {
      if (d.class_id < 1 || static_cast<std::size_t>(d.class_id) > num_classes) {
        throw ValidationError("detection class " + std::to_string(d.class_id) +
                              " outside 1.." + std::to_string(num_classes));
      }
    }
  }

  std::optional<RelationWeightTable> table;
  if (!config.linking.relation_free) {
    const auto path = config.resolve(config.paths.weights);
    if (!std::filesystem::exists(path)) {
      throw IoError("relation weight file " + path.string() +
                    " not found; rerun infer with linking enabled or pass --relation-free");
    }
    table = read_weights(path);
  }

  std::vector<Tube> tubes;
  std::map<std::tuple<std::int64_t, int, ProposalId>, double> rescored;
  for (std::size_t c = 1; c <= num_classes; ++c) {
    for (Tube& tube : extract_tubes(detections, static_cast<int>(c), table ? &*table : nullptr,
                                    config.linking.tubes)) {
      Tube done = rescore_tube(std::move(tube));
      for (const auto& d : done.detections) {
        rescored[{d.frame_index, d.class_id, d.source_proposal_id}] = d.score;
      }
      tubes.push_back(std::move(done));
    }
  }

  auto updated = detections;
  for (auto& frame : updated) {
    for (auto& d : frame) {
      auto it = rescored.find({d.frame_index, d.class_id, d.source_proposal_id});
      if (it != rescored.end()) d.score = it->second;
    }
  }

  json tube_header = header(config, "tubes");
  tube_header["note"] = "scores_after may exceed 1 (additive rescoring, capped at 2)";
  write_tubes(config.resolve(config.paths.tubes), tubes, tube_header);
  write_detections(config.resolve(config.paths.rescored), updated,
                   header(config, "rescored_detections"));
  log << "link: " << tubes.size() << " tubes, " << rescored.size() << " detections rescored"
      << (config.linking.relation_free ? " (relation-free)" : "") << "\n";
}

EvalReport cmd_eval(const RunConfig& config, std::ostream& log,
                    const std::filesystem::path& detections) {
  const auto path = detections.empty() ? config.resolve(config.paths.detections) : detections;
  std::vector<Detection> flat;
  for (const auto& frame : read_detections(path)) flat.insert(flat.end(), frame.begin(), frame.end());
  const auto truth = read_ground_truth(config.resolve(config.paths.ground_truth));
  const EvalReport report =
      evaluate_detections(flat, truth, config.pipeline.num_classes, config.iou_thresh);

  json per_class = json::array();
  for (const auto& c : report.per_class) {
    log << "class " << c.class_id << ": AP " << std::setprecision(6) << c.ap << " ("
        << c.num_detections << " detections, " << c.num_ground_truth << " ground truth)\n";
    per_class.push_back({{"class", c.class_id},
                         {"ap", c.ap},
                         {"num_detections", c.num_detections},
                         {"num_ground_truth", c.num_ground_truth}});
  }
  log << "mAP@" << config.iou_thresh << ": " << report.mean_ap << "\n";

  const auto out_path = config.resolve(config.paths.eval);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + out_path.string());
  out << json{{"iou_thresh", config.iou_thresh}, {"per_class", per_class},
              {"mean_ap", report.mean_ap}}
             .dump(2)
      << "\n";
  if (!out) throw IoError("failed writing " + out_path.string());
  return report;
}

bool cmd_gradcheck(const RunConfig& config, std::ostream& log) {
  const auto& g = config.gradcheck;
  g.options.dims.validate();
  double worst = 0.0;
  for (std::size_t k = 0; k < g.num_seeds; ++k) {
    const GradcheckReport report = gradient_check(config.seed + k, g.options);
    log << "seed " << report.seed << ":";
    for (const auto& t : report.tensors) {
      log << " " << t.name << "=" << std::scientific << std::setprecision(3) << t.relative_error;
    }
    log << std::defaultfloat << "\n";
    worst = std::max(worst, report.max_relative_error);
  }
  const bool ok = worst < g.tolerance;
  log << "max relative error " << std::scientific << std::setprecision(3) << worst
      << std::defaultfloat << (ok ? " (ok)" : " (FAILED)") << ", tolerance " << g.tolerance
      << "\n";
  return ok;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Relation distillation video object detection toolkit", "rdn"};
  app.require_subcommand(1);

  std::string config_path;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool relation_free = false;
  std::optional<double> iou_thresh;
  std::string detections_path;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--mode", mode, "basic_only or full")->check(CLI::IsMember({"basic_only", "full"}));
    sub->add_option("--seed", seed, "Seed for scenario generation and parameter initialization");
    sub->add_option("--out-dir", out_dir, "Directory for all input and output files");
  };
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic scenario");
  CLI::App* infer = app.add_subcommand("infer", "Run streaming detection over a proposal file");
  CLI::App* link = app.add_subcommand("link", "Link detections into tubes and rescore them");
  CLI::App* eval = app.add_subcommand("eval", "Per-class AP and mAP against ground truth");
  CLI::App* grad = app.add_subcommand("gradcheck", "Finite-difference check of the relation module");
  for (CLI::App* sub : {synth, infer, link, eval, grad}) common(sub);
  link->add_flag("--relation-free", relation_free, "Link with every relation weight set to zero");
  infer->add_flag("--relation-free", relation_free, "Skip retaining relation weights");
  eval->add_option("--iou-thresh", iou_thresh, "IoU needed for a true positive");
  eval->add_option("--detections", detections_path, "Detection file (default: paths.detections)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig config = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    if (!mode.empty()) config.pipeline.mode = parse_mode(mode);
    if (seed) {
      config.seed = *seed;
      config.scenario.seed = *seed;
    }
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (relation_free) config.linking.relation_free = true;
    if (iou_thresh) config.iou_thresh = *iou_thresh;
    config.validate();
    std::filesystem::create_directories(config.out_dir);

    if (synth->parsed()) cmd_synth(config, out);
    if (infer->parsed()) cmd_infer(config, out);
    if (link->parsed()) cmd_link(config, out);
    if (eval->parsed()) cmd_eval(config, out, detections_path);
    if (grad->parsed() && !cmd_gradcheck(config, out)) return 1;
    return 0;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace rdn
