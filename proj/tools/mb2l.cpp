// mb2l: data generation, training, evaluation, ablation grids and figures.
//
// Exit codes: 0 success, 1 I/O or other runtime failure, 2 configuration or
// usage error, 3 numerical failure during training.

#include "mb2l/checkpoint.hpp"
#include "mb2l/datasets.hpp"
#include "mb2l/evaluator.hpp"
#include "mb2l/image_io.hpp"
#include "mb2l/run_config.hpp"
#include "mb2l/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;
using namespace mb2l;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(9);
  return out;
}

// ---- generate-data -----------------------------------------------------------

struct GenerateArgs {
  SyntheticConfig cfg;
  std::string out = "data/synthetic";
};

int cmd_generate(const GenerateArgs& args) {
  const fs::path root = resolve_output(args.out);
  const Dataset ds = generate_synthetic(args.cfg);
  write_things_format(root, ds);
  std::cout << "wrote " << root.string() << ": " << ds.split.train_concepts.size() << " train concepts ("
            << ds.train.size() << " samples), " << ds.split.test_concepts.size() << " test concepts ("
            << ds.test.size() << " samples), " << ds.channel_names.size() << " channels x " << args.cfg.samples
            << " samples, " << args.cfg.subjects << " subject(s)\n";
  return 0;
}

// ---- train ---------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string out;
  bool quiet = false;
};

int cmd_train(const TrainArgs& args) {
  RunConfig rc = load_run_config(args.config);
  if (!args.out.empty()) rc.output = args.out;
  const fs::path out = resolve_output(rc.output);
  const Dataset data = load_dataset(rc.dataset);
  const ModelConfig mc = model_config_for(data, rc.model);
  const auto [fit, val] = hold_out_last_image(data.train);
  std::cout << "training on " << fit.size() << " samples (" << val.size() << " held out for validation), preset "
            << rc.train.preset << ", alpha_high " << rc.train.alpha_high << "\n";
  const TrainResult result = train(mc, fit, val, rc.train, args.quiet ? nullptr : &std::cout);

  save_checkpoint(out / "checkpoint.json", result.model, rc.train);
  write_history_csv(out / "history.csv", result.history);
  RunConfig resolved = rc;
  resolved.model = result.model.cfg;
  open_out(out / "config.json") << run_config_to_json(resolved).dump(2) << "\n";
  std::cout << "wrote " << (out / "checkpoint.json").string() << " and " << (out / "history.csv").string() << "\n";
  return 0;
}

// ---- eval ----------------------------------------------------------------------

struct DataArgs {
  std::string data;
  std::string config;
  int subject = -1;
};

Dataset load_eval_data(const DataArgs& args) {
  if (!args.data.empty() && !args.config.empty()) throw ConfigError("--data", "give either --data or --config, not both");
  if (!args.config.empty()) return load_dataset(load_run_config(args.config).dataset);
  if (args.data.empty()) throw ConfigError("--data", "a dataset directory (or --config) is required");
  if (!fs::is_directory(args.data)) throw ConfigError("--data", "directory '" + args.data + "' does not exist");
  LoadOptions opts;
  opts.subject = args.subject;
  return load_things_format(args.data, opts);
}

struct EvalArgs {
  std::string checkpoint;
  DataArgs data;
  std::string level = "all";
  std::string split = "test";
  std::string out = "eval";
  int scale = 4;
};

void write_similarity_outputs(const fs::path& out, const SimilarityMatrix<float>& sim, int scale) {
  const std::string stem = "similarity_" + to_string(sim.level);
  write_similarity_csv(out / (stem + ".csv"), sim);
  write_png(out / (stem + ".png"), heatmap_image(sim.scores, scale));
}

int cmd_eval(const EvalArgs& args) {
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  const Dataset data = load_eval_data(args.data);
  if (args.split != "test" && args.split != "train") throw ConfigError("--split", "expected test or train");
  const auto& samples = args.split == "test" ? data.test : data.train;
  if (samples.empty()) throw ConfigError("--split", "the " + args.split + " split is empty");
  const fs::path out = resolve_output(args.out);

  const auto& model = ck.model;
  const PreparedSet<float> prepared = prepare(model, samples);
  const auto emb = embed(model, prepared);
  std::vector<Level> levels;
  if (args.level == "all") {
    levels = emb.has_low ? std::vector<Level>{Level::low, Level::high, Level::fused} : std::vector<Level>{Level::high};
  } else {
    levels = {level_from_string(args.level)};
    if (levels.front() == Level::low && !emb.has_low) {
      throw ConfigError("--level", "this checkpoint has no low-level heads (trained without multi-level alignment)");
    }
  }

  auto metrics_csv = open_out(out / "metrics.csv");
  metrics_csv << "level,top1,top5,n\n";
  SimilarityMatrix<float> primary;
  for (Level level : levels) {
    const auto sim = retrieval_similarity(emb, level, model.cfg.alpha_low, model.cfg.alpha_high, prepared.concept_ids);
    const auto m = retrieval_metrics(sim);
    metrics_csv << to_string(level) << "," << m.top1 << "," << m.top5 << "," << m.count << "\n";
    std::cout << std::left << std::setw(6) << to_string(level) << std::right << " top1 " << std::fixed
              << std::setprecision(4) << m.top1 << "  top5 " << m.top5 << std::defaultfloat << "  (N=" << m.count
              << ")\n";
    write_similarity_outputs(out, sim, args.scale);
    primary = sim;
  }

  // Retrieval panels for misses of the last evaluated level: the query's own
  // image first, then the top-5 retrieved images in rank order.
  const Index n = primary.scores.rows();
  int misses = 0;
  for (Index i = 0; i < n; ++i) {
    if (diagonal_rank(primary.scores, i) == 0) continue;
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return primary.scores(i, a) > primary.scores(i, b); });
    std::vector<ImageGrid<float>> panel{samples[static_cast<std::size_t>(i)].image};
    for (Index r = 0; r < std::min<Index>(5, n); ++r) panel.push_back(samples[static_cast<std::size_t>(order[r])].image);
    write_png(out / "misses" / ("query_" + std::to_string(i) + "_concept_" +
                                std::to_string(prepared.concept_ids[static_cast<std::size_t>(i)]) + ".png"),
              contact_sheet(panel));
    ++misses;
  }
  std::cout << "wrote metrics, similarity matrices and " << misses << " miss panel(s) to " << out.string() << "\n";
  return 0;
}

// ---- ablate ----------------------------------------------------------------------

struct AblateArgs {
  std::string config;
  std::string grid = "core";
  std::string specs;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int jobs = 1;
  int epochs = 0;
  std::string out;
};

// Accepts a file path or an inline JSON array.
std::vector<AblationSpec> load_specs(const std::string& arg) {
  std::string text = arg;
  if (arg.find_first_not_of(" \t") == std::string::npos || arg[arg.find_first_not_of(" \t")] != '[') {
    std::ifstream in(arg);
    if (!in) throw ConfigError("--specs", "cannot open " + arg);
    text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("--specs", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_array()) throw ConfigError("--specs", "expected a JSON array of specs");
  std::vector<AblationSpec> specs;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path_prefix = "specs[" + std::to_string(i) + "]";
    const auto& item = j[i];
    if (!item.is_object()) throw ConfigError(path_prefix, "expected an object");
    AblationSpec spec;
    spec.name = "spec" + std::to_string(i);
    for (const auto& field : item.items()) {
      const std::string key = field.key();
      const auto& v = field.value();
      const std::string fp = path_prefix + "." + key;
      try {
        if (key == "name") spec.name = v.get<std::string>();
        else if (key == "abvp") spec.abvp = v.get<bool>();
        else if (key == "bvfe") spec.bvfe = v.get<bool>();
        else if (key == "mbcl") spec.mbcl = v.get<bool>();
        else if (key == "degradation") spec.degradation = degradation_from_string(v.get<std::string>());
        else if (key == "prior") spec.prior = prior_kind_from_string(v.get<std::string>());
        else throw ConfigError(fp, "unknown key");
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fp, e.what());
      } catch (const ConfigError&) {
        throw;
      } catch (const InvalidParameter& e) {
        throw ConfigError(fp, e.what());
      }
    }
    try {
      validate_spec(spec);
    } catch (const InvalidParameter& e) {
      throw ConfigError(path_prefix, e.what());
    }
    specs.push_back(spec);
  }
  return specs;
}

std::vector<AblationSpec> named_grid(const std::string& name) {
  if (name == "core") return core_ablation_grid();
  std::vector<AblationSpec> specs;
  if (name == "priors") {
    for (auto kind : {PriorKind::logistic, PriorKind::exponential, PriorKind::quadratic, PriorKind::free}) {
      specs.push_back({"prior_" + to_string(kind), true, true, true, Degradation::blur, kind});
    }
    return specs;
  }
  if (name == "degradations") {
    for (auto kind : {Degradation::blur, Degradation::color_jitter, Degradation::gaussian_noise,
                      Degradation::low_resolution, Degradation::mosaic, Degradation::gray}) {
      specs.push_back({to_string(kind) + "_abvp", true, true, true, kind, PriorKind::logistic});
      specs.push_back({to_string(kind) + "_global", false, true, true, kind, PriorKind::logistic});
    }
    specs.push_back({"original", false, true, true, Degradation::none, PriorKind::logistic});
    return specs;
  }
  throw ConfigError("--grid", "unknown grid '" + name + "' (expected core, priors or degradations)");
}

int cmd_ablate(const AblateArgs& args) {
  const RunConfig rc = load_run_config(args.config);
  const std::vector<AblationSpec> specs = args.specs.empty() ? named_grid(args.grid) : load_specs(args.specs);
  const fs::path out = resolve_output(args.out.empty() ? rc.output / "ablation" : fs::path(args.out));
  TrainConfig tc = rc.train;
  if (args.epochs > 0) tc.epochs = args.epochs;

  std::vector<AblationRow> rows;
  if (!specs.empty() && !args.seeds.empty()) {
    const Dataset data = load_dataset(rc.dataset);
    rows = run_ablation_grid(specs, model_config_for(data, rc.model), tc, args.seeds, data, args.jobs, &std::cout);
  }
  const auto summary = summarize(rows);
  write_ablation_csv(out / "ablation.csv", rows);
  write_summary_csv(out / "summary.csv", summary);
  for (const auto& s : summary) {
    std::cout << std::left << std::setw(12) << s.spec.name << std::right << std::fixed << std::setprecision(4)
              << " top1 " << s.top1_mean << " +/- " << s.top1_std << "  top5 " << s.top5_mean << " +/- " << s.top5_std
              << std::defaultfloat << "\n";
  }
  auto find = [&](const std::string& name) {
    return std::find_if(summary.begin(), summary.end(), [&](const AblationSummary& s) { return s.spec.name == name; });
  };
  if (auto full = find("full"), no_abvp = find("bvfe+mbcl"); full != summary.end() && no_abvp != summary.end()) {
    std::cout << "full >= no-ABVP on mean top-1: " << (full->top1_mean >= no_abvp->top1_mean ? "yes" : "no") << "\n";
  }
  std::cout << "wrote " << rows.size() << " result row(s) to " << (out / "ablation.csv").string() << "\n";
  return 0;
}

// ---- visualize -------------------------------------------------------------------

struct VisualizeArgs {
  std::string checkpoint;
  std::string what;
  DataArgs data;
  std::string out = "figures";
  int scale = 4;
  int radii = 256;
};

// Radial profile of the gate: closed form for parametric priors, a binned
// average of the grid for the free prior (bins without pixels are skipped).
std::vector<std::pair<double, double>> radial_profile(const FoveaPrior<float>& prior, const RadialMap<float>& radial,
                                                      const Matrix<float>& weights, int count) {
  std::vector<std::pair<double, double>> rows;
  if (prior.is_parametric()) {
    for (int i = 0; i < count; ++i) {
      const double r = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
      rows.emplace_back(r, gating_weight(prior, static_cast<float>(r)));
    }
    return rows;
  }
  std::vector<double> sum(static_cast<std::size_t>(count), 0.0);
  std::vector<int> hits(static_cast<std::size_t>(count), 0);
  for (Index k = 0; k < radial.values.size(); ++k) {
    const auto bin = std::min<std::size_t>(static_cast<std::size_t>(count - 1),
                                           static_cast<std::size_t>(std::lround(radial.values(k) * (count - 1))));
    sum[bin] += weights(k);
    ++hits[bin];
  }
  for (int i = 0; i < count; ++i) {
    if (hits[static_cast<std::size_t>(i)] == 0) continue;
    rows.emplace_back(count == 1 ? 0.0 : static_cast<double>(i) / (count - 1),
                      sum[static_cast<std::size_t>(i)] / hits[static_cast<std::size_t>(i)]);
  }
  return rows;
}

int cmd_visualize(const VisualizeArgs& args) {
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  const fs::path out = resolve_output(args.out);
  const auto& model = ck.model;
  if (args.what == "blur") {
    const auto radial = radial_map<float>(model.cfg.image_size, model.cfg.image_size);
    const Matrix<float> weights = gate_map(model.params.gate, radial);
    ImageGrid<float> img(weights.rows() * args.scale, weights.cols() * args.scale, 1);
    for (Index r = 0; r < img.height; ++r)
      for (Index c = 0; c < img.width; ++c) img(r, c, 0) = weights(r / args.scale, c / args.scale);
    write_png(out / "gate.png", img);
    auto grid = open_out(out / "gate_grid.csv");
    for (Index r = 0; r < weights.rows(); ++r) {
      for (Index c = 0; c < weights.cols(); ++c) grid << (c ? "," : "") << weights(r, c);
      grid << "\n";
    }
    auto curve = open_out(out / "gate_curve.csv");
    curve << "r,w\n";
    for (const auto& [r, w] : radial_profile(model.params.gate, radial, weights, args.radii)) curve << r << "," << w << "\n";
    std::cout << "wrote gate.png, gate_grid.csv and gate_curve.csv (" << to_string(model.params.gate.kind)
              << " prior) to " << out.string() << "\n";
    return 0;
  }
  if (args.what == "channels") {
    const auto& prior = model.params.eeg.prior;
    const Vector<float> wl = prior.low_weights();
    const Vector<float> wh = prior.high_weights();
    auto csv = open_out(out / "channels.csv");
    csv << "channel_name,w_low,w_high\n";
    for (Index c = 0; c < wl.size(); ++c) {
      csv << model.cfg.channel_names[static_cast<std::size_t>(c)] << "," << wl(c) << "," << wh(c) << "\n";
    }
    Matrix<float> heat(2, wl.size());
    heat.row(0) = wl.transpose();
    heat.row(1) = wh.transpose();
    write_png(out / "channels.png", heatmap_image(heat, args.scale));
    std::cout << "wrote channels.csv and channels.png to " << out.string() << "\n";
    return 0;
  }
  if (args.what == "similarity") {
    const Dataset data = load_eval_data(args.data);
    const PreparedSet<float> prepared = prepare(model, data.test);
    const auto emb = embed(model, prepared);
    const auto sim =
        retrieval_similarity(emb, Level::fused, model.cfg.alpha_low, model.cfg.alpha_high, prepared.concept_ids);
    write_similarity_outputs(out, sim, args.scale);
    std::cout << "wrote similarity_fused.csv and similarity_fused.png to " << out.string() << "\n";
    return 0;
  }
  throw ConfigError("--what", "unknown figure '" + args.what + "' (expected blur, channels or similarity)");
}

void add_data_options(CLI::App* cmd, DataArgs& data) {
  cmd->add_option("--data", data.data, "Dataset directory (on-disk layout)");
  cmd->add_option("--config", data.config, "Run config whose dataset section to use instead of --data");
  cmd->add_option("--subject", data.subject, "Subject id (default: first found)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG-image alignment toolkit"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate-data", "Write a synthetic paired dataset to disk");
  g->add_option("--out", gen.out, "Output directory")->capture_default_str();
  g->add_option("--seed", gen.cfg.seed, "Random seed")->capture_default_str();
  g->add_option("--train-concepts", gen.cfg.train_concepts, "Training concepts")->capture_default_str();
  g->add_option("--test-concepts", gen.cfg.test_concepts, "Held-out test concepts")->capture_default_str();
  g->add_option("--channels", gen.cfg.channels, "EEG channels")->capture_default_str();
  g->add_option("--samples", gen.cfg.samples, "Samples per epoch")->capture_default_str();
  g->add_option("--noise", gen.cfg.noise_sigma, "Per-trial noise amplitude")->capture_default_str();
  g->add_option("--images-per-concept", gen.cfg.images_per_concept, "Images per training concept")->capture_default_str();
  g->add_option("--train-trials", gen.cfg.train_trials, "Repetitions per training image")->capture_default_str();
  g->add_option("--test-trials", gen.cfg.test_trials, "Repetitions per test image")->capture_default_str();
  g->add_option("--image-size", gen.cfg.image_size, "Image side in pixels")->capture_default_str();
  g->add_option("--subjects", gen.cfg.subjects, "Simulated subjects")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model from a run config");
  t->add_option("config", tr.config, "Run config (JSON)")->required();
  t->add_option("--out", tr.out, "Override the config's output directory");
  t->add_flag("--quiet", tr.quiet, "Suppress per-epoch log lines");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Zero-shot retrieval metrics for a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  add_data_options(e, ev.data);
  e->add_option("--level", ev.level, "low, high, fused or all")->capture_default_str();
  e->add_option("--split", ev.split, "test or train")->capture_default_str();
  e->add_option("--out", ev.out, "Output directory")->capture_default_str();
  e->add_option("--scale", ev.scale, "Heatmap pixels per matrix cell")->capture_default_str()->check(CLI::PositiveNumber);

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "Run an ablation grid over seeds");
  a->add_option("config", ab.config, "Base run config (JSON)")->required();
  a->add_option("--grid", ab.grid, "core, priors or degradations")->capture_default_str();
  a->add_option("--specs", ab.specs, "JSON array of specs, inline or a file path (overrides --grid)");
  a->add_option("--seeds", ab.seeds, "Seeds")->delimiter(',')->capture_default_str();
  a->add_option("--jobs", ab.jobs, "Parallel workers")->capture_default_str()->check(CLI::PositiveNumber);
  a->add_option("--epochs", ab.epochs, "Override the epoch budget");
  a->add_option("--out", ab.out, "Output directory (default <config output>/ablation)");

  VisualizeArgs vis;
  auto* v = app.add_subcommand("visualize", "Emit figure data for a checkpoint");
  v->add_option("--checkpoint", vis.checkpoint, "Checkpoint file")->required();
  v->add_option("--what", vis.what, "blur, channels or similarity")->required();
  add_data_options(v, vis.data);
  v->add_option("--out", vis.out, "Output directory")->capture_default_str();
  v->add_option("--scale", vis.scale, "Pixels per cell")->capture_default_str()->check(CLI::PositiveNumber);
  v->add_option("--radii", vis.radii, "Sampled radii in the w(r) curve")->capture_default_str()->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*a) return cmd_ablate(ab);
    if (*v) return cmd_visualize(vis);
  } catch (const NumericalFailure& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return kExitNumerical;
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const InvalidParameter& err) {
    std::cerr << "invalid parameter: " << err.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& err) {
    std::cerr << "parse error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
