#include "latentforge/analysis.hpp"
#include "latentforge/baselines.hpp"
#include "latentforge/data.hpp"
#include "latentforge/landscape.hpp"
#include "latentforge/oracle.hpp"
#include "latentforge/probe.hpp"
#include "latentforge/provenance.hpp"
#include "latentforge/sae.hpp"
#include "latentforge/splits.hpp"
#include "latentforge/steering.hpp"
#include "latentforge/store.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace latentforge;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

json default_config() {
  return {
      {"seed", 0},
      {"landscape",
       {{"length", 48}, {"d_model", 16}, {"n_motifs", 6}, {"epistasis", true}, {"sites_per_motif", 4},
        {"readout_gain", 2.0}, {"token_scale", 1.0}, {"signed_weights", false}}},
      {"dms",
       {{"n_assay_positions", 32}, {"n_records", 1500}, {"max_mutations", 5}, {"single_fraction", 0.35},
        {"noise_sd", 0.0}}},
      {"msa", {{"n_sequences", 1000}, {"drift", 0.2}}},
      {"sae",
       {{"d_sae", 64}, {"k", 4}, {"k_aux", 32}, {"alpha", 1.0 / 32.0}, {"lr", 1e-3}, {"epochs", nullptr},
        {"batch", 256}, {"dead_threshold", 256}}},
      {"probe", {{"feature_kind", "sae_latents"}, {"task", "random"}, {"n", 24}, {"lambda_grid", probe::default_lambda_grid()}}},
      {"extrapolate",
       {{"feature_kinds", {"sae_latents", "layer_embedding", "logits"}},
        {"tasks", {"random", "mutation", "position", "regime", "score"}},
        {"n_values", {8, 24, 96, 384}}}},
      {"steering",
       {{"n_latents", 10}, {"multipliers", steering::default_multipliers()}, {"cosine_threshold", 0.98},
        {"max_mutations", nullptr}, {"budget", 50}, {"probe_n", 24}}},
      {"anneal", {{"steps", 1000}, {"t0", 1.0}, {"feature_kind", "layer_embedding"}}},
      {"oracle", {{"lr", 1e-3}, {"weight_decay", 0.01}, {"max_epochs", 1000}, {"patience", 10}, {"split", 0.8}}},
      {"analysis", {{"fraction", 0.05}, {"bins", 30}, {"clip", 3.0}, {"n_latents", 5}}},
  };
}

// Strict dotted-key access: a missing key is a configuration error that
// names the key.
class Config {
 public:
  explicit Config(json root) : root_(std::move(root)) {}

  const json& node(const std::string& dotted) const {
    const json* cur = &root_;
    std::size_t start = 0;
    while (true) {
      const auto dot = dotted.find('.', start);
      const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!cur->is_object() || !cur->contains(part)) throw ConfigError(fmt::format("missing config key: {}", dotted));
      cur = &(*cur)[part];
      if (dot == std::string::npos) return *cur;
      start = dot + 1;
    }
  }

  template <typename T>
  T get(const std::string& dotted) const {
    try {
      return node(dotted).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("config key {} has the wrong type: {}", dotted, e.what()));
    }
  }

  template <typename T>
  std::optional<T> get_optional(const std::string& dotted) const {
    const json& n = node(dotted);
    if (n.is_null()) return std::nullopt;
    return get<T>(dotted);
  }

  const json& root() const { return root_; }
  std::uint64_t seed() const { return get<std::uint64_t>("seed"); }

 private:
  json root_;
};

struct Context {
  Config config{json::object()};
  fs::path out;
  std::string provenance;

  fs::path path(const std::string& name) const { return out / name; }

  void write_text(const std::string& name, const std::string& body) const {
    std::ofstream f(path(name), std::ios::binary);
    if (!f) throw DataError(fmt::format("cannot write {}", path(name).string()));
    f << body;
  }
  void write_csv(const std::string& name, const std::string& body) const { write_text(name, provenance + body); }
  void write_json(const std::string& name, json body) const {
    body["provenance"] = {{"config_hash", config_hash(config.root())}, {"seed", config.seed()}};
    write_text(name, body.dump(2) + "\n");
  }
  std::string read_text(const std::string& name) const {
    std::ifstream f(path(name), std::ios::binary);
    if (!f) throw DataError(fmt::format("cannot read {} (run the earlier pipeline steps first)", path(name).string()));
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }
};

landscape::LandscapeConfig landscape_config(const Config& c) {
  landscape::LandscapeConfig lc;
  lc.length = c.get<int>("landscape.length");
  lc.d_model = c.get<int>("landscape.d_model");
  lc.n_motifs = c.get<int>("landscape.n_motifs");
  lc.epistasis = c.get<bool>("landscape.epistasis");
  lc.sites_per_motif = c.get<int>("landscape.sites_per_motif");
  lc.readout_gain = c.get<double>("landscape.readout_gain");
  lc.token_scale = c.get<double>("landscape.token_scale");
  lc.signed_weights = c.get<bool>("landscape.signed_weights");
  lc.seed = c.seed();
  return lc;
}

landscape::DmsConfig dms_config(const Config& c) {
  landscape::DmsConfig dc;
  dc.n_assay_positions = c.get<int>("dms.n_assay_positions");
  dc.n_records = c.get<int>("dms.n_records");
  dc.max_mutations = c.get<int>("dms.max_mutations");
  dc.single_fraction = c.get<double>("dms.single_fraction");
  dc.noise_sd = c.get<double>("dms.noise_sd");
  dc.seed = c.seed();
  return dc;
}

// The planted model is regenerated from the landscape settings recorded by
// `synth`, so later steps stay consistent with the workspace.
landscape::SyntheticModel load_model(const Context& ctx) {
  const json saved = json::parse(ctx.read_text("landscape.json"));
  landscape::LandscapeConfig lc;
  lc.length = saved.at("length");
  lc.d_model = saved.at("d_model");
  lc.n_motifs = saved.at("n_motifs");
  lc.epistasis = saved.at("epistasis");
  lc.sites_per_motif = saved.at("sites_per_motif");
  lc.readout_gain = saved.at("readout_gain");
  lc.token_scale = saved.at("token_scale");
  lc.signed_weights = saved.at("signed_weights");
  lc.seed = saved.at("seed");
  return landscape::make_synthetic(lc);
}

data::DmsDataset load_dms(const Context& ctx) {
  const json saved = json::parse(ctx.read_text("landscape.json"));
  return data::parse_dms(ctx.read_text("dms.csv"), saved.at("wildtype").get<std::string>());
}

sae::SaeParams load_sae(const Context& ctx) { return sae::params_from_checkpoint(read_checkpoint(ctx.path("sae.ckpt"))); }

Matrix features_for(const data::DmsDataset& ds, const EmbeddingStore& store, FeatureKind kind,
                    const sae::SaeParams* sae) {
  probe::FeatureSource source{kind, sae, nullptr};
  return probe::feature_table(store, landscape::record_ids(ds), source);
}

Vector fitness_of(const data::DmsDataset& ds) {
  Vector y(static_cast<Eigen::Index>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) y(static_cast<Eigen::Index>(i)) = ds.records[i].fitness;
  return y;
}

// Probe fitted on an N-record random split (trial seeds 0, 0), the setting
// designs are steered with.
probe::ProbeModel fit_design_probe(const data::DmsDataset& ds, const Matrix& features, FeatureKind kind, int n,
                                   std::uint64_t seed, const std::vector<double>& grid) {
  const auto split = splits::split_random(ds, splits::make_spec(splits::Task::random, n, 0, seed));
  auto rows = [&](const std::vector<int>& ids) {
    Matrix x(static_cast<Eigen::Index>(ids.size()), features.cols());
    Vector y(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = features.row(ids[i]);
      y(static_cast<Eigen::Index>(i)) = ds.records[static_cast<std::size_t>(ids[i])].fitness;
    }
    return std::pair{x, y};
  };
  auto [tx, ty] = rows(split.train);
  auto [vx, vy] = rows(split.val);
  return probe::fit_probe_with_validation(tx, ty, vx, vy, grid, kind).model;
}

// --- subcommands -----------------------------------------------------------

void cmd_synth(const Context& ctx) {
  const auto& c = ctx.config;
  const auto lc = landscape_config(c);
  const auto model = landscape::make_synthetic(lc);
  const auto ds = landscape::make_dms(model, dms_config(c));
  const auto positions = landscape::assay_positions(model, dms_config(c));
  const int n_msa = c.get<int>("msa.n_sequences");
  const auto msa = landscape::sample_msa_like(model, n_msa, c.seed(), c.get<double>("msa.drift"));

  std::vector<std::string> msa_ids;
  for (int i = 0; i < n_msa; ++i) msa_ids.push_back(fmt::format("msa_{:06d}", i));
  std::vector<std::string> dms_seqs;
  for (const auto& r : ds.records) dms_seqs.push_back(r.sequence);

  write_store(landscape::export_store(model, msa, msa_ids, false), ctx.path("msa.emb1"));
  write_store(landscape::export_store(model, dms_seqs, landscape::record_ids(ds), true), ctx.path("dms.emb1"));
  ctx.write_csv("dms.csv", data::write_dms_csv(ds));

  json motifs = json::array();
  for (int i = 0; i < model.n_motifs(); ++i)
    motifs.push_back({{"sites", model.motif_sites()[static_cast<std::size_t>(i)]},
                      {"residue", std::string(1, model.motif_residues()[static_cast<std::size_t>(i)])},
                      {"weight", model.motif_weights()(i)}});
  ctx.write_json("landscape.json", {{"length", lc.length},
                                    {"d_model", lc.d_model},
                                    {"n_motifs", lc.n_motifs},
                                    {"epistasis", lc.epistasis},
                                    {"sites_per_motif", lc.sites_per_motif},
                                    {"readout_gain", lc.readout_gain},
                                    {"token_scale", lc.token_scale},
                                    {"signed_weights", lc.signed_weights},
                                    {"seed", lc.seed},
                                    {"wildtype", model.wildtype()},
                                    {"assay_positions", positions},
                                    {"motifs", motifs}});
  ctx.write_json("manifest.json", {{"files", {"landscape.json", "dms.csv", "msa.emb1", "dms.emb1"}},
                                   {"n_records", ds.size()},
                                   {"n_msa", n_msa},
                                   {"config", c.root()}});
  fmt::print("synth: {} DMS records, {} MSA-like sequences -> {}\n", ds.size(), n_msa, ctx.out.string());
}

void cmd_train_sae(const Context& ctx) {
  const auto& c = ctx.config;
  const auto store = read_store(ctx.path("msa.emb1"));
  sae::SaeConfig cfg;
  cfg.d_sae = c.get<int>("sae.d_sae");
  cfg.k = c.get<int>("sae.k");
  cfg.k_aux = c.get<int>("sae.k_aux");
  cfg.alpha = c.get<double>("sae.alpha");
  cfg.lr = c.get<double>("sae.lr");
  cfg.epochs = c.get_optional<int>("sae.epochs").value_or(sae::epochs_for_msa_size(store.size()));
  cfg.batch = c.get<int>("sae.batch");
  cfg.dead_threshold = c.get<int>("sae.dead_threshold");
  cfg.seed = c.seed();

  const auto state = sae::train_sae(store, cfg);
  write_checkpoint(sae::to_checkpoint(state.params, cfg, state.step), ctx.path("sae.ckpt"));
  std::string csv = "epoch,mse,aux,total,dead_fraction\n";
  for (const auto& e : state.trace) csv += fmt::format("{},{},{},{},{}\n", e.epoch, e.mse, e.aux, e.total, e.dead_fraction);
  ctx.write_csv("sae_loss.csv", csv);
  const double final_mse = state.trace.empty() ? sae::reconstruction_mse(store.stacked_rows(), state.params)
                                               : state.trace.back().mse;
  fmt::print("train-sae: {} epochs, {} steps, final mse {:.6g}\n", cfg.epochs, state.step, final_mse);
}

splits::TrialReport run_probe_trials(const Context& ctx, const data::DmsDataset& ds, const EmbeddingStore& store,
                                     const sae::SaeParams* sae, FeatureKind kind, splits::Task task, int n) {
  const Matrix features = features_for(ds, store, kind, sae);
  const Vector y = fitness_of(ds);
  const auto pipeline =
      splits::make_probe_pipeline(features, y, kind, ctx.config.get<std::vector<double>>("probe.lambda_grid"));
  return splits::run_trials(ds, task, n, pipeline, to_string(kind));
}

void cmd_probe(const Context& ctx, const std::string& task_override, int n_override, const std::string& kind_override) {
  const auto& c = ctx.config;
  const auto task = splits::task_from_string(task_override.empty() ? c.get<std::string>("probe.task") : task_override);
  const int n = n_override > 0 ? n_override : c.get<int>("probe.n");
  const auto kind =
      feature_kind_from_string(kind_override.empty() ? c.get<std::string>("probe.feature_kind") : kind_override);
  const auto ds = load_dms(ctx);
  const auto store = read_store(ctx.path("dms.emb1"));
  std::optional<sae::SaeParams> sae;
  if (kind == FeatureKind::sae_latents) sae = load_sae(ctx);

  const auto report = run_probe_trials(ctx, ds, store, sae ? &*sae : nullptr, kind, task, n);
  const std::string stem = fmt::format("probe_{}_{}_N{}", to_string(kind), to_string(task), n);
  ctx.write_csv(stem + ".csv", report.csv());
  ctx.write_json(stem + ".json", report.summary());
  fmt::print("probe: {} {} N={} mean |spearman| {:.4f} (sd {:.4f}, {} ok trials)\n", to_string(kind), to_string(task), n,
             report.mean(), report.stddev(), report.n_ok());
}

void cmd_extrapolate(const Context& ctx) {
  const auto& c = ctx.config;
  const auto ds = load_dms(ctx);
  const auto store = read_store(ctx.path("dms.emb1"));
  const auto kinds = c.get<std::vector<std::string>>("extrapolate.feature_kinds");
  const auto tasks = c.get<std::vector<std::string>>("extrapolate.tasks");
  const auto ns = c.get<std::vector<int>>("extrapolate.n_values");

  std::optional<sae::SaeParams> sae;
  std::string trials;
  std::string long_table = "task,feature_kind,N,mean_abs_spearman,std,n_ok\n";
  std::string wide = "task,feature_kind";
  for (int n : ns) wide += fmt::format(",N={}", n);
  wide += "\n";
  bool header_done = false;
  for (const auto& task_name : tasks) {
    const auto task = splits::task_from_string(task_name);
    for (const auto& kind_name : kinds) {
      const auto kind = feature_kind_from_string(kind_name);
      if (kind == FeatureKind::sae_latents && !sae) sae = load_sae(ctx);
      const Matrix features = features_for(ds, store, kind, sae ? &*sae : nullptr);
      const Vector y = fitness_of(ds);
      const auto pipeline = splits::make_probe_pipeline(features, y, kind, c.get<std::vector<double>>("probe.lambda_grid"));
      wide += fmt::format("{},{}", to_string(task), to_string(kind));
      for (int n : ns) {
        const auto report = splits::run_trials(ds, task, n, pipeline, to_string(kind));
        std::string body = report.csv();
        if (header_done) body.erase(0, body.find('\n') + 1);
        header_done = true;
        trials += body;
        long_table += fmt::format("{},{},{},{},{},{}\n", to_string(task), to_string(kind), n, report.mean(),
                                  report.stddev(), report.n_ok());
        wide += report.n_ok() > 0 ? fmt::format(",{:.3f} ({:.3f})", report.mean(), report.stddev()) : std::string(",n/a");
      }
      wide += "\n";
    }
  }
  ctx.write_csv("extrapolation_trials.csv", trials);
  ctx.write_csv("extrapolation_summary.csv", long_table);
  ctx.write_csv("extrapolation_table.csv", wide);
  fmt::print("extrapolate: {} tasks x {} feature kinds x {} N values\n", tasks.size(), kinds.size(), ns.size());
}

steering::SteeringConfig steering_config(const Config& c, std::size_t n_positions) {
  steering::SteeringConfig sc;
  sc.n_latents = c.get<int>("steering.n_latents");
  sc.multipliers = c.get<std::vector<double>>("steering.multipliers");
  sc.cosine_threshold = c.get<double>("steering.cosine_threshold");
  sc.max_mutations = c.get_optional<int>("steering.max_mutations").value_or(steering::default_max_mutations(n_positions));
  sc.budget = c.get<int>("steering.budget");
  return sc;
}

std::vector<int> load_positions(const Context& ctx) {
  return json::parse(ctx.read_text("landscape.json")).at("assay_positions").get<std::vector<int>>();
}

void cmd_design(const Context& ctx, const std::string& method, bool parity) {
  const auto& c = ctx.config;
  const auto model = load_model(ctx);
  const auto ds = load_dms(ctx);
  const auto store = read_store(ctx.path("dms.emb1"));
  const auto positions = load_positions(ctx);
  const auto grid = c.get<std::vector<double>>("probe.lambda_grid");
  const int probe_n = c.get<int>("steering.probe_n");
  const auto sc = steering_config(c, positions.size());

  auto run_steering = [&]() {
    const auto sae = load_sae(ctx);
    const Matrix features = features_for(ds, store, FeatureKind::sae_latents, &sae);
    const auto probe = fit_design_probe(ds, features, FeatureKind::sae_latents, probe_n, c.seed(), grid);
    return steering::design(model, sae, probe, sc, ds.wildtype, positions);
  };

  std::vector<DesignCandidate> designs;
  if (method == "steering") {
    const auto result = run_steering();
    if (result.zero_weights) fmt::print(stderr, "warning: every probe weight is zero\n");
    if (result.shortfall) fmt::print(stderr, "warning: only {} unique designs\n", result.designs.size());
    designs = result.designs;
  } else if (method == "anneal") {
    baselines::AnnealConfig ac;
    ac.steps = c.get<int>("anneal.steps");
    ac.t0 = c.get<double>("anneal.t0");
    ac.seed = c.seed();
    ac.max_mutations = sc.max_mutations;
    ac.budget = sc.budget;
    const auto kind = feature_kind_from_string(c.get<std::string>("anneal.feature_kind"));
    const Matrix features = features_for(ds, store, kind, nullptr);
    const auto probe = fit_design_probe(ds, features, kind, probe_n, c.seed(), grid);
    const auto scorer = baselines::probe_scorer(probe, model);
    if (parity) {
      const auto start = std::chrono::steady_clock::now();
      run_steering();
      const double steering_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const auto plan = baselines::parity_steps(steering_s, baselines::time_1000_steps(ds.wildtype, positions, scorer, ac),
                                                ac.budget);
      ac.steps = plan.steps_per_chain;
      ctx.write_json("parity.json", {{"steering_seconds", plan.steering_seconds},
                                     {"seconds_per_1000_steps", plan.seconds_per_1000_steps},
                                     {"chains", plan.chains},
                                     {"steps_per_chain", plan.steps_per_chain},
                                     {"log", plan.describe()}});
      fmt::print("parity: {}\n", plan.describe());
    }
    designs = baselines::anneal_design(ds.wildtype, positions, scorer, ac);
  } else if (method == "random") {
    designs = baselines::random_design(ds.wildtype, positions, c.seed(), sc.budget, sc.max_mutations);
  } else {
    throw ConfigError(fmt::format("unknown design method '{}' (steering, anneal, random)", method));
  }
  ctx.write_csv(fmt::format("designs_{}.csv", method), designs_csv(designs, ds.wildtype));
  fmt::print("design: {} {} designs\n", designs.size(), method);
}

void cmd_evaluate(const Context& ctx, const std::string& designs_file, const std::string& evaluator) {
  const auto& c = ctx.config;
  const auto ds = load_dms(ctx);
  fs::path file = designs_file;
  if (file.is_relative() && !fs::exists(file)) file = ctx.path(designs_file);
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read designs file {}", file.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  const auto designs = parse_designs_csv(ss.str(), ds.wildtype);

  oracle::Scorer scorer;
  json extra = json::object();
  if (evaluator == "truth") {
    auto model = std::make_shared<landscape::SyntheticModel>(load_model(ctx));
    scorer = [model](const std::string& s) { return model->true_fitness(s); };
  } else if (evaluator == "lookup") {
    scorer = oracle::lookup_scorer(ds);
  } else if (evaluator == "mlp") {
    oracle::MlpConfig mc;
    mc.lr = c.get<double>("oracle.lr");
    mc.weight_decay = c.get<double>("oracle.weight_decay");
    mc.max_epochs = c.get<int>("oracle.max_epochs");
    mc.patience = c.get<int>("oracle.patience");
    mc.split = c.get<double>("oracle.split");
    mc.seed = c.seed();
    const auto trained = oracle::train_mlp(ds, mc);
    write_checkpoint(oracle::to_checkpoint(trained.model), ctx.path("oracle.ckpt"));
    extra = {{"best_epoch", trained.best_epoch}, {"best_val_mse", trained.best_val_loss}};
    scorer = oracle::mlp_scorer(trained.model);
  } else {
    throw ConfigError(fmt::format("unknown evaluator '{}' (truth, lookup, mlp)", evaluator));
  }
  const auto stats = oracle::evaluate_designs(scorer, designs);
  json out = oracle::to_json(stats);
  out["evaluator"] = evaluator;
  out["designs"] = file.filename().string();
  if (!extra.empty()) out["oracle"] = extra;
  const std::string stem = file.stem().string();
  ctx.write_json(fmt::format("evaluation_{}_{}.json", stem, evaluator), out);
  ctx.write_csv(fmt::format("evaluation_{}_{}.csv", stem, evaluator),
                fmt::format("designs,evaluator,n,mean,max,top10,top20\n{},{},{},{},{},{},{}\n", file.filename().string(),
                            evaluator, stats.n, stats.mean, stats.max, stats.top10, stats.top20));
  fmt::print("evaluate: mean {:.4f} max {:.4f} top10 {:.4f} top20 {:.4f}\n", stats.mean, stats.max, stats.top10,
             stats.top20);
}

void cmd_analyze(const Context& ctx) {
  const auto& c = ctx.config;
  const auto model = load_model(ctx);
  const auto ds = load_dms(ctx);
  const auto store = read_store(ctx.path("dms.emb1"));
  const auto sae = load_sae(ctx);
  const auto grid = c.get<std::vector<double>>("probe.lambda_grid");
  const int probe_n = c.get<int>("steering.probe_n");
  const double fraction = c.get<double>("analysis.fraction");

  std::string sparsity = "feature_kind,fraction,top_fraction_variance\n";
  std::optional<probe::ProbeModel> sae_probe;
  for (auto kind : {FeatureKind::sae_latents, FeatureKind::layer_embedding, FeatureKind::logits}) {
    if (kind == FeatureKind::logits && !store.has_logits()) continue;
    const Matrix features = features_for(ds, store, kind, &sae);
    const auto probe = fit_design_probe(ds, features, kind, probe_n, c.seed(), grid);
    sparsity += fmt::format("{},{},{}\n", to_string(kind), fraction, analysis::top_fraction_variance(probe.w, fraction));
    const auto hist = analysis::weight_histogram(probe.w, c.get<int>("analysis.bins"), c.get<double>("analysis.clip"));
    ctx.write_csv(fmt::format("weights_histogram_{}.csv", to_string(kind)), hist.csv());
    if (kind == FeatureKind::sae_latents) sae_probe = probe;
  }
  ctx.write_csv("weight_sparsity.csv", sparsity);

  // Attribution for the best steered design, when one exists in the workspace.
  if (fs::exists(ctx.path("designs_steering.csv"))) {
    const auto designs = parse_designs_csv(ctx.read_text("designs_steering.csv"), ds.wildtype);
    if (!designs.empty()) {
      const auto rows = analysis::activation_diff(sae, model, ds.wildtype, designs.front().sequence, *sae_probe,
                                                  c.get<int>("analysis.n_latents"));
      ctx.write_csv("attribution.csv", analysis::attribution_csv(rows));
    }
  }
  fmt::print("analyze: wrote weight sparsity and histograms\n");
}

json load_config(const std::string& path) {
  if (path.empty()) return default_config();
  std::ifstream f(path);
  if (!f) throw ConfigError(fmt::format("cannot read config {}", path));
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config {} is not valid JSON: {}", path, e.what()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latentforge: sparse-autoencoder fitness probes and latent steering"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  app.add_option("--config", config_path, "JSON config (defaults when omitted)");
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--out", out_dir, "workspace directory");

  auto* synth = app.add_subcommand("synth", "planted landscape, DMS dataset and embedding stores");
  auto* train = app.add_subcommand("train-sae", "train the SAE on msa.emb1");
  auto* probe_cmd = app.add_subcommand("probe", "nine-trial probe report for one task and N");
  std::string task, kind;
  int n = 0;
  probe_cmd->add_option("--task", task, "random, mutation, position, regime or score");
  probe_cmd->add_option("--n", n, "training set size");
  probe_cmd->add_option("--feature", kind, "sae_latents, layer_embedding or logits");
  auto* extrapolate = app.add_subcommand("extrapolate", "full task x N x feature matrix");
  auto* design_cmd = app.add_subcommand("design", "design variants");
  std::string method = "steering";
  bool parity = false;
  design_cmd->add_option("--method", method, "steering, anneal or random");
  design_cmd->add_flag("--parity", parity, "size annealing by measured steering time");
  auto* evaluate = app.add_subcommand("evaluate", "oracle statistics over a design CSV");
  std::string designs_file;
  std::string evaluator = "truth";
  evaluate->add_option("--designs", designs_file, "design CSV")->required();
  evaluate->add_option("--oracle", evaluator, "truth, lookup or mlp");
  auto* analyze = app.add_subcommand("analyze", "weight sparsity and activation differences");
  auto* init = app.add_subcommand("init-config", "write the default config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (init->parsed()) {
      const std::string body = default_config().dump(2) + "\n";
      if (config_path.empty()) {
        std::cout << body;
      } else {
        std::ofstream(config_path) << body;
      }
      return 0;
    }
    Context ctx;
    json root = load_config(config_path);
    if (seed) root["seed"] = *seed;
    ctx.config = Config(std::move(root));
    ctx.out = out_dir;
    fs::create_directories(ctx.out);
    ctx.provenance = provenance_line(ctx.config.root(), ctx.config.seed());

    if (synth->parsed()) cmd_synth(ctx);
    if (train->parsed()) cmd_train_sae(ctx);
    if (probe_cmd->parsed()) cmd_probe(ctx, task, n, kind);
    if (extrapolate->parsed()) cmd_extrapolate(ctx);
    if (design_cmd->parsed()) cmd_design(ctx, method, parity);
    if (evaluate->parsed()) cmd_evaluate(ctx, designs_file, evaluator);
    if (analyze->parsed()) cmd_analyze(ctx);
    return 0;
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kExitData;
  } catch (const NumericError& e) {
    fmt::print(stderr, "numeric error: {}\n", e.what());
    return kExitNumeric;
  } catch (const nlohmann::json::exception& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
}
