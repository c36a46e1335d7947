#include "scfl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <thread>

#include "json.hpp"
#include "scfl/random_matrix.hpp"

namespace scfl {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw ConfigError("cannot write " + path.string());
  file << text;
}

DelayProfile profile_from_config(const ExperimentConfig& cfg, const StreamFactory& streams,
                                 std::size_t effective_d) {
  const double payload = cfg.network.payload_bits > 0.0
                             ? cfg.network.payload_bits
                             : static_cast<double>(effective_d * cfg.data.o * 64);
  const double model = cfg.network.model_bits > 0.0
                           ? cfg.network.model_bits
                           : static_cast<double>(effective_d * cfg.data.o * 64);
  DelayProfile profile;
  if (cfg.network.sampled) {
    RngStream stream = streams.stream(Stream::NetworkProfile, 0, 0);
    profile = sample_profile(stream, cfg.data.n, cfg.network.n_mac_per_sample, payload, model);
    for (auto& link : profile.clients) link.erasure_prob = cfg.network.erasure;
  } else {
    profile.clients.resize(cfg.data.n);
    for (std::size_t i = 0; i < cfg.data.n; ++i) {
      profile.clients[i].uplink_rate = cfg.network.uplink_rates[i];
      profile.clients[i].mac_rate = cfg.network.mac_rates[i];
      profile.clients[i].erasure_prob = cfg.network.erasure_probs.empty()
                                            ? cfg.network.erasure
                                            : cfg.network.erasure_probs[i];
    }
    profile.n_mac_per_sample = cfg.network.n_mac_per_sample;
    profile.payload_bits = payload;
    profile.model_bits = model;
  }
  profile.downlink_rate = cfg.network.downlink_rate;
  profile.server_mac_rate = cfg.network.server_mac_rate;
  profile.validate();
  return profile;
}

bool strategy_uses_coded(StrategyKind kind) { return kind != StrategyKind::FlPma; }

StrategyConfig strategy_from_section(const StrategySection& section) {
  StrategyConfig strategy;
  strategy.kind = section.kind;
  strategy.deadline = section.deadline_t;
  strategy.server_batch = section.server_batch;
  if (section.client_batch > 0) strategy.client_batch.assign(1, section.client_batch);
  strategy.psi = section.psi;
  strategy.schedule = section.learning_rate;
  strategy.eta = section.eta;
  strategy.project_phi = section.project_phi;
  return strategy;
}

}  // namespace

BuiltExperiment build_experiment(const ExperimentConfig& cfg) {
  BuiltExperiment built;
  StreamFactory streams(cfg.seed);

  Matrix features, labels;
  if (!cfg.data.feature_file.empty()) {
    auto loaded = load_feature_file(cfg.data.feature_file);
    features = std::move(loaded.first);
    labels = std::move(loaded.second);
  } else {
    RngStream data_stream = streams.stream(Stream::DataFeatures, 0, 0);
    SyntheticData synthetic = generate_synthetic(data_stream, cfg.data.m, cfg.data.d,
                                                 cfg.data.o, cfg.data.noise_std,
                                                 cfg.data.ground_truth_scale);
    features = std::move(synthetic.features);
    labels = std::move(synthetic.labels);
  }
  if (cfg.data.rffm) {
    RngStream rffm_stream = streams.stream(Stream::RffmProjection, 0, 0);
    features = rffm_transform(rffm_stream, features, cfg.data.rffm_dim,
                              cfg.data.rffm_bandwidth);
  }

  RngStream part_stream = streams.stream(Stream::DataPartition, 0, 0);
  Partition partition = cfg.data.skew
                            ? skewed_partition(part_stream, labels, cfg.data.n)
                            : iid_partition(part_stream, labels.rows(), cfg.data.n);
  built.dataset.emplace(std::move(features), std::move(labels), std::move(partition));
  const FederatedDataset& dataset = *built.dataset;

  built.profile = profile_from_config(cfg, streams, dataset.n_features());

  built.resolved_sigma = cfg.coding.sigma;
  if (cfg.coding.has_target_epsilon) {
    built.resolved_sigma = calibrate_sigma(dataset, cfg.coding.c, cfg.coding.target_epsilon,
                                           cfg.coding.convention);
  }
  const CodingConfig coding{cfg.coding.c, built.resolved_sigma, cfg.coding.convention};

  built.oracle = least_squares_optimum(dataset);
  const double phi_cap = cfg.data.phi_cap > 0.0
                             ? cfg.data.phi_cap
                             : 10.0 * frobenius_norm(built.oracle->w_star);
  built.bounds = compute_bounds(dataset, phi_cap);

  built.strategy_present = cfg.strategy.present;
  if (cfg.strategy.present) {
    built.strategy = strategy_from_section(cfg.strategy);
  }

  const bool needs_coded = !cfg.strategy.present || strategy_uses_coded(cfg.strategy.kind);
  if (needs_coded) {
    built.coded = encode_dataset(streams, dataset, coding);
    built.privacy = privacy_budget(dataset, coding);
  }

  RhoParams rho_params;
  rho_params.m = dataset.n_samples();
  rho_params.d = dataset.n_features();
  rho_params.n = dataset.n_clients();
  rho_params.c = cfg.coding.c;
  rho_params.sigma = needs_coded ? built.resolved_sigma : 0.0;
  const ResolvedBatches batches =
      resolve_batches(dataset, built.coded ? &*built.coded : nullptr, built.strategy);
  rho_params.b_s = batches.server > 0 ? batches.server : cfg.coding.c;
  rho_params.l.resize(dataset.n_clients());
  for (std::size_t i = 0; i < dataset.n_clients(); ++i) {
    rho_params.l[i] = dataset.client_size(i);
  }
  rho_params.b = batches.client;
  rho_params.p = cfg.strategy.present
                     ? strategy_arrival_probs(dataset, built.profile, built.strategy)
                     : std::vector<double>(dataset.n_clients(), 1.0);
  for (double& p : rho_params.p) p = std::max(p, 1e-300);  // rho stays loggable at p = 0
  built.rho = rho_bound(built.bounds, rho_params);
  return built;
}

std::string run_record_csv(const RunRecord& record) {
  std::string out = "epoch,clock_s,n_arrived,loss,gap,grad_norm\n";
  char buf[256];
  for (const auto& e : record.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%zu,%.17g,%.17g,%.17g\n", e.epoch, e.clock_s,
                  e.n_arrived, e.loss, e.gap, e.grad_norm);
    out += buf;
  }
  return out;
}

std::string summary_json(const ExperimentConfig& cfg, const BuiltExperiment& built,
                         const RunRecord& record) {
  nlohmann::ordered_json j;
  j["strategy"] = strategy_name(built.strategy.kind);
  j["config_hash"] = config_hash_hex(cfg);
  j["seed"] = cfg.seed;
  j["epsilon"] = built.coded ? built.privacy.epsilon : 0.0;
  j["rho"] = built.rho;
  j["final_loss"] = record.final_loss;
  j["final_gap"] = record.final_gap;
  j["total_time_s"] = record.total_time_s;
  j["diverged"] = record.diverged;
  return j.dump(2) + "\n";
}

void write_error_json(const std::filesystem::path& out_dir, const std::string& kind,
                      const std::string& message, std::size_t epoch) {
  std::filesystem::create_directories(out_dir);
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["message"] = message;
  if (epoch > 0) j["epoch"] = epoch;
  write_text(out_dir / "error.json", j.dump(2) + "\n");
}

namespace {

struct RunResult {
  RunRecord record;
  std::string csv;
  std::string summary;
};

RunResult execute_run(const ExperimentConfig& cfg, BuiltExperiment& built) {
  if (!cfg.strategy.present) {
    throw ConfigError("strategy.kind: missing required key");
  }
  StreamFactory streams(cfg.seed);
  TrainOptions options;
  options.strategy = built.strategy;
  options.epochs = cfg.run.epochs;
  options.f_star = built.oracle->f_star;
  options.bounds = built.bounds;
  options.rho = built.rho;
  RunResult result;
  result.record = train(*built.dataset, built.coded ? &*built.coded : nullptr,
                        built.profile, streams, options);
  result.csv = run_record_csv(result.record);
  result.summary = summary_json(cfg, built, result.record);
  return result;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  BuiltExperiment built = build_experiment(cfg);
  RunResult result = execute_run(cfg, built);
  if (result.record.kappa_violations > 0) {
    std::fprintf(stderr,
                 "warning: residual bound kappa_i exceeded %zu times during training\n",
                 result.record.kappa_violations);
  }
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "epochs.csv", result.csv);
  write_text(out_dir / "summary.json", result.summary);
  if (result.record.diverged) {
    write_error_json(out_dir, "divergence",
                     "loss exceeded 1e6 times the initial loss at epoch " +
                         std::to_string(result.record.diverged_epoch),
                     result.record.diverged_epoch);
    return 1;
  }
  return 0;
}

namespace {

ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis,
                            double value) {
  ExperimentConfig cfg = base;
  auto as_count = [&](const char* name) {
    if (value < 1.0 || value != std::floor(value)) {
      throw ConfigError(std::string("sweep ") + name + ": expected a positive integer value");
    }
    return static_cast<std::size_t>(value);
  };
  if (axis == "sigma") {
    if (value < 0.0) throw ConfigError("sweep sigma: must be nonnegative");
    cfg.coding.sigma = value;
    cfg.coding.has_target_epsilon = false;
  } else if (axis == "target_epsilon") {
    if (value <= 0.0) throw ConfigError("sweep target_epsilon: must be positive");
    cfg.coding.target_epsilon = value;
    cfg.coding.has_target_epsilon = true;
  } else if (axis == "T") {
    cfg.strategy.deadline_t = value;
    cfg.strategy.has_deadline = true;
  } else if (axis == "b_s") {
    cfg.strategy.server_batch = as_count("b_s");
  } else if (axis == "psi") {
    if (value < 0.0 || value >= 1.0) throw ConfigError("sweep psi: must lie in [0, 1)");
    cfg.strategy.psi = value;
  } else if (axis == "c") {
    cfg.coding.c = as_count("c");
  } else {
    throw ConfigError("sweep axis '" + axis + "': not sweepable");
  }
  return cfg;
}

}  // namespace

int run_sweep(const ExperimentConfig& cfg, const std::string& axis,
              const std::vector<double>& values, const std::filesystem::path& out_dir,
              std::size_t jobs) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  const std::size_t points = values.size();
  std::vector<ExperimentConfig> configs;
  configs.reserve(points);
  for (double v : values) configs.push_back(apply_axis(cfg, axis, v));

  std::vector<RunResult> results(points);
  std::vector<std::exception_ptr> failures(points);

  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, points));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t k = w; k < points; k += workers) {
        try {
          BuiltExperiment built = build_experiment(configs[k]);
          results[k] = execute_run(configs[k], built);
        } catch (...) {
          failures[k] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();

  for (std::size_t k = 0; k < points; ++k) {
    if (failures[k]) std::rethrow_exception(failures[k]);
  }

  std::filesystem::create_directories(out_dir);
  std::string merged = "epoch,clock_s,n_arrived,loss,gap,grad_norm,axis_value\n";
  bool any_diverged = false;
  char buf[512];
  for (std::size_t k = 0; k < points; ++k) {
    std::snprintf(buf, sizeof buf, "point_%03zu", k);
    const std::filesystem::path point_dir = out_dir / buf;
    std::filesystem::create_directories(point_dir);
    write_text(point_dir / "epochs.csv", results[k].csv);
    write_text(point_dir / "summary.json", results[k].summary);
    any_diverged = any_diverged || results[k].record.diverged;
    for (const auto& e : results[k].record.epochs) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%zu,%.17g,%.17g,%.17g,%.17g\n", e.epoch,
                    e.clock_s, e.n_arrived, e.loss, e.gap, e.grad_norm, values[k]);
      merged += buf;
    }
  }
  write_text(out_dir / "sweep.csv", merged);
  if (any_diverged) {
    write_error_json(out_dir, "divergence", "at least one sweep point diverged");
    return 1;
  }
  return 0;
}

int run_privacy(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  ExperimentConfig no_strategy = cfg;
  no_strategy.strategy = StrategySection{};
  BuiltExperiment built = build_experiment(no_strategy);
  nlohmann::ordered_json j;
  j["c"] = cfg.coding.c;
  j["sigma"] = built.resolved_sigma;
  j["noise_convention"] = convention_name(cfg.coding.convention);
  j["epsilon"] = built.privacy.epsilon;
  j["per_client_epsilon"] = built.privacy.per_client_epsilon;
  j["per_client_h"] = built.privacy.per_client_h;
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "privacy.json", j.dump(2) + "\n");
  return 0;
}

namespace {

// Deadline grid spanning sparse to near-certain arrival, derived from the
// per-client one-attempt times.
std::vector<double> auto_deadlines(const DelayProfile& profile,
                                   const std::vector<std::size_t>& batches) {
  std::vector<double> t_min(profile.n_clients());
  std::vector<double> t_up(profile.n_clients());
  for (std::size_t i = 0; i < profile.n_clients(); ++i) {
    t_up[i] = profile.payload_bits / profile.clients[i].uplink_rate;
    t_min[i] = client_compute_time(profile, i, static_cast<double>(batches[i])) +
               profile.model_bits / profile.downlink_rate + t_up[i];
  }
  std::vector<double> sorted = t_min;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double max_min = sorted.back();
  const double max_up = *std::max_element(t_up.begin(), t_up.end());
  return {median, 0.5 * (median + max_min) + max_up, max_min + 2.0 * max_up};
}

double auto_lemma_deadline(const DelayProfile& profile,
                           const std::vector<std::size_t>& batches) {
  double deadline = 0.0;
  for (std::size_t i = 0; i < profile.n_clients(); ++i) {
    const double t = client_compute_time(profile, i, static_cast<double>(batches[i])) +
                     profile.model_bits / profile.downlink_rate +
                     2.0 * profile.payload_bits / profile.clients[i].uplink_rate;
    deadline = std::max(deadline, t);
  }
  return deadline;
}

void append_reports(nlohmann::ordered_json& array,
                    const std::vector<VerificationReport>& reports, bool& all_pass) {
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["name"] = r.name;
    j["trials"] = r.trials;
    j["empirical"] = r.empirical;
    j["theoretical"] = r.theoretical;
    j["std_error"] = r.std_error;
    j["pass"] = r.pass;
    array.push_back(j);
    all_pass = all_pass && r.pass;
    std::printf("%s %s: empirical %.6g vs %.6g (se %.3g)\n", r.pass ? "PASS" : "FAIL",
                r.name.c_str(), r.empirical, r.theoretical, r.std_error);
  }
}

}  // namespace

int run_verify(const ExperimentConfig& cfg, const std::string& suite,
               const std::filesystem::path& out_dir, std::size_t trials) {
  if (suite != "lemma1" && suite != "lemma2" && suite != "lemma3" && suite != "network" &&
      suite != "all") {
    throw ConfigError("verify suite '" + suite +
                      "' unknown (expected lemma1, lemma2, lemma3, network, or all)");
  }
  ExperimentConfig base = cfg;
  base.strategy.present = false;  // verification needs no training strategy
  BuiltExperiment built = build_experiment(base);
  const FederatedDataset& dataset = *built.dataset;
  StreamFactory streams(cfg.seed);

  const ResolvedBatches batches = resolve_batches(
      dataset, built.coded ? &*built.coded : nullptr,
      cfg.strategy.present ? strategy_from_section(cfg.strategy) : StrategyConfig{});

  nlohmann::ordered_json array = nlohmann::ordered_json::array();
  bool all_pass = true;

  if (suite == "lemma1" || suite == "all") {
    Lemma1Params params;
    params.m = std::min<std::size_t>(dataset.n_samples(), 4);
    params.d = std::min<std::size_t>(dataset.n_features(), 4);
    params.n = std::min<std::size_t>(dataset.n_clients(), 4);
    params.c = std::min<std::size_t>(cfg.coding.c, 200);
    params.b_s = std::max<std::size_t>(params.c / 2, 1);
    params.l = std::min<std::size_t>(dataset.client_size(0), 10);
    params.b = std::max<std::size_t>(params.l / 2, 1);
    params.convention = cfg.coding.convention;
    append_reports(array, verify_lemma1(streams, params, trials), all_pass);
  }

  LemmaSetup setup;
  setup.dataset = &dataset;
  setup.profile = &built.profile;
  setup.c = cfg.coding.c;
  setup.convention = cfg.coding.convention;
  setup.b_s = batches.server;
  setup.b = batches.client;
  setup.deadline = auto_lemma_deadline(built.profile, batches.client);
  {
    RngStream probe = streams.stream(Stream::Probe, 0, 0);
    setup.probe_w = gaussian_matrix(probe, dataset.n_features(), dataset.n_outputs(), 1.0);
    const double norm = frobenius_norm(setup.probe_w);
    const double target = 0.5 * std::max(built.bounds.phi, 1.0);
    if (norm > 0.0) setup.probe_w *= target / norm;
  }

  if (suite == "lemma2" || suite == "all") {
    std::vector<double> sigmas{0.0};
    if (built.resolved_sigma > 0.0) sigmas.push_back(built.resolved_sigma);
    append_reports(array, verify_lemma2(streams, setup, sigmas, trials), all_pass);
  }

  if (suite == "lemma3" || suite == "all") {
    const Lemma3Result result =
        verify_lemma3(streams, setup, built.resolved_sigma, trials, built.bounds);
    append_reports(array, result.reports, all_pass);
    nlohmann::ordered_json metrics;
    metrics["name"] = "lemma3.metrics";
    metrics["total_variance"] = result.total_variance;
    metrics["server_sampling_component"] = result.server_sampling_component;
    metrics["coding_component"] = result.coding_component;
    metrics["client_component"] = result.client_component;
    metrics["rho"] = result.rho;
    metrics["variance_to_rho_ratio"] = result.ratio;
    array.push_back(metrics);
    std::printf("INFO lemma3.variance %.6g vs rho %.6g (ratio %.3g)\n",
                result.total_variance, result.rho, result.ratio);
  }

  if (suite == "network" || suite == "all") {
    const std::vector<double> deadlines = auto_deadlines(built.profile, batches.client);
    append_reports(array,
                   verify_network(streams, built.profile, batches.client, deadlines,
                                  std::max<std::size_t>(trials, 100000)),
                   all_pass);
  }

  std::filesystem::create_directories(out_dir);
  write_text(out_dir / ("verify_" + suite + ".json"), array.dump(2) + "\n");
  if (!all_pass) {
    write_error_json(out_dir, "verification",
                     "at least one hard verification report failed");
    return 1;
  }
  return 0;
}

}  // namespace scfl
