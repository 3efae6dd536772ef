#pragma once

// Command-line front end: one binary, one subcommand per pipeline stage.
// Exit codes: 0 success, 1 stage failure, 2 bad usage. Every artifact-
// producing run writes a JSON manifest holding the effective configuration,
// the seed, and content hashes of all inputs and outputs.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vgnet/ablation.hpp"
#include "vgnet/checkpoint.hpp"
#include "vgnet/config.hpp"
#include "vgnet/dataset.hpp"
#include "vgnet/demand.hpp"
#include "vgnet/gradcheck.hpp"
#include "vgnet/graphgen.hpp"
#include "vgnet/grid.hpp"
#include "vgnet/metrics.hpp"
#include "vgnet/model.hpp"
#include "vgnet/synth.hpp"
#include "vgnet/testing/oracles.hpp"
#include "vgnet/train.hpp"
#include "vgnet/trips.hpp"

namespace vgnet::cli {

class Manifest {
 public:
  Manifest(std::string command, const PipelineConfig& cfg) {
    j_["command"] = std::move(command);
    j_["config"] = config_to_json(cfg);
    j_["seed"] = cfg.seed;
    j_["args"] = nlohmann::json::object();
    j_["inputs"] = nlohmann::json::object();
    j_["outputs"] = nlohmann::json::object();
  }

  template <typename T>
  void arg(const std::string& key, const T& value) {
    j_["args"][key] = value;
  }
  void input(const std::string& path) { j_["inputs"][path] = fnv1a64_hex(read_file_bytes(path)); }
  void output(const std::string& path) { j_["outputs"][path] = fnv1a64_hex(read_file_bytes(path)); }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j_.dump(2) << '\n';
  }

 private:
  nlohmann::json j_;
};

namespace detail {

inline bool wild_match(const std::string& pat, const std::string& s) {
  std::size_t p = 0, i = 0, star = std::string::npos, mark = 0;
  while (i < s.size()) {
    if (p < pat.size() && (pat[p] == '?' || pat[p] == s[i])) {
      ++p;
      ++i;
    } else if (p < pat.size() && pat[p] == '*') {
      star = p++;
      mark = i;
    } else if (star != std::string::npos) {
      p = star + 1;
      i = ++mark;
    } else {
      return false;
    }
  }
  while (p < pat.size() && pat[p] == '*') ++p;
  return p == pat.size();
}

inline std::vector<std::string> expand_inputs(const std::vector<std::string>& patterns) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  for (const auto& pattern : patterns) {
    fs::path p(pattern);
    std::string name = p.filename().string();
    if (name.find('*') == std::string::npos && name.find('?') == std::string::npos) {
      if (!fs::exists(p)) throw std::runtime_error("input not found: " + pattern);
      files.push_back(pattern);
      continue;
    }
    fs::path dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
    std::vector<std::string> matched;
    if (fs::is_directory(dir))
      for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && wild_match(name, entry.path().filename().string()))
          matched.push_back(entry.path().string());
    if (matched.empty()) throw std::runtime_error("no files match: " + pattern);
    std::sort(matched.begin(), matched.end());
    files.insert(files.end(), matched.begin(), matched.end());
  }
  return files;
}

inline TripSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read schema: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("schema: " + path + " is not valid JSON: " + e.what());
  }
  vgnet::detail::reject_unknown(j, "schema",
                                {"time", "lat", "lon", "dropoff_lat", "dropoff_lon", "delimiter"});
  TripSchema s;
  s.time = j.at("time").get<std::string>();
  s.lat = j.at("lat").get<std::string>();
  s.lon = j.at("lon").get<std::string>();
  if (j.contains("dropoff_lat")) s.dropoff_lat = j.at("dropoff_lat").get<std::string>();
  if (j.contains("dropoff_lon")) s.dropoff_lon = j.at("dropoff_lon").get<std::string>();
  if (j.contains("delimiter")) {
    std::string d = j.at("delimiter").get<std::string>();
    if (d.size() != 1) throw std::invalid_argument("schema: delimiter must be one character");
    s.delimiter = d[0];
  }
  return s;
}

inline void parse_grid_flag(const std::string& text, GridSpec& grid) {
  auto x = text.find('x');
  if (x == std::string::npos) throw std::invalid_argument("--grid expects ROWSxCOLS, got " + text);
  grid.rows = std::stoull(text.substr(0, x));
  grid.cols = std::stoull(text.substr(x + 1));
}

inline void parse_bounds_flag(const std::string& text, GridSpec& grid) {
  auto parts = split_string(text, ',');
  if (parts.size() != 4)
    throw std::invalid_argument("--bounds expects latmin,latmax,lonmin,lonmax");
  grid.lat_min = std::stod(parts[0]);
  grid.lat_max = std::stod(parts[1]);
  grid.lon_min = std::stod(parts[2]);
  grid.lon_max = std::stod(parts[3]);
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& part : split_string(text, ','))
    if (!trim(part).empty()) out.push_back(std::stoull(trim(part)));
  if (out.empty()) throw std::invalid_argument("--seeds: need at least one seed");
  return out;
}

inline std::vector<VariantSpec> variants_by_name(const std::vector<std::string>& names) {
  auto all = default_variants();
  std::vector<VariantSpec> out;
  for (const auto& raw : names) {
    std::string name = trim(raw);
    bool found = false;
    for (const auto& v : all)
      if (v.tag == name) {
        out.push_back(v);
        found = true;
        break;
      }
    if (!found) {
      std::ostringstream os;
      os << "unknown variant \"" << name << "\"; valid:";
      for (const auto& v : all) os << ' ' << v.tag;
      throw std::invalid_argument(os.str());
    }
  }
  return out;
}

inline std::vector<Tensor> graph_masks(const VirtualGraphSet& gs) {
  std::vector<Tensor> masks{adjacency_mask(gs.adj_distance), adjacency_mask(gs.adj_correlation)};
  if (gs.has_mobility()) masks.push_back(adjacency_mask(gs.adj_mobility));
  return masks;
}

struct LoadedPipeline {
  DemandFile demand_file;
  VirtualGraphSet graphs;
  WindowedDataset ds;
  ModelConfig model_cfg;
};

inline LoadedPipeline load_pipeline(const PipelineConfig& cfg, const std::string& demand_path,
                                    const std::string& graphs_path) {
  LoadedPipeline lp;
  lp.demand_file = load_demand(demand_path);
  lp.graphs = load_graphs(graphs_path);
  DemandTensor series = node_demand(lp.graphs.nodes, lp.demand_file.demand);
  lp.ds = build_dataset(series, cfg.train.input_len, cfg.split_frac.train, cfg.split_frac.val,
                        cfg.split_frac.test);
  lp.model_cfg = make_model_config(cfg, lp.graphs.nodes.size(),
                                   static_cast<std::size_t>(lp.graphs.graph_count));
  return lp;
}

inline void write_history_csv(const std::string& path, const TrainResult& res) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write history: " + path);
  out.precision(17);
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < res.history.size(); ++e)
    out << (e + 1) << ',' << res.history[e].train_loss << ',' << res.history[e].val_loss << '\n';
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage implementations. Each returns 0 on success and throws on failure.

struct SynthArgs {
  std::uint64_t seed = 7;
  std::size_t cells = 36;
  std::size_t days = 30;
  double noise = 0.35;
  std::size_t period = 24;
  std::string out_demand = "demand.bin";
  std::string out_od = "od.bin";
  std::string out_labels;
};

inline int run_synth(const SynthArgs& a, PipelineConfig cfg) {
  cfg.seed = a.seed;
  SynthSpec spec;
  spec.cells = a.cells;
  spec.slots = a.days * a.period;
  spec.seed = a.seed;
  spec.noise = a.noise;
  spec.period = a.period;
  SynthData data = synth_generate(spec);

  Manifest man("synth", cfg);
  man.arg("cells", a.cells);
  man.arg("days", a.days);
  man.arg("noise", a.noise);
  man.arg("period", a.period);
  save_demand(a.out_demand, data.demand, data.grid);
  man.output(a.out_demand);
  man.output(a.out_demand + ".meta");
  save_od(a.out_od, data.od);
  man.output(a.out_od);
  if (!a.out_labels.empty()) {
    nlohmann::json lj;
    lj["labels"] = data.labels;
    std::ofstream out(a.out_labels);
    if (!out) throw std::runtime_error("cannot write labels: " + a.out_labels);
    out << lj.dump(2) << '\n';
    out.close();
    man.output(a.out_labels);
  }
  man.write(a.out_demand + ".manifest.json");
  std::cout << "synth: " << data.demand.cells << " cells, " << data.demand.slots
            << " slots, total demand " << data.demand.total() << "\n";
  return 0;
}

struct IngestArgs {
  std::vector<std::string> inputs;
  std::string schema_path;
  std::string grid_text;
  std::string bounds_text;
  std::int64_t bin_width = 3600;
  std::int64_t t0 = 0, t1 = 0;  // 0 means derive from the data
  std::string out_demand = "demand.bin";
  std::string out_od;
};

inline int run_ingest(const IngestArgs& a, PipelineConfig cfg) {
  if (!a.grid_text.empty()) detail::parse_grid_flag(a.grid_text, cfg.grid);
  if (!a.bounds_text.empty()) detail::parse_bounds_flag(a.bounds_text, cfg.grid);
  cfg.grid.validate();
  TripSchema schema = detail::load_schema(a.schema_path);
  if (!a.out_od.empty() && !schema.wants_dropoff())
    throw std::invalid_argument("--od requested but the schema has no drop-off columns");

  std::vector<std::string> files = detail::expand_inputs(a.inputs);
  std::vector<TripRecord> records;
  std::size_t rows = 0, malformed = 0;
  for (const auto& f : files) {
    ParseResult pr = parse_trips(f, schema);
    rows += pr.total_rows;
    malformed += pr.malformed;
    records.insert(records.end(), pr.records.begin(), pr.records.end());
  }
  if (records.empty()) throw std::runtime_error("ingest: no usable trip records");

  std::int64_t t0 = a.t0, t1 = a.t1;
  if (t0 == 0 && t1 == 0) {
    std::int64_t lo = records[0].pickup_time, hi = records[0].pickup_time;
    for (const auto& r : records) {
      lo = std::min(lo, r.pickup_time);
      hi = std::max(hi, r.pickup_time);
    }
    t0 = (lo / a.bin_width) * a.bin_width;
    if (t0 > lo) t0 -= a.bin_width;  // negative timestamps round toward zero
    std::int64_t span = hi - t0 + 1;
    t1 = t0 + ((span + a.bin_width - 1) / a.bin_width) * a.bin_width;
  }

  BinResult bin = bin_demand(records, cfg.grid, a.bin_width, t0, t1);
  Manifest man("ingest", cfg);
  for (const auto& f : files) man.input(f);
  man.input(a.schema_path);
  man.arg("bin", a.bin_width);
  man.arg("t0", t0);
  man.arg("t1", t1);
  save_demand(a.out_demand, bin.tensor, cfg.grid);
  man.output(a.out_demand);
  man.output(a.out_demand + ".meta");
  std::cout << "ingest: " << files.size() << " file(s), " << rows << " rows, " << malformed
            << " malformed, " << bin.dropped << " out of range\n";
  std::cout << "demand: " << bin.tensor.slots << " slots x " << bin.tensor.cells
            << " cells, total " << bin.tensor.total() << "\n";

  if (!a.out_od.empty()) {
    OdResult od = build_od(records, cfg.grid, t0, t1);
    save_od(a.out_od, od.tensor);
    man.output(a.out_od);
    std::cout << "od: total flow " << od.tensor.total() << ", dropped " << od.dropped << "\n";
  }
  man.write(a.out_demand + ".manifest.json");
  return 0;
}

struct GraphArgs {
  std::string demand_path;
  std::string od_path;
  std::string out_path = "graphs.json";
};

inline int run_graph(const GraphArgs& a, const PipelineConfig& cfg) {
  DemandFile df = load_demand(a.demand_path);
  std::size_t train_end = static_cast<std::size_t>(
      std::floor(cfg.split_frac.train * static_cast<double>(df.demand.slots)));
  if (train_end < 2) throw std::runtime_error("graph: training range too short");

  auto stats = compute_stats(df.demand, 0, train_end);
  auto kept = discard_sparse(stats, cfg.delta);
  std::cout << "significant regions: " << kept.size() << "\n";
  auto nodes = aggregate_regions(kept, cfg.epsilon, df.grid);
  std::cout << "virtual nodes: " << nodes.size() << "\n";

  ODTensor od;
  bool have_od = !a.od_path.empty();
  if (have_od) od = load_od(a.od_path);
  VirtualGraphSet gs = build_graphs(nodes, have_od ? &od : nullptr, cfg.top_frac);
  std::cout << "graphs: distance, correlation" << (gs.has_mobility() ? ", mobility" : "") << "\n";

  Manifest man("graph", cfg);
  man.input(a.demand_path);
  if (have_od) man.input(a.od_path);
  save_graphs(a.out_path, gs);
  man.output(a.out_path);
  man.write(a.out_path + ".manifest.json");
  return 0;
}

struct TrainArgs {
  std::string demand_path;
  std::string graphs_path;
  std::string out_dir = "run";
};

inline int run_train(const TrainArgs& a, const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  detail::LoadedPipeline lp = detail::load_pipeline(cfg, a.demand_path, a.graphs_path);
  Rng init(cfg.seed);
  Model model(lp.model_cfg, detail::graph_masks(lp.graphs), init);
  std::cout << "model: " << lp.model_cfg.nodes << " nodes, " << lp.model_cfg.graph_count
            << " graphs, " << model.params().param_count() << " parameters\n";

  TrainResult res = train(model, lp.ds, cfg.train);
  std::cout << "trained " << res.history.size() << " epoch(s); best val loss " << res.best_val
            << " at epoch " << res.best_epoch << "\n";

  fs::create_directories(a.out_dir);
  std::string ckpt = (fs::path(a.out_dir) / "model.bin").string();
  std::string history = (fs::path(a.out_dir) / "history.csv").string();
  save_checkpoint(ckpt, model.params().all_named());
  detail::write_history_csv(history, res);

  Manifest man("train", cfg);
  man.input(a.demand_path);
  man.input(a.graphs_path);
  man.output(ckpt);
  man.output(history);
  man.write((fs::path(a.out_dir) / "manifest.json").string());
  return 0;
}

struct EvalArgs {
  std::string demand_path;
  std::string graphs_path;
  std::string ckpt_path;
  std::string out_dir = "eval";
};

inline int run_eval(const EvalArgs& a, const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  detail::LoadedPipeline lp = detail::load_pipeline(cfg, a.demand_path, a.graphs_path);
  Rng init(cfg.seed);
  Model model(lp.model_cfg, detail::graph_masks(lp.graphs), init);
  restore_into(model.params().all_named(), load_checkpoint(a.ckpt_path));

  ForecastReport mr = evaluate_model(model, lp.ds, lp.ds.test, "model", cfg.hot_frac);
  ForecastReport hm = baseline_historic_mean(lp.ds, lp.ds.test, cfg.hot_frac);
  ForecastReport lv = baseline_last_value(lp.ds, lp.ds.test, cfg.hot_frac);

  std::cout << "variant\trmse\tmae\tmape_top\n";
  for (const ForecastReport* r : {&mr, &hm, &lv})
    std::cout << r->variant_tag << '\t' << r->rmse_value << '\t' << r->mae_value << '\t'
              << r->mape_value << "\n";

  fs::create_directories(a.out_dir);
  nlohmann::json report;
  Manifest man("eval", cfg);
  man.input(a.demand_path);
  man.input(a.graphs_path);
  man.input(a.ckpt_path);
  for (const ForecastReport* r : {&mr, &hm, &lv}) {
    report[r->variant_tag] = {{"rmse", r->rmse_value},
                              {"mae", r->mae_value},
                              {"mape_topk", r->mape_value}};
    std::string csv = (fs::path(a.out_dir) / ("predictions_" + r->variant_tag + ".csv")).string();
    write_predictions_csv(*r, csv);
    man.output(csv);
  }
  std::string report_path = (fs::path(a.out_dir) / "report.json").string();
  std::ofstream out(report_path);
  if (!out) throw std::runtime_error("cannot write report: " + report_path);
  out << report.dump(2) << '\n';
  out.close();
  man.output(report_path);
  man.write((fs::path(a.out_dir) / "manifest.json").string());
  return 0;
}

struct AblateArgs {
  std::string demand_path;
  std::string graphs_path;
  std::string seeds_text = "1";
  std::vector<std::string> variant_names;
  std::string out_dir = "ablation";
};

inline int run_ablate(const AblateArgs& a, PipelineConfig cfg) {
  namespace fs = std::filesystem;
  if (!a.variant_names.empty()) cfg.variants = a.variant_names;
  detail::LoadedPipeline lp = detail::load_pipeline(cfg, a.demand_path, a.graphs_path);
  std::vector<std::uint64_t> seeds = detail::parse_seed_list(a.seeds_text);

  std::optional<std::vector<VariantSpec>> requested;
  if (!cfg.variants.empty()) requested = detail::variants_by_name(cfg.variants);

  AblationResult res = run_ablation(lp.ds, lp.graphs, lp.model_cfg, cfg.train, seeds, requested,
                                    cfg.hot_frac);
  std::string table = ablation_table(res);
  std::cout << table;

  fs::create_directories(a.out_dir);
  std::string table_path = (fs::path(a.out_dir) / "ablation.tsv").string();
  std::ofstream out(table_path);
  if (!out) throw std::runtime_error("cannot write table: " + table_path);
  out << table;
  out.close();

  Manifest man("ablate", cfg);
  man.input(a.demand_path);
  man.input(a.graphs_path);
  std::ostringstream ss;
  for (std::size_t i = 0; i < seeds.size(); ++i) ss << (i ? "," : "") << seeds[i];
  man.arg("seeds", ss.str());
  man.output(table_path);
  man.write((fs::path(a.out_dir) / "manifest.json").string());
  return 0;
}

inline int run_check() {
  bool all_ok = true;
  auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS" : "FAIL") << "  " << name;
    if (!detail.empty()) std::cout << "  (" << detail << ")";
    std::cout << "\n";
    all_ok = all_ok && ok;
  };

  {
    double a = smooth_l1(Tensor::scalar(0.0), Tensor::scalar(0.5)).item();
    double b = smooth_l1(Tensor::scalar(0.0), Tensor::scalar(3.0)).item();
    double lo = smooth_l1(Tensor::scalar(0.0), Tensor::scalar(1.0 - 1e-9)).item();
    double hi = smooth_l1(Tensor::scalar(0.0), Tensor::scalar(1.0 + 1e-9)).item();
    bool ok = a == 0.125 && b == 2.5 && std::fabs(hi - lo) < 1e-8;
    std::ostringstream os;
    os << "loss(0.5)=" << a << " loss(3)=" << b;
    report("smooth-l1 values", ok, os.str());
  }
  {
    Rng rng(404);
    auto r = testing::run_pearson_oracle(300, rng);
    report("pearson oracle, 300 pairs", r.ok, r.detail);
  }
  {
    Rng rng(405);
    auto r = testing::run_aggregation_oracle(80, rng);
    report("aggregation oracle, 80 instances", r.ok, r.detail);
  }
  {
    Rng rng(406);
    auto r = testing::run_adjacency_oracle(40, rng);
    report("adjacency invariants, 40 matrices", r.ok, r.detail);
  }
  {
    Rng rng(407);
    ModelConfig cfg = ModelConfig::make(4, 2, 4);
    cfg.input_len = 3;
    cfg.heads = 2;
    cfg.attn_dim = 2;
    AdjMatrix ring(4, std::vector<std::uint8_t>(4, 0));
    for (std::size_t i = 0; i < 4; ++i) ring[i][(i + 1) % 4] = ring[(i + 1) % 4][i] = 1;
    Model model(cfg, {adjacency_mask(ring), adjacency_mask(ring)}, rng);
    // lift the readout biases so the hidden rectifier keeps some lanes
    // active; an all-dead readout would make the comparison vacuous
    for (auto& v : model.params().ffn_b1.raw()) v = 0.2;
    for (auto& v : model.params().ffn_b2.raw()) v = 0.5;
    Tensor x = Tensor::randn({2, 3, 4, 1}, rng);
    // targets near the initial predictions keep the probe loss small, so
    // central-difference roundoff stays below the near-zero-gradient floor
    std::vector<double> tv = model.forward(x, false).values();
    for (auto& v : tv) v += 0.15 * rng.normal();
    Tensor y = Tensor::from({2, 4, 1}, std::move(tv));
    auto loss = [&]() { return smooth_l1(model.forward(x, false), y); };
    auto res = grad_check(loss, model.params().named(), 1e-5);
    std::ostringstream os;
    os << "max rel err " << res.max_rel_err << ", " << res.nonzero_grads << "/" << res.checked
       << " live gradients";
    report("whole-model gradient check", res.max_rel_err < 1e-4 && res.nonzero_grads > 0,
           os.str());
  }
  std::cout << (all_ok ? "all checks passed" : "CHECKS FAILED") << "\n";
  return all_ok ? 0 : 1;
}

// ---------------------------------------------------------------------------

inline int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"demand forecasting over virtual graphs"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON configuration file")->capture_default_str();

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "generate a planted-structure synthetic dataset");
  synth->add_option("--seed", sy.seed, "generator seed")->capture_default_str();
  synth->add_option("--cells", sy.cells, "grid cells (square number)")->capture_default_str();
  synth->add_option("--days", sy.days, "days to simulate")->capture_default_str();
  synth->add_option("--noise", sy.noise, "noise level, 0 disables")->capture_default_str();
  synth->add_option("--period", sy.period, "slots per day")->capture_default_str();
  synth->add_option("--out-demand", sy.out_demand, "demand output")->capture_default_str();
  synth->add_option("--out-od", sy.out_od, "OD output")->capture_default_str();
  synth->add_option("--out-labels", sy.out_labels, "planted-label output (JSON)");

  IngestArgs in;
  auto* ingest = app.add_subcommand("ingest", "bin trip records into a demand tensor");
  ingest->add_option("--input", in.inputs, "trip CSV file(s); * wildcard allowed")->required();
  ingest->add_option("--schema", in.schema_path, "column schema JSON")->required();
  ingest->add_option("--grid", in.grid_text, "grid as ROWSxCOLS");
  ingest->add_option("--bounds", in.bounds_text, "latmin,latmax,lonmin,lonmax");
  ingest->add_option("--bin", in.bin_width, "bin width in seconds")->capture_default_str();
  ingest->add_option("--t0", in.t0, "window start, epoch seconds (default: from data)");
  ingest->add_option("--t1", in.t1, "window end, epoch seconds (default: from data)");
  ingest->add_option("--out", in.out_demand, "demand output")->capture_default_str();
  ingest->add_option("--od", in.out_od, "also write OD flows here");

  GraphArgs gr;
  auto* graph = app.add_subcommand("graph", "build virtual nodes and their graphs");
  graph->add_option("--demand", gr.demand_path, "demand tensor")->required();
  graph->add_option("--od", gr.od_path, "OD flows (enables the mobility graph)");
  graph->add_option("--out", gr.out_path, "graphs output (JSON)")->capture_default_str();
  double delta_flag = -1, epsilon_flag = -2, top_frac_flag = -1;
  graph->add_option("--delta", delta_flag, "mean-demand threshold");
  graph->add_option("--epsilon", epsilon_flag, "correlation threshold");
  graph->add_option("--top-frac", top_frac_flag, "adjacency keep fraction");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "fit the forecasting model");
  train_cmd->add_option("--demand", tr.demand_path, "demand tensor")->required();
  train_cmd->add_option("--graphs", tr.graphs_path, "graphs JSON")->required();
  train_cmd->add_option("--out", tr.out_dir, "output directory")->capture_default_str();
  double lr_flag = -1;
  std::int64_t epochs_flag = -1, patience_flag = -1, seed_flag = -1;
  train_cmd->add_option("--lr", lr_flag, "learning rate");
  train_cmd->add_option("--epochs", epochs_flag, "max epochs");
  train_cmd->add_option("--patience", patience_flag, "early-stop patience");
  train_cmd->add_option("--seed", seed_flag, "run seed");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint against the baselines");
  eval_cmd->add_option("--demand", ev.demand_path, "demand tensor")->required();
  eval_cmd->add_option("--graphs", ev.graphs_path, "graphs JSON")->required();
  eval_cmd->add_option("--ckpt", ev.ckpt_path, "model checkpoint")->required();
  eval_cmd->add_option("--out", ev.out_dir, "output directory")->capture_default_str();

  AblateArgs ab;
  auto* ablate = app.add_subcommand("ablate", "train and score component knockouts");
  ablate->add_option("--demand", ab.demand_path, "demand tensor")->required();
  ablate->add_option("--graphs", ab.graphs_path, "graphs JSON")->required();
  ablate->add_option("--seeds", ab.seeds_text, "comma-separated seeds")->capture_default_str();
  ablate->add_option("--variants", ab.variant_names, "variant tags (default: all)");
  ablate->add_option("--out", ab.out_dir, "output directory")->capture_default_str();

  auto* check = app.add_subcommand("check", "run the numeric self-test suites");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("vgnet");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (*graph) {
      if (delta_flag >= 0) cfg.delta = delta_flag;
      if (epsilon_flag > -2) cfg.epsilon = epsilon_flag;
      if (top_frac_flag >= 0) cfg.top_frac = top_frac_flag;
    }
    if (*train_cmd) {
      if (lr_flag > 0) cfg.train.lr = lr_flag;
      if (epochs_flag >= 0) cfg.train.max_epochs = static_cast<std::size_t>(epochs_flag);
      if (patience_flag >= 0) cfg.train.patience = static_cast<std::size_t>(patience_flag);
      if (seed_flag >= 0) {
        cfg.seed = static_cast<std::uint64_t>(seed_flag);
        cfg.train.seed = cfg.seed;
      }
    }

    if (*synth) return run_synth(sy, cfg);
    if (*ingest) return run_ingest(in, cfg);
    if (*graph) return run_graph(gr, cfg);
    if (*train_cmd) return run_train(tr, cfg);
    if (*eval_cmd) return run_eval(ev, cfg);
    if (*ablate) return run_ablate(ab, cfg);
    if (*check) return run_check();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace vgnet::cli
