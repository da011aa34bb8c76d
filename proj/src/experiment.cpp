#include "adaseq/experiment.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "adaseq/serialize.hpp"

namespace adaseq {

namespace fs = std::filesystem;
using nlohmann::json;

void DataSpec::validate() const {
  if (source != "synth" && source != "pamap2" && source != "cache") {
    throw ConfigError("data.source must be synth, pamap2 or cache, got '" + source + "'");
  }
  if (source == "pamap2" && pamap2_dir.empty()) {
    throw ConfigError("data.source=pamap2 requires data.pamap2_dir (or the ADASEQ_PAMAP2_DIR env var)");
  }
  if (source == "cache" && cache_path.empty()) {
    throw ConfigError("data.source=cache requires data.cache_path");
  }
  if (source != "cache") {
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("data.r must lie in (0,1)");
    if (n < 1) throw ConfigError("data.n must be >= 1");
  }
  if (source == "synth") {
    if (synth_sequences < 10) throw ConfigError("data.synth.sequences must be >= 10 for splits");
    if (synth_features < 3) throw ConfigError("data.synth.features must be >= 3");
    if (synth_classes < 2) throw ConfigError("data.synth.classes must be >= 2");
  }
}

void ExperimentSpec::validate() const {
  data.validate();
  train.validate();
  if (!sweep_variable.empty()) {
    if (sweep_variable != "r" && sweep_variable != "m") {
      throw ConfigError("sweep.variable must be 'r' or 'm', got '" + sweep_variable + "'");
    }
    if (sweep_values.empty()) throw ConfigError("sweep.values must be non-empty");
  }
  // model.input_dim / num_classes come from the data; validate the rest via a
  // stand-in so invalid (arch, cells) pairs fail before any artifact exists
  ModelConfig probe = model;
  probe.input_dim = 1;
  probe.num_classes = 2;
  probe.validate();
}

SequenceDataset prepare_data(const DataSpec& spec, std::vector<std::string>* warnings) {
  spec.validate();
  if (spec.source == "cache") {
    return load_cache(spec.cache_path);
  }
  if (spec.source == "synth") {
    SequenceDataset ds = synth_generate(spec.r, spec.n, spec.synth_sequences, spec.synth_features,
                                        spec.synth_classes, spec.seed);
    split_dataset(ds, spec.seed);
    return ds;
  }
  std::vector<SubjectRecords> subjects = load_pamap2(spec.pamap2_dir);
  SequenceDataset ds = extract_sequences(subjects, spec.r, spec.n, spec.seed, warnings);
  split_dataset(ds, spec.seed);
  standardize(ds);
  return ds;
}

// --- artifacts ---------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_report_csv(const std::string& path, const TrainReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "epoch,train_ce,val_ce,avg_p,cum_eff_mults,wall_seconds\n";
  for (const EpochRow& row : report.epochs) {
    out << row.epoch << ',' << fmt_double(row.train_ce) << ',' << fmt_double(row.val_ce) << ','
        << fmt_double(row.avg_p) << ',' << row.cum_eff_mults << ','
        << fmt_double(row.wall_seconds) << '\n';
  }
}

std::vector<EpochRow> parse_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty report csv: " + path);
  if (line != "epoch,train_ce,val_ce,avg_p,cum_eff_mults,wall_seconds") {
    throw DataError("unexpected report csv header in " + path);
  }
  std::vector<EpochRow> rows;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    EpochRow row;
    auto next = [&](const char* what) {
      if (!std::getline(ls, field, ',')) {
        throw DataError(path + " line " + std::to_string(line_no) + ": missing " + what);
      }
      return field;
    };
    row.epoch = std::stoi(next("epoch"));
    row.train_ce = std::stod(next("train_ce"));
    row.val_ce = std::stod(next("val_ce"));
    row.avg_p = std::stod(next("avg_p"));
    row.cum_eff_mults = std::stoll(next("cum_eff_mults"));
    row.wall_seconds = std::stod(next("wall_seconds"));
    rows.push_back(row);
  }
  return rows;
}

std::vector<PortionSummaryRow> portion_summary(
    const std::vector<std::pair<double, const TrainReport*>>& reports) {
  std::vector<PortionSummaryRow> rows;
  rows.reserve(reports.size());
  for (const auto& [value, report] : reports) {
    PortionSummaryRow row;
    row.sweep_value = value;
    if (report->final_val_p.empty()) {
      row.avg_p = 1.0;  // ungated model: always a full update
    } else {
      double sum = 0.0;
      for (double p : report->final_val_p) sum += p;
      row.avg_p = sum / static_cast<double>(report->final_val_p.size());
    }
    rows.push_back(row);
  }
  return rows;
}

void write_portion_summary_csv(const std::string& path,
                               const std::vector<PortionSummaryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "sweep_value,avg_p\n";
  for (const auto& row : rows) {
    out << fmt_double(row.sweep_value) << ',' << fmt_double(row.avg_p) << '\n';
  }
}

std::vector<ComparisonRow> comparison_rows(
    const std::vector<std::pair<std::string, const TrainReport*>>& trained) {
  std::vector<ComparisonRow> rows;
  for (const auto& [method, report] : trained) {
    ComparisonRow row;
    row.method = method;
    row.ce_epoch1 = report->epochs.front().val_ce;
    row.final_ce = report->test_ce;
    row.epochs_to_convergence = report->convergence_epoch;
    row.total_eff_mults = report->total_eff_mults;
    rows.push_back(std::move(row));
  }
  for (const char* absent : {"phased_lstm", "clockwork_rnn"}) {
    ComparisonRow row;
    row.method = absent;
    row.status = "not implemented (external baseline)";
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_comparison_csv(const std::string& path, const std::vector<ComparisonRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "method,ce_epoch1,final_ce,epochs_to_convergence,total_eff_mults,status\n";
  for (const auto& row : rows) {
    if (row.status == "ok") {
      out << row.method << ',' << fmt_double(row.ce_epoch1) << ',' << fmt_double(row.final_ce)
          << ',' << row.epochs_to_convergence << ',' << row.total_eff_mults << ",ok\n";
    } else {
      out << row.method << ",,,,," << row.status << '\n';
    }
  }
}

// --- config ------------------------------------------------------------------

namespace {

void check_keys(const json& obj, const std::string& where,
                const std::vector<std::string>& allowed) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const auto& a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError("unknown config key '" + where + key + "'");
  }
}

json* navigate(json& root, const std::string& dotted) {
  json* cur = &root;
  size_t start = 0;
  while (true) {
    size_t dot = dotted.find('.', start);
    std::string key = dotted.substr(start, dot == std::string::npos ? dot : dot - start);
    if (dot == std::string::npos) {
      return &(*cur)[key];
    }
    cur = &(*cur)[key];
    start = dot + 1;
  }
}

}  // namespace

ExperimentSpec spec_from_json_file(const std::string& path,
                                   const std::vector<std::string>& overrides) {
  json cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
      in >> cfg;
    } catch (const json::exception& e) {
      throw ConfigError("config parse error in " + path + ": " + e.what());
    }
  } else {
    cfg = json::object();
  }
  for (const std::string& ov : overrides) {
    size_t eq = ov.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + ov + "'");
    std::string key = ov.substr(0, eq);
    std::string value = ov.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;  // bare strings allowed
    }
    *navigate(cfg, key) = parsed;
  }

  check_keys(cfg, "", {"model", "train", "data", "sweep", "out"});
  ExperimentSpec spec;

  json model = cfg.value("model", json::object());
  check_keys(model, "model.", {"arch", "hidden", "cells", "epsilon", "sharpness", "seed"});
  spec.model.arch = arch_from_name(model.value("arch", "da_lstm"));
  spec.model.hidden = model.value("hidden", 16);
  spec.model.cells = model.value("cells", 3);
  spec.model.mask.epsilon = model.value("epsilon", 0.01);
  spec.model.mask.sharpness = model.value("sharpness", 20.0);
  spec.model.seed = model.value("seed", uint64_t{1});

  json train = cfg.value("train", json::object());
  check_keys(train, "train.",
             {"learning_rate", "batch_size", "max_epochs", "patience", "min_delta",
              "grad_clip_norm", "seed", "record_wall"});
  spec.train.learning_rate = train.value("learning_rate", 1e-3);
  spec.train.batch_size = train.value("batch_size", 32);
  spec.train.max_epochs = train.value("max_epochs", 50);
  spec.train.patience = train.value("patience", 5);
  spec.train.min_delta = train.value("min_delta", 1e-4);
  spec.train.grad_clip_norm = train.value("grad_clip_norm", 5.0);
  spec.train.seed = train.value("seed", uint64_t{1});
  spec.train.record_wall = train.value("record_wall", true);

  json data = cfg.value("data", json::object());
  check_keys(data, "data.",
             {"source", "r", "n", "seed", "synth", "pamap2_dir", "cache_path"});
  spec.data.source = data.value("source", "synth");
  spec.data.r = data.value("r", 0.5);
  spec.data.n = data.value("n", 200);
  spec.data.seed = data.value("seed", uint64_t{7});
  json synth = data.value("synth", json::object());
  check_keys(synth, "data.synth.", {"sequences", "features", "classes"});
  spec.data.synth_sequences = synth.value("sequences", 300);
  spec.data.synth_features = synth.value("features", 8);
  spec.data.synth_classes = synth.value("classes", 5);
  spec.data.pamap2_dir = data.value("pamap2_dir", "");
  spec.data.cache_path = data.value("cache_path", "");
  if (const char* env = std::getenv("ADASEQ_PAMAP2_DIR"); env != nullptr && *env != '\0') {
    spec.data.pamap2_dir = env;
  }

  if (cfg.contains("sweep")) {
    json sweep = cfg["sweep"];
    check_keys(sweep, "sweep.", {"variable", "values"});
    spec.sweep_variable = sweep.value("variable", "");
    if (sweep.contains("values")) {
      for (const auto& v : sweep["values"]) spec.sweep_values.push_back(v.get<double>());
    }
  }
  spec.out_dir = cfg.value("out", "");
  return spec;
}

std::string spec_to_json(const ExperimentSpec& spec) {
  json cfg;
  cfg["model"] = {{"arch", arch_name(spec.model.arch)},
                  {"hidden", spec.model.hidden},
                  {"cells", spec.model.cells},
                  {"epsilon", spec.model.mask.epsilon},
                  {"sharpness", spec.model.mask.sharpness},
                  {"seed", spec.model.seed}};
  cfg["train"] = {{"learning_rate", spec.train.learning_rate},
                  {"batch_size", spec.train.batch_size},
                  {"max_epochs", spec.train.max_epochs},
                  {"patience", spec.train.patience},
                  {"min_delta", spec.train.min_delta},
                  {"grad_clip_norm", spec.train.grad_clip_norm},
                  {"seed", spec.train.seed},
                  {"record_wall", spec.train.record_wall}};
  cfg["data"] = {{"source", spec.data.source},
                 {"r", spec.data.r},
                 {"n", spec.data.n},
                 {"seed", spec.data.seed},
                 {"synth",
                  {{"sequences", spec.data.synth_sequences},
                   {"features", spec.data.synth_features},
                   {"classes", spec.data.synth_classes}}},
                 {"pamap2_dir", spec.data.pamap2_dir},
                 {"cache_path", spec.data.cache_path}};
  if (!spec.sweep_variable.empty()) {
    cfg["sweep"] = {{"variable", spec.sweep_variable}, {"values", spec.sweep_values}};
  }
  cfg["out"] = spec.out_dir;
  return cfg.dump(2) + "\n";
}

// --- experiment driver ---------------------------------------------------------

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

void write_status(const std::string& dir, bool complete, const std::string& error = "") {
  json status;
  status["complete"] = complete;
  if (!error.empty()) status["error"] = error;
  write_text(dir + "/status.json", status.dump(2) + "\n");
}

std::string sweep_dir_name(const std::string& variable, double value) {
  std::ostringstream name;
  name << variable << '_' << value;
  return name.str();
}

// One training run with all artifacts, in its own directory.
TrainReport run_single(const ExperimentSpec& spec, const std::string& dir) {
  fs::create_directories(dir);
  write_text(dir + "/resolved_config.json", spec_to_json(spec));
  try {
    std::vector<std::string> warnings;
    SequenceDataset ds = prepare_data(spec.data, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    if (spec.data.source != "cache") save_cache(dir + "/dataset.bin", ds);

    ModelConfig mcfg = spec.model;
    mcfg.input_dim = ds.meta.feature_dim;
    mcfg.num_classes = ds.num_classes();
    mcfg.validate();

    TrainOutcome outcome = train(mcfg, spec.train, ds);
    const TrainReport& report = outcome.report;

    write_report_csv(dir + "/report.csv", report);
    save_checkpoint(dir + "/model.ckpt", mcfg, outcome.best_params);

    double sweep_value = spec.sweep_variable == "m" ? static_cast<double>(spec.model.cells)
                                                    : spec.data.r;
    write_portion_summary_csv(dir + "/portion_summary.csv",
                              portion_summary({{sweep_value, &report}}));
    write_comparison_csv(dir + "/comparison.csv",
                         comparison_rows({{arch_name(spec.model.arch), &report}}));

    json summary;
    summary["method"] = arch_name(spec.model.arch);
    summary["best_epoch"] = report.best_epoch;
    summary["convergence_epoch"] = report.convergence_epoch;
    summary["epochs_run"] = report.epochs.size();
    summary["test_ce"] = report.test_ce;
    summary["total_eff_mults"] = report.total_eff_mults;
    summary["avg_p_converged"] = report.final_avg_p;
    summary["p_average_split"] = "validation";
    write_text(dir + "/summary.json", summary.dump(2) + "\n");

    write_status(dir, true);
    return report;
  } catch (const std::exception& e) {
    write_status(dir, false, e.what());
    throw;
  }
}

}  // namespace

int run_experiment(const ExperimentSpec& spec) {
  spec.validate();  // throws before any artifact exists
  if (spec.out_dir.empty()) throw ConfigError("output directory is required");

  if (spec.sweep_variable.empty()) {
    run_single(spec, spec.out_dir);
    return 0;
  }

  fs::create_directories(spec.out_dir);
  write_text(spec.out_dir + "/resolved_config.json", spec_to_json(spec));
  try {
    std::vector<TrainReport> reports;
    reports.reserve(spec.sweep_values.size());
    std::vector<std::string> labels;
    for (double value : spec.sweep_values) {
      ExperimentSpec point = spec;
      point.sweep_variable.clear();
      point.sweep_values.clear();
      if (spec.sweep_variable == "r") {
        point.data.r = value;
      } else {
        point.model.cells = static_cast<int>(value);
      }
      std::string sub = spec.out_dir + "/" + sweep_dir_name(spec.sweep_variable, value);
      point.out_dir = sub;
      reports.push_back(run_single(point, sub));
      std::ostringstream label;
      label << arch_name(spec.model.arch) << " (" << spec.sweep_variable << "=" << value << ")";
      labels.push_back(label.str());
    }
    std::vector<std::pair<double, const TrainReport*>> summary_in;
    std::vector<std::pair<std::string, const TrainReport*>> comparison_in;
    for (size_t i = 0; i < reports.size(); ++i) {
      summary_in.emplace_back(spec.sweep_values[i], &reports[i]);
      comparison_in.emplace_back(labels[i], &reports[i]);
    }
    write_portion_summary_csv(spec.out_dir + "/portion_summary.csv", portion_summary(summary_in));
    write_comparison_csv(spec.out_dir + "/comparison.csv", comparison_rows(comparison_in));
    write_status(spec.out_dir, true);
  } catch (const std::exception& e) {
    write_status(spec.out_dir, false, e.what());
    throw;
  }
  return 0;
}

}  // namespace adaseq
