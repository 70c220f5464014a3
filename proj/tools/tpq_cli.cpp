// tpq: command-line driver for calibration, selection and sync simulation.
// Links only against the C API in tpq/tpq.h.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tpq/tpq.h"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitInternal = 3 };

struct CliFailure {
  int exit_code;
  std::string message;
};

[[noreturn]] void usage_error(const std::string& msg) { throw CliFailure{kExitUsage, msg}; }

void check(tpq_status status, const std::string& context) {
  if (status == TPQ_OK) return;
  int code = kExitData;
  if (status == TPQ_ERR_INVALID_ARGUMENT) code = kExitUsage;
  if (status == TPQ_ERR_INTERNAL) code = kExitInternal;
  throw CliFailure{code, context + ": " + tpq_last_error()};
}

template <auto Destroy>
struct Deleter {
  template <class T>
  void operator()(T* p) const {
    Destroy(p);
  }
};
using DatasetPtr = std::unique_ptr<tpq_dataset, Deleter<tpq_dataset_destroy>>;
using CalibrationPtr = std::unique_ptr<tpq_calibration, Deleter<tpq_calibration_destroy>>;
using SelectionPtr = std::unique_ptr<tpq_selection, Deleter<tpq_selection_destroy>>;
using CodecPtr = std::unique_ptr<tpq_codec, Deleter<tpq_codec_destroy>>;
using CStringPtr = std::unique_ptr<char, Deleter<tpq_string_free>>;

std::string take_string(char* s) { return CStringPtr(s).get(); }

// Writes next to the destination, then renames; "-" means stdout.
void write_output(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  const fs::path dst(path);
  if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
  fs::path tmp = dst;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CliFailure{kExitData, "cannot write '" + tmp.string() + "'"};
    out << text;
    if (!out) throw CliFailure{kExitData, "failed writing '" + tmp.string() + "'"};
  }
  std::error_code ec;
  fs::rename(tmp, dst, ec);
  if (ec) throw CliFailure{kExitData, "cannot rename onto '" + path + "': " + ec.message()};
}

struct CliConfig {
  std::string command;
  // gen
  std::string preset = "default";
  std::string out;
  std::size_t input_dim = 0, output_dim = 0, seq_len = 0, devices = 0;
  std::size_t num_calibration = 0, num_evaluation = 0, outliers = 0;
  bool outliers_set = false;
  float base_std = 0.0f, multiplier = 0.0f;
  std::uint64_t weight_seed = 0, seed = 0;
  bool weight_seed_set = false, seed_set = false;
  // pipeline
  std::string data = "data";
  std::string table = "table.tpqt";
  std::string codec;
  std::string csv;
  std::string json_out;
  float gamma = 0.01f;
  int bit_width = 4;
  std::string bits = "2:8";
  std::string strategy = "selected";
  std::string strategies = "all";
  long long k = -1;
  std::size_t k_denominator = 64;
  std::string rounding = "nearest";
  bool bf16_reduction = false;
  bool normalize = false;
  std::string format = "csv";
  std::string select_strategy = "top";
  std::string simulate_format = "json";
};

double shortest(float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::stod(std::string(buf, res.ptr));
}

// Keys are flag names, so the banner can be fed back through --config.
json banner(const CliConfig& c) {
  json j;
  j["command"] = c.command;
  auto k_policy = [&] {
    if (c.k >= 0)
      j["k"] = c.k;
    else
      j["k_denominator"] = c.k_denominator;
  };
  auto optional = [&](const char* key, const std::string& v) {
    if (!v.empty()) j[key] = v;
  };
  if (c.command == "gen") {
    j["preset"] = c.preset;
    j["out"] = c.out;
    j["input_dim"] = c.input_dim;
    j["output_dim"] = c.output_dim;
    j["seq_len"] = c.seq_len;
    j["devices"] = c.devices;
    j["num_calibration"] = c.num_calibration;
    j["num_evaluation"] = c.num_evaluation;
    j["base_std"] = shortest(c.base_std);
    j["multiplier"] = shortest(c.multiplier);
    j["outliers"] = c.outliers;
    j["weight_seed"] = c.weight_seed;
    j["seed"] = c.seed;
  } else if (c.command == "calibrate") {
    j["data"] = c.data;
    j["out"] = c.out;
    j["gamma"] = shortest(c.gamma);
    j["devices"] = c.devices;
    optional("json", c.json_out);
  } else if (c.command == "select") {
    j["table"] = c.table;
    j["out"] = c.out;
    optional("csv", c.csv);
    j["normalize"] = c.normalize;
    j["strategy"] = c.select_strategy;
    k_policy();
    j["seed"] = c.seed;
    optional("codec", c.codec);
    j["bits"] = c.bit_width;
  } else if (c.command == "simulate") {
    j["data"] = c.data;
    if (c.codec.empty())
      j["table"] = c.table;
    else
      j["codec"] = c.codec;
    j["strategy"] = c.strategy;
    j["bits"] = c.bit_width;
    k_policy();
    j["seed"] = c.seed;
    j["rounding"] = c.rounding;
    j["bf16_reduction"] = c.bf16_reduction;
    j["format"] = c.simulate_format;
    optional("out", c.out);
  } else {
    j["data"] = c.data;
    j["table"] = c.table;
    j["bits"] = c.bits;
    j["strategies"] = c.strategies;
    k_policy();
    j["seed"] = c.seed;
    j["bf16_reduction"] = c.bf16_reduction;
    j["format"] = c.format;
    optional("out", c.out);
  }
  return j;
}

std::vector<int> parse_bits(const std::string& spec) {
  std::vector<int> out;
  try {
    const auto colon = spec.find(':');
    if (colon != std::string::npos) {
      const int lo = std::stoi(spec.substr(0, colon));
      const int hi = std::stoi(spec.substr(colon + 1));
      if (lo > hi) usage_error("--bits range " + spec + " is empty");
      for (int b = lo; b <= hi; ++b) out.push_back(b);
    } else {
      std::stringstream ss(spec);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    }
  } catch (const std::logic_error&) {
    usage_error("--bits: cannot parse '" + spec + "' (use LO:HI or a comma list)");
  }
  for (int b : out)
    if (b < 2 || b > 8) usage_error("--bits: bit width " + std::to_string(b) + " outside [2, 8]");
  return out;
}

tpq_sync_strategy parse_strategy(const std::string& name) {
  if (name == "full") return TPQ_SYNC_FULL;
  if (name == "pure") return TPQ_SYNC_PURE;
  if (name == "random") return TPQ_SYNC_RANDOM;
  if (name == "selected") return TPQ_SYNC_SELECTED;
  usage_error("unknown strategy '" + name + "' (full, pure, random, selected)");
}

std::vector<tpq_sync_strategy> parse_strategies(const std::string& spec) {
  if (spec == "all") return {TPQ_SYNC_PURE, TPQ_SYNC_RANDOM, TPQ_SYNC_SELECTED};
  std::vector<tpq_sync_strategy> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_strategy(item));
  if (out.empty()) usage_error("--strategies is empty");
  return out;
}

tpq_rounding parse_rounding(const std::string& name) {
  if (name == "nearest") return TPQ_ROUND_NEAREST;
  if (name == "stochastic") return TPQ_ROUND_STOCHASTIC;
  if (name == "dithered") return TPQ_ROUND_DITHERED;
  usage_error("unknown rounding '" + name + "' (nearest, stochastic, dithered)");
}

DatasetPtr load_data(const std::string& dir) {
  tpq_dataset* d = nullptr;
  check(tpq_dataset_load(dir.c_str(), &d), "loading dataset '" + dir + "'");
  return DatasetPtr(d);
}

CalibrationPtr load_table(const std::string& path) {
  tpq_calibration* t = nullptr;
  check(tpq_calibration_load(path.c_str(), &t), "loading calibration table '" + path + "'");
  return CalibrationPtr(t);
}

std::size_t resolve_k(const CliConfig& c, std::size_t features) {
  return c.k >= 0 ? static_cast<std::size_t>(c.k) : tpq_default_k(features, c.k_denominator);
}

SelectionPtr make_selection(const CliConfig& c, const tpq_calibration* table,
                            const std::string& strategy) {
  tpq_calibration_info info{};
  check(tpq_calibration_get_info(table, &info), "reading calibration table");
  tpq_selection_strategy s = TPQ_SELECT_TOP_RANGE;
  if (strategy == "random") s = TPQ_SELECT_RANDOM;
  else if (strategy == "none" || strategy == "pure") s = TPQ_SELECT_NONE;
  else if (strategy != "top" && strategy != "selected") usage_error("unknown selection strategy '" + strategy + "'");
  tpq_selection* sel = nullptr;
  check(tpq_select(table, s, resolve_k(c, info.features), c.seed, &sel), "selecting features");
  return SelectionPtr(sel);
}

// Fills every unset gen field from the preset.
void resolve_gen(CliConfig& c) {
  if (c.preset != "default" && c.preset != "small") usage_error("unknown preset '" + c.preset + "'");
  tpq_synthetic_spec spec{};
  check(tpq_synthetic_spec_preset(c.preset == "small" ? TPQ_PRESET_SMALL : TPQ_PRESET_DEFAULT,
                                  &spec),
        "preset");
  if (!c.input_dim) c.input_dim = spec.input_dim;
  if (!c.output_dim) c.output_dim = spec.output_dim;
  if (!c.seq_len) c.seq_len = spec.seq_len;
  if (!c.devices) c.devices = spec.devices;
  if (!c.num_calibration) c.num_calibration = spec.num_calibration;
  if (!c.num_evaluation) c.num_evaluation = spec.num_evaluation;
  if (!(c.base_std > 0.0f)) c.base_std = spec.base_std;
  if (!(c.multiplier > 0.0f)) c.multiplier = spec.outlier_multiplier;
  if (!c.outliers_set) c.outliers = spec.num_outliers;
  if (!c.weight_seed_set) c.weight_seed = spec.weight_seed;
  if (!c.seed_set) c.seed = spec.data_seed;
}

int cmd_gen(const CliConfig& c) {
  tpq_synthetic_spec spec{};
  spec.input_dim = c.input_dim;
  spec.output_dim = c.output_dim;
  spec.seq_len = c.seq_len;
  spec.devices = c.devices;
  spec.num_calibration = c.num_calibration;
  spec.num_evaluation = c.num_evaluation;
  spec.base_std = c.base_std;
  spec.outlier_multiplier = c.multiplier;
  spec.num_outliers = c.outliers;
  spec.outlier_indices = nullptr;
  spec.weight_seed = c.weight_seed;
  spec.data_seed = c.seed;
  tpq_dataset* d = nullptr;
  check(tpq_dataset_generate(&spec, &d), "generating synthetic data");
  DatasetPtr data(d);
  check(tpq_dataset_save(data.get(), c.out.c_str()), "writing dataset '" + c.out + "'");
  std::cerr << "wrote dataset to " << c.out << "\n";
  return kExitOk;
}

int cmd_calibrate(const CliConfig& c) {
  auto data = load_data(c.data);
  tpq_calibration* t = nullptr;
  check(tpq_calibrate(data.get(), c.devices, c.gamma, &t), "calibrating");
  CalibrationPtr table(t);
  check(tpq_calibration_save(table.get(), c.out.c_str()), "writing '" + c.out + "'");
  if (!c.json_out.empty()) {
    char* js = nullptr;
    check(tpq_calibration_to_json(table.get(), &js), "exporting calibration json");
    write_output(c.json_out, take_string(js) + "\n");
  }
  tpq_calibration_info info{};
  check(tpq_calibration_get_info(table.get(), &info), "reading calibration table");
  std::cerr << "calibrated N=" << info.devices << " E=" << info.features << " over "
            << info.sequences_seen << " sequences -> " << c.out << "\n";
  return kExitOk;
}

int cmd_select(const CliConfig& c) {
  auto table = load_table(c.table);
  char* csv = nullptr;
  check(tpq_calibration_range_csv(table.get(), c.normalize ? 1 : 0, &csv),
        "ranking aggregated ranges");
  const std::string ranges_csv = take_string(csv);
  auto sel = make_selection(c, table.get(), c.select_strategy);
  char* js = nullptr;
  check(tpq_selection_to_json(sel.get(), &js), "exporting selection");
  write_output(c.out, take_string(js) + "\n");
  if (!c.csv.empty()) write_output(c.csv, ranges_csv);
  if (!c.codec.empty()) {
    tpq_codec* codec = nullptr;
    check(tpq_codec_build(table.get(), sel.get(), c.bit_width, &codec), "building codec table");
    CodecPtr owned(codec);
    check(tpq_codec_save(owned.get(), c.codec.c_str()), "writing '" + c.codec + "'");
  }
  std::cerr << "selected k=" << tpq_selection_k(sel.get()) << " features -> " << c.out << "\n";
  return kExitOk;
}

int cmd_simulate(const CliConfig& c) {
  auto data = load_data(c.data);
  tpq_sync_config cfg{};
  cfg.strategy = parse_strategy(c.strategy);
  cfg.bit_width = c.bit_width;
  cfg.bf16_reduction = c.bf16_reduction ? 1 : 0;
  cfg.rounding = parse_rounding(c.rounding);
  cfg.rounding_seed = c.seed;

  CodecPtr codec;
  if (!c.codec.empty()) {
    tpq_codec* raw = nullptr;
    check(tpq_codec_load(c.codec.c_str(), &raw), "loading codec table '" + c.codec + "'");
    codec.reset(raw);
    cfg.bit_width = tpq_codec_bit_width(codec.get());
  } else if (cfg.strategy != TPQ_SYNC_FULL) {
    auto table = load_table(c.table);
    auto sel = make_selection(c, table.get(), c.strategy);
    tpq_codec* raw = nullptr;
    check(tpq_codec_build(table.get(), sel.get(), c.bit_width, &raw), "building codec table");
    codec.reset(raw);
  }
  tpq_sync_report report{};
  check(tpq_simulate(data.get(), codec.get(), &cfg, &report), "simulating sync");

  json j;
  j["strategy"] = c.strategy;
  j["bit_width"] = cfg.strategy == TPQ_SYNC_FULL ? 16 : cfg.bit_width;
  j["k"] = codec ? tpq_codec_k(codec.get()) : 0;
  j["sequences"] = report.sequences;
  j["mse"] = report.mse;
  j["max_abs_err"] = report.max_abs_err;
  j["rel_frobenius"] = report.rel_frobenius;
  j["bytes_on_wire"] = report.bytes_on_wire;
  j["bytes_baseline_bf16"] = report.bytes_baseline_bf16;
  if (c.simulate_format == "csv") {
    std::string out = "strategy,bit_width,k,sequences,mse,max_abs_err,rel_frobenius,bytes_on_wire,bytes_baseline_bf16\n";
    bool first = true;
    for (const auto& [key, value] : j.items()) {
      if (!first) out += ',';
      out += value.is_string() ? value.get<std::string>() : value.dump();
      first = false;
    }
    write_output(c.out.empty() ? "-" : c.out, out + "\n");
  } else {
    write_output(c.out.empty() ? "-" : c.out, j.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_sweep(const CliConfig& c) {
  auto data = load_data(c.data);
  auto table = load_table(c.table);
  const auto strategies = parse_strategies(c.strategies);
  const auto bits = parse_bits(c.bits);
  tpq_sweep_config cfg{};
  cfg.strategies = strategies.data();
  cfg.num_strategies = strategies.size();
  cfg.bit_widths = bits.data();
  cfg.num_bit_widths = bits.size();
  cfg.k_denominator = c.k_denominator;
  cfg.explicit_k = c.k;
  cfg.random_seed = c.seed;
  cfg.bf16_reduction = c.bf16_reduction ? 1 : 0;
  char* csv = nullptr;
  check(tpq_sweep(data.get(), table.get(), &cfg, &csv), "running sweep");
  std::string text = take_string(csv);
  if (c.format == "json") {
    std::stringstream ss(text);
    std::string line;
    std::getline(ss, line);
    std::vector<std::string> cols;
    for (std::stringstream hs(line); std::getline(hs, line, ',');) cols.push_back(line);
    json rows = json::array();
    while (std::getline(ss, line)) {
      json row;
      std::stringstream ls(line);
      std::string cell;
      for (std::size_t i = 0; std::getline(ls, cell, ','); ++i) {
        if (i == 0) row[cols[i]] = cell;
        else row[cols[i]] = json::parse(cell);
      }
      rows.push_back(row);
    }
    text = rows.dump(2) + "\n";
  }
  write_output(c.out.empty() ? "-" : c.out, text);
  return kExitOk;
}

// Turns {"gamma": 0.02, "normalize": true} into ["--gamma", "0.02", "--normalize"].
std::vector<std::string> config_args(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliFailure{kExitData, "cannot open config file '" + path + "'"};
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CliFailure{kExitData, "config file '" + path + "': " + e.what()};
  }
  if (!j.is_object()) throw CliFailure{kExitData, "config file '" + path + "' must hold an object"};
  std::vector<std::string> args;
  for (const auto& [key, value] : j.items()) {
    if (key == "command") continue;
    std::string flag = "--" + key;
    for (auto& ch : flag)
      if (ch == '_') ch = '-';
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else {
      args.push_back(flag);
      args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CliConfig c;
  CLI::App app{"Hybrid Int4 + BF16 quantized tensor-parallel sync simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file of flag values (flags win)");

  auto* gen = app.add_subcommand("gen", "generate a synthetic planted-outlier dataset");
  gen->add_option("--preset", c.preset, "default or small")->capture_default_str();
  gen->add_option("--out", c.out, "output directory")->required();
  gen->add_option("--input-dim", c.input_dim, "D");
  gen->add_option("--output-dim", c.output_dim, "E");
  gen->add_option("--seq-len", c.seq_len, "S");
  gen->add_option("--devices", c.devices, "N");
  gen->add_option("--num-calibration", c.num_calibration);
  gen->add_option("--num-evaluation", c.num_evaluation);
  gen->add_option("--base-std", c.base_std);
  gen->add_option("--multiplier", c.multiplier, "outlier std multiplier");
  gen->add_option("--outliers", c.outliers, "number of planted outliers");
  gen->add_option("--weight-seed", c.weight_seed);
  gen->add_option("--seed", c.seed, "data seed");

  auto* cal = app.add_subcommand("calibrate", "EMA min/max calibration over the calibration split");
  cal->add_option("--data", c.data, "dataset directory")->capture_default_str();
  cal->add_option("--out", c.out, "TPQT output path")->required();
  cal->add_option("--gamma", c.gamma)->capture_default_str();
  cal->add_option("--devices", c.devices, "N (default: dataset manifest)");
  cal->add_option("--json", c.json_out, "also write a JSON export");

  auto* sel = app.add_subcommand("select", "rank aggregated ranges and choose BF16 features");
  sel->add_option("--table", c.table, "TPQT calibration table")->capture_default_str();
  sel->add_option("--out", c.out, "selection JSON output")->required();
  sel->add_option("--csv", c.csv, "sorted aggregated-range CSV output");
  sel->add_flag("--normalize", c.normalize, "scale ranges so the maximum is 1");
  sel->add_option("--strategy", c.select_strategy, "top, random or none")->capture_default_str();
  sel->add_option("--k", c.k, "explicit k (default floor(E/denominator))");
  sel->add_option("--k-denominator", c.k_denominator)->capture_default_str();
  sel->add_option("--seed", c.seed, "seed for random selection");
  sel->add_option("--codec", c.codec, "also write a TPQS codec table");
  sel->add_option("--bits", c.bit_width, "codec bit width")->capture_default_str();

  auto* sim = app.add_subcommand("simulate", "run one sync configuration over the evaluation split");
  sim->add_option("--data", c.data)->capture_default_str();
  sim->add_option("--table", c.table)->capture_default_str();
  sim->add_option("--codec", c.codec, "TPQS table (overrides --table)");
  sim->add_option("--strategy", c.strategy, "full, pure, random or selected")->capture_default_str();
  sim->add_option("--bits", c.bit_width)->capture_default_str();
  sim->add_option("--k", c.k);
  sim->add_option("--k-denominator", c.k_denominator)->capture_default_str();
  sim->add_option("--seed", c.seed);
  sim->add_option("--rounding", c.rounding, "nearest, stochastic or dithered")->capture_default_str();
  sim->add_flag("--bf16-reduction", c.bf16_reduction);
  sim->add_option("--format", c.simulate_format, "csv or json")->capture_default_str();
  sim->add_option("--out", c.out, "output path (default stdout)");

  auto* sweep = app.add_subcommand("sweep", "strategies x bit widths error sweep");
  sweep->add_option("--data", c.data)->capture_default_str();
  sweep->add_option("--table", c.table)->capture_default_str();
  sweep->add_option("--bits", c.bits, "LO:HI or comma list")->capture_default_str();
  sweep->add_option("--strategies", c.strategies, "all or comma list")->capture_default_str();
  sweep->add_option("--k", c.k);
  sweep->add_option("--k-denominator", c.k_denominator)->capture_default_str();
  sweep->add_option("--seed", c.seed, "random-selection seed");
  sweep->add_flag("--bf16-reduction", c.bf16_reduction);
  sweep->add_option("--format", c.format, "csv or json")->capture_default_str();
  sweep->add_option("--out", c.out, "output path (default stdout)");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    for (std::size_t i = 0; i + 1 < args.size(); ++i)
      if (args[i] == "--config") {
        auto extra = config_args(args[i + 1]);
        const auto sub = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
          return app.get_subcommand_no_throw(a) != nullptr;
        });
        const auto at = sub == args.end() ? args.begin() : sub + 1;
        args.insert(at, extra.begin(), extra.end());
        break;
      }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const CliFailure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.exit_code;
  }

  for (auto* sub : app.get_subcommands()) c.command = sub->get_name();
  c.seed_set = gen->count("--seed") > 0;
  c.weight_seed_set = gen->count("--weight-seed") > 0;
  c.outliers_set = gen->count("--outliers") > 0;
  if (c.command == "gen") {
    try {
      resolve_gen(c);
    } catch (const CliFailure& f) {
      std::cerr << "error: " << f.message << "\n";
      return f.exit_code;
    }
  }
  if (c.command == "select") c.strategy = c.select_strategy;
  if (c.command == "simulate") c.format = c.simulate_format;
  if (c.format != "csv" && c.format != "json") {
    std::cerr << "error: --format must be csv or json\n";
    return kExitUsage;
  }
  std::cerr << "# effective config: " << banner(c).dump() << "\n";

  try {
    if (c.command == "gen") return cmd_gen(c);
    if (c.command == "calibrate") return cmd_calibrate(c);
    if (c.command == "select") return cmd_select(c);
    if (c.command == "simulate") return cmd_simulate(c);
    if (c.command == "sweep") return cmd_sweep(c);
  } catch (const CliFailure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
