#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "fq/bounds.hpp"
#include "fq/error.hpp"
#include "fq/frames.hpp"
#include "fq/mnist.hpp"
#include "fq/model_io.hpp"
#include "fq/network.hpp"
#include "fq/quantizer.hpp"

namespace fq::cli {

namespace {

using Json = nlohmann::ordered_json;

struct Options {
  std::vector<std::string> models;
  std::string quantized;
  std::string data;
  std::string out;
  std::string format = "csv";
  std::string explicit_frame;
  bool harmonic = false;
  int d = 0;
  std::string n_text;
  std::string delta_text;
  int bits = 0;
  int K = 0;
  std::string mode = "column";
  std::string last_layer_row = "on";
  std::uint64_t seed = 0;
  int random_inputs = 0;
  int limit = 0;
  double tol = 1e-9;
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Json>> rows;
  Json meta = Json::object();
  std::vector<std::string> skipped;
};

std::string csv_cell(const Json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_float()) return fmt::format("{}", v.get<double>());
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + "\"";
}

void render(const Table& t, const std::string& command, const std::string& format, std::ostream& out,
            std::ostream& err) {
  if (format == "json") {
    Json doc;
    doc["command"] = command;
    doc["meta"] = t.meta;
    Json rows = Json::array();
    for (const auto& row : t.rows) {
      Json obj = Json::object();
      for (std::size_t i = 0; i < t.columns.size(); ++i) obj[t.columns[i]] = row[i];
      rows.push_back(obj);
    }
    doc["rows"] = rows;
    doc["skipped"] = t.skipped;
    out << doc.dump(2) << '\n';
    return;
  }
  for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << t.columns[i];
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_cell(row[i]);
    out << '\n';
  }
  for (const auto& s : t.skipped) err << "skipped: " << s << '\n';
}

void emit(const Table& t, const std::string& command, const Options& o, bool out_is_artifact, std::ostream& out,
          std::ostream& err) {
  if (o.out.empty() || out_is_artifact) {
    render(t, command, o.format, out, err);
    return;
  }
  std::ofstream file(o.out, std::ios::trunc);
  if (!file) throw FormatError(fmt::format("cannot write {}", o.out));
  render(t, command, o.format, file, err);
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

const char* mode_name(QuantMode m) { return m == QuantMode::Column ? "column" : "row"; }

std::vector<Model> load_models(const Options& o, bool allow_many) {
  if (o.models.empty()) throw InvalidArgument("--model is required");
  if (!allow_many && o.models.size() > 1) throw InvalidArgument("this command takes a single --model");
  std::vector<Model> models;
  for (const auto& path : o.models) models.push_back(load_model(path));
  for (const Model& m : models) {
    if (m.input_dim() != models.front().input_dim() || m.output_dim() != models.front().output_dim()) {
      throw FormatError("all --model files must share input and output dimensions");
    }
  }
  return models;
}

int single_n(const Options& o) {
  const auto ns = parse_int_list(o.n_text);
  if (ns.size() != 1) throw InvalidArgument("--frame-N takes a single value for this command");
  return ns.front();
}

std::optional<double> single_delta(const Options& o) {
  if (o.delta_text.empty()) return std::nullopt;
  const auto ds = parse_real_list(o.delta_text);
  if (ds.size() != 1) throw InvalidArgument("--delta takes a single value for this command");
  return ds.front();
}

StepPolicy step_policy(const Options& o, std::optional<double> delta) {
  if (o.bits > 0) {
    if (o.bits > 31) throw InvalidArgument("--bits must be at most 31");
    if (delta) return ExplicitLevels{1 << (o.bits - 1), *delta};
    return BitBudget{o.bits, 1.0};
  }
  if (o.K > 0) {
    if (!delta) throw InvalidArgument("--K needs --delta");
    return ExplicitLevels{o.K, *delta};
  }
  if (!delta) throw InvalidArgument("one of --delta or --bits is required");
  return FixedStep{*delta};
}

QuantizedModel quantize_with(const Model& model, int n, const StepPolicy& policy, const Options& o) {
  QuantizationConfig cfg = QuantizationConfig::uniform(model, n, policy, o.last_layer_row == "on");
  if (o.mode == "row") {
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      if (std::holds_alternative<AffineLayer>(model.layers[i])) cfg.layers[i].mode = QuantMode::Row;
    }
  }
  return quantize_network(model, cfg);
}

struct Inputs {
  std::vector<Eigen::VectorXd> x;
  std::optional<std::vector<std::uint8_t>> labels;
  std::string source;
};

std::optional<Inputs> load_inputs(const Options& o, Eigen::Index dim) {
  if (!o.data.empty() && o.random_inputs > 0) throw InvalidArgument("--data and --random-inputs are exclusive");
  Inputs in;
  if (!o.data.empty()) {
    DatasetHandle ds = load_mnist(o.data);
    if (ds.images.cols() != dim) {
      throw FormatError(fmt::format("dataset has {} features, model expects {}", ds.images.cols(), dim));
    }
    std::size_t count = ds.size();
    if (o.limit > 0) count = std::min(count, static_cast<std::size_t>(o.limit));
    for (std::size_t i = 0; i < count; ++i) in.x.push_back(ds.image(i));
    in.labels = std::vector<std::uint8_t>(ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(count));
    in.source = "mnist";
  } else if (o.random_inputs > 0) {
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < o.random_inputs; ++i) {
      Eigen::VectorXd v(dim);
      for (Eigen::Index j = 0; j < dim; ++j) v(j) = unit(rng);
      in.x.push_back(std::move(v));
    }
    in.source = "random";
  } else {
    return std::nullopt;
  }
  if (in.x.empty()) throw FormatError("dataset is empty");
  return in;
}

Inputs require_inputs(const Options& o, Eigen::Index dim) {
  auto in = load_inputs(o, dim);
  if (!in) throw InvalidArgument("--data or --random-inputs is required");
  return std::move(*in);
}

void describe_inputs(Table& t, const Inputs& in, const Options& o) {
  t.meta["inputs"] = in.source;
  t.meta["count"] = in.x.size();
  if (in.source == "mnist") t.meta["preprocessing"] = "pixels/255, no centering";
  if (in.source == "random") {
    t.meta["seed"] = o.seed;
    t.meta["labels"] = "float model predictions";
  }
}

// Reference labels: dataset labels, else the float model's own predictions.
std::vector<std::size_t> reference_labels(const Inputs& in, const std::vector<Eigen::VectorXd>& float_out) {
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < in.x.size(); ++i) {
    labels.push_back(in.labels ? (*in.labels)[i] : classify(float_out[i]));
  }
  return labels;
}

double accuracy(const std::vector<Eigen::VectorXd>& outputs, const std::vector<std::size_t>& labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) hits += classify(outputs[i]) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(outputs.size());
}

std::vector<Eigen::VectorXd> outputs_of(const Model& model, const std::vector<Eigen::VectorXd>& x) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(x.size());
  for (const auto& v : x) out.push_back(forward(model, v));
  return out;
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

Json tightness_cell(double mean_error, int n, double delta) {
  if (mean_error == 0.0) return "zero_error";
  return std::log(mean_error * n / delta);
}

struct NamedMatrix {
  std::size_t layer;
  const char* name;
  const QuantizedMatrix* qm;
};

std::vector<NamedMatrix> named_matrices(const QuantizedModel& q) {
  std::vector<NamedMatrix> out;
  for (std::size_t i = 0; i < q.layers.size(); ++i) {
    if (const auto* a = std::get_if<QuantizedAffine>(&q.layers[i])) {
      out.push_back({i, "W", &a->weight});
    } else {
      const auto& r = std::get<QuantizedResidual>(q.layers[i]);
      out.push_back({i, "W1", &r.first});
      out.push_back({i, "W2", &r.second});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_frame(const Options& o, std::ostream& out, std::ostream& err) {
  if (!o.explicit_frame.empty() && o.harmonic) throw InvalidArgument("--harmonic and --explicit are exclusive");
  std::optional<Frame> frame;
  if (!o.explicit_frame.empty()) {
    frame = load_frame(o.explicit_frame);
  } else {
    if (o.d <= 0 || o.n_text.empty()) throw InvalidArgument("--harmonic needs --frame-d and --frame-N");
    frame = Frame::harmonic(o.d, single_n(o));
  }
  const FuntfReport report = verify_funtf(*frame, o.tol);
  const int d = frame->dim();
  const int n = frame->size();

  Json variation = nullptr;
  Json variation_bound = nullptr;
  if (frame->kind() == FrameKind::Harmonic) {
    variation = frame_variation(*frame, Permutation::identity(static_cast<std::size_t>(n)));
    variation_bound = harmonic_variation_bound(d);
  } else {
    variation = frame_variation(*frame, Permutation::from_order(serpentine_order(*frame)));
    if (d >= 3) variation_bound = permutation_variation_bound(d, n);
  }
  if (!o.out.empty()) save_frame(*frame, o.out);

  Table t;
  t.columns = {"kind", "d", "N", "unit_norm_ok", "tight_ok", "A", "max_norm_deviation", "max_tightness_deviation",
               "variation", "variation_bound"};
  t.rows.push_back({frame->kind() == FrameKind::Harmonic ? "harmonic" : "explicit", d, n, report.unit_norm_ok,
                    report.tight_ok, report.frame_bound_A, report.max_norm_deviation, report.max_tightness_deviation,
                    variation, variation_bound});
  t.meta["tol"] = o.tol;
  emit(t, "frame", o, true, out, err);
  return report.unit_norm_ok && report.tight_ok ? kOk : kConstraint;
}

Table storage_table(const QuantizedModel& q) {
  Table t;
  t.columns = {"layer", "matrix", "rows", "cols", "mode", "K", "N", "bits_per_code",
               "code_bits", "dense_bits_32", "saved_bits", "frame_overhead_bits"};
  StorageReport total;
  for (const auto& [layer, name, qm] : named_matrices(q)) {
    const StorageReport s = storage_bits(*qm);
    total += s;
    t.rows.push_back({layer, name, qm->rows(), qm->cols(), mode_name(qm->mode()), qm->K(), qm->frame_size(),
                      qm->bits_per_code(), s.code_bits, s.dense_bits_32, s.saved_bits, s.frame_overhead_bits});
  }
  t.rows.push_back({"total", nullptr, nullptr, nullptr, nullptr, nullptr, nullptr, nullptr, total.code_bits,
                    total.dense_bits_32, total.saved_bits, total.frame_overhead_bits});
  return t;
}

int cmd_quantize(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.out.empty()) throw InvalidArgument("--out is required");
  const Model model = load_models(o, false).front();
  const QuantizedModel q = quantize_with(model, single_n(o), step_policy(o, single_delta(o)), o);
  save_quantized(q, o.out);

  Table t;
  t.columns = {"layer", "matrix", "mode", "frame_d", "N", "K", "delta", "bits_per_code", "code_bits"};
  for (const auto& [layer, name, qm] : named_matrices(q)) {
    t.rows.push_back({layer, name, mode_name(qm->mode()), qm->frame().dim(), qm->frame_size(), qm->K(), qm->delta(),
                      qm->bits_per_code(), storage_bits(*qm).code_bits});
  }
  t.meta["output"] = o.out;
  emit(t, "quantize", o, true, out, err);
  return kOk;
}

std::optional<QuantizedModel> resolve_quantized(const Options& o, const Model* model) {
  if (!o.quantized.empty()) return load_quantized(o.quantized);
  if (model && !o.n_text.empty()) return quantize_with(*model, single_n(o), step_policy(o, single_delta(o)), o);
  return std::nullopt;
}

void require_same_shape(const Model& model, const QuantizedModel& q) {
  try {
    check_same_shape(model, q);
  } catch (const InvalidArgument& e) {
    throw FormatError(fmt::format("model and quantized model do not match: {}", e.what()));
  }
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  std::optional<Model> model;
  if (!o.models.empty()) model = load_models(o, false).front();
  const std::optional<QuantizedModel> q = resolve_quantized(o, model ? &*model : nullptr);
  if (!model && !q) throw InvalidArgument("eval needs --model and/or --quantized");
  if (model && q) require_same_shape(*model, *q);

  const Model q_dense = q ? q->reconstruct() : Model{};
  const Model& primary = q ? q_dense : *model;
  const Inputs in = require_inputs(o, primary.input_dim());

  std::optional<std::vector<Eigen::VectorXd>> float_out;
  if (model) float_out = outputs_of(*model, in.x);
  const auto q_out = q ? std::optional(outputs_of(q_dense, in.x)) : std::nullopt;

  Json acc = nullptr;
  Json float_acc = nullptr;
  if (in.labels || float_out) {
    const auto labels = reference_labels(in, float_out ? *float_out : *q_out);
    acc = accuracy(q ? *q_out : *float_out, labels);
    if (float_out) float_acc = accuracy(*float_out, labels);
  }

  Json n = nullptr, delta = nullptr, worst = nullptr, mean = nullptr, tight = nullptr;
  if (q) {
    const auto mats = q->matrices();
    n = mats.front()->frame_size();
    delta = mats.front()->delta();
    if (model) {
      const ErrorStats s = empirical_error(*model, *q, in.x);
      worst = s.worst;
      mean = s.mean;
      if (s.status == TightnessStatus::Ok) tight = s.tightness;
      if (s.status == TightnessStatus::ZeroError) tight = "zero_error";
      if (s.status == TightnessStatus::NonUniform) tight = "non_uniform";
    }
  }
  Table t;
  t.columns = {"N", "delta", "accuracy", "float_accuracy", "worst_error", "mean_error", "tightness"};
  t.rows.push_back({n, delta, acc, float_acc, worst, mean, tight});
  describe_inputs(t, in, o);
  emit(t, "eval", o, false, out, err);
  return kOk;
}

struct CellResult {
  std::vector<double> accuracies;
  double worst = 0.0;
  double error_sum = 0.0;
  std::size_t samples = 0;
};

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  const std::vector<Model> models = load_models(o, true);
  if (o.n_text.empty() || o.delta_text.empty()) throw InvalidArgument("sweep needs --frame-N and --delta lists");
  std::vector<int> ns = parse_int_list(o.n_text);
  std::vector<double> deltas = parse_real_list(o.delta_text);
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  std::sort(deltas.begin(), deltas.end());
  deltas.erase(std::unique(deltas.begin(), deltas.end()), deltas.end());

  const Inputs in = require_inputs(o, models.front().input_dim());
  std::vector<std::vector<Eigen::VectorXd>> float_out;
  std::vector<std::vector<std::size_t>> labels;
  for (const Model& m : models) {
    float_out.push_back(outputs_of(m, in.x));
    labels.push_back(reference_labels(in, float_out.back()));
  }

  auto run_cell = [&](int n, double delta) {
    CellResult cell;
    for (std::size_t k = 0; k < models.size(); ++k) {
      const Model dense = quantize_with(models[k], n, step_policy(o, delta), o).reconstruct();
      const auto q_out = outputs_of(dense, in.x);
      cell.accuracies.push_back(accuracy(q_out, labels[k]));
      for (std::size_t i = 0; i < q_out.size(); ++i) {
        const double e = (q_out[i] - float_out[k][i]).norm();
        cell.worst = std::max(cell.worst, e);
        cell.error_sum += e;
        ++cell.samples;
      }
    }
    return cell;
  };

  std::vector<std::future<CellResult>> cells;
  for (int n : ns) {
    for (double delta : deltas) cells.push_back(std::async(std::launch::async, run_cell, n, delta));
  }

  Table t;
  t.columns = {"N", "delta", "accuracy_mean", "accuracy_std", "worst_error", "mean_error", "tightness"};
  std::size_t idx = 0;
  for (int n : ns) {
    for (double delta : deltas) {
      const CellResult cell = cells[idx++].get();
      const double acc_mean = std::accumulate(cell.accuracies.begin(), cell.accuracies.end(), 0.0) /
                              static_cast<double>(cell.accuracies.size());
      const double mean_error = cell.error_sum / static_cast<double>(cell.samples);
      t.rows.push_back({n, delta, acc_mean, sample_std(cell.accuracies), cell.worst, mean_error,
                        tightness_cell(mean_error, n, delta)});
    }
  }
  describe_inputs(t, in, o);
  t.meta["models"] = o.models.size();
  emit(t, "sweep", o, false, out, err);
  return kOk;
}

int cmd_onebit(const Options& o, std::ostream& out, std::ostream& err) {
  const std::vector<Model> models = load_models(o, true);
  std::vector<int> ns = parse_int_list(o.n_text.empty() ? "1000:7000:1000" : o.n_text);
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  const double delta = single_delta(o).value_or(8.0);
  const int K = o.K > 0 ? o.K : 1;

  const std::optional<Inputs> in = load_inputs(o, models.front().input_dim());
  std::vector<std::vector<Eigen::VectorXd>> float_out;
  std::vector<std::vector<std::size_t>> labels;
  if (in) {
    for (const Model& m : models) {
      float_out.push_back(outputs_of(m, in->x));
      labels.push_back(reference_labels(*in, float_out.back()));
    }
  }

  Table t;
  t.columns = {"N", "delta", "K", "accuracy_mean", "accuracy_std", "code_bits", "saved_bits", "code_bits_all",
               "saved_bits_all"};
  for (int n : ns) {
    std::vector<double> accs;
    std::optional<StorageReport> hidden;
    std::optional<StorageReport> all;
    for (std::size_t k = 0; k < models.size(); ++k) {
      const QuantizedModel q = quantize_with(models[k], n, ExplicitLevels{K, delta}, o);
      if (in) accs.push_back(accuracy(outputs_of(q.reconstruct(), in->x), labels[k]));
      if (k > 0) continue;
      hidden = StorageReport{};
      for (const auto& [layer, name, qm] : named_matrices(q)) {
        if (layer + 1 < q.layers.size()) *hidden += storage_bits(*qm);
      }
      all = storage_bits(q);
    }
    Json acc_mean = nullptr, acc_std = nullptr;
    if (in) {
      acc_mean = std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size());
      acc_std = sample_std(accs);
    }
    t.rows.push_back({n, delta, K, acc_mean, acc_std, hidden->code_bits, hidden->saved_bits, all->code_bits,
                      all->saved_bits});
  }
  if (in) describe_inputs(t, *in, o);
  t.meta["models"] = o.models.size();
  t.meta["storage_scope"] = "code_bits/saved_bits: all layers but the last; *_all: every layer";
  emit(t, "onebit", o, false, out, err);
  return kOk;
}

int cmd_bounds(const Options& o, std::ostream& out, std::ostream& err) {
  const Model model = load_models(o, false).front();
  const std::optional<QuantizedModel> q = resolve_quantized(o, &model);
  if (!q) throw InvalidArgument("bounds needs --quantized or --frame-N with a step policy");
  require_same_shape(model, *q);
  const Inputs in = require_inputs(o, model.input_dim());
  const BoundSuite suite = evaluate_bounds(model, *q, in.x);

  Table t;
  t.columns = {"kind", "scope", "theoretical", "empirical", "input_norm", "delta", "N", "holds"};
  bool all_hold = true;
  for (const BoundReport& r : suite.reports) {
    const bool holds = r.empirical <= r.theoretical;
    all_hold = all_hold && holds;
    t.rows.push_back({bound_kind_name(r.kind), r.scope, number_or_null(r.theoretical), r.empirical, r.input_norm,
                      r.delta, r.N, holds});
  }
  t.skipped = suite.skipped;
  describe_inputs(t, in, o);
  emit(t, "bounds", o, false, out, err);
  if (!all_hold) err << "warning: a measured error exceeds its bound\n";
  return kOk;
}

int cmd_storage(const Options& o, std::ostream& out, std::ostream& err) {
  std::optional<Model> model;
  if (!o.models.empty()) model = load_models(o, false).front();
  const std::optional<QuantizedModel> q = resolve_quantized(o, model ? &*model : nullptr);
  if (!q) throw InvalidArgument("storage needs --quantized, or --model with --frame-N and a step policy");
  emit(storage_table(*q), "storage", o, false, out, err);
  return kOk;
}

}  // namespace

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  auto to_int = [&](const std::string& s) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw InvalidArgument(fmt::format("not an integer: '{}'", s));
    return v;
  };
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto c1 = item.find(':');
    if (c1 == std::string::npos) {
      out.push_back(to_int(item));
      continue;
    }
    const auto c2 = item.find(':', c1 + 1);
    if (c2 == std::string::npos) throw InvalidArgument(fmt::format("range '{}' must be start:stop:step", item));
    const int start = to_int(item.substr(0, c1));
    const int stop = to_int(item.substr(c1 + 1, c2 - c1 - 1));
    const int step = to_int(item.substr(c2 + 1));
    if (step <= 0 || stop < start) throw InvalidArgument(fmt::format("empty range '{}'", item));
    for (int v = start; v <= stop; v += step) out.push_back(v);
  }
  if (out.empty()) throw InvalidArgument("empty integer list");
  return out;
}

double parse_real(const std::string& text) {
  auto to_double = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw InvalidArgument(fmt::format("not a number: '{}'", text));
    return v;
  };
  const auto slash = text.find('/');
  if (slash == std::string::npos) return to_double(text);
  const double den = to_double(text.substr(slash + 1));
  if (den == 0.0) throw InvalidArgument(fmt::format("zero denominator in '{}'", text));
  return to_double(text.substr(0, slash)) / den;
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_real(item));
  }
  if (out.empty()) throw InvalidArgument("empty number list");
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frame-based post-training quantization of neural networks", "fqtool"};
  app.require_subcommand(1);
  Options o;

  auto add_output = [&](CLI::App* sub) {
    sub->add_option("--out", o.out, "Output file");
    sub->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"csv", "json"}));
  };
  auto add_quant = [&](CLI::App* sub) {
    sub->add_option("-N,--frame-N", o.n_text, "Frame size(s): 512, 256,320 or 256:512:64");
    sub->add_option("--delta", o.delta_text, "Step size(s), e.g. 1/16 or 0.0625,0.125");
    sub->add_option("--bits", o.bits, "Bits per code (K = 2^(bits-1))");
    sub->add_option("--K", o.K, "Alphabet half-size");
    sub->add_option("--mode", o.mode, "Quantize columns or rows")->check(CLI::IsMember({"column", "row"}));
    sub->add_option("--last-layer-row", o.last_layer_row, "Row mode for the final layer")
        ->check(CLI::IsMember({"on", "off"}));
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "MNIST IDX directory");
    sub->add_option("--random-inputs", o.random_inputs, "Use this many uniform [0,1] inputs instead of --data");
    sub->add_option("--seed", o.seed, "Seed for --random-inputs");
    sub->add_option("--limit", o.limit, "Use only the first samples of --data");
  };

  auto* frame = app.add_subcommand("frame", "Generate and verify a frame");
  frame->add_flag("--harmonic", o.harmonic, "Harmonic frame (default)");
  frame->add_option("--explicit", o.explicit_frame, "Frame file (FQF1 or whitespace text)");
  frame->add_option("-d,--frame-d", o.d, "Dimension");
  frame->add_option("-N,--frame-N", o.n_text, "Number of elements");
  frame->add_option("--tol", o.tol, "Verification tolerance");
  add_output(frame);

  auto* quantize = app.add_subcommand("quantize", "Quantize a float model");
  quantize->add_option("--model", o.models, "FQW model");
  add_quant(quantize);
  add_output(quantize);

  auto* eval = app.add_subcommand("eval", "Accuracy and error statistics");
  eval->add_option("--model", o.models, "FQW model");
  eval->add_option("--quantized", o.quantized, "FQQ model");
  add_quant(eval);
  add_data(eval);
  add_output(eval);

  auto* sweep = app.add_subcommand("sweep", "Grid over frame sizes and step sizes");
  sweep->add_option("--model", o.models, "FQW model(s); repeat to aggregate");
  add_quant(sweep);
  add_data(sweep);
  add_output(sweep);

  auto* onebit = app.add_subcommand("onebit", "K = 1 quantization with storage accounting");
  onebit->add_option("--model", o.models, "FQW model(s); repeat to aggregate");
  add_quant(onebit);
  add_data(onebit);
  add_output(onebit);

  auto* bounds = app.add_subcommand("bounds", "Theoretical bounds against measured errors");
  bounds->add_option("--model", o.models, "FQW model");
  bounds->add_option("--quantized", o.quantized, "FQQ model");
  add_quant(bounds);
  add_data(bounds);
  add_output(bounds);

  auto* storage = app.add_subcommand("storage", "Storage accounting");
  storage->add_option("--model", o.models, "FQW model");
  storage->add_option("--quantized", o.quantized, "FQQ model");
  add_quant(storage);
  add_output(storage);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (frame->parsed()) return cmd_frame(o, out, err);
    if (quantize->parsed()) return cmd_quantize(o, out, err);
    if (eval->parsed()) return cmd_eval(o, out, err);
    if (sweep->parsed()) return cmd_sweep(o, out, err);
    if (onebit->parsed()) return cmd_onebit(o, out, err);
    if (bounds->parsed()) return cmd_bounds(o, out, err);
    if (storage->parsed()) return cmd_storage(o, out, err);
  } catch (const ConstraintError& e) {
    err << "constraint violation: " << e.what() << '\n';
    return kConstraint;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace fq::cli
