#include "fq/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace fq {

namespace {

using nlohmann::json;

constexpr int kVersion = 1;

class Writer {
 public:
  void magic(const char (&m)[5]) { bytes_.insert(bytes_.end(), m, m + 4); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }

  void manifest(const json& j) {
    const std::string text = j.dump();
    u32(static_cast<std::uint32_t>(text.size()));
    bytes_.insert(bytes_.end(), text.begin(), text.end());
  }

  void matrix(const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
  }

  void vector(const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }

  void raw(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }

  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void expect_magic(const char (&m)[5]) {
    if (bytes_.size() < 4 || std::memcmp(bytes_.data(), m, 4) != 0) {
      std::string got(reinterpret_cast<const char*>(bytes_.data()), std::min<std::size_t>(4, bytes_.size()));
      throw FormatError(fmt::format("bad magic: expected \"{}\", got \"{}\"", m, got));
    }
    pos_ = 4;
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64() {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }

  json manifest() {
    const std::uint32_t len = u32("manifest length");
    need(len, "manifest");
    const std::string text(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    try {
      return json::parse(text);
    } catch (const json::exception& e) {
      throw FormatError(fmt::format("manifest is not valid JSON: {}", e.what()));
    }
  }

  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols, const std::string& what) {
    need(static_cast<std::size_t>(rows * cols) * 8, what);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f64();
    }
    return m;
  }

  Eigen::VectorXd vector(Eigen::Index n, const std::string& what) {
    need(static_cast<std::size_t>(n) * 8, what);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = f64();
    return v;
  }

  std::span<const std::uint8_t> raw(std::size_t n, const std::string& what) {
    need(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  void expect_end() const {
    if (pos_ != bytes_.size()) {
      throw FormatError(fmt::format("{} trailing bytes after payload", bytes_.size() - pos_));
    }
  }

 private:
  void need(std::size_t n, const std::string& what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(fmt::format("{} truncated: expected {} bytes, got {}", what, n, bytes_.size() - pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <class T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(fmt::format("{}: missing field \"{}\"", where, key));
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError(fmt::format("{}: field \"{}\" has the wrong type", where, key));
  }
}

Eigen::Index dim_field(const json& j, const char* key, const std::string& where) {
  const auto v = field<std::int64_t>(j, key, where);
  if (v < 1 || v > (1 << 24)) throw FormatError(fmt::format("{}: field \"{}\" out of range ({})", where, key, v));
  return static_cast<Eigen::Index>(v);
}

json activation_json(const Activation& a) {
  switch (a.kind) {
    case ActivationKind::ReLU:
      return {{"kind", "relu"}};
    case ActivationKind::LeakyReLU:
      return {{"kind", "leaky_relu"}, {"alpha", a.alpha}};
    case ActivationKind::Identity:
      break;
  }
  return {{"kind", "identity"}};
}

Activation activation_from(const json& j) {
  const auto kind = field<std::string>(j, "kind", "activation");
  if (kind == "relu") return Activation::relu();
  if (kind == "identity") return Activation::identity();
  if (kind == "leaky_relu") return Activation::leaky_relu(field<double>(j, "alpha", "activation"));
  throw FormatError(fmt::format("unknown activation \"{}\"", kind));
}

void check_version(const json& manifest) {
  if (field<int>(manifest, "version", "manifest") != kVersion) throw FormatError("unsupported manifest version");
}

const char* mode_name(QuantMode m) { return m == QuantMode::Column ? "column" : "row"; }

json frame_json(const Frame& f) {
  return {{"kind", f.kind() == FrameKind::Harmonic ? "harmonic" : "explicit"}, {"d", f.dim()}, {"N", f.size()}};
}

json permutation_json(const Permutation& p) {
  if (p.is_identity()) return "identity";
  return p.order;
}

Permutation permutation_from(const json& j, std::size_t n, const std::string& where) {
  if (j.is_string()) {
    if (j.get<std::string>() != "identity") throw FormatError(where + ": unknown permutation keyword");
    return Permutation::identity(n);
  }
  if (!j.is_array() || j.size() != n) throw FormatError(where + ": permutation must list every frame index");
  try {
    return Permutation::from_order(j.get<std::vector<std::size_t>>());
  } catch (const json::exception&) {
    throw FormatError(where + ": permutation entries must be non-negative integers");
  } catch (const InvalidArgument& e) {
    throw FormatError(fmt::format("{}: {}", where, e.what()));
  }
}

void describe_qmatrix(json& entries, const char* kind, const QuantizedMatrix& qm,
                      const std::optional<Eigen::VectorXd>& float_bias) {
  entries.push_back({{"kind", kind},
                     {"rows", qm.rows()},
                     {"cols", qm.cols()},
                     {"mode", mode_name(qm.mode())},
                     {"K", qm.K()},
                     {"delta", qm.delta()},
                     {"frame", frame_json(qm.frame())},
                     {"permutation", permutation_json(qm.permutation())},
                     {"bias_folded", qm.bias_folded()},
                     {"float_bias", float_bias.has_value()}});
}

void write_qmatrix_payload(Writer& w, const QuantizedMatrix& qm, const std::optional<Eigen::VectorXd>& float_bias) {
  if (qm.frame().kind() == FrameKind::Explicit) w.matrix(qm.frame().rows());
  w.raw(pack_codes(qm.codes(), qm.bits_per_code()));
  if (float_bias) w.vector(*float_bias);
}

struct LoadedMatrix {
  std::string kind;
  QuantizedMatrix matrix;
  std::optional<Eigen::VectorXd> float_bias;
};

LoadedMatrix read_qmatrix(Reader& r, const json& e, std::size_t index) {
  const std::string where = fmt::format("layer {}", index);
  const auto kind = field<std::string>(e, "kind", where);
  const Eigen::Index rows = dim_field(e, "rows", where);
  const Eigen::Index cols = dim_field(e, "cols", where);
  const auto mode_text = field<std::string>(e, "mode", where);
  if (mode_text != "column" && mode_text != "row") throw FormatError(where + ": mode must be column or row");
  const QuantMode mode = mode_text == "column" ? QuantMode::Column : QuantMode::Row;
  const int K = field<int>(e, "K", where);
  const double delta = field<double>(e, "delta", where);
  if (K < 1 || K > (1 << 30) || !(delta > 0.0)) throw FormatError(where + ": invalid (K, delta)");

  const json& fj = e.contains("frame") ? e.at("frame") : throw FormatError(where + ": missing field \"frame\"");
  const auto fkind = field<std::string>(fj, "kind", where + " frame");
  const int d = static_cast<int>(dim_field(fj, "d", where + " frame"));
  const int n = static_cast<int>(dim_field(fj, "N", where + " frame"));
  if (d != (mode == QuantMode::Column ? rows : cols)) {
    throw FormatError(fmt::format("{}: frame dimension {} inconsistent with {}x{} {} matrix", where, d, rows, cols,
                                  mode_text));
  }

  std::shared_ptr<const Frame> frame;
  if (fkind == "harmonic") {
    try {
      frame = std::make_shared<const Frame>(Frame::harmonic(d, n));
    } catch (const Error& ex) {
      throw FormatError(fmt::format("{}: {}", where, ex.what()));
    }
  } else if (fkind == "explicit") {
    frame = std::make_shared<const Frame>(Frame::from_rows(r.matrix(n, d, where + " frame payload")));
  } else {
    throw FormatError(fmt::format("{}: unknown frame kind \"{}\"", where, fkind));
  }

  Permutation perm = permutation_from(e.contains("permutation") ? e.at("permutation") : json("identity"),
                                      static_cast<std::size_t>(n), where);
  const std::size_t vectors = static_cast<std::size_t>(mode == QuantMode::Column ? cols : rows);
  const std::size_t count = vectors * static_cast<std::size_t>(n);
  const int bits = bits_per_code(K);
  const std::size_t nbytes = (count * static_cast<std::size_t>(bits) + 7) / 8;
  auto packed = r.raw(nbytes, where + " code section");
  std::vector<std::uint32_t> codes = unpack_codes(packed, count, bits);

  std::optional<Eigen::VectorXd> float_bias;
  if (field<bool>(e, "float_bias", where)) float_bias = r.vector(rows, where + " bias");

  try {
    QuantizedMatrix qm(std::move(frame), std::move(perm), LevelStep{K, delta}, mode, rows, cols, std::move(codes),
                       field<bool>(e, "bias_folded", where));
    return LoadedMatrix{kind, std::move(qm), std::move(float_bias)};
  } catch (const InvalidArgument& ex) {
    throw FormatError(fmt::format("{}: {}", where, ex.what()));
  }
}

}  // namespace

std::vector<std::uint8_t> pack_codes(std::span<const std::uint32_t> codes, int bits) {
  if (bits < 1 || bits > 32) throw InvalidArgument("pack_codes: bits must be in [1, 32]");
  std::vector<std::uint8_t> out((codes.size() * static_cast<std::size_t>(bits) + 7) / 8, 0);
  std::size_t pos = 0;
  for (std::uint32_t c : codes) {
    for (int b = 0; b < bits; ++b, ++pos) {
      if ((c >> b) & 1u) out[pos / 8] |= static_cast<std::uint8_t>(1u << (pos % 8));
    }
  }
  return out;
}

std::vector<std::uint32_t> unpack_codes(std::span<const std::uint8_t> bytes, std::size_t count, int bits) {
  if (bits < 1 || bits > 32) throw InvalidArgument("unpack_codes: bits must be in [1, 32]");
  if (bytes.size() * 8 < count * static_cast<std::size_t>(bits)) {
    throw FormatError(fmt::format("code section truncated: expected {} bytes, got {}",
                                  (count * static_cast<std::size_t>(bits) + 7) / 8, bytes.size()));
  }
  std::vector<std::uint32_t> out(count, 0);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t c = 0;
    for (int b = 0; b < bits; ++b, ++pos) {
      if ((bytes[pos / 8] >> (pos % 8)) & 1u) c |= 1u << b;
    }
    out[i] = c;
  }
  return out;
}

std::vector<std::uint8_t> serialize_model(const Model& model) {
  model.validate();
  json layers = json::array();
  for (const Layer& layer : model.layers) {
    if (const auto* a = std::get_if<AffineLayer>(&layer)) {
      layers.push_back({{"kind", "affine"}, {"in", a->in()}, {"out", a->out()}, {"has_bias", a->b.has_value()}});
    } else {
      const auto& r = std::get<ResidualBlock>(layer);
      layers.push_back({{"kind", "residual"}, {"in", r.width()}, {"out", r.width()}, {"has_bias", r.b.has_value()}});
    }
  }
  Writer w;
  w.magic("FQW1");
  w.manifest({{"version", kVersion}, {"activation", activation_json(model.activation)}, {"layers", layers}});
  for (const Layer& layer : model.layers) {
    if (const auto* a = std::get_if<AffineLayer>(&layer)) {
      w.matrix(a->W);
      if (a->b) w.vector(*a->b);
    } else {
      const auto& r = std::get<ResidualBlock>(layer);
      w.matrix(r.W1);
      w.matrix(r.W2);
      if (r.b) w.vector(*r.b);
    }
  }
  return w.take();
}

Model deserialize_model(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic("FQW1");
  const json manifest = r.manifest();
  check_version(manifest);
  Model model;
  model.activation = activation_from(manifest.contains("activation") ? manifest.at("activation") : json::object());
  const auto layers = field<json>(manifest, "layers", "manifest");
  if (!layers.is_array()) throw FormatError("manifest: layers must be an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string where = fmt::format("layer {}", i);
    const json& e = layers[i];
    const auto kind = field<std::string>(e, "kind", where);
    const Eigen::Index in = dim_field(e, "in", where);
    const Eigen::Index out = dim_field(e, "out", where);
    const bool has_bias = field<bool>(e, "has_bias", where);
    if (kind == "affine") {
      AffineLayer a;
      a.W = r.matrix(out, in, where + " weights");
      if (has_bias) a.b = r.vector(out, where + " bias");
      model.layers.emplace_back(std::move(a));
    } else if (kind == "residual") {
      if (in != out) throw FormatError(where + ": residual block must be square");
      ResidualBlock b;
      b.W1 = r.matrix(in, in, where + " first weights");
      b.W2 = r.matrix(in, in, where + " second weights");
      if (has_bias) b.b = r.vector(in, where + " bias");
      model.layers.emplace_back(std::move(b));
    } else {
      throw FormatError(fmt::format("{}: unknown layer kind \"{}\"", where, kind));
    }
  }
  r.expect_end();
  try {
    model.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(fmt::format("inconsistent model shapes: {}", e.what()));
  }
  return model;
}

std::vector<std::uint8_t> serialize_quantized(const QuantizedModel& qmodel) {
  json entries = json::array();
  Writer w;
  for (const QuantizedLayer& layer : qmodel.layers) {
    if (const auto* a = std::get_if<QuantizedAffine>(&layer)) {
      describe_qmatrix(entries, "affine", a->weight, a->bias);
    } else {
      const auto& r = std::get<QuantizedResidual>(layer);
      describe_qmatrix(entries, "residual.first", r.first, r.bias);
      describe_qmatrix(entries, "residual.second", r.second, std::nullopt);
    }
  }
  w.magic("FQQ1");
  w.manifest({{"version", kVersion}, {"activation", activation_json(qmodel.activation)}, {"layers", entries}});
  for (const QuantizedLayer& layer : qmodel.layers) {
    if (const auto* a = std::get_if<QuantizedAffine>(&layer)) {
      write_qmatrix_payload(w, a->weight, a->bias);
    } else {
      const auto& r = std::get<QuantizedResidual>(layer);
      write_qmatrix_payload(w, r.first, r.bias);
      write_qmatrix_payload(w, r.second, std::nullopt);
    }
  }
  return w.take();
}

QuantizedModel deserialize_quantized(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic("FQQ1");
  const json manifest = r.manifest();
  check_version(manifest);
  QuantizedModel qmodel;
  qmodel.activation = activation_from(manifest.contains("activation") ? manifest.at("activation") : json::object());
  const auto entries = field<json>(manifest, "layers", "manifest");
  if (!entries.is_array()) throw FormatError("manifest: layers must be an array");

  for (std::size_t i = 0; i < entries.size(); ++i) {
    LoadedMatrix m = read_qmatrix(r, entries[i], i);
    if (m.kind == "affine") {
      qmodel.layers.emplace_back(QuantizedAffine{std::move(m.matrix), std::move(m.float_bias)});
    } else if (m.kind == "residual.first") {
      if (i + 1 >= entries.size()) throw FormatError(fmt::format("layer {}: residual block is missing its second matrix", i));
      LoadedMatrix second = read_qmatrix(r, entries[i + 1], i + 1);
      if (second.kind != "residual.second") {
        throw FormatError(fmt::format("layer {}: expected residual.second, got \"{}\"", i + 1, second.kind));
      }
      qmodel.layers.emplace_back(
          QuantizedResidual{std::move(m.matrix), std::move(second.matrix), std::move(m.float_bias)});
      ++i;
    } else {
      throw FormatError(fmt::format("layer {}: unknown layer kind \"{}\"", i, m.kind));
    }
  }
  r.expect_end();
  return qmodel;
}

std::vector<std::uint8_t> serialize_frame(const Frame& frame) {
  Writer w;
  w.magic("FQF1");
  w.manifest({{"version", kVersion}, {"frame", frame_json(frame)}});
  if (frame.kind() == FrameKind::Explicit) w.matrix(frame.rows());
  return w.take();
}

Frame deserialize_frame(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic("FQF1");
  const json manifest = r.manifest();
  check_version(manifest);
  const json fj = field<json>(manifest, "frame", "manifest");
  const auto kind = field<std::string>(fj, "kind", "frame");
  const int d = static_cast<int>(dim_field(fj, "d", "frame"));
  const int n = static_cast<int>(dim_field(fj, "N", "frame"));
  if (kind == "harmonic") {
    r.expect_end();
    return Frame::harmonic(d, n);
  }
  if (kind != "explicit") throw FormatError(fmt::format("unknown frame kind \"{}\"", kind));
  Frame f = Frame::from_rows(r.matrix(n, d, "frame payload"));
  r.expect_end();
  return f;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(fmt::format("cannot open {}", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(fmt::format("cannot write {}", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(fmt::format("write to {} failed", path.string()));
}

void save_model(const Model& model, const std::filesystem::path& path) { write_file(path, serialize_model(model)); }
Model load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

void save_quantized(const QuantizedModel& qmodel, const std::filesystem::path& path) {
  write_file(path, serialize_quantized(qmodel));
}
QuantizedModel load_quantized(const std::filesystem::path& path) { return deserialize_quantized(read_file(path)); }

void save_frame(const Frame& frame, const std::filesystem::path& path) { write_file(path, serialize_frame(frame)); }

Frame load_frame(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "FQF1", 4) == 0) return deserialize_frame(bytes);

  std::istringstream text(std::string(bytes.begin(), bytes.end()));
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(text, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    std::string token;
    while (ls >> token) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(token, &used));
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw FormatError(fmt::format("{}: \"{}\" is not a number", path.string(), token));
      }
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(fmt::format("{}: no frame elements", path.string()));
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) {
      throw FormatError(fmt::format("{}: line {} has {} entries, expected {}", path.string(), i + 1, rows[i].size(),
                                    rows.front().size()));
    }
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return Frame::from_rows(std::move(m));
}

}  // namespace fq
