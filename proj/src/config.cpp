#include "catn/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace catn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view v, std::size_t line, std::string_view key) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(line, "'" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
  }
  return out;
}

Index parse_count(std::string_view v, std::size_t line, std::string_view key) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size() || out < 0) {
    throw ConfigError(line, "'" + std::string(key) + "' expects a nonnegative integer, got '" +
                                std::string(v) + "'");
  }
  return static_cast<Index>(out);
}

std::uint64_t parse_u64(std::string_view v, std::size_t line, std::string_view key) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(line, "'" + std::string(key) + "' expects an unsigned integer, got '" +
                                std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view v, std::size_t line, std::string_view key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(line, "'" + std::string(key) + "' expects true or false, got '" + std::string(v) + "'");
}

std::vector<Index> parse_list(std::string_view v, std::size_t line, std::string_view key) {
  std::vector<Index> out;
  while (true) {
    const auto comma = v.find(',');
    out.push_back(parse_count(trim(v.substr(0, comma)), line, key));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

Shape3 parse_shape(std::string_view v, std::size_t line, std::string_view key) {
  Index dims[3] = {0, 0, 0};
  for (int i = 0; i < 3; ++i) {
    const auto x = v.find('x');
    if ((i < 2) == (x == std::string_view::npos)) {
      throw ConfigError(line, "'" + std::string(key) + "' expects CxHxW");
    }
    dims[i] = parse_count(trim(v.substr(0, x)), line, key);
    if (dims[i] < 1) throw ConfigError(line, "'" + std::string(key) + "' dimensions must be positive");
    if (x != std::string_view::npos) v.remove_prefix(x + 1);
  }
  return {dims[0], dims[1], dims[2]};
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_list(const std::vector<Index>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string fmt_shape(const Shape3& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

std::string resolve_path(std::string_view v, const std::filesystem::path& base) {
  std::filesystem::path p{std::string(v)};
  if (p.empty() || p.is_absolute() || base.empty()) return p.string();
  return (base / p).lexically_normal().string();
}

std::string type_name(LayerSpec::Type t) {
  switch (t) {
    case LayerSpec::Type::conv2d: return "conv2d";
    case LayerSpec::Type::decomposed: return "decomposed";
    case LayerSpec::Type::dense: return "dense";
  }
  return "conv2d";
}

}  // namespace

bool DataSpec::operator==(const DataSpec& o) const {
  return source == o.source && train_images == o.train_images && train_labels == o.train_labels &&
         test_images == o.test_images && test_labels == o.test_labels &&
         train_csv == o.train_csv && test_csv == o.test_csv && csv.channels == o.csv.channels &&
         csv.height == o.csv.height && csv.width == o.csv.width && csv.scale == o.csv.scale &&
         csv.class_count == o.csv.class_count && train_samples == o.train_samples &&
         test_samples == o.test_samples && input_shape == o.input_shape && classes == o.classes &&
         seed == o.seed && teacher.filters == o.teacher.filters &&
         teacher.planted_ranks == o.teacher.planted_ranks && teacher.kernel == o.teacher.kernel &&
         teacher.padding == o.teacher.padding && normalize == o.normalize && flip == o.flip;
}

bool TrainConfig::operator==(const TrainConfig& o) const {
  return layers == o.layers && tau == o.tau && lambda_first == o.lambda_first &&
         lambda_rest == o.lambda_rest && first_group_size == o.first_group_size &&
         alpha == o.alpha && lr == o.lr && lr_decay == o.lr_decay &&
         lr_decay_period == o.lr_decay_period && momentum == o.momentum &&
         weight_decay == o.weight_decay && epochs == o.epochs && batch_size == o.batch_size &&
         seed == o.seed && reload_epoch == o.reload_epoch && prox_every == o.prox_every &&
         energy == o.energy && zero_unit_tol == o.zero_unit_tol && data == o.data;
}

void TrainConfig::validate() const {
  if (layers.empty()) throw ConfigError(0, "at least one [layer] section is required");
  if (epochs < 1) throw ConfigError(0, "epochs must be at least 1");
  if (batch_size < 1) throw ConfigError(0, "batch_size must be at least 1");
  if (!(lr > 0.0)) throw ConfigError(0, "lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError(0, "lr_decay must lie in (0, 1]");
  if (lr_decay_period < 1) throw ConfigError(0, "lr_decay_period must be at least 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError(0, "momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError(0, "weight_decay must be nonnegative");
  if (!(tau >= 0.0) || !(lambda_first >= 0.0) || !(lambda_rest >= 0.0)) {
    throw ConfigError(0, "tau and lambda values must be nonnegative");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError(0, "alpha must lie in [0, 1]");
  if (reload_epoch && *reload_epoch >= epochs) throw ConfigError(0, "reload_epoch must be below epochs");
  if (prox_every < 1) throw ConfigError(0, "prox_every must be at least 1");
  if (!(energy > 0.0 && energy <= 1.0)) throw ConfigError(0, "energy must lie in (0, 1]");
  if (data.source != "synthetic" && data.source != "idx" && data.source != "csv") {
    throw ConfigError(0, "data source must be synthetic, idx or csv");
  }
  if (layers.back().type != LayerSpec::Type::dense) {
    throw ConfigError(0, "the last [layer] must be a dense classifier");
  }
}

Index resolve_padding(const LayerSpec& spec, std::size_t line) {
  if (spec.padding == "same") return spec.kernel / 2;
  if (spec.padding == "valid") return 0;
  return parse_count(spec.padding, line, "padding");
}

TrainConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  TrainConfig cfg;
  std::string section;
  std::string teacher_padding = std::to_string(cfg.data.teacher.padding);
  std::size_t teacher_padding_line = 0;
  std::size_t line_no = 0;
  bool lambda_uniform = false;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line_no, "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section == "layer") {
        cfg.layers.emplace_back();
      } else if (section != "data" && section != "teacher") {
        throw ConfigError(line_no, "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line_no, "expected key = value");
    const std::string key{trim(line.substr(0, eq))};
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(line_no, "empty key");
    auto unknown = [&] { throw ConfigError(line_no, "unknown key '" + key + "'" +
                                                     (section.empty() ? "" : " in [" + section + "]")); };

    if (section.empty()) {
      if (key == "tau") cfg.tau = parse_double(value, line_no, key);
      else if (key == "lambda") { cfg.lambda_first = cfg.lambda_rest = parse_double(value, line_no, key); lambda_uniform = true; }
      else if (key == "lambda_first") cfg.lambda_first = parse_double(value, line_no, key);
      else if (key == "lambda_rest") cfg.lambda_rest = parse_double(value, line_no, key);
      else if (key == "first_group_size") cfg.first_group_size = parse_count(value, line_no, key);
      else if (key == "alpha") cfg.alpha = parse_double(value, line_no, key);
      else if (key == "lr") cfg.lr = parse_double(value, line_no, key);
      else if (key == "lr_decay") cfg.lr_decay = parse_double(value, line_no, key);
      else if (key == "lr_decay_period") cfg.lr_decay_period = parse_count(value, line_no, key);
      else if (key == "momentum") cfg.momentum = parse_double(value, line_no, key);
      else if (key == "weight_decay") cfg.weight_decay = parse_double(value, line_no, key);
      else if (key == "epochs") cfg.epochs = parse_count(value, line_no, key);
      else if (key == "batch_size") cfg.batch_size = parse_count(value, line_no, key);
      else if (key == "seed") cfg.seed = parse_u64(value, line_no, key);
      else if (key == "reload_epoch") cfg.reload_epoch = parse_count(value, line_no, key);
      else if (key == "prox_every") cfg.prox_every = parse_count(value, line_no, key);
      else if (key == "energy") cfg.energy = parse_double(value, line_no, key);
      else if (key == "zero_unit_tol") cfg.zero_unit_tol = parse_double(value, line_no, key);
      else unknown();
    } else if (section == "data") {
      DataSpec& d = cfg.data;
      if (key == "source") d.source = std::string(value);
      else if (key == "train_images") d.train_images = resolve_path(value, base_dir);
      else if (key == "train_labels") d.train_labels = resolve_path(value, base_dir);
      else if (key == "test_images") d.test_images = resolve_path(value, base_dir);
      else if (key == "test_labels") d.test_labels = resolve_path(value, base_dir);
      else if (key == "train_csv") d.train_csv = resolve_path(value, base_dir);
      else if (key == "test_csv") d.test_csv = resolve_path(value, base_dir);
      else if (key == "csv_shape") {
        const Shape3 s = parse_shape(value, line_no, key);
        d.csv.channels = s.channels; d.csv.height = s.height; d.csv.width = s.width;
      }
      else if (key == "csv_scale") d.csv.scale = parse_double(value, line_no, key);
      else if (key == "csv_classes") d.csv.class_count = static_cast<int>(parse_count(value, line_no, key));
      else if (key == "train_samples") d.train_samples = parse_count(value, line_no, key);
      else if (key == "test_samples") d.test_samples = parse_count(value, line_no, key);
      else if (key == "input_shape") d.input_shape = parse_shape(value, line_no, key);
      else if (key == "classes") d.classes = static_cast<int>(parse_count(value, line_no, key));
      else if (key == "seed") d.seed = parse_u64(value, line_no, key);
      else if (key == "normalize") d.normalize = parse_bool(value, line_no, key);
      else if (key == "flip") d.flip = parse_bool(value, line_no, key);
      else unknown();
    } else if (section == "teacher") {
      TeacherSpec& t = cfg.data.teacher;
      if (key == "filters") t.filters = parse_list(value, line_no, key);
      else if (key == "planted_ranks") t.planted_ranks = parse_list(value, line_no, key);
      else if (key == "kernel") t.kernel = parse_count(value, line_no, key);
      else if (key == "padding") { teacher_padding = std::string(value); teacher_padding_line = line_no; }
      else unknown();
    } else {
      LayerSpec& l = cfg.layers.back();
      if (key == "type") {
        if (value == "conv2d") l.type = LayerSpec::Type::conv2d;
        else if (value == "decomposed") l.type = LayerSpec::Type::decomposed;
        else if (value == "dense") l.type = LayerSpec::Type::dense;
        else throw ConfigError(line_no, "layer type must be conv2d, decomposed or dense");
      }
      else if (key == "filters" || key == "units") l.filters = parse_count(value, line_no, key);
      else if (key == "vertical_filters") l.vertical_filters = parse_count(value, line_no, key);
      else if (key == "kernel") l.kernel = parse_count(value, line_no, key);
      else if (key == "stride") l.stride = parse_count(value, line_no, key);
      else if (key == "padding") {
        l.padding = std::string(value);
        if (l.padding != "same" && l.padding != "valid") parse_count(value, line_no, key);
      }
      else if (key == "batchnorm") l.batchnorm = parse_bool(value, line_no, key);
      else if (key == "relu") l.relu = parse_bool(value, line_no, key);
      else if (key == "regularized") l.regularized = parse_bool(value, line_no, key);
      else unknown();
    }
  }
  (void)lambda_uniform;
  TeacherSpec& t = cfg.data.teacher;
  if (teacher_padding == "same") t.padding = t.kernel / 2;
  else if (teacher_padding == "valid") t.padding = 0;
  else t.padding = parse_count(teacher_padding, teacher_padding_line, "padding");
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), std::filesystem::absolute(path).parent_path());
}

std::string to_text(const TrainConfig& cfg) {
  std::ostringstream out;
  out << "tau = " << fmt_double(cfg.tau) << "\n"
      << "lambda_first = " << fmt_double(cfg.lambda_first) << "\n"
      << "lambda_rest = " << fmt_double(cfg.lambda_rest) << "\n"
      << "first_group_size = " << cfg.first_group_size << "\n"
      << "alpha = " << fmt_double(cfg.alpha) << "\n"
      << "lr = " << fmt_double(cfg.lr) << "\n"
      << "lr_decay = " << fmt_double(cfg.lr_decay) << "\n"
      << "lr_decay_period = " << cfg.lr_decay_period << "\n"
      << "momentum = " << fmt_double(cfg.momentum) << "\n"
      << "weight_decay = " << fmt_double(cfg.weight_decay) << "\n"
      << "epochs = " << cfg.epochs << "\n"
      << "batch_size = " << cfg.batch_size << "\n"
      << "seed = " << cfg.seed << "\n";
  if (cfg.reload_epoch) out << "reload_epoch = " << *cfg.reload_epoch << "\n";
  out << "prox_every = " << cfg.prox_every << "\n"
      << "energy = " << fmt_double(cfg.energy) << "\n"
      << "zero_unit_tol = " << fmt_double(cfg.zero_unit_tol) << "\n";

  const DataSpec& d = cfg.data;
  out << "\n[data]\n"
      << "source = " << d.source << "\n";
  auto path_line = [&](const char* key, const std::string& v) {
    if (!v.empty()) out << key << " = " << v << "\n";
  };
  path_line("train_images", d.train_images);
  path_line("train_labels", d.train_labels);
  path_line("test_images", d.test_images);
  path_line("test_labels", d.test_labels);
  path_line("train_csv", d.train_csv);
  path_line("test_csv", d.test_csv);
  if (d.csv.height > 0) {
    out << "csv_shape = " << fmt_shape({d.csv.channels, d.csv.height, d.csv.width}) << "\n";
  }
  out << "csv_scale = " << fmt_double(d.csv.scale) << "\n"
      << "csv_classes = " << d.csv.class_count << "\n"
      << "train_samples = " << d.train_samples << "\n"
      << "test_samples = " << d.test_samples << "\n"
      << "input_shape = " << fmt_shape(d.input_shape) << "\n"
      << "classes = " << d.classes << "\n"
      << "seed = " << d.seed << "\n"
      << "normalize = " << (d.normalize ? "true" : "false") << "\n"
      << "flip = " << (d.flip ? "true" : "false") << "\n";

  out << "\n[teacher]\n"
      << "filters = " << fmt_list(d.teacher.filters) << "\n"
      << "planted_ranks = " << fmt_list(d.teacher.planted_ranks) << "\n"
      << "kernel = " << d.teacher.kernel << "\n"
      << "padding = " << d.teacher.padding << "\n";

  for (const LayerSpec& l : cfg.layers) {
    out << "\n[layer]\n"
        << "type = " << type_name(l.type) << "\n"
        << "filters = " << l.filters << "\n";
    if (l.vertical_filters > 0) out << "vertical_filters = " << l.vertical_filters << "\n";
    out << "kernel = " << l.kernel << "\n"
        << "stride = " << l.stride << "\n"
        << "padding = " << l.padding << "\n";
    if (l.batchnorm) out << "batchnorm = " << (*l.batchnorm ? "true" : "false") << "\n";
    if (l.relu) out << "relu = " << (*l.relu ? "true" : "false") << "\n";
    if (l.regularized) out << "regularized = " << (*l.regularized ? "true" : "false") << "\n";
  }
  return out.str();
}

BuiltNetwork build_network(const TrainConfig& cfg, const Shape3& input_shape, int class_count) {
  BuiltNetwork built;
  Network& net = built.net;
  net.input_shape = input_shape;
  Shape3 shape = input_shape;
  auto push = [&](Layer layer, std::size_t block) {
    shape = output_shape(layer, shape, net.layers.size());
    net.layers.push_back(std::move(layer));
    built.block_of_layer.push_back(block);
  };

  for (std::size_t b = 0; b < cfg.layers.size(); ++b) {
    const LayerSpec& spec = cfg.layers[b];
    const bool is_head = b + 1 == cfg.layers.size();
    const bool is_dense = spec.type == LayerSpec::Type::dense;
    const bool use_bn = spec.batchnorm.value_or(!is_dense);
    const bool use_relu = spec.relu.value_or(!is_dense);
    const bool regularized = spec.regularized.value_or(!is_head);
    if (spec.kernel < 1 || spec.stride < 1) {
      throw ConfigError(0, "layer block " + std::to_string(b) + ": kernel and stride must be positive");
    }
    const Index pad = is_dense ? 0 : resolve_padding(spec);
    auto post = [&](Index channels) {
      if (use_bn) push(make_batchnorm(channels), b);
      if (use_relu) push(make_relu(), b);
    };

    switch (spec.type) {
      case LayerSpec::Type::conv2d: {
        if (spec.filters < 1) throw ConfigError(0, "layer block " + std::to_string(b) + ": filters required");
        Layer conv = make_conv2d(shape.channels, spec.filters, spec.kernel, spec.stride, pad);
        conv.regularized = regularized;
        push(std::move(conv), b);
        post(spec.filters);
        break;
      }
      case LayerSpec::Type::decomposed: {
        if (spec.filters < 1) throw ConfigError(0, "layer block " + std::to_string(b) + ": filters required");
        const Index vertical = spec.vertical_filters > 0 ? spec.vertical_filters : spec.filters;
        Layer v = make_conv1d_vertical(shape.channels, vertical, spec.kernel, pad);
        v.regularized = regularized;
        push(std::move(v), b);
        post(vertical);
        Layer h = make_conv1d_horizontal(vertical, spec.filters, spec.kernel, pad);
        h.regularized = regularized;
        push(std::move(h), b);
        post(spec.filters);
        break;
      }
      case LayerSpec::Type::dense: {
        if (shape.height != 1 || shape.width != 1) push(make_flatten(), b);
        const Index units = spec.filters > 0 ? spec.filters : (is_head ? class_count : 0);
        if (units < 1) throw ConfigError(0, "layer block " + std::to_string(b) + ": units required");
        Layer dense = make_dense(shape.channels, units);
        dense.regularized = regularized;
        push(std::move(dense), b);
        post(units);
        break;
      }
    }
  }
  if (shape.size() != class_count) {
    throw ConfigError(0, "network output size " + std::to_string(shape.size()) +
                             " differs from class count " + std::to_string(class_count));
  }
  net.validate();
  he_uniform_init(net, cfg.seed);
  return built;
}

}  // namespace catn
